"""Synthetic idle-game cohorts with known churn ground truth.

Each user belongs to one behaviour archetype. Lifetime (last play day minus
first play day) is drawn from the archetype, and every daily activity rate is
the archetype's base rate scaled by a play curve over *relative* day
``r = (day - first_day) / lifetime`` in [0, 1]. Users are generated from
independent RNG streams spawned from the cohort seed, so user ``i`` does not
depend on how many users come after it.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .eventlog import EventKind, GameEvent

ARCHETYPES = ("LoyalStayer", "DecayingInterest", "AbruptChurner", "Casual")


@dataclass(frozen=True)
class Lifetime:
    """Distribution over total active span in days: ``fixed`` or ``uniform`` [lo, hi]."""

    kind: str = "uniform"
    lo: int = 30
    hi: int = 120

    def sample(self, rng: np.random.Generator) -> int:
        if self.kind == "fixed":
            return int(self.lo)
        if self.kind == "uniform":
            return int(rng.integers(self.lo, self.hi + 1))
        raise ValueError(f"unknown lifetime distribution {self.kind!r}")


@dataclass(frozen=True)
class PlayCurve:
    """Relative play intensity over relative day r in [0, 1].

    ``flat``: constant 1.
    ``plateau_decay``: 1 until ``plateau``, then linear down to ``floor`` at r=1.
    ``linear``: linear from 1 at r=0 to ``floor`` at r=1.
    """

    kind: str = "flat"
    plateau: float = 0.5
    floor: float = 1.0

    def __call__(self, r):
        r = np.clip(np.asarray(r, dtype=float), 0.0, 1.0)
        if self.kind == "flat":
            return np.ones_like(r)
        if self.kind == "linear":
            return 1.0 + (self.floor - 1.0) * r
        if self.kind == "plateau_decay":
            span = max(1.0 - self.plateau, 1e-12)
            t = np.clip((r - self.plateau) / span, 0.0, 1.0)
            return 1.0 + (self.floor - 1.0) * t
        raise ValueError(f"unknown play curve {self.kind!r}")


@dataclass(frozen=True)
class ArchetypeSpec:
    name: str
    lifetime: Lifetime
    curve: PlayCurve
    play_prob: float = 0.95         # chance of logging in on an active day
    session_seconds: float = 1800.0  # expected daily play at curve = 1
    extra_logins: float = 0.5       # Poisson mean of logins beyond the first
    stage_rate: float = 1.0
    resource_rate: float = 3.0
    character_rate: float = 0.15

    def validate(self, dataset_length_days: int) -> None:
        rates = (self.play_prob, self.session_seconds, self.extra_logins,
                 self.stage_rate, self.resource_rate, self.character_rate)
        if min(rates) < 0:
            raise ValueError(f"{self.name}: rates must be nonnegative")
        if self.play_prob > 1:
            raise ValueError(f"{self.name}: play_prob must be <= 1")
        lo = self.lifetime.lo
        hi = self.lifetime.lo if self.lifetime.kind == "fixed" else self.lifetime.hi
        if lo < 1 or hi > dataset_length_days or lo > hi:
            raise ValueError(f"{self.name}: lifetime support must lie in [1, {dataset_length_days}]")


DEFAULT_ARCHETYPES = {
    # long-lived and mostly still active at the end of the log
    "LoyalStayer": ArchetypeSpec(
        "LoyalStayer", Lifetime("uniform", 220, 240), PlayCurve("flat"),
        play_prob=0.9, session_seconds=2400.0, stage_rate=1.2),
    # user A: steady play, then play time falls away before leaving
    "DecayingInterest": ArchetypeSpec(
        "DecayingInterest", Lifetime("uniform", 30, 150), PlayCurve("plateau_decay", 0.5, 0.1)),
    # user B: short life, play time unchanged up to the last day
    "AbruptChurner": ArchetypeSpec(
        "AbruptChurner", Lifetime("uniform", 10, 60), PlayCurve("flat"),
        session_seconds=1500.0, stage_rate=1.5),
    "Casual": ArchetypeSpec(
        "Casual", Lifetime("uniform", 20, 120), PlayCurve("linear", floor=0.4),
        play_prob=0.5, session_seconds=600.0, stage_rate=0.5, resource_rate=1.5,
        character_rate=0.05),
}

DEFAULT_MIX = {"LoyalStayer": 0.25, "DecayingInterest": 0.40, "AbruptChurner": 0.15, "Casual": 0.20}


@dataclass
class CohortConfig:
    n_users: int = 800
    dataset_length_days: int = 240
    archetype_mix: dict = field(default_factory=lambda: dict(DEFAULT_MIX))
    join_day_max: int = 90           # join days uniform on [0, join_day_max)
    rng_seed: int = 0
    session_sigma: float = 0.35      # log-normal spread of a single session
    resource_mean: float = 40.0      # mean amount per resource event
    archetypes: dict = field(default_factory=lambda: dict(DEFAULT_ARCHETYPES))

    def validate(self) -> None:
        if self.n_users < 1:
            raise ValueError("n_users must be >= 1")
        if self.dataset_length_days < 1:
            raise ValueError("dataset_length_days must be >= 1")
        if not 1 <= self.join_day_max <= self.dataset_length_days:
            raise ValueError("join_day_max must lie in [1, dataset_length_days]")
        weights = np.array(list(self.archetype_mix.values()), dtype=float)
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError("archetype_mix weights must be nonnegative and sum to 1")
        for name in self.archetype_mix:
            if name not in self.archetypes:
                raise ValueError(f"unknown archetype {name!r}")
            self.archetypes[name].validate(self.dataset_length_days)
        if not 0 <= self.rng_seed < 2**64:
            raise ValueError("rng_seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["archetypes"] = {k: asdict(v) for k, v in self.archetypes.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CohortConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise KeyError(f"unknown cohort config keys: {sorted(unknown)}")
        if "archetypes" in d:
            arch = dict(DEFAULT_ARCHETYPES)
            for name, spec in d["archetypes"].items():
                spec = dict(spec)
                spec["lifetime"] = Lifetime(**spec["lifetime"])
                spec["curve"] = PlayCurve(**spec["curve"])
                arch[name] = ArchetypeSpec(**spec)
            d["archetypes"] = arch
        return cls(**d)


@dataclass(frozen=True)
class GroundTruth:
    user_id: str
    archetype: str
    first_day: int
    last_day: int


def user_id_for(index: int) -> str:
    return f"u{index:05d}"


def _generate_user(index: int, rng: np.random.Generator, cfg: CohortConfig,
                   names: list, weights: np.ndarray):
    arch = cfg.archetypes[names[rng.choice(len(names), p=weights)]]
    first = int(rng.integers(0, cfg.join_day_max))
    lifetime = arch.lifetime.sample(rng)
    last = min(first + lifetime, cfg.dataset_length_days - 1)
    uid = user_id_for(index)

    days = np.arange(first, last + 1)
    rel = (days - first) / max(lifetime, 1)
    level = arch.curve(rel)
    n = len(days)
    plays = rng.random(n) < arch.play_prob
    plays[0] = plays[-1] = True

    logins = np.where(plays, 1 + rng.poisson(arch.extra_logins, n), 0)
    stages = np.where(plays, rng.poisson(arch.stage_rate * level), 0)
    resources = np.where(plays, rng.poisson(arch.resource_rate * level), 0)
    chars = np.where(plays, rng.poisson(arch.character_rate * level), 0)
    # split the day's expected play evenly over its expected number of sessions
    per_session = arch.session_seconds * level / (1.0 + arch.extra_logins)
    mu = np.log(np.maximum(per_session, 1.0)) - 0.5 * cfg.session_sigma**2

    events = []
    stage = 0
    n_chars = 0
    for i, day in enumerate(days.tolist()):
        if not plays[i]:
            continue
        secs = rng.lognormal(mu[i], cfg.session_sigma, logins[i])
        for s in secs:
            events.append(GameEvent(uid, day, EventKind.LOGIN, session_seconds=int(round(s))))
        for _ in range(stages[i]):
            stage += 1
            events.append(GameEvent(uid, day, EventKind.STAGE_CLEAR, stage_id=stage))
        if resources[i]:
            amounts = rng.poisson(cfg.resource_mean, resources[i])
            for a in amounts:
                events.append(GameEvent(uid, day, EventKind.GET_RESOURCE, resource_amount=int(a)))
        for _ in range(chars[i]):
            n_chars += 1
            events.append(GameEvent(uid, day, EventKind.GET_CHARACTER, character_id=f"c{n_chars}"))
    return events, GroundTruth(uid, arch.name, first, last)


def generate_cohort(config: CohortConfig) -> tuple[list[GameEvent], list[GroundTruth]]:
    """Generate a cohort's events (ordered by user, then day) and its ground truth."""
    config.validate()
    names = list(config.archetype_mix)
    weights = np.array([config.archetype_mix[n] for n in names], dtype=float)
    weights = weights / weights.sum()
    streams = np.random.SeedSequence(config.rng_seed).spawn(config.n_users)
    events, truth = [], []
    for i, ss in enumerate(streams):
        evs, gt = _generate_user(i, np.random.default_rng(ss), config, names, weights)
        events.extend(evs)
        truth.append(gt)
    return events, truth


def format_ground_truth(truth: list[GroundTruth]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["user", "archetype", "first_day", "last_day"])
    for t in truth:
        w.writerow([t.user_id, t.archetype, t.first_day, t.last_day])
    return buf.getvalue()


def parse_ground_truth(text: str) -> list[GroundTruth]:
    rows = csv.DictReader(io.StringIO(text))
    return [GroundTruth(r["user"], r["archetype"], int(r["first_day"]), int(r["last_day"])) for r in rows]


def load_cohort_config(path) -> CohortConfig:
    with open(path, encoding="utf-8") as fh:
        return CohortConfig.from_dict(json.load(fh))


def expected_play_seconds(arch: ArchetypeSpec, first_day: int, lifetime: int,
                          days: Optional[np.ndarray] = None) -> np.ndarray:
    """Expected daily play time on active days under the archetype's curve."""
    if days is None:
        days = np.arange(first_day, first_day + lifetime + 1)
    rel = (np.asarray(days) - first_day) / max(lifetime, 1)
    return arch.session_seconds * arch.curve(rel)
