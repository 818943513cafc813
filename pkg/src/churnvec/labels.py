"""Churn targets: remaining days, the churn vector, and their binarized forms.

For a user observed on day ``d``::

    remain_days   = last_play_day - d
    lifetime_days = last_play_day - first_play_day
    churn_vector  = remain_days / lifetime_days

Single-day users (lifetime 0) have no churn vector and are dropped. Users
whose last play day falls within ``quiet_gap`` days of the dataset end may
still be playing; their rows are kept but flagged ``censored`` and are not
used for training or scoring.
"""
from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .features import FEATURE_NAMES, DailyPlayerRecord, FeatureRow, assemble_feature_rows

WARMUP_END = 90
DATASET_END = 240
HORIZON = 7
VECTOR_THRESHOLD = 0.25
QUIET_GAP = 14


class DegenerateLifetime(ValueError):
    """Churn vector requested for a user whose first and last play day coincide."""


class Split(enum.Enum):
    TRAIN = "train"
    VALIDATION = "validation"
    TEST = "test"


class Target(enum.Enum):
    DAY = "day"
    VECTOR = "vector"


@dataclass(frozen=True)
class ChurnLabel:
    user_id: str
    observation_day: int
    remain_days: int
    lifetime_days: int
    churn_vector: float
    churned_within_horizon: bool
    vector_below_threshold: bool
    censored: bool

    def regression_target(self, target: Target) -> float:
        return float(self.remain_days) if target is Target.DAY else self.churn_vector

    def class_target(self, target: Target) -> int:
        flag = self.churned_within_horizon if target is Target.DAY else self.vector_below_threshold
        return int(flag)


@dataclass(frozen=True)
class LabeledExample:
    features: FeatureRow
    label: ChurnLabel
    split: Optional[Split] = None

    @property
    def user_id(self) -> str:
        return self.label.user_id

    @property
    def day(self) -> int:
        return self.label.observation_day


def compute_churn_vector(remain_days: int, lifetime_days: int) -> float:
    if remain_days < 0 or lifetime_days < 0:
        raise ValueError("remain_days and lifetime_days must be nonnegative")
    if lifetime_days == 0:
        raise DegenerateLifetime("lifetime of 0 days has no churn vector")
    return remain_days / lifetime_days


def label_dataset(timelines: dict, rows: Sequence, warmup_end: int = WARMUP_END,
                  dataset_end: int = DATASET_END, horizon: int = HORIZON,
                  tau: float = VECTOR_THRESHOLD, quiet_gap: int = QUIET_GAP) -> list[LabeledExample]:
    """Label every (user, day) with day in [warmup_end, dataset_end) and in the user's span.

    ``rows`` may be FeatureRows or DailyPlayerRecords. Output is ordered by
    (user, day) following the order of ``timelines``.
    """
    if warmup_end >= dataset_end:
        raise ValueError(f"empty evaluation window [{warmup_end}, {dataset_end})")
    if horizon < 1 or quiet_gap < 1 or not 0 < tau < 1:
        raise ValueError("need horizon >= 1, quiet_gap >= 1 and 0 < tau < 1")
    rows = list(rows)
    if rows and isinstance(rows[0], DailyPlayerRecord):
        rows = assemble_feature_rows(rows)
    by_key = {(r.user_id, r.day): r for r in rows}
    out = []
    for user, tl in timelines.items():
        lifetime = tl.last_play_day - tl.first_play_day
        if lifetime == 0:
            continue
        censored = tl.last_play_day >= dataset_end - quiet_gap
        lo = max(warmup_end, tl.first_play_day)
        hi = min(dataset_end - 1, tl.last_play_day)
        for day in range(lo, hi + 1):
            remain = tl.last_play_day - day
            vec = compute_churn_vector(remain, lifetime)
            label = ChurnLabel(
                user_id=user, observation_day=day, remain_days=remain, lifetime_days=lifetime,
                churn_vector=vec,
                churned_within_horizon=(not censored) and remain <= horizon,
                vector_below_threshold=(not censored) and vec <= tau,
                censored=censored,
            )
            out.append(LabeledExample(by_key[(user, day)], label))
    return out


def allocate_counts(n: int, ratios: Sequence[float]) -> list[int]:
    """Largest-remainder split of n items; every nonzero ratio gets at least one."""
    ratios = np.asarray(ratios, dtype=float)
    if np.any(ratios < 0) or abs(ratios.sum() - 1.0) > 1e-9:
        raise ValueError("split ratios must be nonnegative and sum to 1")
    nonzero = int(np.count_nonzero(ratios))
    if n < nonzero:
        raise ValueError(f"{n} users cannot fill {nonzero} nonempty splits")
    raw = ratios * n
    counts = np.floor(raw).astype(int)
    for i in np.argsort(-(raw - counts), kind="stable")[: n - counts.sum()]:
        counts[i] += 1
    for i in np.flatnonzero((counts == 0) & (ratios > 0)):
        donor = int(np.argmax(counts))
        counts[donor] -= 1
        counts[i] += 1
    return counts.tolist()


def assign_splits(users: Iterable[str], ratios=(0.8, 0.1, 0.1), rng_seed: int = 0) -> dict:
    users = sorted(set(users))
    counts = allocate_counts(len(users), ratios)
    order = np.random.default_rng(rng_seed).permutation(len(users))
    splits = list(Split)
    out = {}
    pos = 0
    for split, c in zip(splits, counts):
        for k in order[pos:pos + c]:
            out[users[k]] = split
        pos += c
    return out


def split_by_user(examples: Sequence[LabeledExample], ratios=(0.8, 0.1, 0.1),
                  rng_seed: int = 0) -> list[LabeledExample]:
    assignment = assign_splits((e.user_id for e in examples), ratios, rng_seed)
    return [LabeledExample(e.features, e.label, assignment[e.label.user_id]) for e in examples]


LABEL_COLUMNS = ("user", "day", "split", "remain_days", "lifetime_days", "churn_vector",
                 "cls_day", "cls_vector", "censored")


def format_labeled_csv(examples: Iterable[LabeledExample]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([*FEATURE_NAMES, *LABEL_COLUMNS])
    for e in examples:
        lab = e.label
        w.writerow([
            *(repr(float(v)) for v in e.features.values),
            lab.user_id, lab.observation_day, e.split.value if e.split else "",
            lab.remain_days, lab.lifetime_days, repr(lab.churn_vector),
            int(lab.churned_within_horizon), int(lab.vector_below_threshold), int(lab.censored),
        ])
    return buf.getvalue()


def parse_labeled_csv(text: str) -> list[LabeledExample]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    nf = len(FEATURE_NAMES)
    if tuple(header[:nf]) != FEATURE_NAMES or tuple(header[nf:]) != LABEL_COLUMNS:
        raise ValueError("labeled CSV header does not match the canonical schema")
    out = []
    for row in reader:
        values = np.array([float(v) for v in row[:nf]])
        user, day, split, remain, life, vec, cd, cv, cens = row[nf:]
        label = ChurnLabel(user, int(day), int(remain), int(life), float(vec),
                           cd == "1", cv == "1", cens == "1")
        out.append(LabeledExample(FeatureRow(user, int(day), values), label,
                                  Split(split) if split else None))
    return out


def positive_rate(examples: Iterable[LabeledExample], target: Target, split: Optional[Split] = None) -> float:
    """Fraction of uncensored examples (optionally of one split) with a positive class label."""
    flags = [e.label.class_target(target) for e in examples
             if not e.label.censored and (split is None or e.split is split)]
    if not flags:
        raise ValueError("no uncensored examples to take a positive rate over")
    return float(np.mean(flags))


def matched_vector_threshold(examples: Sequence[LabeledExample], split: Optional[Split] = Split.TRAIN) -> float:
    """Smallest tau giving the vector labels the day labels' positive rate.

    Both rates are taken over the uncensored examples of ``split``. The
    result is the churn-vector order statistic at that rate, so
    ``vector <= tau`` flags (up to ties) the same number of rows as the
    horizon rule does.
    """
    pool = [e for e in examples if not e.label.censored and (split is None or e.split is split)]
    if not pool:
        raise ValueError("no uncensored examples to match a threshold on")
    n_pos = sum(e.label.churned_within_horizon for e in pool)
    if n_pos == 0:
        raise ValueError("day labels have no positives; cannot match a vector threshold")
    vec = np.sort([e.label.churn_vector for e in pool])
    return float(vec[n_pos - 1])


def relabel_vector(examples: Iterable[LabeledExample], tau: float) -> list[LabeledExample]:
    """Recompute the vector class flag at a new threshold; censored rows stay negative."""
    if not 0 <= tau < 1:
        raise ValueError("need 0 <= tau < 1")
    out = []
    for e in examples:
        flag = (not e.label.censored) and e.label.churn_vector <= tau
        out.append(replace(e, label=replace(e.label, vector_below_threshold=flag)))
    return out
