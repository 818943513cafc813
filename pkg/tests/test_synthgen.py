"""Tests for the synthetic cohort generator."""
from collections import defaultdict

import numpy as np
import pytest

from churnvec.eventlog import EventKind, build_timelines, serialize_events
from churnvec.synthgen import (
    DEFAULT_ARCHETYPES,
    ArchetypeSpec,
    CohortConfig,
    Lifetime,
    PlayCurve,
    expected_play_seconds,
    format_ground_truth,
    generate_cohort,
    parse_ground_truth,
)


def _single(name, lifetime, seed=0, **kw):
    spec = DEFAULT_ARCHETYPES[name]
    arch = ArchetypeSpec(**{**spec.__dict__, "lifetime": Lifetime("fixed", lifetime, lifetime), **kw})
    return CohortConfig(n_users=1, archetype_mix={name: 1.0}, archetypes={name: arch}, rng_seed=seed)


def _daily_play(events):
    play = defaultdict(int)
    for e in events:
        if e.kind is EventKind.LOGIN:
            play[e.day] += e.session_seconds
    return play


class TestSingleUser:
    def test_abrupt_churner_lifetime_20(self):
        """A flat-curve user with a fixed 20-day life spans exactly 20 days."""
        events, truth = generate_cohort(_single("AbruptChurner", 20, play_prob=1.0))
        assert truth[0].last_day - truth[0].first_day == 20
        play = _daily_play(events)
        values = np.array([play[d] for d in sorted(play)], dtype=float)
        # near-flat: the last week plays about as much as the first week
        assert 0.6 < values[-7:].mean() / values[:7].mean() < 1.6
        expected = expected_play_seconds(DEFAULT_ARCHETYPES["AbruptChurner"], truth[0].first_day, 20)
        np.testing.assert_allclose(expected, expected[0])

    def test_decaying_interest_curve(self):
        """After its peak the expected curve never rises and ends below 25% of peak."""
        arch = DEFAULT_ARCHETYPES["DecayingInterest"]
        curve = expected_play_seconds(arch, 10, 40)
        peak = int(np.argmax(curve))
        assert np.all(np.diff(curve[peak:]) <= 1e-12)
        assert curve[-1] < 0.25 * curve[peak]

    def test_decaying_interest_realized_play_falls(self):
        events, truth = generate_cohort(_single("DecayingInterest", 40, play_prob=1.0))
        play = _daily_play(events)
        values = np.array([play[d] for d in sorted(play)], dtype=float)
        assert values[-5:].mean() < 0.35 * values[:10].mean()

    def test_every_user_logs_in(self):
        events, truth = generate_cohort(CohortConfig(n_users=50, rng_seed=3))
        tls = build_timelines(events)
        assert len(tls) == 50


class TestCohort:
    def test_default_scale(self):
        events, truth = generate_cohort(CohortConfig())
        assert len(build_timelines(events)) == 800
        assert len(truth) == 800

    def test_ground_truth_matches_log(self):
        events, truth = generate_cohort(CohortConfig(n_users=120, rng_seed=5))
        tls = build_timelines(events)
        for gt in truth:
            assert tls[gt.user_id].first_play_day == gt.first_day
            assert tls[gt.user_id].last_play_day == gt.last_day

    def test_deterministic_bytes(self):
        cfg = CohortConfig(n_users=60, rng_seed=11)
        a = generate_cohort(cfg)
        b = generate_cohort(CohortConfig(n_users=60, rng_seed=11))
        assert serialize_events(a[0]) == serialize_events(b[0])
        assert format_ground_truth(a[1]) == format_ground_truth(b[1])
        c = generate_cohort(CohortConfig(n_users=60, rng_seed=12))
        assert serialize_events(c[0]) != serialize_events(a[0])

    def test_users_independent_of_cohort_size(self):
        """Per-user streams: user k is the same whatever n_users is."""
        small, _ = generate_cohort(CohortConfig(n_users=5, rng_seed=2))
        big, _ = generate_cohort(CohortConfig(n_users=20, rng_seed=2))
        assert serialize_events(e for e in big if e.user_id <= "u00004") == serialize_events(small)

    def test_canonical_order(self):
        events, _ = generate_cohort(CohortConfig(n_users=30, rng_seed=1))
        keys = [(e.user_id, e.day) for e in events]
        assert keys == sorted(keys)

    def test_mix_convergence(self):
        """10,000 users land within 2% of the configured archetype weights."""
        cfg = CohortConfig(n_users=10_000, rng_seed=7,
                           archetypes={k: ArchetypeSpec(**{**v.__dict__, "play_prob": 0.0})
                                       for k, v in DEFAULT_ARCHETYPES.items()})
        _, truth = generate_cohort(cfg)
        names = [t.archetype for t in truth]
        for name, w in cfg.archetype_mix.items():
            assert abs(names.count(name) / len(names) - w) < 0.02

    def test_ground_truth_csv_round_trip(self):
        _, truth = generate_cohort(CohortConfig(n_users=10))
        text = format_ground_truth(truth)
        assert text.splitlines()[0] == "user,archetype,first_day,last_day"
        assert parse_ground_truth(text) == truth


class TestConfig:
    @pytest.mark.parametrize("kw", [
        {"n_users": 0},
        {"archetype_mix": {"LoyalStayer": 0.5, "Casual": 0.4}},
        {"archetype_mix": {"LoyalStayer": 1.2, "Casual": -0.2}},
        {"archetype_mix": {"Nobody": 1.0}},
        {"rng_seed": -1},
    ])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            generate_cohort(CohortConfig(**kw))

    def test_negative_rate_rejected(self):
        arch = ArchetypeSpec("Casual", Lifetime(), PlayCurve(), stage_rate=-1.0)
        with pytest.raises(ValueError):
            arch.validate(240)

    def test_lifetime_support(self):
        arch = ArchetypeSpec("Casual", Lifetime("uniform", 0, 10), PlayCurve())
        with pytest.raises(ValueError):
            arch.validate(240)

    def test_dict_round_trip(self):
        cfg = CohortConfig(n_users=3, rng_seed=9)
        again = CohortConfig.from_dict(cfg.to_dict())
        assert again == cfg

    def test_unknown_key(self):
        with pytest.raises(KeyError):
            CohortConfig.from_dict({"n_user": 3})
