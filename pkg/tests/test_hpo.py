"""Tests for search spaces, random search and GP-based Bayesian optimization."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from churnvec.hpo import (
    Dimension,
    GaussianProcess,
    SearchSpace,
    bayes_optimize,
    categorical,
    expected_improvement,
    format_trials_csv,
    integer,
    parse_trials_csv,
    random_search,
    rbf_kernel,
    uniform,
)

QUAD = SearchSpace((uniform("x", 0.0, 1.0),))


def quad(p):
    return -(p["x"] - 0.3) ** 2


MIXED = SearchSpace((uniform("lr", 1e-4, 1e-1, log=True), integer("depth", 2, 9),
                     categorical("act", ["relu", "tanh", "sigmoid"])))


class TestSpace:
    def test_log_dimension_uniform_in_log(self):
        """KS test of log-draws against U[log lo, log hi] over 10,000 samples."""
        rng = np.random.default_rng(0)
        dim = uniform("lam", 1e-4, 1.0, log=True)
        draws = np.log([dim.from_unit(rng.random()) for _ in range(10_000)])
        lo, hi = math.log(1e-4), 0.0
        assert stats.kstest(draws, "uniform", args=(lo, hi - lo)).pvalue > 0.01

    def test_integer_levels_equally_likely(self):
        rng = np.random.default_rng(1)
        dim = integer("k", 2, 5)
        counts = np.bincount([dim.from_unit(rng.random()) for _ in range(8000)], minlength=6)[2:]
        assert stats.chisquare(counts).pvalue > 0.01

    def test_encoding_in_unit_box_and_one_hot(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            cfg = MIXED.sample(rng)
            enc = MIXED.encode(cfg)
            assert enc.shape == (MIXED.encoded_width,) == (5,)
            assert np.all((enc >= 0) & (enc <= 1))
            assert enc[2:].sum() == 1.0

    @given(st.floats(0.0, 1.0, exclude_max=True))
    def test_float_unit_round_trip(self, u):
        dim = uniform("x", -2.0, 3.0)
        assert dim.to_unit(dim.from_unit(u))[0] == pytest.approx(u, abs=1e-12)

    def test_invalid_dimensions(self):
        with pytest.raises(ValueError):
            uniform("x", 1.0, 1.0).validate()
        with pytest.raises(ValueError):
            uniform("x", 0.0, 1.0, log=True).validate()
        with pytest.raises(ValueError):
            SearchSpace((categorical("c", []),))

    def test_dict_round_trip_and_unknown_keys(self):
        assert SearchSpace.from_dict(MIXED.to_dict()) == MIXED
        with pytest.raises(KeyError):
            Dimension.from_dict("x", {"kind": "float", "lo": 0, "hi": 1, "step": 2})


class TestRandomSearch:
    def test_budget_one(self):
        res = random_search(QUAD, quad, 1, seed=4)
        assert len(res.trials) == 1
        assert res.best_params == res.trials[0].params

    def test_deterministic(self):
        a = random_search(MIXED, lambda p: p["depth"] * p["lr"], 12, seed=7)
        b = random_search(MIXED, lambda p: p["depth"] * p["lr"], 12, seed=7)
        assert [t.params for t in a.trials] == [t.params for t in b.trials]

    @given(st.integers(0, 10_000), st.integers(1, 25))
    @settings(max_examples=30, deadline=None)
    def test_best_so_far_monotone(self, seed, budget):
        res = random_search(QUAD, quad, budget, seed)
        bsf = res.best_so_far()
        assert np.all(np.diff(bsf) >= 0)
        assert bsf[-1] == res.best_objective == max(t.objective for t in res.trials)


class TestGp:
    def test_interpolates_training_points(self):
        X = np.linspace(0, 1, 6)[:, None]
        y = np.sin(4 * X[:, 0])
        mu, sd = GaussianProcess.fit(X, y).predict(X)
        np.testing.assert_allclose(mu, y, atol=1e-3)
        assert sd.max() < 1e-2

    def test_kernel_values(self):
        A = np.array([[0.0], [1.0]])
        np.testing.assert_allclose(rbf_kernel(A, A, 0.5), [[1, math.exp(-2)], [math.exp(-2), 1]])

    def test_expected_improvement_closed_form(self):
        # at mu == incumbent, EI = sigma * phi(0)
        assert expected_improvement([1.0], [2.0], 1.0)[0] == pytest.approx(2.0 / math.sqrt(2 * math.pi))
        # zero uncertainty reduces to the positive part of the gap
        np.testing.assert_array_equal(expected_improvement([0.5, 2.0], [0.0, 0.0], 1.0), [0.0, 1.0])


class TestBayes:
    def test_budget_equal_n_init_is_random_search(self):
        a = bayes_optimize(MIXED, lambda p: -p["lr"], 5, seed=11, n_init=5)
        b = random_search(MIXED, lambda p: -p["lr"], 5, seed=11)
        assert [t.params for t in a.trials] == [t.params for t in b.trials]
        assert a.best_params == b.best_params

    def test_deterministic_and_history_length(self):
        a = bayes_optimize(MIXED, lambda p: -abs(math.log10(p["lr"]) + 2) + p["depth"] / 10, 14, seed=3, n_init=4)
        b = bayes_optimize(MIXED, lambda p: -abs(math.log10(p["lr"]) + 2) + p["depth"] / 10, 14, seed=3, n_init=4)
        assert len(a.trials) == 14
        assert [t.params for t in a.trials] == [t.params for t in b.trials]
        assert np.all(np.diff(a.best_so_far()) >= 0)

    def test_constant_objective(self):
        res = bayes_optimize(QUAD, lambda p: 1.5, 12, seed=0, n_init=4)
        assert all(t.objective == 1.5 for t in res.trials)
        assert res.best_params is not None

    def test_failures_imputed_at_worst(self):
        def f(p):
            if p["x"] > 0.6:
                raise RuntimeError("trainer blew up")
            return quad(p)

        res = bayes_optimize(QUAD, f, 20, seed=2, n_init=6)
        assert len(res.trials) == 20
        failed = [t for t in res.trials if t.failed]
        ok = [t.objective for t in res.trials if not t.failed]
        assert failed and all(t.objective == min(ok) for t in failed)
        assert "RuntimeError" in failed[0].error
        assert res.best_params["x"] <= 0.6

    def test_budget_below_n_init(self):
        with pytest.raises(ValueError):
            bayes_optimize(QUAD, quad, 3, n_init=4)

    def test_quadratic_benchmark(self):
        """20 paired seeds, budget 30: BO finds x within 0.05 of 0.3 and beats random search."""
        bo, rs, hits = [], [], 0
        for s in range(20):
            b = bayes_optimize(QUAD, quad, 30, seed=s)
            bo.append(b.best_objective)
            rs.append(random_search(QUAD, quad, 30, seed=s).best_objective)
            hits += abs(b.best_params["x"] - 0.3) <= 0.05
        assert np.median(bo) >= np.median(rs)
        assert hits >= 18


class TestTrialCsv:
    def test_round_trip(self):
        res = random_search(MIXED, lambda p: p["lr"], 4, seed=0)
        text = format_trials_csv(res.trials)
        assert text.splitlines()[0] == "trial,params_json,objective,seconds,status"
        again = parse_trials_csv(text)
        assert [t.params for t in again] == [t.params for t in res.trials]
        assert [t.objective for t in again] == [t.objective for t in res.trials]

    def test_bad_header(self):
        with pytest.raises(ValueError):
            parse_trials_csv("a,b\n")
