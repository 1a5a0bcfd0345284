import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import norm

from flowopt.errors import ConfigError, NotFittedError
from flowopt.features import FeatureMask, Representation
from flowopt.optimizer import (
    OptimizerConfig, SearchSpace, SurrogateState, acquisition_scores, expected_improvement, propose, run,
    surrogate_predict, trace_front,
)
from flowopt.pareto import ObjectivePoint, pareto_filter
from flowopt.priors import PriorModel, depth_prior_pmf, uniform_prior

from landscape import table_profiler

SPACE = SearchSpace((0, 4, 6, 11), 12)


def ei_oracle(mu, sigma, best, xi):
    if sigma == 0:
        return max(0.0, best - xi - mu)
    z = (best - xi - mu) / sigma
    return sigma * (z * norm.cdf(z) + norm.pdf(z))


def test_ei_closed_form():
    assert expected_improvement(0.99, 1.0, 1.0, 0.01) == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-12)
    assert expected_improvement(1.5, 0.0, 1.0) == 0.0
    assert expected_improvement(0.5, 0.0, 1.0, 0.01) == pytest.approx(0.49)
    with pytest.raises(ValueError):
        expected_improvement(0.0, -1.0, 1.0)


@given(st.floats(-5, 5), st.one_of(st.just(0.0), st.floats(1e-6, 3)), st.floats(-5, 5), st.floats(0, 0.1))
def test_ei_matches_scipy(mu, sigma, best, xi):
    got = expected_improvement(mu, sigma, best, xi)
    assert got >= 0
    assert got == pytest.approx(ei_oracle(mu, sigma, best, xi), rel=1e-9, abs=1e-12)


@given(st.floats(-5, 5), st.floats(0, 1e-300), st.floats(-5, 5))
def test_ei_tiny_sigma_finite(mu, sigma, best):
    got = expected_improvement(mu, sigma, best)
    assert got == pytest.approx(max(0.0, best - 0.01 - mu), abs=1e-12)


@given(st.floats(0.01, 3), st.floats(-3, 3))
def test_ei_decreasing_in_mu(sigma, best):
    mus = np.linspace(-4, 4, 50)
    ei = expected_improvement(mus, np.full(50, sigma), best)
    assert (np.diff(ei) <= 1e-15).all()


def test_space_dimension_and_size():
    assert SPACE.dimension == 5
    assert SPACE.size == 15 * 12
    assert SearchSpace((0, 1), 3, allow_unbounded=True).size == 12


@given(st.integers(0, SPACE.size - 1))
def test_encoding_roundtrip(i):
    rep = SPACE.rep_at(i)
    row = SPACE.encode(rep)
    assert SPACE.decode(row) == rep
    assert SPACE.key_of_row(row) == rep.key


def test_enumerate_unique_and_unbounded():
    sp = SearchSpace((2, 3), 4, allow_unbounded=True)
    reps = list(sp.enumerate())
    assert len({r.key for r in reps}) == sp.size
    assert sum(r.depth is None for r in reps) == 3
    assert all(sp.decode(sp.encode(r)) == r for r in reps)


def test_encode_rejects_outside():
    with pytest.raises(ValueError):
        SPACE.encode(Representation(FeatureMask.from_ids([1]), 3))
    with pytest.raises(ValueError):
        SPACE.encode(Representation(FeatureMask.from_ids([0]), 13))


def test_config_validation():
    assert OptimizerConfig(budget=40).beta_pi == 4.0
    with pytest.raises(ConfigError):
        OptimizerConfig(budget=3, init_samples=4)
    with pytest.raises(ConfigError):
        OptimizerConfig(candidates=0)


def fitted_state(n=12, seed=0):
    prof = table_profiler(SPACE)
    state = SurrogateState(SPACE, 20, seed)
    rng = np.random.default_rng(seed)
    for i in rng.choice(SPACE.size, n, replace=False):
        rep = SPACE.rep_at(int(i))
        r = prof.evaluate(rep)
        state.observe(rep, r.cost, r.perf)
    state.fit()
    return state


def test_surrogate_unfitted():
    with pytest.raises(NotFittedError):
        surrogate_predict(SurrogateState(SPACE), np.zeros((1, 5)))


def test_surrogate_overfits_training_points():
    state = fitted_state(5)
    X = np.vstack(state.rows)
    (mc, sc), (mp, sp) = surrogate_predict(state, X)
    c, p = state.observed_targets()
    np.testing.assert_allclose(mc, c, atol=1e-12)
    np.testing.assert_allclose(mp, p, atol=1e-12)
    # every tree sees all points without bootstrap, so they agree exactly
    assert (sc == 1e-6).all() and (sp == 1e-6).all()


def test_surrogate_sigma_nonnegative():
    state = fitted_state(20)
    X = SPACE.uniform_rows(200, np.random.default_rng(1))
    for _, sd in surrogate_predict(state, X):
        assert (sd >= 1e-6).all()


def test_acquisition_prior_exponent():
    state = fitted_state(10)
    rows = SPACE.uniform_rows(50, np.random.default_rng(2))
    prior = PriorModel({0: 0.9, 4: 0.2, 6: 0.5, 11: 0.5}, depth_prior_pmf(12))
    flat = acquisition_scores(state, prior, rows, 0.3, 1, OptimizerConfig(prior_decay=0.0))
    weighted = acquisition_scores(state, prior, rows, 0.3, 4, OptimizerConfig(prior_decay=2.0))
    logp = prior.log_density(rows[:, :-1], rows[:, -1])
    finite = np.isfinite(flat)
    np.testing.assert_allclose(weighted[finite], flat[finite] + 0.5 * logp[finite], rtol=1e-12)
    # the exponent beta/t shrinks toward zero as t grows
    far = acquisition_scores(state, prior, rows, 0.3, 10**9, OptimizerConfig(prior_decay=2.0))
    np.testing.assert_allclose(far[finite], flat[finite], atol=1e-7)


def test_propose_prefers_dominant_feature():
    # feature 0 lowers cost and raises perf everywhere: proposals should include it
    # more often than its prior rate
    space = SearchSpace((0, 1, 2), 5)
    state = SurrogateState(space, 20, 0)
    rng = np.random.default_rng(3)
    for i in rng.choice(space.size, 20, replace=False):
        rep = space.rep_at(int(i))
        has0 = 0 in rep.mask
        state.observe(rep, cost=10.0 - 5 * has0 + rep.depth, perf=0.3 + 0.5 * has0)
    state.fit()
    prior = uniform_prior(space.features, 5)
    hits = 0
    for t in range(1, 101):
        rep = propose(state, prior, OptimizerConfig(candidates=200), t, rng)
        hits += 0 in rep.mask
    assert hits / 100 > 4 / 7


def test_run_budget_and_cache():
    prof = table_profiler(SPACE)
    cfg = OptimizerConfig(budget=25, candidates=300, n_trees=10, seed=4)
    trace, front = run(SPACE, uniform_prior(SPACE.features, 12), prof, cfg)
    assert len(trace) == 25
    assert prof.n_measured == len({r.rep.key for r in trace}) == 25
    assert [r.iteration for r in trace] == list(range(25))
    assert [(p.cost, p.perf) for p in front] == [
        (p.cost, p.perf) for p in pareto_filter(ObjectivePoint(r.cost, r.perf) for r in trace)]


def test_run_init_only_boundary():
    prof = table_profiler(SPACE)
    trace, _ = run(SPACE, uniform_prior(SPACE.features, 12), prof, OptimizerConfig(budget=3, init_samples=3))
    assert len(trace) == 3


def test_run_deterministic():
    cfg = OptimizerConfig(budget=15, candidates=300, n_trees=10, seed=9)
    a, _ = run(SPACE, uniform_prior(SPACE.features, 12), table_profiler(SPACE), cfg)
    b, _ = run(SPACE, uniform_prior(SPACE.features, 12), table_profiler(SPACE), cfg)
    assert [r.rep for r in a] == [r.rep for r in b]


def test_run_exhausts_tiny_space():
    space = SearchSpace((0,), 4)
    trace, _ = run(space, uniform_prior(space.features, 4), table_profiler(space),
                   OptimizerConfig(budget=4, candidates=50, n_trees=5))
    assert sorted(r.rep.depth for r in trace) == [1, 2, 3, 4]


def test_prior_space_mismatch():
    with pytest.raises(ConfigError):
        run(SPACE, uniform_prior((0, 4), 12), table_profiler(SPACE), OptimizerConfig(budget=3))


def test_on_result_sees_partial_trace():
    seen = []

    class Failing:
        def __init__(self):
            self.inner = table_profiler(SPACE)
            self.calls = 0

        def evaluate(self, rep):
            self.calls += 1
            if self.calls == 6:
                raise RuntimeError("boom")
            return self.inner.evaluate(rep)

    with pytest.raises(RuntimeError):
        run(SPACE, uniform_prior(SPACE.features, 12), Failing(),
            OptimizerConfig(budget=10, candidates=100, n_trees=5), on_result=seen.append)
    assert len(seen) == 5
