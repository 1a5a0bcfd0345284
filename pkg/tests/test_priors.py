import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from flowopt.priors import (
    FeatureStats, PriorConfig, PriorModel, build_prior, depth_prior_pmf, feature_prior, mutual_info,
    prior_table_csv, reduce_dimensions, sample_representation, uniform_prior,
)


def test_mi_perfect_dependence():
    y = np.array([0, 1] * 500)
    assert mutual_info(y.astype(float), y) == pytest.approx(math.log(2), abs=1e-12)


def test_mi_independent_is_small():
    rng = np.random.default_rng(0)
    x = rng.normal(size=5000)
    y = rng.permutation(np.repeat(np.arange(4), 1250))
    assert mutual_info(x, y) < 0.02


def test_mi_constant_labels():
    assert mutual_info(np.arange(10.0), np.zeros(10)) == 0.0


def test_mi_plugin_oracle():
    # hand-computed plug-in estimate for a 2x2 table with counts [[3,1],[1,3]]
    x = np.array([0, 0, 0, 0, 1, 1, 1, 1], dtype=float)
    y = np.array([0, 0, 0, 1, 0, 1, 1, 1])
    p = np.array([[3, 1], [1, 3]]) / 8
    expect = sum(p[i, j] * math.log(p[i, j] / (0.5 * 0.5)) for i in range(2) for j in range(2))
    assert mutual_info(x, y) == pytest.approx(expect, abs=1e-12)


@given(st.lists(st.integers(-1000, 1000), min_size=2, max_size=80), st.integers(0, 2**16))
def test_mi_monotone_transform_invariance(values, seed):
    x = np.array(values, dtype=float)
    y = np.random.default_rng(seed).integers(0, 3, len(x))
    assert mutual_info(np.exp(x / 100), y) == pytest.approx(mutual_info(x, y), abs=1e-12)
    assert mutual_info(-x ** 3, y) == pytest.approx(mutual_info(x, y), abs=1e-12)
    assert mutual_info(x, y) >= 0


def test_reduce_dimensions_examples():
    assert reduce_dimensions(FeatureStats({0: 0.5, 1: 0.0005, 2: 0.2}), 1e-3) == [0, 2]
    assert reduce_dimensions(FeatureStats({3: 0.0, 4: 0.0}), 1e-3) == [3]
    assert reduce_dimensions(FeatureStats({0: 0.0, 1: 0.3, 2: 0.0, 3: 1e-9}), 0.0) == [1, 3]


@given(st.dictionaries(st.integers(0, 66), st.floats(0, 2), min_size=1, max_size=20),
       st.floats(0, 1), st.floats(0, 1))
def test_reduce_dimensions_monotone(mi, e1, e2):
    lo, hi = sorted((e1, e2))
    s = FeatureStats(mi)
    a, b = set(reduce_dimensions(s, lo)), set(reduce_dimensions(s, hi))
    assert a and b
    if any(v > hi for v in mi.values()):
        assert b <= a


def test_feature_prior_examples():
    assert feature_prior(0.7, 0.7, 0.0) == 1.0
    assert feature_prior(0.3, 0.7, 1.0) == 0.5
    assert feature_prior(0.7, 0.7, 0.4) == pytest.approx(0.8)
    assert feature_prior(0.0, 0.0, 0.4) == 0.5


@given(st.floats(1e-6, 10), st.floats(0, 1), st.floats(0, 1))
def test_feature_prior_range_and_affinity(i_max, frac, delta):
    p = feature_prior(frac * i_max, i_max, delta)
    assert delta / 2 - 1e-12 <= p <= 1 - delta / 2 + 1e-12
    slope = feature_prior(i_max, i_max, delta) - feature_prior(0.0, i_max, delta)
    assert slope == pytest.approx(1 - delta, abs=1e-12)


def test_depth_pmf_examples():
    assert depth_prior_pmf(1).tolist() == [1.0]
    np.testing.assert_allclose(depth_prior_pmf(2), [0.75, 0.25], atol=1e-15)
    np.testing.assert_allclose(depth_prior_pmf(7, 1, 1), np.full(7, 1 / 7), atol=1e-15)


@given(st.integers(1, 300))
def test_depth_pmf_shape(n):
    p = depth_prior_pmf(n)
    assert abs(p.sum() - 1) < 1e-12
    assert (np.diff(p) < 0).all()
    # Beta(1, 2) density at midpoints, by hand
    w = 2 * (1 - (np.arange(1, n + 1) - 0.5) / n)
    np.testing.assert_allclose(p, w / w.sum(), rtol=1e-12)


def test_build_prior_respects_delta():
    stats = FeatureStats({0: 0.6, 4: 0.3, 6: 0.0})
    prior = build_prior(stats, [0, 4, 6], 10, PriorConfig(delta=0.4))
    assert prior.feature_probs == pytest.approx({0: 0.8, 4: 0.5, 6: 0.2})
    assert prior.max_depth == 10
    with pytest.raises(ValueError):
        PriorConfig(delta=1.5)


def test_sample_all_ones():
    prior = PriorModel({1: 1.0, 2: 1.0, 5: 1.0}, depth_prior_pmf(4))
    rng = np.random.default_rng(0)
    for _ in range(50):
        assert sample_representation(prior, rng).mask.ids == (1, 2, 5)


def test_sample_all_zero_rejected():
    with pytest.raises(ValueError):
        sample_representation(PriorModel({1: 0.0}, depth_prior_pmf(3)), np.random.default_rng(0))


def test_sample_frequencies_monte_carlo():
    probs = {0: 0.8, 4: 0.5, 6: 0.2}
    prior = PriorModel(probs, depth_prior_pmf(10))
    rng = np.random.default_rng(7)
    n = 100_000
    draws = [sample_representation(prior, rng) for _ in range(n)]
    # empty masks are redrawn, so compare against the conditional inclusion rate
    p_empty = np.prod([1 - p for p in probs.values()])
    for f, p in probs.items():
        freq = sum(f in r.mask for r in draws) / n
        assert freq == pytest.approx(p / (1 - p_empty), abs=0.01)
    hist = np.bincount([r.depth for r in draws], minlength=11)[1:] / n
    assert 0.5 * np.abs(hist - prior.depth_pmf).sum() < 0.02


def test_log_density_matches_product():
    prior = PriorModel({0: 0.8, 4: 0.5, 6: 0.2}, depth_prior_pmf(5))
    masks = np.array([[1, 0, 1], [0, 1, 0]])
    got = prior.log_density(masks, np.array([1, 5]))
    expect = [math.log(0.8 * 0.5 * 0.2 * prior.depth_pmf[0]), math.log(0.2 * 0.5 * 0.8 * prior.depth_pmf[4])]
    np.testing.assert_allclose(got, expect, rtol=1e-12)


def test_uniform_prior():
    p = uniform_prior([3, 1], 4)
    assert p.features == (1, 3)
    assert set(p.feature_probs.values()) == {0.5}
    np.testing.assert_allclose(p.depth_pmf, 0.25)


def test_prior_table_csv():
    stats = FeatureStats({0: 0.5, 6: 0.1})
    text = prior_table_csv(stats, build_prior(stats, [0, 6], 3, PriorConfig()))
    lines = text.strip().splitlines()
    assert lines[0] == "feature,name,mi,prior_prob"
    assert lines[1].startswith("0,dur,0.5,")
