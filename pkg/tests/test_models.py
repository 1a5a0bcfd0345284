import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from sklearn.metrics import f1_score

from flowopt.errors import FormatError, TrainingError
from flowopt.models import (
    DEFAULT_DEPTH_GRID, ModelConfig, load_model, macro_f1, predict, rmse, save_model, score, serve, train,
)


def blobs(rng, n=120, k=3, d=4, spread=0.6):
    centers = rng.normal(0, 3, (k, d))
    y = np.repeat(np.arange(k), n // k)
    X = centers[y] + rng.normal(0, spread, (len(y), d))
    return X, np.array([f"c{v}" for v in y], dtype=object)


def test_defaults():
    cfg = ModelConfig()
    assert cfg.depth_grid == (3, 5, 10, 15, 20) == DEFAULT_DEPTH_GRID
    assert cfg.n_estimators == 100
    assert cfg.cv_folds == 5


@pytest.mark.parametrize("kw", [dict(depth_grid=()), dict(n_estimators=0), dict(cv_folds=1), dict(kind="svm")])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        ModelConfig(**kw)


@pytest.mark.parametrize("kind", ["decision_tree", "random_forest"])
def test_separable_holdout_f1_is_one(kind):
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, (200, 3))
    y = np.where(X[:, 0] > 0, "a", "b").astype(object)
    m = train(X[:150], y[:150], ModelConfig(kind=kind, n_estimators=10))
    Xt = X[150:].copy()
    Xt[:, 0] = np.where(Xt[:, 0] > 0, Xt[:, 0] + 0.05, Xt[:, 0] - 0.05)  # keep a margin
    assert score(m, Xt, np.where(Xt[:, 0] > 0, "a", "b")) == 1.0


def test_deep_tree_interpolates():
    rng = np.random.default_rng(1)
    X, y = blobs(rng)
    m = train(X, y, ModelConfig(depth_grid=(20,)))
    assert (predict(m, X) == y).all()


def test_predict_shapes_and_width():
    rng = np.random.default_rng(2)
    X, y = blobs(rng)
    m = train(X, y, ModelConfig(depth_grid=(3,)))
    assert len(predict(m, np.zeros((0, 4)))) == 0
    assert len(predict(m, X[:1])) == 1
    with pytest.raises(ValueError):
        predict(m, X[:, :3])


def test_single_class_rejected():
    with pytest.raises(TrainingError):
        train(np.zeros((10, 2)), np.array(["a"] * 10, dtype=object), ModelConfig())


@pytest.mark.parametrize("kind", ["decision_tree", "random_forest"])
def test_determinism_and_grid(kind):
    rng = np.random.default_rng(3)
    X, y = blobs(rng, spread=2.5)
    cfg = ModelConfig(kind=kind, n_estimators=15, seed=4)
    a, b = train(X, y, cfg), train(X, y, cfg)
    assert a.max_depth in cfg.depth_grid
    np.testing.assert_array_equal(predict(a, X), predict(b, X))


@pytest.mark.parametrize("kind", ["decision_tree", "random_forest"])
@pytest.mark.parametrize("task", ["classification", "regression"])
def test_serving_kernel_matches_sklearn(kind, task):
    rng = np.random.default_rng(5)
    X, y = blobs(rng, spread=2.0)
    if task == "regression":
        y = X[:, 0] * 2 + rng.normal(0, 0.3, len(X))
    m = train(X, y, ModelConfig(kind=kind, task=task, depth_grid=(6,), n_estimators=12))
    Xq = rng.normal(0, 3, (300, 4))
    if task == "classification":
        assert (serve(m, Xq) == predict(m, Xq)).all()
    else:
        np.testing.assert_allclose(serve(m, Xq), predict(m, Xq), rtol=1e-12, atol=1e-12)


def test_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(6)
    X, y = blobs(rng)
    m = train(X, y, ModelConfig(depth_grid=(4,)))
    save_model(m, tmp_path / "m.joblib")
    back = load_model(tmp_path / "m.joblib")
    assert (predict(back, X) == predict(m, X)).all()
    import joblib
    joblib.dump({"format": "other"}, tmp_path / "bad.joblib")
    with pytest.raises(FormatError):
        load_model(tmp_path / "bad.joblib")


def test_macro_f1_examples():
    assert macro_f1(["a", "b", "a"], ["a", "b", "a"]) == 1.0
    # TP=FP=FN=TN=1 for both classes: precision = recall = 1/2
    assert macro_f1(["a", "a", "b", "b"], ["a", "b", "a", "b"]) == pytest.approx(0.5)
    # always predicting "a" on a balanced 2/2 set
    assert macro_f1(["a"] * 4, ["a", "a", "b", "b"]) == pytest.approx((2 / 3 + 0) / 2)
    with pytest.raises(ValueError):
        macro_f1([], [])


labels = st.lists(st.sampled_from("abcd"), min_size=1, max_size=40)


@given(st.data())
def test_macro_f1_matches_sklearn(data):
    truth = data.draw(labels)
    pred = data.draw(st.lists(st.sampled_from("abcde"), min_size=len(truth), max_size=len(truth)))
    union = sorted(set(truth) | set(pred))
    expect = f1_score(truth, pred, labels=union, average="macro", zero_division=0)
    assert macro_f1(pred, truth) == pytest.approx(expect, abs=1e-12)


@given(st.data())
def test_macro_f1_relabel_invariant(data):
    truth = data.draw(labels)
    pred = data.draw(st.lists(st.sampled_from("abcd"), min_size=len(truth), max_size=len(truth)))
    perm = dict(zip("abcd", data.draw(st.permutations("wxyz"))))
    assert macro_f1([perm[p] for p in pred], [perm[t] for t in truth]) == pytest.approx(macro_f1(pred, truth))


def test_rmse_examples():
    assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert rmse([3.0, 4.0], [0.0, 0.0]) == pytest.approx(math.sqrt(12.5))
    assert rmse(np.arange(5) + 2.5, np.arange(5)) == pytest.approx(2.5)
    with pytest.raises(ValueError):
        rmse([], [])
