"""Decision-tree and random-forest training, inference and scoring."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import joblib
import numpy as np
from sklearn.ensemble import RandomForestClassifier, RandomForestRegressor
from sklearn.model_selection import GridSearchCV, KFold, StratifiedKFold
from sklearn.tree import DecisionTreeClassifier, DecisionTreeRegressor

from .errors import FormatError, TrainingError
from .features import kernels

DEFAULT_DEPTH_GRID = (3, 5, 10, 15, 20)
MODEL_FORMAT = "flowopt-model"
MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "decision_tree"
    task: str = "classification"
    depth_grid: tuple[int, ...] = DEFAULT_DEPTH_GRID
    n_estimators: int = 100
    cv_folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("decision_tree", "random_forest"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.task not in ("classification", "regression"):
            raise ValueError(f"unknown task {self.task!r}")
        if not self.depth_grid:
            raise ValueError("depth_grid must not be empty")
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be >= 2")
        object.__setattr__(self, "depth_grid", tuple(sorted(int(d) for d in self.depth_grid)))

    def with_seed(self, seed: int) -> "ModelConfig":
        return ModelConfig(self.kind, self.task, self.depth_grid, self.n_estimators, self.cv_folds, seed)


@dataclass(frozen=True)
class CompiledEnsemble:
    """Flattened tree arrays consumed by :func:`kernels.predict_ensemble`."""

    roots: np.ndarray
    left: np.ndarray
    right: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    leaf_values: np.ndarray
    classify: bool

    @classmethod
    def from_estimator(cls, est, classify: bool) -> "CompiledEnsemble":
        trees = [t.tree_ for t in est.estimators_] if hasattr(est, "estimators_") else [est.tree_]
        roots, left, right, feat, thr, vals = [], [], [], [], [], []
        offset = 0
        for tree in trees:
            roots.append(offset)
            lc = tree.children_left.astype(np.int64)
            rc = tree.children_right.astype(np.int64)
            left.append(np.where(lc >= 0, lc + offset, -1))
            right.append(np.where(rc >= 0, rc + offset, -1))
            feat.append(np.maximum(tree.feature, 0).astype(np.int64))
            thr.append(tree.threshold.astype(np.float64))
            v = tree.value[:, 0, :].astype(np.float64)
            if classify:
                norm = v.sum(axis=1)[:, None]
                norm[norm == 0.0] = 1.0
                v = v / norm
            vals.append(v)
            offset += tree.node_count
        return cls(
            np.array(roots, dtype=np.int64), np.concatenate(left), np.concatenate(right),
            np.concatenate(feat), np.concatenate(thr), np.ascontiguousarray(np.concatenate(vals)), classify,
        )

    def run(self, X: np.ndarray, out_idx: np.ndarray, out_val: np.ndarray) -> None:
        kernels.predict_ensemble(X, self.roots, self.left, self.right, self.feature, self.threshold,
                                 self.leaf_values, self.classify, out_idx, out_val)


@dataclass
class TrainedModel:
    estimator: object
    config: ModelConfig
    params: dict
    n_features: int
    classes: np.ndarray | None
    fit_seconds: float
    cv_scores: dict = field(default_factory=dict)
    _compiled: CompiledEnsemble | None = field(default=None, repr=False)

    @property
    def max_depth(self) -> int:
        return int(self.params["max_depth"])

    @property
    def compiled(self) -> CompiledEnsemble:
        if self._compiled is None:
            self._compiled = CompiledEnsemble.from_estimator(self.estimator, self.classes is not None)
        return self._compiled


def _estimator(cfg: ModelConfig, max_depth: int | None = None):
    kw = dict(random_state=cfg.seed)
    if max_depth is not None:
        kw["max_depth"] = max_depth
    if cfg.kind == "decision_tree":
        cls = DecisionTreeClassifier if cfg.task == "classification" else DecisionTreeRegressor
        return cls(**kw)
    if cfg.task == "classification":
        return RandomForestClassifier(n_estimators=cfg.n_estimators, max_features="sqrt", n_jobs=1, **kw)
    return RandomForestRegressor(n_estimators=cfg.n_estimators, max_features=1.0 / 3.0, n_jobs=1, **kw)


def train(X: np.ndarray, y: np.ndarray, cfg: ModelConfig) -> TrainedModel:
    """Grid-search max depth by inner k-fold CV, then refit on all rows."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise ValueError(f"X has shape {X.shape} but y has {len(y)} rows")
    if np.isnan(X).any():
        raise ValueError("feature matrix contains NaN")
    if len(y) < cfg.cv_folds and len(cfg.depth_grid) > 1:
        raise TrainingError(f"{len(y)} rows is fewer than {cfg.cv_folds} CV folds")
    classes = None
    if cfg.task == "classification":
        classes = np.unique(y)
        if len(classes) < 2:
            raise TrainingError("classification needs at least two classes in the training data")
    else:
        y = np.asarray(y, dtype=np.float64)

    t0 = time.perf_counter()
    cv_scores: dict = {}
    if len(cfg.depth_grid) == 1:
        depth = cfg.depth_grid[0]
    else:
        if cfg.task == "classification":
            _, counts = np.unique(y, return_counts=True)
            folds = min(cfg.cv_folds, int(counts.min()))
            if folds < 2:
                raise TrainingError("a class has a single training flow; cannot cross-validate")
            cv = StratifiedKFold(n_splits=folds, shuffle=True, random_state=cfg.seed)
            scoring = "f1_macro"
        else:
            cv = KFold(n_splits=cfg.cv_folds, shuffle=True, random_state=cfg.seed)
            scoring = "neg_root_mean_squared_error"
        search = GridSearchCV(_estimator(cfg), {"max_depth": list(cfg.depth_grid)}, scoring=scoring,
                              cv=cv, refit=False, n_jobs=1)
        search.fit(X, y)
        means = search.cv_results_["mean_test_score"]
        # first maximum in ascending grid order -> ties go to the shallower tree
        best = int(np.argmax(np.where(np.isnan(means), -np.inf, means)))
        depth = cfg.depth_grid[best]
        cv_scores = dict(zip(cfg.depth_grid, map(float, means)))
    est = _estimator(cfg, depth)
    est.fit(X, y)
    return TrainedModel(est, cfg, {"max_depth": depth}, X.shape[1], classes,
                        time.perf_counter() - t0, cv_scores)


def predict(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1) if X.size else X.reshape(0, model.n_features)
    if X.shape[1] != model.n_features:
        raise ValueError(f"model expects {model.n_features} features, got {X.shape[1]}")
    if X.shape[0] == 0:
        return np.empty(0, dtype=object if model.classes is not None else np.float64)
    return model.estimator.predict(X)


def serve(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    """Predict through the compiled ensemble kernel (the timed serving path)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    n = X.shape[0]
    idx = np.zeros(n, dtype=np.int64)
    val = np.zeros(n, dtype=np.float64)
    model.compiled.run(X, idx, val)
    return model.classes[idx] if model.classes is not None else val


def macro_f1(pred, truth) -> float:
    """Unweighted mean of per-class F1 over classes seen in either vector."""
    pred = np.asarray(pred, dtype=object)
    truth = np.asarray(truth, dtype=object)
    if len(pred) != len(truth):
        raise ValueError("pred and truth differ in length")
    if len(truth) == 0:
        raise ValueError("macro_f1 of empty input")
    scores = []
    for c in set(pred.tolist()) | set(truth.tolist()):
        tp = int(np.sum((pred == c) & (truth == c)))
        fp = int(np.sum((pred == c) & (truth != c)))
        fn = int(np.sum((pred != c) & (truth == c)))
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    return float(np.mean(scores))


def rmse(pred, truth) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if len(pred) != len(truth):
        raise ValueError("pred and truth differ in length")
    if len(pred) == 0:
        raise ValueError("rmse of empty input")
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def score(model: TrainedModel, X: np.ndarray, y) -> float:
    """macro-F1 for classifiers, negative RMSE for regressors (higher is better)."""
    pred = predict(model, X)
    if model.classes is not None:
        return macro_f1(pred, y)
    return -rmse(pred, y)


def save_model(model: TrainedModel, path: str | Path) -> None:
    payload = {
        "format": MODEL_FORMAT,
        "version": MODEL_FORMAT_VERSION,
        "config": model.config,
        "params": model.params,
        "n_features": model.n_features,
        "classes": model.classes,
        "fit_seconds": model.fit_seconds,
        "estimator": model.estimator,
    }
    joblib.dump(payload, path)


def load_model(path: str | Path) -> TrainedModel:
    payload = joblib.load(path)
    if not isinstance(payload, dict) or payload.get("format") != MODEL_FORMAT:
        raise FormatError(f"{path}: not a saved model")
    if payload.get("version") != MODEL_FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported model format version {payload.get('version')}")
    return TrainedModel(payload["estimator"], payload["config"], payload["params"], payload["n_features"],
                        payload["classes"], payload["fit_seconds"])
