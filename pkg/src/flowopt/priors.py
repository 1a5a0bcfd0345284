"""Mutual-information screening and the feature/depth priors that steer the search."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy import stats as sps

from .features import FEATURES, FeatureMask, Representation

N_BINS = 10


@dataclass(frozen=True)
class FeatureStats:
    mi: Mapping[int, float]

    @property
    def i_max(self) -> float:
        return max(self.mi.values()) if self.mi else 0.0


@dataclass(frozen=True)
class PriorConfig:
    delta: float = 0.4
    depth_alpha: float = 1.0
    depth_beta: float = 2.0
    mi_epsilon: float = 1e-3

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError(f"delta must lie in [0, 1], got {self.delta}")
        if self.depth_alpha <= 0 or self.depth_beta <= 0:
            raise ValueError("Beta parameters must be positive")
        if self.mi_epsilon < 0:
            raise ValueError("mi_epsilon must be >= 0")


@dataclass(frozen=True)
class PriorModel:
    feature_probs: Mapping[int, float]
    depth_pmf: np.ndarray  # index n-1 -> P(depth = n)

    @property
    def features(self) -> tuple[int, ...]:
        return tuple(sorted(self.feature_probs))

    @property
    def max_depth(self) -> int:
        return len(self.depth_pmf)

    def log_density(self, masks: np.ndarray, depths: np.ndarray) -> np.ndarray:
        """Log of the factorized prior for encoded candidates.

        ``masks`` is (m, k) 0/1 over :attr:`features`; ``depths`` holds 1-based depths.
        """
        p = np.array([self.feature_probs[f] for f in self.features])
        with np.errstate(divide="ignore"):
            log_in, log_out = np.log(p), np.log1p(-p)
            log_depth = np.log(self.depth_pmf)
        b = masks.astype(bool)
        return np.where(b, log_in, log_out).sum(axis=1) + log_depth[np.asarray(depths, dtype=np.int64) - 1]


def _discretize(values: np.ndarray, n_bins: int = N_BINS) -> np.ndarray:
    """Equal-frequency bins from ranks; each distinct value is its own bin when few.

    Bins are placed symmetrically (tied values share their average rank and
    cut points mirror around the median), so the partition is the same under
    increasing and decreasing transforms of ``values``.
    """
    uniq, inverse = np.unique(values, return_inverse=True)
    if len(uniq) <= n_bins:
        return inverse
    pos = (sps.rankdata(values, method="average") - 0.5) * n_bins / len(values)
    half = n_bins / 2.0
    bins = np.where(pos < half, np.floor(pos), np.ceil(pos) - 1.0)
    bins[pos == half] = n_bins  # a lone median element sits exactly on the middle cut
    return bins.astype(np.int64)


def mutual_info(column, labels, n_bins: int = N_BINS, discrete_labels: bool = True) -> float:
    """Plug-in mutual information (nats) between a binned feature and the labels."""
    column = np.asarray(column)
    labels = np.asarray(labels)
    if len(column) != len(labels):
        raise ValueError("column and labels differ in length")
    if len(column) < 2:
        raise ValueError("mutual information needs at least two samples")
    x = _discretize(column.astype(np.float64), n_bins)
    if discrete_labels:
        _, y = np.unique(labels.astype(str) if labels.dtype == object else labels, return_inverse=True)
    else:
        y = _discretize(labels.astype(np.float64), n_bins)
    if y.max() == 0:
        return 0.0
    n = len(x)
    joint = np.zeros((x.max() + 1, y.max() + 1))
    np.add.at(joint, (x, y), 1.0)
    joint /= n
    px = joint.sum(axis=1, keepdims=True)
    py = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    mi = float(np.sum(joint[nz] * np.log(joint[nz] / (px @ py)[nz])))
    return max(mi, 0.0)


def feature_stats(X: np.ndarray, y, feature_ids, discrete_labels: bool = True) -> FeatureStats:
    return FeatureStats({int(f): mutual_info(X[:, j], y, discrete_labels=discrete_labels)
                         for j, f in enumerate(feature_ids)})


def reduce_dimensions(stats: FeatureStats, epsilon: float = 1e-3) -> list[int]:
    """Feature ids whose MI exceeds ``epsilon``; never empty."""
    kept = sorted(f for f, v in stats.mi.items() if v > epsilon)
    if not kept and stats.mi:
        kept = [max(sorted(stats.mi), key=lambda f: stats.mi[f])]
    return kept


def feature_prior(i_f: float, i_max: float, delta: float) -> float:
    if i_max <= 0.0:
        return 0.5
    return (1.0 - delta) * i_f / i_max + delta / 2.0


def depth_prior_pmf(n_max: int, alpha: float = 1.0, beta: float = 2.0) -> np.ndarray:
    """Beta density at depth-bin midpoints ``(n - 0.5) / N``, normalized over 1..N."""
    if n_max < 1:
        raise ValueError("maximum depth must be >= 1")
    mid = (np.arange(1, n_max + 1) - 0.5) / n_max
    w = sps.beta.pdf(mid, alpha, beta)
    return w / w.sum()


def build_prior(stats: FeatureStats, retained, max_depth: int, cfg: PriorConfig) -> PriorModel:
    i_max = max((stats.mi[f] for f in retained), default=0.0)
    probs = {int(f): feature_prior(stats.mi[f], i_max, cfg.delta) for f in retained}
    return PriorModel(probs, depth_prior_pmf(max_depth, cfg.depth_alpha, cfg.depth_beta))


def uniform_prior(features, max_depth: int) -> PriorModel:
    return PriorModel({int(f): 0.5 for f in features}, np.full(max_depth, 1.0 / max_depth))


def sample_representation(prior: PriorModel, rng: np.random.Generator) -> Representation:
    feats = prior.features
    p = np.array([prior.feature_probs[f] for f in feats])
    if not (p > 0).any():
        raise ValueError("every feature has zero prior probability")
    while True:
        take = rng.random(len(feats)) < p
        if take.any():
            break
    depth = int(rng.choice(len(prior.depth_pmf), p=prior.depth_pmf)) + 1
    return Representation(FeatureMask.from_ids(f for f, t in zip(feats, take) if t), depth)


def prior_table_csv(stats: FeatureStats, prior: PriorModel | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["feature", "name", "mi", "prior_prob"])
    for f in sorted(stats.mi):
        prob = "" if prior is None or f not in prior.feature_probs else repr(prior.feature_probs[f])
        w.writerow([f, FEATURES[f].name, repr(stats.mi[f]), prob])
    return buf.getvalue()
