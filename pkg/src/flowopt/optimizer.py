"""Multi-objective Bayesian optimization over (feature subset, connection depth).

Each objective gets a random-forest surrogate; every iteration draws one
scalarization weight and scores candidates by expected improvement of the
scalarized objective, weighted by a decaying power of the prior density.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np
from scipy.special import ndtr
from sklearn.ensemble import RandomForestRegressor

from .errors import ConfigError, NotFittedError
from .features import FeatureMask, Representation
from .pareto import ObjectivePoint, ParetoFront, pareto_filter
from .priors import PriorModel, sample_representation
from .seeding import substream, subseed

log = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-6
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class SearchSpace:
    """Non-empty subsets of ``features`` times depths ``1..max_depth`` (plus "all" if allowed).

    Depths are handled internally as codes ``1..n_depths``; code ``max_depth + 1``
    stands for an unbounded depth.
    """

    features: tuple[int, ...]
    max_depth: int
    allow_unbounded: bool = False

    def __post_init__(self):
        feats = tuple(sorted(set(int(f) for f in self.features)))
        if not feats:
            raise ConfigError("search space needs at least one feature")
        if self.max_depth < 1:
            raise ConfigError("max_depth must be >= 1")
        object.__setattr__(self, "features", feats)

    @property
    def dimension(self) -> int:
        return len(self.features) + 1

    @property
    def n_depths(self) -> int:
        return self.max_depth + int(self.allow_unbounded)

    @property
    def n_masks(self) -> int:
        return 2 ** len(self.features) - 1

    @property
    def size(self) -> int:
        return self.n_masks * self.n_depths

    def depth_of(self, code: int) -> int | None:
        if not 1 <= code <= self.n_depths:
            raise ValueError(f"depth code {code} outside 1..{self.n_depths}")
        return None if code > self.max_depth else int(code)

    def depth_code(self, depth: int | None) -> int:
        if depth is None:
            if not self.allow_unbounded:
                raise ValueError("space does not include the unbounded depth")
            return self.max_depth + 1
        if not 1 <= depth <= self.max_depth:
            raise ValueError(f"depth {depth} outside 1..{self.max_depth}")
        return int(depth)

    def contains(self, rep: Representation) -> bool:
        if rep.mask.popcount() == 0 or not set(rep.mask.ids) <= set(self.features):
            return False
        try:
            self.depth_code(rep.depth)
        except ValueError:
            return False
        return True

    def encode(self, rep: Representation) -> np.ndarray:
        """Row vector: one 0/1 entry per retained feature, then the depth code."""
        if not self.contains(rep):
            raise ValueError(f"{rep.describe()} is outside the search space")
        row = np.zeros(self.dimension)
        row[:-1] = [1.0 if f in rep.mask else 0.0 for f in self.features]
        row[-1] = self.depth_code(rep.depth)
        return row

    def decode(self, row) -> Representation:
        row = np.asarray(row)
        ids = [f for f, b in zip(self.features, row[:-1]) if b]
        return Representation(FeatureMask.from_ids(ids), self.depth_of(int(row[-1])))

    def key_of_row(self, row) -> tuple[int, int]:
        bits = 0
        for f, b in zip(self.features, row[:-1]):
            if b:
                bits |= 1 << f
        return (bits, 0 if row[-1] > self.max_depth else int(row[-1]))

    def rep_at(self, index: int) -> Representation:
        """The ``index``-th point of :meth:`enumerate`."""
        if not 0 <= index < self.size:
            raise IndexError(index)
        code, m = divmod(index, self.n_masks)
        m += 1
        ids = [f for j, f in enumerate(self.features) if m >> j & 1]
        return Representation(FeatureMask.from_ids(ids), self.depth_of(code + 1))

    def enumerate(self) -> Iterator[Representation]:
        for i in range(self.size):
            yield self.rep_at(i)

    def full_mask(self) -> FeatureMask:
        return FeatureMask.from_ids(self.features)

    def uniform_rows(self, m: int, rng: np.random.Generator) -> np.ndarray:
        k = len(self.features)
        rows = np.empty((m, k + 1))
        rows[:, :k] = rng.random((m, k)) < 0.5
        empty = ~rows[:, :k].any(axis=1)
        while empty.any():
            rows[empty, :k] = rng.random((int(empty.sum()), k)) < 0.5
            empty = ~rows[:, :k].any(axis=1)
        rows[:, k] = rng.integers(1, self.n_depths + 1, size=m)
        return rows

    def uniform_sample(self, rng: np.random.Generator) -> Representation:
        return self.decode(self.uniform_rows(1, rng)[0])


def prior_rows(space: SearchSpace, prior: PriorModel, m: int, rng: np.random.Generator) -> np.ndarray:
    k = len(space.features)
    p = np.array([prior.feature_probs[f] for f in space.features])
    rows = np.empty((m, k + 1))
    rows[:, :k] = rng.random((m, k)) < p
    empty = ~rows[:, :k].any(axis=1)
    while empty.any():
        rows[empty, :k] = rng.random((int(empty.sum()), k)) < p
        empty = ~rows[:, :k].any(axis=1)
    rows[:, k] = rng.choice(len(prior.depth_pmf), size=m, p=prior.depth_pmf) + 1
    return rows


def check_prior(space: SearchSpace, prior: PriorModel) -> None:
    if prior.features != space.features:
        raise ConfigError("prior and search space cover different features")
    if prior.max_depth != space.n_depths:
        raise ConfigError(f"prior covers {prior.max_depth} depths, space has {space.n_depths}")


@dataclass(frozen=True)
class OptimizerConfig:
    budget: int = 50
    init_samples: int = 3
    candidates: int = 5000
    prior_decay: float | None = None  # None -> budget / 10
    ei_jitter: float = 0.01
    n_trees: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.budget < 1:
            raise ConfigError("budget must be >= 1")
        if not 1 <= self.init_samples <= self.budget:
            raise ConfigError("init_samples must lie in 1..budget")
        if self.candidates < 1:
            raise ConfigError("candidates must be >= 1")
        if self.n_trees < 1:
            raise ConfigError("n_trees must be >= 1")

    @property
    def beta_pi(self) -> float:
        return self.budget / 10.0 if self.prior_decay is None else float(self.prior_decay)


def expected_improvement(mu, sigma, best: float, xi: float = 0.01):
    """EI for minimization; falls back to the plain improvement where sigma is 0."""
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma < 0):
        raise ValueError("sigma must be non-negative")
    gap = best - xi - mu
    safe = np.where(sigma > 0, sigma, 1.0)
    with np.errstate(over="ignore", invalid="ignore"):
        z = gap / safe
        ei = safe * (z * ndtr(z) + _INV_SQRT_2PI * np.exp(-0.5 * z * z))
    # sigma == 0, or so small that z overflows: use the deterministic limit
    ei = np.where((sigma > 0) & np.isfinite(ei), ei, np.maximum(gap, 0.0))
    ei = np.maximum(ei, 0.0)
    return ei if ei.ndim else float(ei)


def _minmax(v: np.ndarray) -> tuple[float, float]:
    return float(v.min()), float(v.max())


def _scale(v, lo: float, hi: float):
    return np.zeros_like(v) if hi == lo else (v - lo) / (hi - lo)


class SurrogateState:
    """Observed points and one forest per objective (log-cost and negated perf)."""

    def __init__(self, space: SearchSpace, n_trees: int = 50, seed: int = 0):
        self.space = space
        self.n_trees = n_trees
        self.seed = seed
        self.rows: list[np.ndarray] = []
        self.costs: list[float] = []
        self.perfs: list[float] = []
        self.keys: set = set()
        self._forests = None
        self._targets = None

    def __len__(self) -> int:
        return len(self.rows)

    def observe(self, rep: Representation, cost: float, perf: float) -> None:
        self.rows.append(self.space.encode(rep))
        self.costs.append(float(cost))
        self.perfs.append(float(perf))
        self.keys.add(rep.key)
        self._forests = None

    def targets(self) -> tuple[np.ndarray, np.ndarray]:
        """Normalized (cost, -perf) of the observations, both to be minimized."""
        log_cost = np.log(np.maximum(np.array(self.costs), 1e-12))
        neg_perf = -np.array(self.perfs)
        self.bounds = (_minmax(log_cost), _minmax(neg_perf))
        return _scale(log_cost, *self.bounds[0]), _scale(neg_perf, *self.bounds[1])

    def fit(self) -> None:
        if not self.rows:
            raise NotFittedError("no observations to fit")
        X = np.vstack(self.rows)
        c, p = self.targets()
        forests = []
        for name, y in (("cost", c), ("perf", p)):
            rf = RandomForestRegressor(n_estimators=self.n_trees, bootstrap=False, max_features=0.5,
                                       random_state=subseed(self.seed, f"surrogate-{name}"), n_jobs=1)
            rf.fit(X, y)
            forests.append(rf)
        self._forests = forests
        self._targets = (c, p)

    @property
    def fitted(self) -> bool:
        return self._forests is not None

    def observed_targets(self) -> tuple[np.ndarray, np.ndarray]:
        if self._targets is None:
            raise NotFittedError("surrogate not fitted")
        return self._targets


def surrogate_predict(state: SurrogateState, X: np.ndarray):
    """(mu, sigma) for cost and for negated perf: ``((mu_c, sd_c), (mu_p, sd_p))``."""
    if not state.fitted:
        raise NotFittedError("surrogate not fitted")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    out = []
    for rf in state._forests:
        per_tree = np.stack([t.predict(X) for t in rf.estimators_])
        out.append((per_tree.mean(axis=0), np.maximum(per_tree.std(axis=0), SIGMA_FLOOR)))
    return tuple(out)


def acquisition_scores(state: SurrogateState, prior: PriorModel, rows: np.ndarray, w: float,
                       t: int, cfg: OptimizerConfig) -> np.ndarray:
    """log EI of the w-scalarized objective plus (beta_pi / t) * log prior."""
    (mc, sc), (mp, sp) = surrogate_predict(state, rows)
    mu = w * mc + (1.0 - w) * mp
    sigma = np.sqrt((w * sc) ** 2 + ((1.0 - w) * sp) ** 2)
    c, p = state.observed_targets()
    best = float(np.min(w * c + (1.0 - w) * p))
    ei = expected_improvement(mu, sigma, best, cfg.ei_jitter)
    with np.errstate(divide="ignore"):
        log_ei = np.log(ei)
    log_prior = prior.log_density(rows[:, :-1], rows[:, -1])
    exponent = cfg.beta_pi / t
    if exponent == 0.0:
        return log_ei
    return log_ei + exponent * log_prior


def propose(state: SurrogateState, prior: PriorModel, cfg: OptimizerConfig, t: int,
            rng: np.random.Generator) -> Representation:
    """Next representation to measure; ``t`` is the 1-based iteration after initialization."""
    if t < 1:
        raise ValueError("iteration t must be >= 1")
    space = state.space
    half = cfg.candidates // 2
    rows = np.vstack([prior_rows(space, prior, cfg.candidates - half, rng), space.uniform_rows(half, rng)])
    w = float(rng.random())
    seen = set(state.keys)
    keep = []
    for i, row in enumerate(rows):
        key = space.key_of_row(row)
        if key not in seen:
            seen.add(key)
            keep.append(i)
    if not keep:
        return fresh_sample(space, prior, state.keys, rng)
    rows = rows[keep]
    scores = acquisition_scores(state, prior, rows, w, t, cfg)
    if not np.isfinite(scores).any():
        # EI underflowed everywhere; fall back to the prior alone
        scores = prior.log_density(rows[:, :-1], rows[:, -1])
    return space.decode(rows[int(np.argmax(scores))])


def fresh_sample(space: SearchSpace, prior: PriorModel, taken, rng: np.random.Generator,
                 tries: int = 200) -> Representation:
    """A prior sample not in ``taken`` if one turns up quickly, else the first unseen point."""
    rep = None
    for _ in range(tries):
        rep = _prior_rep(space, prior, rng)
        if rep.key not in taken:
            return rep
    if space.size <= 10**6:
        for cand in space.enumerate():
            if cand.key not in taken:
                return cand
    return rep


def _prior_rep(space: SearchSpace, prior: PriorModel, rng) -> Representation:
    rep = sample_representation(prior, rng)
    return Representation(rep.mask, space.depth_of(rep.depth))


def run(space: SearchSpace, prior: PriorModel, profiler, cfg: OptimizerConfig,
        on_result: Callable | None = None, method: str = "bo"):
    """Sequential BO loop. Returns (trace, Pareto front of the trace).

    ``on_result`` sees each stamped result as soon as it is measured, so a
    failing evaluation leaves the partial trace persisted.
    """
    check_prior(space, prior)
    init_rng = substream(cfg.seed, "init")
    acq_rng = substream(cfg.seed, "acquisition")
    state = SurrogateState(space, cfg.n_trees, cfg.seed)
    trace = []
    for i in range(cfg.budget):
        if i < cfg.init_samples:
            rep = fresh_sample(space, prior, state.keys, init_rng)
        else:
            state.fit()
            rep = propose(state, prior, cfg, i - cfg.init_samples + 1, acq_rng)
        res = profiler.evaluate(rep).at(i, method=method)
        state.observe(rep, res.cost, res.perf)
        trace.append(res)
        if on_result is not None:
            on_result(res)
        log.debug("iter %d %s cost=%.4g perf=%.4f", i, rep.describe(), res.cost, res.perf)
    return trace, trace_front(trace)


def trace_front(trace) -> ParetoFront:
    return pareto_filter(ObjectivePoint(r.cost, r.perf, r) for r in trace)
