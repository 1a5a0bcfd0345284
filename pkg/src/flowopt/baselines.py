"""Comparison searchers (random, depth sweep, simulated annealing) and fixed feature selections."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import ConfigError
from .features import FeatureMask, Representation, compile_plan, extract_dataset
from .models import ModelConfig, _estimator
from .optimizer import SearchSpace, trace_front
from .priors import FeatureStats, feature_stats

ENUMERATE_LIMIT = 10**7


def _record(trace, res, on_result, **extra):
    res = res.at(len(trace), **extra)
    trace.append(res)
    if on_result is not None:
        on_result(res)
    return res


def run_random(space: SearchSpace, budget: int, profiler, rng: np.random.Generator,
               on_result: Callable | None = None):
    """Uniform sampling without replacement; stops early once the space is exhausted."""
    n = min(budget, space.size)
    trace: list = []
    if space.size <= ENUMERATE_LIMIT:
        reps = (space.rep_at(int(i)) for i in rng.choice(space.size, size=n, replace=False))
    else:
        def gen():
            seen = set()
            while len(seen) < n:
                rep = space.uniform_sample(rng)
                if rep.key not in seen:
                    seen.add(rep.key)
                    yield rep
        reps = gen()
    for rep in reps:
        _record(trace, profiler.evaluate(rep), on_result, method="rand")
    return trace


def run_iterall(space: SearchSpace, budget: int, profiler, on_result: Callable | None = None):
    """All retained features, depth 1, 2, ..., budget."""
    if budget > space.max_depth:
        raise ConfigError(f"iterall budget {budget} exceeds the maximum depth {space.max_depth}")
    mask = space.full_mask()
    trace: list = []
    for depth in range(1, budget + 1):
        _record(trace, profiler.evaluate(Representation(mask, depth)), on_result, method="iterall")
    return trace


def max_step_at(i: int, budget: int, n_depths: int) -> int:
    """Depth perturbation bound, linear from ``n_depths`` at i=0 to 1 at i=budget-1."""
    if budget <= 1:
        return n_depths
    frac = min(max(i, 0), budget - 1) / (budget - 1)
    return max(1, int(round(n_depths - (n_depths - 1) * frac)))


def temperature(i: int, t0: float = 1.0, cooling: float = 0.99) -> float:
    return t0 * cooling ** i


def _feature_move(ids: list[int], universe: tuple[int, ...], rng) -> list[int]:
    inside = set(ids)
    outside = [f for f in universe if f not in inside]
    moves = []
    if outside:
        moves.append("add")
    if len(ids) > 1:
        moves.append("remove")
    if ids and outside:
        moves.append("replace")
    move = moves[int(rng.integers(len(moves)))]
    if move == "add":
        return sorted(ids + [outside[int(rng.integers(len(outside)))]])
    drop = ids[int(rng.integers(len(ids)))]
    kept = [f for f in ids if f != drop]
    if move == "remove":
        return kept
    return sorted(kept + [outside[int(rng.integers(len(outside)))]])


def simanneal_neighbor(x: Representation, i: int, budget: int, space: SearchSpace,
                       rng: np.random.Generator) -> Representation:
    """Perturb the feature set or the depth (each with probability 1/2 when both are possible).

    Depth offsets are drawn from the non-zero values in ``[-max_step, max_step]``
    that keep the depth inside the space, so a depth move always changes it.
    """
    ids = list(x.mask.ids)
    n = space.n_depths
    can_feat = len(space.features) > 1
    can_depth = n > 1
    if not (can_feat or can_depth):
        return x
    if can_feat and (not can_depth or rng.random() < 0.5):
        return Representation(FeatureMask.from_ids(_feature_move(ids, space.features, rng)), x.depth)
    code = space.depth_code(x.depth)
    step = max_step_at(i, budget, n)
    offsets = [o for o in range(-step, step + 1) if o != 0 and 1 <= code + o <= n]
    return Representation(x.mask, space.depth_of(code + offsets[int(rng.integers(len(offsets)))]))


def acceptance_probability(f_cur: float, f_neigh: float, temp: float) -> float:
    if temp <= 0:
        raise ValueError("temperature must be positive")
    delta = (f_cur - f_neigh) / temp
    return 1.0 if delta >= 0 else math.exp(delta)


def simanneal_accept(f_cur: float, f_neigh: float, dominates: bool, temp: float,
                     rng: np.random.Generator) -> bool:
    """Dominating neighbors are always taken; otherwise accept with min(1, exp((f_cur - f_neigh)/T))."""
    if dominates:
        return True
    p = acceptance_probability(f_cur, f_neigh, temp)
    if p >= 1.0:
        return True
    return bool(rng.random() < p)


def _scalar(cost: float, perf: float, costs: list, perfs: list) -> float:
    """Equal-weight mean of running min-max normalized cost and -perf."""
    lo_c, hi_c = min(costs), max(costs)
    lo_p, hi_p = min(perfs), max(perfs)
    c = 0.0 if hi_c == lo_c else (cost - lo_c) / (hi_c - lo_c)
    p = 0.0 if hi_p == lo_p else (hi_p - perf) / (hi_p - lo_p)
    return 0.5 * c + 0.5 * p


def run_simanneal(space: SearchSpace, budget: int, profiler, rng: np.random.Generator,
                  t0: float = 1.0, cooling: float = 0.99, on_result: Callable | None = None,
                  max_retries: int = 50):
    """Simulated annealing; every evaluated point lands in the trace with its temperature."""
    trace: list = []
    seen: set = set()
    costs: list = []
    perfs: list = []

    def measure(rep, i):
        res = profiler.evaluate(rep)
        seen.add(rep.key)
        costs.append(res.cost)
        perfs.append(res.perf)
        return _record(trace, res, on_result, method="simanneal", temperature=temperature(i, t0, cooling))

    cur = measure(space.uniform_sample(rng), 0)
    for i in range(1, min(budget, space.size)):
        temp = temperature(i, t0, cooling)
        for _ in range(max_retries):
            cand = simanneal_neighbor(cur.rep, i, budget, space, rng)
            if cand.key not in seen:
                break
        nb = measure(cand, i)
        f_cur = _scalar(cur.cost, cur.perf, costs, perfs)
        f_nb = _scalar(nb.cost, nb.perf, costs, perfs)
        dom = nb.cost <= cur.cost and nb.perf >= cur.perf and (nb.cost < cur.cost or nb.perf > cur.perf)
        if simanneal_accept(f_cur, f_nb, dom, temp, rng):
            cur = nb
    return trace


def rfe_select(X: np.ndarray, y, k: int, cfg: ModelConfig, feature_ids=None) -> list[int]:
    """Recursive elimination by impurity importance; ties drop the lower feature id."""
    X = np.asarray(X, dtype=np.float64)
    ids = list(range(X.shape[1])) if feature_ids is None else [int(f) for f in feature_ids]
    if len(ids) != X.shape[1]:
        raise ValueError("feature_ids does not match the column count")
    if not 1 <= k < len(ids):
        raise ValueError(f"k must lie in 1..{len(ids) - 1}, got {k}")
    cols = list(range(len(ids)))
    fit_cfg = replace(cfg, depth_grid=(cfg.depth_grid[-1],))
    while len(cols) > k:
        est = _estimator(fit_cfg, fit_cfg.depth_grid[0])
        est.fit(X[:, cols], y)
        imp = est.feature_importances_
        drop = min(range(len(cols)), key=lambda j: (imp[j], ids[cols[j]]))
        del cols[drop]
    return sorted(ids[c] for c in cols)


def mi_select(stats: FeatureStats, k: int) -> list[int]:
    """Top-k features by mutual information, descending; ties by lower id."""
    if not 1 <= k <= len(stats.mi):
        raise ValueError(f"k must lie in 1..{len(stats.mi)}, got {k}")
    return sorted(stats.mi, key=lambda f: (-stats.mi[f], f))[:k]


_FIXED = re.compile(r"^(all|rfe(\d+)|mi(\d+))$")


@dataclass(frozen=True)
class FixedSelection:
    method: str
    k: int | None

    @classmethod
    def parse(cls, method: str) -> "FixedSelection":
        m = _FIXED.match(method)
        if m is None:
            raise ConfigError(f"unknown fixed baseline {method!r}; expected all, rfe<k> or mi<k>")
        if m.group(1) == "all":
            return cls("all", None)
        return cls("rfe", int(m.group(2))) if m.group(2) else cls("mi", int(m.group(3)))


def select_features(method: str, features, train_ds, depth: int | None, cfg: ModelConfig) -> list[int]:
    sel = FixedSelection.parse(method)
    features = sorted(int(f) for f in features)
    if sel.method == "all":
        return features
    X, y = extract_dataset(compile_plan(Representation(FeatureMask.from_ids(features), depth)), train_ds)
    if sel.method == "rfe":
        return rfe_select(X, y, sel.k, cfg, features)
    return sorted(mi_select(feature_stats(X, y, features, cfg.task == "classification"), sel.k))


def run_fixed_baseline(method: str, depth: int | None, profiler, features, train_ds,
                       cfg: ModelConfig, selection_depth: int | None | str = "same"):
    """Select features once, then evaluate them at ``depth``.

    ``selection_depth="same"`` selects on features extracted at ``depth``;
    any other value (a depth or None for all packets) selects there instead.
    """
    sel_depth = depth if selection_depth == "same" else selection_depth
    ids = select_features(method, features, train_ds, sel_depth, cfg)
    res = profiler.evaluate(Representation(FeatureMask.from_ids(ids), depth))
    return res.at(0, method=method)


__all__ = [
    "run_random", "run_iterall", "run_simanneal", "simanneal_neighbor", "simanneal_accept",
    "acceptance_probability", "temperature", "max_step_at", "rfe_select", "mi_select",
    "run_fixed_baseline", "select_features", "trace_front",
]
