"""Dominance, Pareto fronts, normalization and 2-D hypervolume.

Objective points pair a cost (minimized) with a perf value (maximized).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import SpaceTooLargeError

ENUMERATION_LIMIT = 100_000


@dataclass(frozen=True)
class ObjectivePoint:
    cost: float
    perf: float
    payload: Any = field(default=None, compare=False)

    def __post_init__(self):
        if not (np.isfinite(self.cost) and np.isfinite(self.perf)):
            raise ValueError(f"non-finite objective point ({self.cost}, {self.perf})")


@dataclass(frozen=True)
class ParetoFront:
    points: tuple[ObjectivePoint, ...]

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def as_array(self) -> np.ndarray:
        return np.array([[p.cost, p.perf] for p in self.points], dtype=np.float64).reshape(-1, 2)


def dominates(a: ObjectivePoint, b: ObjectivePoint) -> bool:
    return a.cost <= b.cost and a.perf >= b.perf and (a.cost < b.cost or a.perf > b.perf)


def pareto_indices(costs: np.ndarray, perfs: np.ndarray) -> np.ndarray:
    """Indices of the non-dominated points, ordered by ascending cost.

    Exact duplicates keep their earliest occurrence.
    """
    costs = np.asarray(costs, dtype=np.float64)
    perfs = np.asarray(perfs, dtype=np.float64)
    n = len(costs)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    order = np.lexsort((np.arange(n), -perfs, costs))
    p_sorted = perfs[order]
    best_before = np.empty(n)
    best_before[0] = -np.inf
    np.maximum.accumulate(p_sorted[:-1], out=best_before[1:])
    return order[p_sorted > best_before]


def pareto_filter(points: Iterable[ObjectivePoint]) -> ParetoFront:
    pts = list(points)
    if not pts:
        return ParetoFront(())
    idx = pareto_indices(np.array([p.cost for p in pts]), np.array([p.perf for p in pts]))
    return ParetoFront(tuple(pts[i] for i in idx))


@dataclass(frozen=True)
class Bounds:
    cost_min: float
    cost_max: float
    perf_min: float
    perf_max: float

    @classmethod
    def of(cls, points: Iterable[ObjectivePoint]) -> "Bounds":
        arr = np.array([[p.cost, p.perf] for p in points], dtype=np.float64)
        if arr.size == 0:
            raise ValueError("cannot derive bounds from no points")
        return cls(float(arr[:, 0].min()), float(arr[:, 0].max()), float(arr[:, 1].min()), float(arr[:, 1].max()))


def _scale(v: float, lo: float, hi: float) -> float:
    return 0.0 if hi == lo else (v - lo) / (hi - lo)


def normalize(points: Iterable[ObjectivePoint], bounds: Bounds) -> list[ObjectivePoint]:
    return [
        ObjectivePoint(_scale(p.cost, bounds.cost_min, bounds.cost_max),
                       _scale(p.perf, bounds.perf_min, bounds.perf_max), p.payload)
        for p in points
    ]


def hypervolume_2d(front: Iterable[ObjectivePoint], ref: tuple[float, float] = (1.0, 0.0)) -> float:
    """Area dominated by ``front`` inside the box bounded by ``ref = (cost, perf)``."""
    pts = list(front)
    ref_cost, ref_perf = ref
    for p in pts:
        if p.cost > ref_cost or p.perf < ref_perf:
            raise ValueError(f"point ({p.cost}, {p.perf}) lies outside the reference box {ref}")
    nd = pareto_filter(pts).as_array()
    if len(nd) == 0:
        return 0.0
    steps = np.diff(np.concatenate(([ref_perf], nd[:, 1])))
    return float(np.sum((ref_cost - nd[:, 0]) * steps))


def hvi(est_front: Iterable[ObjectivePoint], true_front: Iterable[ObjectivePoint],
        ref: tuple[float, float] = (1.0, 0.0)) -> float:
    true_hv = hypervolume_2d(true_front, ref)
    if true_hv <= 0.0:
        raise ValueError("hypervolume of the reference front is zero; HVI undefined")
    return hypervolume_2d(est_front, ref) / true_hv


def hvi_curve(trace_points: Sequence[ObjectivePoint], true_front: Iterable[ObjectivePoint],
              bounds: Bounds, ref: tuple[float, float] = (1.0, 0.0)) -> np.ndarray:
    """HVI of the running front after each evaluation (normalized with ``bounds``)."""
    true_norm = normalize(true_front, bounds)
    true_hv = hypervolume_2d(true_norm, ref)
    if true_hv <= 0.0:
        raise ValueError("hypervolume of the reference front is zero; HVI undefined")
    norm = normalize(trace_points, bounds)
    out = np.zeros(len(norm))
    front: list[ObjectivePoint] = []
    for i, p in enumerate(norm):
        front = list(pareto_filter(front + [p]))
        out[i] = hypervolume_2d(front, ref) / true_hv
    return out


def exhaustive_ground_truth(space, profiler, limit: int = ENUMERATION_LIMIT):
    """Evaluate every representation of a small space; return (results, true front)."""
    size = space.size
    if size > limit:
        raise SpaceTooLargeError(size, limit)
    results = [profiler.evaluate(rep) for rep in space.enumerate()]
    front = pareto_filter(ObjectivePoint(r.cost, r.perf, r) for r in results)
    return results, front
