"""Analytic evaluation tables for searcher tests (no timing involved)."""
import numpy as np

from flowopt.optimizer import SearchSpace
from flowopt.profiler import EvalResult, TableProfiler


def analytic_results(space: SearchSpace, seed: int = 0):
    """cost grows with depth and popcount; perf saturates with depth and rewards feature 0."""
    rng = np.random.default_rng(seed)
    weights = {f: w for f, w in zip(space.features, rng.uniform(0.2, 1.0, len(space.features)))}
    out = []
    for rep in space.enumerate():
        depth = space.max_depth + 5 if rep.depth is None else rep.depth
        k = rep.mask.popcount()
        ext = 100.0 * depth * (0.5 + 0.3 * k) + rng.uniform(0, 5)
        inf = 50.0 + 10 * k
        info = sum(weights[f] for f in rep.mask.ids) / sum(weights.values())
        perf = info * (1 - np.exp(-depth / 6.0))
        out.append(EvalResult(rep, float(perf), ext + inf, "ns/flow",
                              {"extraction_ns": ext, "inference_ns": inf, "waiting_s": 0.0}))
    return out


def table_profiler(space: SearchSpace, seed: int = 0, **kw) -> TableProfiler:
    return TableProfiler(analytic_results(space, seed), **kw)
