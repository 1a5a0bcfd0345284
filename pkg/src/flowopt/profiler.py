"""End-to-end evaluation of a representation: fresh model perf plus measured cost.

Costs are timed over a replay dataset by running the specialized extraction
kernel and the compiled inference kernel back to back. Both kernels loop over
all flows internally, so one timed pass yields a per-flow mean without
per-flow timer overhead.
"""
from __future__ import annotations

import gc
import json
import logging
import threading
import time
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .errors import ConfigError, DataError, FidelityError
from .features import Extractor, FeatureMask, Representation, compile_plan, extract_dataset
from .ingest import Dataset
from .models import ModelConfig, TrainedModel, score, train
from .priors import FeatureStats

log = logging.getLogger(__name__)

COST_KINDS = ("exec_time", "inference_latency", "naive_cost", "model_inf_cost", "pkt_depth_cost")
COST_UNITS = {
    "exec_time": "ns/flow",
    "inference_latency": "s/flow",
    "naive_cost": "ns/flow",
    "model_inf_cost": "ns/flow",
    "pkt_depth_cost": "packets",
}
PERF_KINDS = ("measured", "naive_mi")

MAX_TIMER_RESOLUTION_NS = 100.0
STABILITY_CV = 0.2

# Held around every timed region so concurrent profilers never overlap measurements.
TIMING_LOCK = threading.RLock()


class FidelityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CostMetric:
    kind: str = "exec_time"
    repetitions: int = 5
    warmup_passes: int = 1

    def __post_init__(self):
        if self.kind not in COST_KINDS:
            raise ConfigError(f"unknown cost metric {self.kind!r}; expected one of {COST_KINDS}")
        if self.repetitions < 1 or self.repetitions % 2 == 0:
            raise ConfigError("repetitions must be a positive odd number")
        if self.warmup_passes < 0:
            raise ConfigError("warmup_passes must be >= 0")

    @property
    def unit(self) -> str:
        return COST_UNITS[self.kind]


@dataclass
class EvalResult:
    rep: Representation
    perf: float
    cost: float
    cost_unit: str
    breakdown: dict
    perf_metric: str = "macro_f1"
    model: TrainedModel | None = field(default=None, repr=False, compare=False)
    iteration: int = -1
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.cost >= 0:
            raise ValueError(f"cost must be non-negative, got {self.cost}")

    def at(self, iteration: int, **extra) -> "EvalResult":
        """Copy stamped with its position in a trace."""
        return replace(self, iteration=iteration, extra={**self.extra, **extra})

    def to_json(self, **fields) -> dict:
        rep = self.rep
        row = {
            "iteration": self.iteration,
            "features": rep.mask.names,
            "depth": "all" if rep.depth is None else rep.depth,
            "perf": self.perf,
            "perf_metric": self.perf_metric,
            "cost": self.cost,
            "cost_unit": self.cost_unit,
            "breakdown": self.breakdown,
            "seed": self.seed,
        }
        row.update(self.extra)
        row.update(fields)
        return row


@dataclass(frozen=True)
class Timing:
    extraction_ns: float
    inference_ns: float
    samples_ns: np.ndarray  # per-repetition per-flow totals

    @property
    def total_ns(self) -> float:
        return self.extraction_ns + self.inference_ns


def timer_resolution_ns() -> float:
    """Declared perf_counter resolution, or the smallest observed tick if none is declared."""
    declared = time.get_clock_info("perf_counter").resolution * 1e9
    if declared > 0:
        return float(declared)
    step = np.inf
    for _ in range(1000):
        a = time.perf_counter_ns()
        b = time.perf_counter_ns()
        while b == a:
            b = time.perf_counter_ns()
        step = min(step, b - a)
    return float(step)


_checked_resolution: float | None = None


def check_timer(limit_ns: float = MAX_TIMER_RESOLUTION_NS) -> float:
    global _checked_resolution
    if _checked_resolution is None:
        _checked_resolution = timer_resolution_ns()
    if _checked_resolution > limit_ns:
        raise FidelityError(f"timer resolution {_checked_resolution:.0f} ns is coarser than {limit_ns:.0f} ns")
    return _checked_resolution


def time_pipeline(rep: Representation, model: TrainedModel, dataset: Dataset,
                  repetitions: int = 5, warmup: int = 1) -> Timing:
    """Median-of-means timing of extraction + inference over ``dataset``.

    The reported components come from the repetition with the median total,
    so ``extraction_ns + inference_ns`` equals the median total exactly.
    """
    check_timer()
    if len(dataset) == 0:
        raise DataError("cannot time an empty dataset")
    plan = compile_plan(rep)
    if len(plan.columns) != model.n_features:
        raise ValueError(f"model expects {model.n_features} features, plan yields {len(plan.columns)}")
    ex = Extractor(plan, dataset.packed)
    comp = model.compiled
    n = dataset.packed.n_flows
    idx = np.zeros(n, dtype=np.int64)
    val = np.zeros(n, dtype=np.float64)
    ext = np.empty(repetitions)
    inf = np.empty(repetitions)
    clock = time.perf_counter_ns
    with TIMING_LOCK:
        gc_was_on = gc.isenabled()
        gc.disable()
        try:
            for _ in range(warmup):
                ex.run()
                comp.run(ex.out, idx, val)
            for r in range(repetitions):
                t0 = clock()
                ex.run()
                t1 = clock()
                comp.run(ex.out, idx, val)
                t2 = clock()
                ext[r] = (t1 - t0) / n
                inf[r] = (t2 - t1) / n
        finally:
            if gc_was_on:
                gc.enable()
    total = ext + inf
    mid = int(np.argsort(total, kind="stable")[repetitions // 2])
    return Timing(float(ext[mid]), float(inf[mid]), total)


def measure_exec_time(rep: Representation, model: TrainedModel, dataset: Dataset,
                      repetitions: int = 5, warmup: int = 1) -> float:
    """Pipeline CPU time per flow in ns (extraction and inference, no waiting)."""
    return time_pipeline(rep, model, dataset, repetitions, warmup).total_ns


def waiting_seconds(dataset: Dataset, depth: int | None) -> np.ndarray:
    """Per-flow time spent waiting for the first ``depth`` packets (seconds)."""
    p = dataset.packed
    sizes = np.diff(p.offsets)
    k = sizes if depth is None else np.minimum(sizes, depth)
    first = p.ts[p.offsets[:-1]]
    last = p.ts[p.offsets[:-1] + k - 1]
    return (last - first).astype(np.float64) * 1e-6


def latency_breakdown(rep: Representation, model: TrainedModel, dataset: Dataset,
                      repetitions: int = 5, warmup: int = 1) -> dict:
    t = time_pipeline(rep, model, dataset, repetitions, warmup)
    wait = float(waiting_seconds(dataset, rep.depth).mean())
    return {
        "extraction_ns": t.extraction_ns,
        "inference_ns": t.inference_ns,
        "waiting_s": wait,
        "latency_s": (t.extraction_ns + t.inference_ns) * 1e-9 + wait,
    }


def measure_latency(rep: Representation, model: TrainedModel, dataset: Dataset,
                    repetitions: int = 5, warmup: int = 1) -> float:
    """Mean per-flow inference latency in seconds: compute time plus packet waiting."""
    return latency_breakdown(rep, model, dataset, repetitions, warmup)["latency_s"]


def fit_and_score(rep: Representation, train_ds: Dataset, test_ds: Dataset,
                  cfg: ModelConfig) -> tuple[float, TrainedModel]:
    if len(train_ds) == 0 or len(test_ds) == 0:
        raise DataError("train and test datasets must be non-empty")
    plan = compile_plan(rep)
    X_tr, y_tr = extract_dataset(plan, train_ds)
    X_te, y_te = extract_dataset(plan, test_ds)
    model = train(X_tr, y_tr, cfg)
    return score(model, X_te, y_te), model


def measure_perf(rep: Representation, train: Dataset, test: Dataset, cfg: ModelConfig) -> float:
    """Holdout macro-F1 (classification) or negative RMSE (regression) of a fresh model."""
    return fit_and_score(rep, train, test, cfg)[0]


def ablation_perf(rep: Representation, stats: FeatureStats) -> float:
    """Sum of per-feature mutual information over the mask."""
    return float(sum(stats.mi.get(f, 0.0) for f in rep.mask.ids))


def ablation_cost(rep: Representation, kind: str, breakdown: Mapping | None = None,
                  isolated: Callable[[int, int | None], float] | None = None,
                  unbounded_depth: int | None = None) -> float:
    """Heuristic cost variants.

    ``naive_cost`` needs ``isolated(fid, depth)``; ``model_inf_cost`` reads
    ``breakdown['inference_ns']``; ``pkt_depth_cost`` is the depth itself.
    """
    if kind == "pkt_depth_cost":
        if rep.depth is None:
            if unbounded_depth is None:
                raise ValueError("pkt_depth_cost of an unbounded depth needs unbounded_depth")
            return float(unbounded_depth)
        return float(rep.depth)
    if kind == "model_inf_cost":
        if breakdown is None:
            raise ValueError("model_inf_cost needs a timing breakdown")
        return float(breakdown["inference_ns"])
    if kind == "naive_cost":
        if isolated is None:
            raise ValueError("naive_cost needs an isolated-cost table")
        return float(sum(isolated(f, rep.depth) for f in rep.mask.ids))
    raise ValueError(f"{kind!r} is not an ablation cost")


def perf_metric_name(task: str) -> str:
    return "macro_f1" if task == "classification" else "neg_rmse"


@dataclass
class ProfilerContext:
    train: Dataset
    test: Dataset
    model: ModelConfig
    cost: CostMetric = field(default_factory=CostMetric)
    replay: Dataset | None = None  # flows timed for cost; defaults to the test split
    seed: int = 0
    perf_kind: str = "measured"
    mi: FeatureStats | None = None

    def __post_init__(self):
        if self.perf_kind not in PERF_KINDS:
            raise ConfigError(f"unknown perf kind {self.perf_kind!r}")
        if self.perf_kind == "naive_mi" and self.mi is None:
            raise ConfigError("naive_mi perf needs a mutual-information table")
        if self.replay is None:
            self.replay = self.test


class Profiler:
    """Measures representations, caching by (mask, depth, seed)."""

    def __init__(self, ctx: ProfilerContext):
        self.ctx = ctx
        self._cache: dict[tuple, EvalResult] = {}
        self._isolated: dict[tuple, float] = {}
        self.n_measured = 0

    @property
    def cost_unit(self) -> str:
        return self.ctx.cost.unit

    def _timing(self, rep, model) -> dict:
        c = self.ctx.cost
        if c.kind == "inference_latency":
            return latency_breakdown(rep, model, self.ctx.replay, c.repetitions, c.warmup_passes)
        t = time_pipeline(rep, model, self.ctx.replay, c.repetitions, c.warmup_passes)
        return {"extraction_ns": t.extraction_ns, "inference_ns": t.inference_ns, "waiting_s": 0.0}

    def isolated_cost(self, fid: int, depth: int | None) -> float:
        """Exec time of the singleton mask ``{fid}`` at ``depth`` (cached)."""
        key = (fid, depth)
        if key not in self._isolated:
            rep = Representation(FeatureMask.from_ids([fid]), depth)
            _, model = fit_and_score(rep, self.ctx.train, self.ctx.test, self.ctx.model)
            c = self.ctx.cost
            t = time_pipeline(rep, model, self.ctx.replay, c.repetitions, c.warmup_passes)
            self._isolated[key] = t.total_ns
        return self._isolated[key]

    def evaluate(self, rep: Representation) -> EvalResult:
        key = (*rep.key, self.ctx.seed)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        ctx = self.ctx
        perf, model = fit_and_score(rep, ctx.train, ctx.test, ctx.model)
        breakdown = self._timing(rep, model)
        kind = ctx.cost.kind
        if kind == "exec_time":
            cost = breakdown["extraction_ns"] + breakdown["inference_ns"]
        elif kind == "inference_latency":
            cost = breakdown["latency_s"]
        else:
            cost = ablation_cost(rep, kind, breakdown, self.isolated_cost,
                                 unbounded_depth=ctx.replay.packed.max_len)
        extra = {}
        if kind in ("naive_cost", "model_inf_cost", "pkt_depth_cost"):
            extra["true_cost"] = breakdown["extraction_ns"] + breakdown["inference_ns"]
        if ctx.perf_kind == "naive_mi":
            extra["true_perf"] = perf
            perf = ablation_perf(rep, ctx.mi)
        res = EvalResult(rep, float(perf), float(cost), ctx.cost.unit, breakdown,
                         perf_metric=perf_metric_name(ctx.model.task), model=model, seed=ctx.seed, extra=extra)
        self._cache[key] = res
        self.n_measured += 1
        return res


class TableProfiler:
    """Serves evaluations from a precomputed table (e.g. an exhaustive ground truth).

    The same ablation variants as :class:`Profiler` are derived from the stored
    breakdowns, so searchers can be compared cheaply on a fixed landscape.
    """

    def __init__(self, results, cost_kind: str = "exec_time", perf_kind: str = "measured",
                 mi: FeatureStats | None = None, unbounded_depth: int | None = None):
        if cost_kind not in COST_KINDS or cost_kind == "inference_latency":
            raise ConfigError(f"table profiler cannot serve cost kind {cost_kind!r}")
        if perf_kind not in PERF_KINDS:
            raise ConfigError(f"unknown perf kind {perf_kind!r}")
        if perf_kind == "naive_mi" and mi is None:
            raise ConfigError("naive_mi perf needs a mutual-information table")
        self.table = {r.rep.key: r for r in results}
        self.cost_kind = cost_kind
        self.perf_kind = perf_kind
        self.mi = mi
        self.unbounded_depth = unbounded_depth
        self.seen: set = set()

    @property
    def n_measured(self) -> int:
        return len(self.seen)

    @property
    def cost_unit(self) -> str:
        return COST_UNITS[self.cost_kind]

    def lookup(self, rep: Representation) -> EvalResult:
        try:
            return self.table[rep.key]
        except KeyError:
            raise DataError(f"{rep.describe()} is not in the evaluation table") from None

    def isolated_cost(self, fid: int, depth: int | None) -> float:
        return self.lookup(Representation(FeatureMask.from_ids([fid]), depth)).cost

    def evaluate(self, rep: Representation) -> EvalResult:
        base = self.lookup(rep)
        self.seen.add(rep.key)
        if self.cost_kind == "exec_time" and self.perf_kind == "measured":
            return base
        cost, perf = base.cost, base.perf
        if self.cost_kind != "exec_time":
            cost = ablation_cost(rep, self.cost_kind, base.breakdown, self.isolated_cost, self.unbounded_depth)
        if self.perf_kind == "naive_mi":
            perf = ablation_perf(rep, self.mi)
        return replace(base, cost=cost, perf=perf, cost_unit=self.cost_unit,
                       extra={**base.extra, "true_cost": base.cost, "true_perf": base.perf})


def stability_check(rep: Representation, model: TrainedModel, dataset: Dataset, trials: int = 10,
                    repetitions: int = 5, warmup: int = 1, threshold: float = STABILITY_CV):
    """Coefficient of variation of repeated median-of-``repetitions`` measurements.

    Emits :class:`FidelityWarning` when the CV reaches ``threshold``.
    """
    medians = np.array([measure_exec_time(rep, model, dataset, repetitions, warmup) for _ in range(trials)])
    cv = float(medians.std() / medians.mean()) if medians.mean() > 0 else 0.0
    if cv >= threshold:
        warnings.warn(f"exec-time CV {cv:.2f} across {trials} trials exceeds {threshold:.2f}; "
                      "cost measurements are noisy", FidelityWarning, stacklevel=2)
    return medians, cv


class TraceWriter:
    """Appends one JSON object per evaluation; flushes every line."""

    def __init__(self, path: str | Path, **stamp):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.stamp = stamp
        self._fh = open(self.path, "w", encoding="utf-8")

    def write(self, result: EvalResult) -> None:
        self._fh.write(json.dumps(result.to_json(**self.stamp)) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

