"""Experiment orchestration behind the command-line interface.

Layout of results: ``<output_dir>/<experiment>/<method>/<seed>/`` holding
``trace.jsonl``, ``front.json`` and ``convergence.csv``. Exhaustive tables go
to ``<output_dir>/<experiment>/exhaustive/``.
"""
from __future__ import annotations

import csv
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import baselines, optimizer
from .config import ABLATION_METHODS, SEARCH_METHODS, ExperimentConfig, config_hash
from .errors import ConfigError, DataError
from .features import FEATURE_INDEX, FeatureMask, Representation, compile_plan, extract_dataset
from .ingest import Dataset, SynthSpec, load_labels, load_packet_csv, load_pcap, split_holdout, synth_generate
from .models import ModelConfig
from .pareto import Bounds, ObjectivePoint, exhaustive_ground_truth, hvi_curve, pareto_filter
from .priors import FeatureStats, PriorConfig, build_prior, feature_stats, reduce_dimensions, uniform_prior
from .profiler import CostMetric, EvalResult, Profiler, ProfilerContext, TableProfiler, TraceWriter
from .seeding import subseed, substream

log = logging.getLogger(__name__)

FIXED_DEPTHS = (10, 50, None)


# --------------------------------------------------------------------------
# data and components

def load_dataset(cfg: ExperimentConfig) -> Dataset:
    data = cfg["data"]
    src = data["source"]
    if src == "synthetic":
        spec = SynthSpec(data.get("n_classes", 8), data.get("flows_per_class", 100))
        return synth_generate(spec, data.get("seed", 1))
    task = data.get("task", "classification")
    if src == "csv":
        ds = load_packet_csv(data["path"], task=task)
    else:
        ds = load_pcap(data["path"])
        ds = ds.with_labels(load_labels(data["labels"]))
        if task != ds.task:
            ds = Dataset(ds.flows, task, ds.label_domain)
    if not ds.labeled:
        raise DataError("dataset has unlabeled flows")
    return ds


@dataclass
class Setup:
    cfg: ExperimentConfig
    dataset: Dataset
    train: Dataset
    test: Dataset
    replay: Dataset

    @property
    def space(self) -> optimizer.SearchSpace:
        return optimizer.SearchSpace(self.cfg.feature_ids, self.cfg["max_depth"], self.cfg["allow_unbounded"])

    @property
    def selection_depth(self) -> int | None:
        return None if self.cfg["allow_unbounded"] else self.cfg["max_depth"]

    def model_config(self, seed: int) -> ModelConfig:
        m = self.cfg["model"]
        return ModelConfig(m["kind"], self.dataset.task, tuple(m["depth_grid"]), m["n_estimators"],
                           m["cv_folds"], subseed(seed, "cv"))


def prepare(cfg: ExperimentConfig) -> Setup:
    ds = load_dataset(cfg)
    train, test = split_holdout(ds, cfg["holdout"], cfg["split_seed"])
    replay = ds if cfg["replay"] == "all" else test
    return Setup(cfg, ds, train, test, replay)


def mi_table(setup: Setup, features=None, seed: int = 0) -> FeatureStats:
    """Mutual information of each candidate feature on the training split at the search's deepest depth."""
    ids = tuple(features or setup.cfg.feature_ids)
    rep = Representation(FeatureMask.from_ids(ids), setup.selection_depth)
    X, y = extract_dataset(compile_plan(rep), setup.train)
    return feature_stats(X, y, ids, discrete_labels=setup.dataset.task == "classification")


def priors_for(setup: Setup, stats: FeatureStats):
    """(reduced space, prior) for the prior-guided optimizer."""
    pc = PriorConfig(**setup.cfg["prior"])
    kept = reduce_dimensions(stats, pc.mi_epsilon)
    full = setup.space
    space = optimizer.SearchSpace(tuple(kept), full.max_depth, full.allow_unbounded)
    return space, build_prior(stats, kept, space.n_depths, pc)


def load_table(path: str | Path) -> list[EvalResult]:
    path = Path(path)
    if path.is_dir():
        path = path / "table.jsonl"
    if not path.exists():
        raise DataError(f"{path}: ground-truth table not found")
    with open(path, encoding="utf-8") as fh:
        return [result_from_json(json.loads(line)) for line in fh if line.strip()]


def result_from_json(row: dict) -> EvalResult:
    try:
        mask = FeatureMask.from_ids(FEATURE_INDEX[n] for n in row["features"])
        depth = None if row["depth"] == "all" else int(row["depth"])
        known = {"iteration", "features", "depth", "perf", "perf_metric", "cost", "cost_unit", "breakdown",
                 "seed", "config_hash"}
        return EvalResult(Representation(mask, depth), float(row["perf"]), float(row["cost"]), row["cost_unit"],
                          dict(row.get("breakdown", {})), row.get("perf_metric", "macro_f1"),
                          iteration=int(row.get("iteration", -1)), seed=int(row.get("seed", 0)),
                          extra={k: v for k, v in row.items() if k not in known})
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed result row: {exc}") from None


def make_profiler(setup: Setup, seed: int, cost_kind: str | None = None, perf_kind: str | None = None,
                  stats: FeatureStats | None = None, table=None):
    cfg = setup.cfg
    cost_kind = cost_kind or cfg["cost_metric"]["kind"]
    perf_kind = perf_kind or cfg["perf_metric"]
    if perf_kind == "naive_mi" and stats is None:
        stats = mi_table(setup, seed=seed)
    if table is not None:
        return TableProfiler(table, cost_kind, perf_kind, stats, unbounded_depth=setup.replay.packed.max_len)
    cm = cfg["cost_metric"]
    ctx = ProfilerContext(setup.train, setup.test, setup.model_config(seed),
                          CostMetric(cost_kind, cm["repetitions"], cm["warmup_passes"]),
                          replay=setup.replay, seed=seed, perf_kind=perf_kind, mi=stats)
    return Profiler(ctx)


# --------------------------------------------------------------------------
# persistence

def run_dir(cfg: ExperimentConfig, method: str, seed: int) -> Path:
    return cfg.output_dir / cfg.name / method / str(seed)


def objective(r: EvalResult) -> tuple[float, float]:
    """True (cost, perf) of a result; ablation runs keep the measured values in extras."""
    return float(r.extra.get("true_cost", r.cost)), float(r.extra.get("true_perf", r.perf))


@dataclass
class GroundTruth:
    results: list
    front: object
    bounds: Bounds

    @classmethod
    def from_results(cls, results) -> "GroundTruth":
        pts = [ObjectivePoint(*objective(r), r) for r in results]
        return cls(results, pareto_filter(pts), Bounds.of(pts))

    def curve(self, trace) -> np.ndarray:
        return hvi_curve([ObjectivePoint(*objective(r)) for r in trace], self.front, self.bounds)


def write_front(path: Path, trace, stamp: dict) -> None:
    front = pareto_filter(ObjectivePoint(*objective(r), r) for r in trace)
    body = {**stamp, "points": [
        {"features": p.payload.rep.mask.names,
         "depth": "all" if p.payload.rep.depth is None else p.payload.rep.depth,
         "cost": p.cost, "perf": p.perf, "iteration": p.payload.iteration}
        for p in front]}
    path.write_text(json.dumps(body, indent=2) + "\n", encoding="utf-8")


def write_convergence(path: Path, trace, stamp: dict, gt: GroundTruth | None) -> None:
    curve = gt.curve(trace) if gt is not None else None
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "front_size", "hvi", "config_hash", "seed"])
        pts = []
        for i, r in enumerate(trace):
            pts.append(ObjectivePoint(*objective(r)))
            size = len(pareto_filter(pts))
            w.writerow([i, size, "" if curve is None else repr(float(curve[i])), stamp["config_hash"], stamp["seed"]])


def _stamp(cfg: ExperimentConfig, method: str, seed: int) -> dict:
    return {"config_hash": cfg.hash(), "seed": seed, "method": method}


def run_search(setup: Setup, method: str, seed: int, gt: GroundTruth | None = None,
               table=None, stats: FeatureStats | None = None):
    """Run one searcher for one seed, streaming its trace to disk."""
    cfg = setup.cfg
    out = run_dir(cfg, method, seed)
    out.mkdir(parents=True, exist_ok=True)
    stamp = _stamp(cfg, method, seed)
    budget = cfg["budget"]
    with TraceWriter(out / "trace.jsonl", config_hash=stamp["config_hash"]) as tw:
        if method in ("bo", "bo-base") or method in ABLATION_METHODS:
            cost_kind, perf_kind = ABLATION_METHODS.get(method, (None, None))
            o = cfg["optimizer"]
            ocfg = optimizer.OptimizerConfig(budget, o["init_samples"], o["candidates"], o["prior_decay"],
                                             o["ei_jitter"], o["n_trees"], seed)
            if method == "bo-base":
                space = setup.space
                prior = uniform_prior(space.features, space.n_depths)
            else:
                stats = stats or mi_table(setup, seed=seed)
                space, prior = priors_for(setup, stats)
            prof = make_profiler(setup, seed, cost_kind, perf_kind, stats, table)
            trace, _ = optimizer.run(space, prior, prof, ocfg, on_result=tw.write, method=method)
        else:
            prof = make_profiler(setup, seed, table=table)
            space = setup.space
            if method == "rand":
                trace = baselines.run_random(space, budget, prof, substream(seed, "sampling"), tw.write)
            elif method == "iterall":
                trace = baselines.run_iterall(space, budget, prof, tw.write)
            elif method == "simanneal":
                trace = baselines.run_simanneal(space, budget, prof, substream(seed, "simanneal"), on_result=tw.write)
            else:
                raise ConfigError(f"methods: {method!r} is not a search method")
    write_front(out / "front.json", trace, stamp)
    write_convergence(out / "convergence.csv", trace, stamp, gt)
    return trace


def _ground_truth(cfg: ExperimentConfig):
    if cfg["ground_truth"] is None:
        return None, None
    table = load_table(cfg["ground_truth"])
    return table, GroundTruth.from_results(table)


# --------------------------------------------------------------------------
# commands

def cmd_optimize(cfg: ExperimentConfig, methods=None) -> dict:
    """Run the optimizer variants listed in ``methods`` (default: those in the config) for every seed."""
    methods = list(methods or [m for m in cfg["methods"] if m in ("bo", "bo-base") or m in ABLATION_METHODS])
    if not methods:
        raise ConfigError("methods: no optimizer method (bo, bo-base or an ablation) selected")
    setup = prepare(cfg)
    table, gt = _ground_truth(cfg)
    out = {}
    for seed in cfg["seeds"]:
        for method in methods:
            out[(method, seed)] = run_search(setup, method, seed, gt, table)
    return out


def cmd_baseline(cfg: ExperimentConfig, method: str, depths=FIXED_DEPTHS) -> dict:
    setup = prepare(cfg)
    table, gt = _ground_truth(cfg)
    out = {}
    if method in ("rand", "iterall", "simanneal"):
        if method == "iterall" and cfg["budget"] > cfg["max_depth"]:
            raise ConfigError(f"budget: iterall needs budget <= max_depth ({cfg['max_depth']})")
        for seed in cfg["seeds"]:
            out[seed] = run_search(setup, method, seed, gt, table)
        return out
    baselines.FixedSelection.parse(method)
    for seed in cfg["seeds"]:
        prof = make_profiler(setup, seed, table=table)
        d = run_dir(cfg, method, seed)
        d.mkdir(parents=True, exist_ok=True)
        stamp = _stamp(cfg, method, seed)
        results = []
        for depth in depths:
            res = baselines.run_fixed_baseline(method, depth, prof, cfg.feature_ids, setup.train,
                                               setup.model_config(seed))
            tag = "all" if depth is None else str(depth)
            (d / f"depth-{tag}.json").write_text(json.dumps(res.to_json(**stamp), indent=2) + "\n", encoding="utf-8")
            results.append(res)
        out[seed] = results
    return out


def exhaustive_hash(cfg: ExperimentConfig) -> str:
    keys = ("data", "holdout", "split_seed", "replay", "features", "max_depth", "allow_unbounded",
            "cost_metric", "perf_metric", "model")
    return config_hash({k: cfg[k] for k in keys} | {"seed": cfg["seeds"][0]})


def cmd_exhaustive(cfg: ExperimentConfig, force: bool = False):
    """Measure every representation once; reuse the stored table when the content hash matches."""
    out = cfg.output_dir / cfg.name / "exhaustive"
    meta_path = out / "meta.json"
    h = exhaustive_hash(cfg)
    if not force and meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        if meta.get("content_hash") == h and (out / "table.jsonl").exists():
            log.info("exhaustive table %s is up to date", out)
            return load_table(out), True
    setup = prepare(cfg)
    seed = cfg["seeds"][0]
    prof = make_profiler(setup, seed)
    results, _ = exhaustive_ground_truth(setup.space, prof)
    out.mkdir(parents=True, exist_ok=True)
    stamp = {"config_hash": cfg.hash(), "seed": seed, "method": "exhaustive"}
    results = [r.at(i) for i, r in enumerate(results)]
    with TraceWriter(out / "table.jsonl", **stamp) as tw:
        for r in results:
            tw.write(r)
    write_front(out / "front.json", results, stamp)
    meta_path.write_text(json.dumps({"content_hash": h, "config_hash": stamp["config_hash"], "seed": seed,
                                     "n_evaluations": len(results)}, indent=2) + "\n", encoding="utf-8")
    return results, False


SWEEP_PARAMS = {"max_depth": int, "delta": float, "init_samples": int}


def cmd_sweep(cfg: ExperimentConfig, param: str, values) -> dict:
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"sweep parameter must be one of {', '.join(SWEEP_PARAMS)}")
    values = [SWEEP_PARAMS[param](v) for v in values]
    if not values:
        raise ConfigError("sweep needs at least one value")
    runs = {}
    rows = []
    for v in values:
        if param == "max_depth":
            change = {"max_depth": v}
        elif param == "delta":
            change = {"prior": {"delta": v}}
        else:
            change = {"optimizer": {"init_samples": v}}
        sub = cfg.with_changes(experiment=f"{cfg.name}/sweep-{param}-{v}", methods=["bo"], **change)
        res = cmd_optimize(sub, ["bo"])
        runs[v] = res
        table, gt = _ground_truth(sub)
        for (method, seed), trace in res.items():
            pts = [ObjectivePoint(*objective(r)) for r in trace]
            front = pareto_filter(pts)
            hv = "" if gt is None else repr(float(gt.curve(trace)[-1]))
            rows.append([param, v, seed, len(front), max(p.perf for p in pts), min(p.cost for p in pts), hv,
                         sub.hash()])
    path = cfg.output_dir / cfg.name / f"sweep-{param}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["parameter", "value", "seed", "front_size", "best_perf", "min_cost", "hvi", "config_hash"])
        w.writerows(rows)
    return runs


def read_trace(path: Path) -> list[EvalResult]:
    with open(path, encoding="utf-8") as fh:
        return [result_from_json(json.loads(line)) for line in fh if line.strip()]


def _stderr(v) -> float:
    v = np.asarray(v, dtype=float)
    return float(v.std(ddof=1) / np.sqrt(len(v))) if len(v) > 1 else 0.0


def cmd_report(run_dirs, out_dir: str | Path, ground_truth: str | Path | None = None, notice=None) -> dict:
    """Summaries over every trace.jsonl below ``run_dirs``; never writes inside them."""
    notice = notice or (lambda msg: print(msg, file=sys.stderr))
    runs = []
    for d in run_dirs:
        d = Path(d)
        if not d.exists():
            raise DataError(f"{d}: no such run directory")
        for p in sorted(d.rglob("trace.jsonl")):
            trace = read_trace(p)
            if trace:
                runs.append((trace[0].extra.get("method", p.parent.parent.name), trace[0].seed, trace))
    if not runs:
        raise DataError("no traces found")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    gt = GroundTruth.from_results(load_table(ground_truth)) if ground_truth else None

    with open(out_dir / "extremes.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "seed", "point", "features", "n", "perf", "cost"])
        for method, seed, trace in runs:
            front = list(pareto_filter(ObjectivePoint(*objective(r), r) for r in trace))
            for label, p in (("highest_perf", front[-1]), ("lowest_cost", front[0])):
                rep = p.payload.rep
                w.writerow([method, seed, label, "+".join(rep.mask.names),
                            "all" if rep.depth is None else rep.depth, repr(p.perf), repr(p.cost)])

    summary: dict = {}
    if gt is None:
        notice("no ground truth given: HVI tables omitted, fronts still reported")
        return summary
    curves: dict = {}
    for method, seed, trace in runs:
        curves.setdefault(method, []).append(gt.curve(trace))
    with open(out_dir / "hvi.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "runs", "hvi_mean", "hvi_stderr"])
        for method in sorted(curves):
            finals = [c[-1] for c in curves[method]]
            summary[method] = (float(np.mean(finals)), _stderr(finals))
            w.writerow([method, len(finals), repr(summary[method][0]), repr(summary[method][1])])
    with open(out_dir / "curves.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "iteration", "hvi_mean", "hvi_stderr"])
        for method in sorted(curves):
            length = min(len(c) for c in curves[method])
            stack = np.array([c[:length] for c in curves[method]])
            for i in range(length):
                w.writerow([method, i, repr(float(stack[:, i].mean())), repr(_stderr(stack[:, i]))])
    ablations = [m for m in summary if m in ABLATION_METHODS]
    if "bo" in summary and ablations:
        with open(out_dir / "ablation.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["variant", "hvi_mean", "bo_hvi_mean", "difference"])
            for m in sorted(ablations):
                w.writerow([m, repr(summary[m][0]), repr(summary["bo"][0]), repr(summary["bo"][0] - summary[m][0])])
    return summary


__all__ = [
    "SEARCH_METHODS", "cmd_optimize", "cmd_baseline", "cmd_exhaustive", "cmd_sweep", "cmd_report",
    "prepare", "load_table", "read_trace", "GroundTruth",
]
