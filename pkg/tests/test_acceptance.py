"""Acceptance criteria 1-11, each at its stated tolerance and runtime bound.

Every test prints one ``PASS``/``FAIL`` line (also repeated in the terminal
summary) and then asserts the same condition.
"""
import itertools
import math
import time
import warnings

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from flowopt import runner
from flowopt.baselines import acceptance_probability, simanneal_accept, temperature
from flowopt.config import ABLATION_METHODS, from_dict
from flowopt.features import FEATURES, FEATURE_INDEX, FeatureMask, Representation, compile_plan, extract_dataset
from flowopt.features.reference import reference_vector
from flowopt.features.registry import STEP_NAMES
from flowopt.ingest import UDP, Dataset, FlowRecord, SynthSpec, synth_generate
from flowopt.models import ModelConfig, train
from flowopt.pareto import ObjectivePoint, hypervolume_2d, pareto_filter
from flowopt.priors import feature_prior
from flowopt.profiler import (
    FidelityWarning, Profiler, ProfilerContext, ablation_cost, latency_breakdown, stability_check,
    timer_resolution_ns,
)

SEEDS = list(range(10))


def verdict(n, title, ok, detail, elapsed, limit_s):
    in_time = elapsed < limit_s
    ok = bool(ok) and in_time
    line = (f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title} | {detail} | "
            f"{elapsed:.1f}s (limit {limit_s:g}s)")
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


# --------------------------------------------------------------------------
# shared experiment: mini feature set, N=50, exhaustive table, searchers at T=50

@pytest.fixture(scope="session")
def experiment(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance")
    cfg = from_dict({
        "experiment": "mini",
        "features": "mini",
        "max_depth": 50,
        "budget": 50,
        "model": {"depth_grid": [5]},
        "seeds": SEEDS,
        "output_dir": str(out),
    })
    t0 = time.perf_counter()
    table, _ = runner.cmd_exhaustive(cfg)
    gt_seconds = time.perf_counter() - t0
    cfg = cfg.with_changes(ground_truth=str(out / "mini" / "exhaustive" / "table.jsonl"))
    setup = runner.prepare(cfg)
    gt = runner.GroundTruth.from_results(table)
    return {"cfg": cfg, "setup": setup, "table": table, "gt": gt, "gt_seconds": gt_seconds, "cache": {}}


def final_hvi(exp, method, seed, budget=50):
    key = (method, seed, budget)
    if key not in exp["cache"]:
        setup = exp["setup"] if budget == 50 else runner.prepare(exp["cfg"].with_changes(budget=budget))
        trace = runner.run_search(setup, method, seed, exp["gt"], exp["table"])
        exp["cache"][key] = exp["gt"].curve(trace)
    return exp["cache"][key]


# --------------------------------------------------------------------------

def test_criterion_01_prior_formula():
    t0 = time.perf_counter()
    worst = 0.0
    for i_max in (1e-3, 0.1, 0.7, 2.0):
        for frac in np.linspace(0, 1, 21):
            for delta in np.linspace(0, 1, 21):
                i_f = frac * i_max
                expect = (1 - delta) * i_f / i_max + delta / 2
                worst = max(worst, abs(feature_prior(i_f, i_max, delta) - expect))
    uniform = all(feature_prior(f * 0.7, 0.7, 1.0) == 0.5 for f in np.linspace(0, 1, 11))
    ends = feature_prior(0.7, 0.7, 0.0) == 1.0 and feature_prior(0.0, 0.7, 0.0) == 0.0
    verdict(1, "prior formula exactness", worst <= 1e-12 and uniform and ends,
            f"max abs error {worst:.2e}, delta=1 uniform {uniform}", time.perf_counter() - t0, 1)


def test_criterion_02_pareto_oracle():
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    mismatches = 0
    for _ in range(200):
        arr = np.round(rng.random((1000, 2)), 3)
        c, p = arr[:, 0], arr[:, 1]
        dom = ((c[:, None] <= c[None, :]) & (p[:, None] >= p[None, :])
               & ((c[:, None] < c[None, :]) | (p[:, None] > p[None, :])))
        nd = ~dom.any(axis=0)
        brute = sorted({(float(a), float(b)) for a, b in arr[nd]})
        got = [(q.cost, q.perf) for q in pareto_filter(ObjectivePoint(float(a), float(b)) for a, b in arr)]
        mismatches += got != brute
    verdict(2, "pareto_filter vs O(n^2) brute force", mismatches == 0,
            f"{mismatches}/200 clouds differ", time.perf_counter() - t0, 10)


def test_criterion_03_hypervolume_oracle():
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    within = 0
    for _ in range(50):
        pts = rng.random((int(rng.integers(1, 21)), 2))
        front = [ObjectivePoint(float(a), float(b)) for a, b in pts]
        exact = hypervolume_2d(front)
        u = rng.random((1_000_000, 2))
        covered = np.zeros(len(u), dtype=bool)
        for c, f in pareto_filter(front).as_array():
            covered |= (u[:, 0] >= c) & (u[:, 1] <= f)
        within += abs(exact - covered.mean()) < 0.01
    verdict(3, "exact hypervolume vs 1e6-sample Monte Carlo", within >= 0.95 * 50,
            f"{within}/50 fronts within 0.01", time.perf_counter() - t0, 30)


def test_criterion_04_extraction_consistency():
    ds = synth_generate(SynthSpec(4, 10), seed=4)
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    bad = 0
    full_cache = {}
    for _ in range(500):
        bits = 0
        while bits == 0:
            bits = int.from_bytes(rng.bytes(9), "little") & ((1 << 67) - 1)
            bits &= int.from_bytes(rng.bytes(9), "little")  # sparser masks
        mask = FeatureMask(bits)
        depth = None if rng.random() < 0.1 else int(rng.integers(1, 60))
        flows = ds.subset(rng.choice(len(ds), 5, replace=False))
        part, _ = extract_dataset(compile_plan(Representation(mask, depth)), flows)
        full, _ = extract_dataset(compile_plan(Representation(FeatureMask.full(), depth)), flows)
        ids = list(mask.ids)
        ok = np.array_equal(part, full[:, ids])
        for i, flow in enumerate(flows.flows):
            key = (flow.flow_id, depth)
            if key not in full_cache:
                full_cache[key] = np.array(reference_vector(flow, depth, list(range(67))))
            ok &= np.array_equal(part[i], full_cache[key][ids])
        bad += not ok
    verdict(4, "specialized plan = projection = reference (bitwise)", bad == 0,
            f"{bad}/500 (mask, depth) pairs differ", time.perf_counter() - t0, 60)


def test_criterion_05_search_vs_exhaustive(experiment):
    t0 = time.perf_counter()
    means = {}
    for method in ("bo", "rand", "iterall", "simanneal"):
        means[method] = float(np.mean([final_hvi(experiment, method, s)[-1] for s in SEEDS]))
    elapsed = time.perf_counter() - t0 + experiment["gt_seconds"]
    n_eval = len(experiment["table"])
    ok = (means["bo"] >= means["rand"] + 0.02 and means["bo"] >= means["iterall"] and means["bo"] >= 0.90)
    detail = ", ".join(f"{m} {v:.4f}" for m, v in means.items()) + f"; {n_eval} exhaustive evaluations"
    verdict(5, "mean HVI at T=50 over 10 seeds", ok, detail, elapsed, 30 * 60)


def first_reach(curve, level=0.99):
    hit = np.flatnonzero(curve >= level)
    return int(hit[0]) + 1 if len(hit) else None


def test_criterion_06_prior_acceleration(experiment):
    t0 = time.perf_counter()
    wins = 0
    pairs = []
    for s in SEEDS:
        a = first_reach(final_hvi(experiment, "bo", s, 300))
        b = first_reach(final_hvi(experiment, "bo-base", s, 300))
        pairs.append(f"{a}/{b}")
        wins += a is not None and (b is None or a < b)
    verdict(6, "iterations to HVI>=0.99, priors vs uniform (T=300)", wins >= 7,
            f"priors faster in {wins}/10 seeds; bo/bo-base per seed: {' '.join(pairs)}",
            time.perf_counter() - t0, 45 * 60)


def test_criterion_07_simanneal_exactness():
    class Fixed:
        def __init__(self, u):
            self.u = u

        def random(self):
            return self.u

    t0 = time.perf_counter()
    worst, flips = 0.0, 0
    rng = np.random.default_rng(7)
    for _ in range(1000):
        f_cur, f_nb = rng.random(2)
        temp = temperature(int(rng.integers(0, 300)))
        p = acceptance_probability(f_cur, f_nb, temp)
        worst = max(worst, abs(p - min(1.0, math.exp((f_cur - f_nb) / temp))))
        if p < 1:
            flips += not simanneal_accept(f_cur, f_nb, False, temp, Fixed(np.nextafter(p, 0)))
            flips += simanneal_accept(f_cur, f_nb, False, temp, Fixed(p))
    dominating = all(simanneal_accept(0.0, 1.0, True, 1e-9, Fixed(0.9999999)) for _ in range(100))
    schedule = all(temperature(i) == 0.99 ** i for i in range(1000))
    verdict(7, "SimA acceptance and schedule", worst <= 1e-12 and flips == 0 and dominating and schedule,
            f"max error {worst:.1e}, quantile flips {flips}, dominating {dominating}, T_i exact {schedule}",
            time.perf_counter() - t0, 1)


def _sharing_pairs(rng, k=20):
    parse = {STEP_NAMES.index(n) for n in ("parse_ip", "parse_l4")}
    cands = [(a.id, b.id) for a, b in itertools.combinations(FEATURES, 2)
             if a.step_deps & b.step_deps & parse]
    idx = rng.choice(len(cands), k, replace=False)
    return [cands[i] for i in idx]


def test_criterion_08_ablation_direction(experiment):
    t0 = time.perf_counter()
    bo = float(np.mean([final_hvi(experiment, "bo", s)[-1] for s in SEEDS]))
    variants = {m: float(np.mean([final_hvi(experiment, m, s)[-1] for s in SEEDS])) for m in ABLATION_METHODS}
    hvi_ok = all(bo >= v for v in variants.values())

    setup = experiment["setup"]
    prof = Profiler(ProfilerContext(setup.train, setup.test, ModelConfig(depth_grid=(5,)), replay=setup.replay))
    rng = np.random.default_rng(8)
    naive_ok = 0
    for a, b in _sharing_pairs(rng):
        depth = int(rng.integers(1, 51))
        rep = Representation(FeatureMask.from_ids([a, b]), depth)
        measured = prof.evaluate(rep).cost
        naive_ok += ablation_cost(rep, "naive_cost", isolated=prof.isolated_cost) >= measured
    detail = (f"bo {bo:.4f}; " + ", ".join(f"{m} {v:.4f}" for m, v in variants.items())
              + f"; naive >= measured for {naive_ok}/20 pairs")
    verdict(8, "full measurement beats each ablation", hvi_ok and naive_ok == 20, detail,
            time.perf_counter() - t0, 45 * 60)


def test_criterion_09_timing_stability():
    ds = synth_generate(SynthSpec(10, 100), seed=9)
    rep = Representation(FeatureMask.from_names(["dur", "s_bytes_mean", "s_iat_mean", "d_ttl_max"]), 20)
    X, y = extract_dataset(compile_plan(rep), ds)
    model = train(X, y, ModelConfig(depth_grid=(10,)))
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        medians, cv = stability_check(rep, model, ds, trials=10, repetitions=5)
    warned = any(issubclass(w.category, FidelityWarning) for w in rec)
    consistent = warned == (cv >= 0.2)
    verdict(9, "median-of-5 exec time CV over 10 trials (1000 flows)", cv < 0.2 and consistent,
            f"CV {cv:.3f}, median {np.median(medians):.0f} ns/flow, warning raised {warned}",
            time.perf_counter() - t0, 300)


def test_criterion_10_latency_formula():
    t0 = time.perf_counter()

    def flow(i, gaps):
        ts = np.concatenate([[0], np.cumsum(gaps)]).astype(int)
        n = len(ts)
        return FlowRecord.from_columns(f"f{i}", "ab"[i % 2], ts=ts, dir=[0] + [1] * (n - 1),
                                       frame_len=[100 + 10 * (i % 2)] * n, proto=[UDP] * n, src_port=[9] * n,
                                       dst_port=[53] * n, ip_ttl=[64] * n, tcp_flags=[0] * n,
                                       tcp_window=[0] * n)

    gaps = [[1_000_000, 2_000_000, 250], [500_000, 10, 10]]
    ds = Dataset(tuple(flow(i, gaps[i % 2]) for i in range(20)))
    res_s = timer_resolution_ns() * 1e-9
    ok, lines = True, []
    for depth, expect_wait in ((1, 0.0), (2, 0.75), (3, (3.0 + 0.50001) / 2), (4, (3.00025 + 0.50002) / 2)):
        rep = Representation(FeatureMask.from_names(["s_bytes_sum", "d_bytes_max"]), depth)
        X, y = extract_dataset(compile_plan(rep), ds)
        b = latency_breakdown(rep, train(X, y, ModelConfig(depth_grid=(3,))), ds)
        compute = (b["extraction_ns"] + b["inference_ns"]) * 1e-9
        err = abs(b["latency_s"] - (compute + expect_wait))
        ok &= abs(b["waiting_s"] - expect_wait) <= 1e-12 and err <= res_s
        if depth == 1:
            ok &= b["waiting_s"] == 0.0
        lines.append(f"n={depth} wait {b['waiting_s']:.6f}s err {err:.1e}s")
    verdict(10, "latency = exec + inference + sum of IATs", ok, "; ".join(lines), time.perf_counter() - t0, 10)


def test_criterion_11_determinism(tmp_path):
    raw = {
        "experiment": "det",
        "data": {"source": "synthetic", "n_classes": 4, "flows_per_class": 40, "seed": 11},
        "features": "mini",
        "max_depth": 20,
        "budget": 15,
        "model": {"depth_grid": [5]},
        "optimizer": {"candidates": 1000},
        "seeds": [3],
    }

    def twice(extra):
        traces = []
        for run in ("a", "b"):
            cfg = from_dict({**raw, **extra, "output_dir": str(tmp_path / run)})
            runner.cmd_optimize(cfg, ["bo"])
            rows = runner.read_trace(runner.run_dir(cfg, "bo", 3) / "trace.jsonl")
            traces.append([(r.rep.mask.names, r.rep.depth, repr(r.perf), r.perf_metric, r.iteration) for r in rows])
        first_diff = next((i for i, (x, y) in enumerate(zip(*traces)) if x != y), None)
        return traces[0] == traces[1] and len(traces[0]) == 15, first_diff

    t0 = time.perf_counter()
    live, live_diff = twice({})
    elapsed = time.perf_counter() - t0
    # diagnostic only: the same search with costs served from a measured table
    runner.cmd_exhaustive(from_dict({**raw, "output_dir": str(tmp_path / "gt")}))
    served, _ = twice({"ground_truth": str(tmp_path / "gt" / "det" / "exhaustive" / "table.jsonl")})
    verdict(11, "two live cmd_optimize runs, same seed", live,
            f"live sequences identical: {live} (first difference at {live_diff}); "
            f"table-served costs identical: {served}", elapsed, 300)
