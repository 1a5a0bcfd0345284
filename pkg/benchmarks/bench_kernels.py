"""Compiled vs interpreted hot kernels: feature extraction and tree inference.

Run: python3 benchmarks/bench_kernels.py [--flows 200] [--depth 50] [--repeat 3]

The interpreted side calls the same kernel source through ``.py_func``, which
is what ``FLOWOPT_DISABLE_NUMBA=1`` selects at import time.
"""
import argparse
import time

import numpy as np

from flowopt._accel import NUMBA_ENABLED, python_impl
from flowopt.features import MINI_SET, FeatureMask, Representation, compile_plan, extract_dataset, kernels
from flowopt.features.plan import depth_limit
from flowopt.ingest import SynthSpec, synth_generate
from flowopt.models import ModelConfig, train


def best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--flows", type=int, default=200, help="flows per class (4 classes)")
    ap.add_argument("--depth", type=int, default=50)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    ds = synth_generate(SynthSpec(4, args.flows), seed=3)
    p = ds.packed
    cases = {
        "mini set": Representation(FeatureMask.from_names(MINI_SET), args.depth),
        "all 67": Representation(FeatureMask.full(), args.depth),
    }
    print(f"numba enabled: {NUMBA_ENABLED}; {p.n_flows} flows, depth {args.depth}")
    print(f"{'kernel':28s} {'compiled ms':>12s} {'python ms':>12s} {'speedup':>9s}")
    for name, rep in cases.items():
        plan = compile_plan(rep)
        n_out = len(plan.columns)
        cap = max(1, min(depth_limit(plan.depth), p.max_len))

        def make(fn):
            out = np.zeros((p.n_flows, n_out))
            insp = np.zeros(p.n_flows, dtype=np.int64)
            scratch = np.zeros((8, cap), dtype=np.int64)
            return lambda: fn(p.offsets, p.ts, p.dir, p.frame_len, p.headers, plan.enabled, plan.columns,
                              depth_limit(plan.depth), out, insp, scratch)

        fast, slow = make(kernels.extract_flows), make(python_impl(kernels.extract_flows))
        fast()  # compile outside the timed region
        tf, ts = best_of(fast, args.repeat), best_of(slow, 1)
        print(f"{'extract ' + name:28s} {tf * 1e3:12.3f} {ts * 1e3:12.1f} {ts / tf:9.0f}x")

        X, y = extract_dataset(plan, ds)
        for kind in ("decision_tree", "random_forest"):
            model = train(X, y, ModelConfig(kind=kind, depth_grid=(10,), n_estimators=20))
            c = model.compiled
            idx = np.zeros(len(X), dtype=np.int64)
            val = np.zeros(len(X))

            def run(fn):
                return lambda: fn(X, c.roots, c.left, c.right, c.feature, c.threshold, c.leaf_values,
                                  c.classify, idx, val)

            fast, slow = run(kernels.predict_ensemble), run(python_impl(kernels.predict_ensemble))
            fast()
            tf, ts = best_of(fast, args.repeat), best_of(slow, 1)
            label = f"infer {kind.split('_')[0]} {name}"
            print(f"{label:28s} {tf * 1e3:12.3f} {ts * 1e3:12.1f} {ts / tf:9.0f}x")


if __name__ == "__main__":
    main()
