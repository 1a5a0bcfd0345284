"""``flowopt`` command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 measurement-fidelity error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import ConfigError, DataError, FidelityError, FormatError, SpaceTooLargeError, TrainingError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_FIDELITY = 0, 2, 3, 4


def _depths(text: str):
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if tok == "all":
            out.append(None)
        else:
            try:
                d = int(tok)
            except ValueError:
                raise argparse.ArgumentTypeError(f"bad depth {tok!r}") from None
            if d < 1:
                raise argparse.ArgumentTypeError("depths must be >= 1")
            out.append(d)
    return tuple(out)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="flowopt", description="Search feature sets and connection depths "
                                 "for traffic-analysis pipelines under cost and accuracy objectives.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", help="run the Bayesian optimizer for every configured seed")
    p.add_argument("config")
    p.add_argument("--method", action="append", help="bo, bo-base or an ablation variant (repeatable)")

    p = sub.add_parser("exhaustive", help="measure every representation of a small space")
    p.add_argument("config")
    p.add_argument("--force", action="store_true", help="re-measure even if a matching table exists")

    p = sub.add_parser("baseline", help="run a comparison searcher or fixed feature selection")
    p.add_argument("config")
    p.add_argument("--method", required=True, help="rand, iterall, simanneal, all, rfe<k> or mi<k>")
    p.add_argument("--depths", type=_depths, default=(10, 50, None),
                   help="fixed-baseline depths, comma separated; 'all' for whole connections")

    p = sub.add_parser("sweep", help="rerun the optimizer across values of one parameter")
    p.add_argument("config")
    p.add_argument("--param", required=True, choices=("max_depth", "delta", "init_samples"))
    p.add_argument("--values", required=True, help="comma-separated values")

    p = sub.add_parser("report", help="summarize run directories into CSV tables")
    p.add_argument("runs", nargs="+")
    p.add_argument("--ground-truth", help="exhaustive directory or table.jsonl for HVI")
    p.add_argument("--out", default="report")

    sub.add_parser("features", help="print the feature registry as CSV")

    p = sub.add_parser("synth", help="write a synthetic labeled dataset")
    p.add_argument("out", help="output .csv (packet table) or .pcap (labels written alongside)")
    p.add_argument("--classes", type=int, default=8)
    p.add_argument("--flows-per-class", type=int, default=100)
    p.add_argument("--seed", type=int, default=1)
    return ap


def _run(args) -> int:
    from . import runner
    from .config import load_config

    if args.command == "features":
        from .features import catalogue_csv
        sys.stdout.write(catalogue_csv())
        return EXIT_OK
    if args.command == "synth":
        from .ingest import SynthSpec, pcap_flow_id, synth_generate, write_labels, write_packet_csv, write_pcap
        if args.classes < 2 or args.flows_per_class < 2:
            raise ConfigError("--classes and --flows-per-class must be >= 2")
        ds = synth_generate(SynthSpec(args.classes, args.flows_per_class), args.seed)
        out = Path(args.out)
        if out.suffix == ".pcap":
            write_pcap(out, ds)
            labels = out.with_suffix(".labels.csv")
            write_labels(labels, ds, [pcap_flow_id(f, i) for i, f in enumerate(ds.flows)])
        else:
            write_packet_csv(ds, out)
        print(f"wrote {len(ds)} flows to {out}")
        return EXIT_OK
    if args.command == "report":
        summary = runner.cmd_report(args.runs, args.out, args.ground_truth)
        for method, (mean, se) in sorted(summary.items()):
            print(f"{method:20s} HVI {mean:.4f} +/- {se:.4f}")
        print(f"report written to {args.out}")
        return EXIT_OK

    cfg = load_config(args.config)
    if args.command == "optimize":
        runs = runner.cmd_optimize(cfg, args.method)
        for (method, seed), trace in sorted(runs.items()):
            print(f"{method} seed={seed}: {len(trace)} evaluations -> {runner.run_dir(cfg, method, seed)}")
    elif args.command == "exhaustive":
        results, cached = runner.cmd_exhaustive(cfg, force=args.force)
        state = "cached" if cached else "measured"
        print(f"{len(results)} representations ({state}) -> {cfg.output_dir / cfg.name / 'exhaustive'}")
    elif args.command == "baseline":
        runs = runner.cmd_baseline(cfg, args.method, args.depths)
        for seed in sorted(runs):
            print(f"{args.method} seed={seed} -> {runner.run_dir(cfg, args.method, seed)}")
    elif args.command == "sweep":
        cast = runner.SWEEP_PARAMS[args.param]
        try:
            values = [cast(v) for v in args.values.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"--values: {args.values!r} are not {cast.__name__} values") from None
        if not values:
            raise ConfigError("--values: no values given")
        runner.cmd_sweep(cfg, args.param, values)
        print(f"sweep summary -> {cfg.output_dir / cfg.name / f'sweep-{args.param}.csv'}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except (ConfigError, SpaceTooLargeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FidelityError as exc:
        print(f"measurement fidelity error: {exc}", file=sys.stderr)
        return EXIT_FIDELITY
    except (DataError, FormatError, TrainingError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
