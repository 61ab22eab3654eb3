"""Command-line front end.

Subcommands: ``generate`` (write a dataset container), ``solve`` (run
one method on a dataset), ``calibrate`` (iterations to reach epsilon),
``bench`` (run a campaign config to CSV), ``report`` (summary table and
figures from a campaign CSV).

Exit codes: 0 success, 1 runtime failure, 2 usage error.  All randomness
flows from explicit seed flags; nothing is seeded from the clock.
"""

from __future__ import annotations

import argparse
import csv
import sys

import numpy as np

from . import bench, datasets, report
from .solvers import (METHOD_IDS, BreakdownError, DivergenceError, SolverConfig,
                      solve)

USAGE_ERROR = 2
RUNTIME_ERROR = 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kaczbench",
        description="Row-action solver benchmarks: generate, solve, calibrate, bench, report.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a dataset container")
    p.add_argument("--family", required=True, choices=datasets.FAMILIES,
                   type=str.lower)
    p.add_argument("--m", required=True, type=int, help="rows")
    p.add_argument("--n", required=True, type=int, help="columns")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="matrix file path (.kzm)")
    p.add_argument("--equal-row-norms", action="store_true",
                   help="ds1 variant with a fixed per-row sigma")

    p = sub.add_parser("solve", help="run one method on a stored dataset")
    p.add_argument("--in", dest="dataset", required=True)
    p.add_argument("--method", required=True, choices=METHOD_IDS)
    p.add_argument("--iters", required=True, type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--q", type=int, default=1)
    p.add_argument("--trace", help="write an iteration/squared-error CSV here")
    p.add_argument("--trace-stride", type=int, default=1)
    p.add_argument("--wor-materialize", action="store_true",
                   help="physically reorder rows for without-replacement sampling")

    p = sub.add_parser("calibrate", help="iterations needed to reach epsilon")
    p.add_argument("--in", dest="dataset", required=True)
    p.add_argument("--method", required=True, choices=METHOD_IDS)
    p.add_argument("--epsilon", type=float, default=bench.DEFAULT_EPSILON)
    p.add_argument("--seeds", type=int, default=bench.DEFAULT_SEED_COUNT)
    p.add_argument("--master-seed", type=int, default=0)
    p.add_argument("--cap", type=int, default=bench.DEFAULT_ITERATION_CAP)

    p = sub.add_parser("bench", help="run a campaign config, write CSV")
    p.add_argument("--config", required=True, help="campaign JSON")
    p.add_argument("--out", required=True, help="output CSV path")

    p = sub.add_parser("report", help="summary table and figures from a campaign CSV")
    p.add_argument("--in", dest="campaign_csv", required=True)
    p.add_argument("--out-dir", required=True)
    return parser


def _cmd_generate(args) -> int:
    spec = datasets.DatasetSpec(family=args.family, m_max=args.m, n_max=args.n,
                                seed=args.seed, equal_row_norms=args.equal_row_norms)
    gen = datasets.generate(spec)
    datasets.save_dataset(gen, args.out)
    print(f"wrote {args.family} {args.m}x{args.n} dataset to {args.out} "
          f"(seed {args.seed})")
    return 0


def _cmd_solve(args) -> int:
    gen = datasets.load_dataset(args.dataset)
    config = SolverConfig(
        method=args.method, max_iterations=args.iters, alpha=args.alpha,
        q=args.q, seed=args.seed,
        trace_stride=args.trace_stride if args.trace else 0,
        wor_materialize=args.wor_materialize)
    reference = gen.reference
    run = solve(gen.system, config, reference=reference)
    if reference is not None:
        d = run.x_final - reference
        print(f"final squared error vs reference: {float(d @ d):.6e}")
    print(f"iterations used: {run.iterations_used}")
    print(f"iteration loop time: {run.wall_time_ns / 1e6:.3f} ms")
    if args.trace and run.error_trace is not None:
        with open(args.trace, "w", newline="", encoding="ascii") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "sq_error"])
            for iteration, err in run.error_trace:
                writer.writerow([iteration, repr(err)])
        print(f"trace written to {args.trace}")
    return 0


def _cmd_calibrate(args) -> int:
    gen = datasets.load_dataset(args.dataset)
    seeds = bench.run_seeds(args.master_seed, args.seeds)
    result = bench.calibrate(args.method, gen, args.epsilon, seeds, args.cap)
    print(f"per-seed iteration counts: {result.per_seed_k}")
    if result.status == bench.STATUS_OK:
        print(f"calibrated iterations (median): {result.k}")
        return 0
    print(f"calibration failed: {result.status} within cap {args.cap}")
    return RUNTIME_ERROR


def _cmd_bench(args) -> int:
    parsed = bench.load_campaign_config(args.config)
    total = len(parsed["specs"]) * len(parsed["methods"])
    done = []

    def progress(record):
        done.append(record)
        print(f"[{len(done)}/{total}] {record.family} {record.m}x{record.n} "
              f"{record.method}: {record.status}"
              + (f", k={record.calibrated_k}" if record.calibrated_k else ""))

    records = bench.run_campaign(parsed, progress=progress)
    bench.write_csv(records, args.out)
    summary_path = args.out + ".summary.csv"
    bench.write_summary(records, summary_path)
    print(f"campaign CSV: {args.out}")
    print(f"summary table: {summary_path}")
    failed = sum(1 for r in records if r.status != bench.STATUS_OK)
    if failed:
        print(f"{failed}/{len(records)} cells did not converge or diverged")
    return 0 if len(records) == 0 or failed < len(records) else RUNTIME_ERROR


def _cmd_report(args) -> int:
    paths = report.render_report(args.campaign_csv, args.out_dir)
    print(f"summary table: {paths['summary']}")
    for fig in paths["figures"]:
        print(f"figure: {fig}")
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "solve": _cmd_solve,
    "calibrate": _cmd_calibrate,
    "bench": _cmd_bench,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except bench.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR
    except (DivergenceError, BreakdownError, datasets.GenerationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
