"""``bdris-lab`` command line: run experiments, validate invariants, print crossover counts."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..siso import PowerBudget, crossover_elements
from ..units import db_to_linear, dbm_to_watts
from .config import ConfigError, load_config
from .csvio import emit_csv, emit_summary, format_summary

EXIT_OK, EXIT_RUN_FAILED, EXIT_CONFIG = 0, 1, 2


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_overrides(master_seed=args.seed)
        from .experiments import resolve_workers, run_experiment
        workers = resolve_workers(args.threads)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    result = run_experiment(cfg, workers, timing=args.timing)
    out = Path(args.out or cfg.output)
    stem = cfg.experiment
    rows_path = emit_csv(result.rows, out / f"{stem}.csv")
    summary_path = emit_summary(result.summary, out / f"{stem}-summary.csv")
    print(format_summary(result.summary))
    print(f"\nrows: {rows_path}\nsummary: {summary_path}")
    if result.failed:
        print(f"run failed: {result.failed_units}/{result.units} cases errored", file=sys.stderr)
        return EXIT_RUN_FAILED
    return EXIT_OK


def _cmd_validate(args) -> int:
    from .validate import format_report, validate_suite
    results = validate_suite(seed=args.seed)
    print(format_report(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_RUN_FAILED


def _cmd_crossover(args) -> int:
    noise = float(dbm_to_watts(args.noise_dbm))
    zeta = float(db_to_linear(args.pathloss_db))
    try:
        pb = PowerBudget(args.pt, args.pa, args.pt_passive, noise, noise)
        n_bar, n_tilde = crossover_elements(pb, zeta, zeta)
    except (ValueError, ZeroDivisionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"N_bar   = {n_bar:.4e}")
    print(f"N_tilde = {n_tilde:.4e}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bdris-lab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config")
    run.add_argument("--seed", type=int, help="override master_seed")
    run.add_argument("--threads", type=int, help="worker processes (default: $BDRIS_THREADS or 1)")
    run.add_argument("--out", help="output directory (default: config 'output')")
    run.add_argument("--timing", action="store_true", help="record wall time in the ms column")
    run.set_defaults(func=_cmd_run)

    val = sub.add_parser("validate", help="run the invariant suite")
    val.add_argument("--seed", type=int, default=0)
    val.set_defaults(func=_cmd_validate)

    cx = sub.add_parser("crossover", help="element counts where active stops beating passive")
    cx.add_argument("--pt", type=float, required=True, help="active transmit power, W")
    cx.add_argument("--pa", type=float, required=True, help="RIS amplification power, W")
    cx.add_argument("--pt-passive", type=float, required=True, help="passive transmit power, W")
    cx.add_argument("--noise-dbm", type=float, default=-90.0)
    cx.add_argument("--pathloss-db", type=float, default=-70.0, help="per-hop mean gain, dB (negative)")
    cx.set_defaults(func=_cmd_crossover)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
