"""
Command-Line Interface

    optneq check  <cfg.json> [--json]
    optneq run    <cfg.json> [--out DIR] [--force] [--workers N]
    optneq oracle <cfg.json> [--out DIR]
    optneq rates  <metrics.csv> --field consensus_x --exponent P --gamma G --window KLO:KHI [--strict]
    optneq preset <name> [--dump] [--out FILE]

Exit codes: 0 ok, 1 validation failure, 2 divergence, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import pandas as pd
from pydantic import ValidationError

from . import __version__
from .config import PRESETS, build_setup, dump_config, load_config, preset
from .errors import EXIT_DIVERGENCE, EXIT_IO, EXIT_OK, EXIT_VALIDATION, OptNeqError
from .metrics import FIELDS, fit_decay, read_metrics_csv
from .runner import compute_oracle, run_experiment, write_oracle
from .settings import settings
from .validation import validate_setup

logger = logging.getLogger(__name__)


def _parse_window(text: str) -> tuple[int, int]:
    try:
        lo, hi = (int(part) for part in text.split(":"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"window must look like KLO:KHI, got {text!r}") from exc
    if lo > hi:
        raise argparse.ArgumentTypeError(f"window start {lo} is after its end {hi}")
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="optneq",
        description="Distributed optimal Nash equilibrium seeking: IR-Push-Pull and IR-DSGT simulator.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help="Root log level (default: OPTNEQ_LOG_LEVEL or INFO).")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="Validate every assumption of an experiment config.")
    p.add_argument("config", type=Path)
    p.add_argument("--json", action="store_true", help="Print the machine-readable report.")

    p = sub.add_parser("run", help="Run an experiment and write CSVs plus a manifest.")
    p.add_argument("config", type=Path)
    p.add_argument("--out", type=Path, default=None, help="Output directory (default: OPTNEQ_OUTPUT_DIR).")
    p.add_argument("--force", action="store_true", help="Run even if validation fails.")
    p.add_argument("--workers", type=int, default=None, help="Worker processes (default: OPTNEQ_WORKERS).")

    p = sub.add_parser("oracle", help="Compute x* by sequential regularization.")
    p.add_argument("config", type=Path)
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("rates", help="Fit the decay of one metric column.")
    p.add_argument("csv", type=Path)
    p.add_argument("--field", default="consensus_x", choices=FIELDS)
    p.add_argument("--exponent", type=float, required=True, help="Target exponent p of the bound.")
    p.add_argument("--gamma", type=float, required=True, help="Shift added to k (use Gamma - 1 for bounds stated in k + Gamma - 1).")
    p.add_argument("--window", type=_parse_window, required=True, help="Inclusive iteration window KLO:KHI.")
    p.add_argument("--tolerance", type=float, default=0.05, help="Allowed growth of the bound constant.")
    p.add_argument("--strict", action="store_true", help="Exit 1 when the bound constant grows.")

    p = sub.add_parser("preset", help="Show or dump one of the reference experiments.")
    p.add_argument("name", choices=list(PRESETS), type=lambda s: next((k for k in PRESETS if k.lower() == s.lower()), s))
    p.add_argument("--dump", action="store_true", help="Print the preset as JSON.")
    p.add_argument("--out", type=Path, default=None, help="Write the JSON to a file instead.")
    return parser


# ============================================================================
# COMMANDS
# ============================================================================
def _cmd_check(args) -> int:
    report = validate_setup(load_config(args.config))
    print(json.dumps(report.to_dict(), indent=2) if args.json else report.render())
    return EXIT_OK if report.passed else EXIT_VALIDATION


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    summary = run_experiment(cfg, args.out, force=args.force, workers=args.workers)
    print("=" * 60)
    print(f"Experiment {cfg.name}: {len(summary.tasks)} task(s) -> {summary.out_dir}")
    print("=" * 60)
    table = pd.DataFrame([asdict(t) for t in summary.tasks]).drop(columns=["error"])
    print(table.to_markdown(index=False))
    for task in summary.tasks:
        if task.status != "ok":
            print(f"❌ {task.csv}: {task.error}")
    for name in summary.means + summary.envelopes:
        print(f"📊 {name}")
    print(f"📄 manifest: {summary.manifest_path}")
    return EXIT_DIVERGENCE if summary.diverged else EXIT_OK


def _cmd_oracle(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out or cfg.output_dir or settings.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    solution = compute_oracle(build_setup(cfg))
    path = write_oracle(solution, out / "oracle.json")
    last = solution.trajectory[-1]
    mark = "✅" if solution.converged else "❌"
    print(f"{mark} x* at lambda={last.lam:.3e}, residual={last.residual:.3e} -> {path}")
    return EXIT_OK if solution.converged else EXIT_VALIDATION


def _cmd_rates(args) -> int:
    fit = fit_decay(read_metrics_csv(args.csv), args.field, args.window, args.exponent, args.gamma)
    ok = fit.non_growing(args.tolerance)
    print("=" * 60)
    print(f"{args.field} on k in [{fit.window[0]}, {fit.window[1]}]")
    print("=" * 60)
    print(f"log-log slope        : {fit.slope:.6f}")
    print(f"bound constant (p={fit.exponent:g}): {fit.bound_const:.6e}")
    print(f"first / second half  : {fit.first_half_const:.6e} / {fit.second_half_const:.6e}")
    print(f"{'✅' if ok else '❌'} growth ratio {fit.bound_growth:.4f} (tolerance {1 + args.tolerance:.2f})")
    return EXIT_VALIDATION if args.strict and not ok else EXIT_OK


def _cmd_preset(args) -> int:
    cfg = preset(args.name)
    if args.out is not None:
        args.out.write_text(dump_config(cfg), encoding="utf-8")
        print(f"✅ wrote {args.name} to {args.out}")
    elif args.dump:
        sys.stdout.write(dump_config(cfg))
    else:
        variants = ", ".join(f"({v.a:g}, {v.b:g})" for v in cfg.schedule.variants)
        print(f"{args.name}: {cfg.algorithm.value} on {cfg.topology.kind.value} (m={cfg.topology.m}), "
              f"{cfg.iterations} iterations, {cfg.paths} path(s), variants {variants}")
    return EXIT_OK


COMMANDS = {
    "check": _cmd_check,
    "run": _cmd_run,
    "oracle": _cmd_oracle,
    "rates": _cmd_rates,
    "preset": _cmd_preset,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=(args.log_level or settings.log_level).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"❌ invalid configuration:\n{exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OptNeqError as exc:
        print(f"❌ {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"❌ I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
