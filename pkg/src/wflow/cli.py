"""Command-line interface.

Exit codes: 0 success, 2 validation failure, 3 certification failure.
The environment variable WFLOW_SEED overrides the config seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .certificates import certify
from .errors import ConfigError, WflowError
from .harness import (
    load_config_file,
    parse_config,
    run,
    sweep,
    sweep_summary_rows,
    write_plot_csv,
)
from .measures import measure_from_json
from .schedules import check_conditions
from .trace import Trace
from .transport import wp_distance

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CERTIFICATION = 3


def _apply_seed_override(cfg: dict) -> dict:
    env = os.environ.get("WFLOW_SEED")
    if env is not None:
        cfg = dict(cfg)
        cfg["seed"] = int(env)
    return cfg


def _load_measure(path: str):
    try:
        return measure_from_json(json.loads(Path(path).read_text()))
    except FileNotFoundError as exc:
        raise ConfigError(f"measure file not found: {path}") from exc
    except (json.JSONDecodeError, ValueError, KeyError) as exc:
        raise ConfigError(f"bad measure file {path}: {exc}") from exc


def cmd_run(args) -> int:
    cfg = _apply_seed_override(load_config_file(args.config))
    out = Path(args.trace)
    try:
        trace = run(parse_config(cfg))
    except WflowError as exc:
        partial = getattr(exc, "partial_trace", None)
        if partial is not None:
            partial.save(out)
            print(
                f"aborted at iteration {exc.iteration}; partial trace flushed to {out}",
                file=sys.stderr,
            )
        raise
    trace.save(out)
    print(f"wrote trace with {len(trace)} iterations to {out}")
    return EXIT_OK


def cmd_certify(args) -> int:
    trace = Trace.load(args.trace)
    report = certify(trace)
    print(report.table())
    if args.json:
        Path(args.json).write_text(json.dumps(report.to_json(), indent=1))
        print(f"wrote machine report to {args.json}")
    return EXIT_OK if report.passed() else EXIT_CERTIFICATION


def cmd_check_conditions(args) -> int:
    cfg = load_config_file(args.config)
    parsed = parse_config(_apply_seed_override(cfg))
    algorithm = {
        "jko": "jko_variational" if parsed.mode == "variational" else "jko_distance",
        "proxgrad": "pg_variational" if parsed.mode == "variational" else "pg_distance",
        "ula": "pg_distance",
    }[parsed.algorithm]
    lips = None
    if parsed.problem is not None:
        lips = parsed.problem.lips
    elif parsed.forward is not None:
        lips = parsed.forward.grad_lipschitz
    report = check_conditions(parsed.steps, parsed.errors, algorithm, L=lips)
    print(f"{'condition':38s} {'verdict':9s} {'partial sum':>14s}  detail")
    for name, verdict in report.conditions.items():
        star = "*" if name in report.required else " "
        print(
            f"{name + star:38s} {verdict.status:9s} {verdict.partial_sum:14.6g}  {verdict.detail}"
        )
    print("(*) required for this algorithm/mode")
    return EXIT_OK if not report.any_required_fails() else EXIT_CERTIFICATION


def cmd_sweep(args) -> int:
    base = _apply_seed_override(load_config_file(args.config))
    grid = load_config_file(args.grid)
    points = sweep(base, grid)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for i, point in enumerate(points):
        if point.trace is not None:
            point.trace.save(outdir / f"point_{i:03d}.json")
    header, rows = sweep_summary_rows(points)
    summary = outdir / "summary.csv"
    with summary.open("w", newline="") as fh:
        import csv

        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    failures = sum(1 for p in points if p.error is not None)
    print(f"swept {len(points)} points ({failures} failed); summary at {summary}")
    return EXIT_OK


def cmd_dist(args) -> int:
    a = _load_measure(args.a)
    b = _load_measure(args.b)
    value = wp_distance(a, b, float(args.p))
    print(f"{value:.12g}")
    return EXIT_OK


def cmd_plot_data(args) -> int:
    trace = Trace.load(args.trace)
    out = write_plot_csv(trace, args.output)
    print(f"wrote plot data to {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    from .report import render_report

    trace = Trace.load(args.trace)
    stem = args.stem or Path(args.trace).stem
    written = render_report(trace, args.outdir, stem=stem)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wflow",
        description="Exact and inexact proximal flows on the Wasserstein space "
        "with certified convergence checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment config and persist its trace")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("--trace", default="trace.json", help="output trace path")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("certify", help="check every inequality recorded in a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--json", help="also write the machine-readable report here")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("check-conditions", help="classify schedule hypotheses")
    p.add_argument("-c", "--config", required=True)
    p.set_defaults(func=cmd_check_conditions)

    p = sub.add_parser("sweep", help="run a config over a parameter grid")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("--grid", required=True)
    p.add_argument("--outdir", default="sweep_out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("dist", help="W_p distance between two measure files")
    p.add_argument("--p", default="2")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.set_defaults(func=cmd_dist)

    p = sub.add_parser("plot-data", help="emit the plot CSV for a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("-o", "--output", default="plot_data.csv")
    p.set_defaults(func=cmd_plot_data)

    p = sub.add_parser("report", help="render plot CSV and figures for a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--outdir", default="report_out")
    p.add_argument("--stem", default=None)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"not found: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except WflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
