"""Command line front end: ``oubound <subcommand> ...``.

Exit codes: 0 success, 1 validation failure, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .bounds import bound_report
from .distances import ks_statistic_vs_normal, michel_pfanzagl_bound, wasserstein_empirical_vs_normal
from .errors import OuboundError, PlanError
from .estimators import ESTIMATORS, compute_statistics, estimate_all, normalized_error
from .moments import fn_z_cumulants
from .montecarlo import run_estimator_ensemble
from .plan import REPORT_HEADER, check_plan, fmt, load_plan, load_plan_document, run_plan
from .process import DEFAULT_EXACT_CAP, OuParams, SamplingGrid
from .sampler import RngStreamSpec, read_path_csv, sample_coupled_paths, write_path_csv

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage problems count as validation failures
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _emit(header: list[str], rows: list[list[str]], args, name: str) -> None:
    if args.format == "json":
        text = json.dumps([dict(zip(header, r)) for r in rows], indent=1) + "\n"
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        text = buf.getvalue()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{name}.{args.format}").write_text(text)
    else:
        sys.stdout.write(text)


def _grid_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--n", type=int, required=True, help="number of sampling intervals")
    p.add_argument("--delta", type=float, required=True, help="sampling step")


def _params_grid(args) -> tuple[OuParams, SamplingGrid]:
    return OuParams(args.theta), SamplingGrid(args.n, args.delta)


def cmd_simulate(args) -> int:
    params, grid = _params_grid(args)
    out = Path(args.out) if args.out else None
    if out is None and args.paths != 1:
        raise PlanError("--out is required when simulating more than one path")
    for k in range(args.paths):
        path = sample_coupled_paths(params, grid, RngStreamSpec(args.seed, k))
        if out is None:
            buf = io.StringIO()
            write_path_csv(path, buf)
            sys.stdout.write(buf.getvalue())
        else:
            out.mkdir(parents=True, exist_ok=True)
            write_path_csv(path, out / f"path_{k:06d}.csv")
    return EXIT_OK


def cmd_estimate(args) -> int:
    params = OuParams(args.theta)
    path = read_path_csv(args.path)
    est = estimate_all(path)
    stats = compute_statistics(path, params)
    rows = []
    for name in ESTIMATORS:
        value = getattr(est, name)
        err = normalized_error(value, params, path.grid) if value is not None else None
        rows.append([name, fmt(value), fmt(err)])
    for name in ("fn_x", "s_n", "lambda_n", "quad_increment"):
        rows.append([name, fmt(getattr(stats, name)), ""])
    _emit(["quantity", "value", "normalized_error"], rows, args, "estimates")
    return EXIT_OK


def cmd_cumulants(args) -> int:
    params, grid = _params_grid(args)
    centred, scaled = fn_z_cumulants(params, grid, args.exact_cap)
    rows = []
    for label, cs in (("Fn_z", centred), ("Fn_z_over_sigma", scaled)):
        for k in ("mean", "kappa2", "kappa3", "kappa4"):
            rows.append([label, k, fmt(getattr(cs, k)), "exact"])
    _emit(["quantity", "cumulant", "value", "source"], rows, args, "cumulants")
    return EXIT_OK


def _distance_rows(values: np.ndarray, confidence: float, numerator=None, denominator=None) -> list[list[str]]:
    ks = ks_statistic_vs_normal(values, confidence)
    w1 = wasserstein_empirical_vs_normal(values)
    rows = [
        ["replications", fmt(float(values.size)), "exact", ""],
        ["ks_D", fmt(ks.statistic), "monte_carlo", fmt(ks.stderr)],
        ["dkw_radius", fmt(ks.dkw_radius), "closed_form", ""],
        ["w1", fmt(w1.distance), "monte_carlo", fmt(w1.stderr)],
    ]
    if numerator is not None:
        num = ks_statistic_vs_normal(numerator, confidence)
        mp = michel_pfanzagl_bound(num.statistic, denominator, numerator_stderr=num.stderr)
        rows.append(["numerator_ks_D", fmt(num.statistic), "monte_carlo", fmt(num.stderr)])
        rows.append(["mp_bound", fmt(mp.bound), "monte_carlo", fmt(mp.stderr)])
        rows.append(["mp_eps", fmt(mp.eps), "closed_form", ""])
    return rows


def _read_ensemble(source: str) -> np.ndarray:
    values = []
    with open(source, newline="") as fh:
        for row in csv.DictReader(fh):
            if row.get("excluded", "0") == "1" or row["value"] == "":
                continue
            values.append(float(row["value"]))
    if not values:
        raise PlanError(f"{source}: no usable values")
    return np.asarray(values)


def cmd_distance(args) -> int:
    if args.input:
        rows = _distance_rows(_read_ensemble(args.input), args.confidence)
    else:
        if args.n is None or args.delta is None:
            raise PlanError("give --input, or --n and --delta to simulate an ensemble")
        params, grid = _params_grid(args)
        ens = run_estimator_ensemble(args.estimator, params, grid, args.replications, args.seed, args.workers)
        ok = ~ens.excluded
        rows = _distance_rows(ens.values[ok], args.confidence, ens.numerator[ok], ens.denominator[ok])
    _emit(["field", "value", "source", "stderr"], rows, args, "distance")
    return EXIT_OK


def cmd_report(args) -> int:
    params, grid = _params_grid(args)
    report = bound_report(
        args.estimator, params, grid, args.replications, args.seed,
        args.confidence, args.exact_cap, args.workers,
    )
    head = [args.estimator, fmt(params.theta), str(grid.n), fmt(grid.delta), fmt(grid.horizon)]
    rows = [head + [k, fmt(e.value), e.source, fmt(e.stderr)] for k, e in report.entries.items()]
    _emit(REPORT_HEADER, rows, args, "report")
    return EXIT_OK


def cmd_run(args) -> int:
    plan = load_plan(args.config)
    if args.seed is not None:
        plan = replace(plan, master_seed=args.seed)
    for w in plan.warnings:
        print(f"warning: {w}", file=sys.stderr)
    result = run_plan(plan, args.out or ".", args.workers, args.format)
    for f in result.files:
        print(f)
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        doc = load_plan_document(args.config)
    except PlanError as exc:
        print(f"error: {exc}")
        return EXIT_INVALID
    _, diags = check_plan(doc)
    for d in diags:
        print(d)
    return EXIT_INVALID if any(d.level == "error" for d in diags) else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON plan file")
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--out", help="output directory (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="oubound", description="Berry-Esseen experiments for Ornstein-Uhlenbeck drift estimators.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="emit coupled (X, Z) paths")
    _grid_args(p)
    p.add_argument("--paths", type=int, default=1)
    p.set_defaults(func=cmd_simulate, seed_default=0)

    p = sub.add_parser("estimate", parents=[common], help="estimates from one path CSV")
    p.add_argument("path")
    p.add_argument("--theta", type=float, default=1.0)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("cumulants", parents=[common], help="exact cumulants of F_n(Z)")
    _grid_args(p)
    p.add_argument("--exact-cap", type=int, default=DEFAULT_EXACT_CAP)
    p.set_defaults(func=cmd_cumulants)

    p = sub.add_parser("distance", parents=[common], help="KS, W1 and MP distances of an ensemble")
    p.add_argument("--input", help="ensemble CSV (replication,value,excluded)")
    p.add_argument("--estimator", choices=ESTIMATORS, default="amce")
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--n", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--replications", type=int, default=10000)
    p.add_argument("--confidence", type=float, default=0.95)
    p.set_defaults(func=cmd_distance, seed_default=0)

    p = sub.add_parser("report", parents=[common], help="bound components and distances at one grid point")
    _grid_args(p)
    p.add_argument("--estimator", choices=ESTIMATORS, default="amce")
    p.add_argument("--replications", type=int, default=10000)
    p.add_argument("--confidence", type=float, default=0.95)
    p.add_argument("--exact-cap", type=int, default=DEFAULT_EXACT_CAP)
    p.set_defaults(func=cmd_report, seed_default=0)

    p = sub.add_parser("run", parents=[common], help="execute a full plan")
    p.set_defaults(func=cmd_run, needs_config=True)

    p = sub.add_parser("validate", parents=[common], help="check a plan file")
    p.set_defaults(func=cmd_validate, needs_config=True)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if getattr(args, "needs_config", False) and not args.config:
        parser.error(f"{args.command} requires --config")
    if args.seed is None and hasattr(args, "seed_default"):
        args.seed = args.seed_default
    try:
        return args.func(args)
    except PlanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OuboundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
