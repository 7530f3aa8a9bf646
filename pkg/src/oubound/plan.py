"""Experiment plans: JSON parsing, validation and execution.

A plan is one JSON object::

    {
      "estimator": "amce",            # amce | amle_hat | amle_bar
      "theta": 1.0,                   # default 1.0
      "grid": [{"n": 500, "delta": 0.05}, ...],
      "grid_rule": {"horizons": [25, 50], "delta": 0.05}
                 | {"horizons": [25, 50], "c": 0.5, "gamma": 0.5},   # delta = c T^-gamma
      "replications": 200000,
      "master_seed": 20240917,
      "outputs": ["ensembles", "reports", "rate_fits"],
      "confidence": 0.95,             # default 0.95
      "exact_cap": 4096,              # optional
      "mc_budget": 0                  # optional, Monte Carlo fallback above the cap
    }

Exactly one of ``grid`` and ``grid_rule`` is required.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .bounds import (
    BASELINE_CURVES,
    THEOREM_CURVE,
    BoundReport,
    bound_report,
    eval_rate,
    fit_loglog_slope,
)
from .errors import PlanError, UndefinedRateError
from .estimators import ESTIMATORS
from .montecarlo import DEFAULT_CHUNK, run_estimator_ensemble
from .process import DEFAULT_EXACT_CAP, OuParams, SamplingGrid

log = logging.getLogger(__name__)

OUTPUT_KINDS = ("ensembles", "reports", "rate_fits")
ENSEMBLE_HEADER = ["replication", "value", "excluded"]
REPORT_HEADER = ["estimator", "theta", "n", "delta", "T", "field", "value", "source", "stderr"]
RATE_FIT_HEADER = ["estimator", "curve", "slope", "intercept", "r_squared", "n_points"]
EMPIRICAL_CURVES = ("ks_D", "mp_bound", "w1", "two_sqrt_w1")
KNOWN_KEYS = {
    "estimator", "theta", "grid", "grid_rule", "replications", "master_seed",
    "outputs", "confidence", "exact_cap", "mc_budget",
}


@dataclass(frozen=True)
class Diagnostic:
    level: str  # "error" | "warning"
    message: str

    def __str__(self) -> str:
        return f"{self.level}: {self.message}"


@dataclass(frozen=True)
class ExperimentPlan:
    estimator: str
    grids: tuple[SamplingGrid, ...]
    replications: int
    master_seed: int
    theta: float = 1.0
    outputs: tuple[str, ...] = OUTPUT_KINDS
    confidence: float = 0.95
    exact_cap: int = DEFAULT_EXACT_CAP
    mc_budget: int = 0
    warnings: tuple[str, ...] = field(default=(), compare=False)

    @property
    def params(self) -> OuParams:
        return OuParams(self.theta)


def fmt(value: Any) -> str:
    """Shortest round-trip text for floats; plain text otherwise."""
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _grids_from(doc: dict, errors: list[str]) -> list[SamplingGrid]:
    grids = []
    if ("grid" in doc) == ("grid_rule" in doc):
        errors.append("exactly one of 'grid' and 'grid_rule' must be given")
        return grids
    if "grid" in doc:
        items = doc["grid"]
        if not isinstance(items, list) or not items:
            errors.append("'grid' must be a nonempty list of {n, delta} objects")
            return grids
        for k, item in enumerate(items):
            try:
                grids.append(SamplingGrid(int(item["n"]), float(item["delta"])))
            except (KeyError, TypeError, ValueError) as exc:
                errors.append(f"grid[{k}]: invalid grid point ({exc})")
        return grids
    rule = doc["grid_rule"]
    horizons = rule.get("horizons") if isinstance(rule, dict) else None
    if not isinstance(horizons, list) or not horizons:
        errors.append("'grid_rule.horizons' must be a nonempty list")
        return grids
    for k, horizon in enumerate(horizons):
        try:
            horizon = float(horizon)
            if "delta" in rule:
                delta = float(rule["delta"])
            elif "c" in rule and "gamma" in rule:
                delta = float(rule["c"]) * horizon ** (-float(rule["gamma"]))
            else:
                errors.append("'grid_rule' needs 'delta' or both 'c' and 'gamma'")
                return grids
            if not (horizon > 0):
                raise ValueError("horizon must be positive")
            grids.append(SamplingGrid.from_horizon(horizon, delta))
        except (TypeError, ValueError) as exc:
            errors.append(f"grid_rule.horizons[{k}]: {exc}")
    return grids


def check_plan(doc: Any) -> tuple[ExperimentPlan | None, list[Diagnostic]]:
    """Validate a decoded plan document; returns the plan (if valid) and diagnostics."""
    errors: list[str] = []
    warnings: list[str] = []
    if not isinstance(doc, dict):
        return None, [Diagnostic("error", "plan must be a JSON object")]
    for key in sorted(set(doc) - KNOWN_KEYS):
        warnings.append(f"unknown field '{key}' ignored")

    estimator = doc.get("estimator")
    if estimator is None:
        errors.append("missing required field 'estimator'")
    elif estimator not in ESTIMATORS:
        errors.append(f"field 'estimator' must be one of {', '.join(ESTIMATORS)}")

    if "theta" not in doc:
        warnings.append("field 'theta' missing; using the default theta = 1.0")
    theta = doc.get("theta", 1.0)
    try:
        theta = float(theta)
        OuParams(theta)
    except (TypeError, ValueError):
        errors.append("field 'theta' must be a positive number")

    replications = doc.get("replications")
    if replications is None:
        errors.append("missing required field 'replications'")
    elif isinstance(replications, bool) or not isinstance(replications, int) or replications < 1:
        errors.append("field 'replications' must be an integer >= 1")

    seed = doc.get("master_seed")
    if seed is None:
        errors.append("missing required field 'master_seed'")
    elif isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        errors.append("field 'master_seed' must be an unsigned 64-bit integer")

    outputs = doc.get("outputs", list(OUTPUT_KINDS))
    if not isinstance(outputs, list) or any(o not in OUTPUT_KINDS for o in outputs):
        errors.append(f"field 'outputs' must be a list drawn from {', '.join(OUTPUT_KINDS)}")

    confidence = doc.get("confidence", 0.95)
    if not isinstance(confidence, (int, float)) or not 0 < confidence < 1:
        errors.append("field 'confidence' must lie in (0, 1)")

    exact_cap = doc.get("exact_cap", DEFAULT_EXACT_CAP)
    mc_budget = doc.get("mc_budget", 0)
    for name, value in (("exact_cap", exact_cap), ("mc_budget", mc_budget)):
        if isinstance(value, bool) or not isinstance(value, int) or value < 0:
            errors.append(f"field '{name}' must be a nonnegative integer")

    grids = _grids_from(doc, errors)

    if estimator == "amle_hat":
        for g in grids:
            ratio = g.horizon**3 / g.n**2
            if ratio > 1:
                warnings.append(
                    f"T^3/n^2 = {ratio:g} > 1 at n={g.n}, delta={g.delta:g}: the increment AMLE rate "
                    "assumes T^3/n^2 -> 0"
                )
    if not errors:
        for g in grids:
            if g.n + 1 > exact_cap:
                warnings.append(
                    f"n={g.n} exceeds the exact cap {exact_cap}: bound components fall back to Monte Carlo"
                )

    diags = [Diagnostic("error", m) for m in errors] + [Diagnostic("warning", m) for m in warnings]
    if errors:
        return None, diags
    plan = ExperimentPlan(
        estimator=estimator,
        grids=tuple(grids),
        replications=replications,
        master_seed=seed,
        theta=theta,
        outputs=tuple(outputs),
        confidence=float(confidence),
        exact_cap=exact_cap,
        mc_budget=mc_budget,
        warnings=tuple(warnings),
    )
    return plan, diags


def load_plan_document(path: str | Path) -> Any:
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise PlanError(f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def validate_plan(path: str | Path) -> list[Diagnostic]:
    try:
        doc = load_plan_document(path)
    except PlanError as exc:
        return [Diagnostic("error", str(exc))]
    return check_plan(doc)[1]


def load_plan(path: str | Path) -> ExperimentPlan:
    plan, diags = check_plan(load_plan_document(path))
    if plan is None:
        raise PlanError("; ".join(d.message for d in diags if d.level == "error"))
    return plan


@dataclass
class PlanResult:
    plan: ExperimentPlan
    reports: list[BoundReport]
    files: list[Path]


def _report_rows(plan: ExperimentPlan, report: BoundReport) -> list[list[str]]:
    g = report.grid
    head = [plan.estimator, fmt(plan.theta), str(g.n), fmt(g.delta), fmt(g.horizon)]
    return [head + [name, fmt(e.value), e.source, fmt(e.stderr)] for name, e in report.entries.items()]


def rate_fits(plan: ExperimentPlan, reports: list[BoundReport]) -> list[list[str]]:
    """Log-log slopes against T of each empirical distance and each constant-free rate curve."""
    rows = []
    horizons = [r.grid.horizon for r in reports]
    if len(set(horizons)) < 2:
        return rows
    series: dict[str, list[float]] = {}
    for name in EMPIRICAL_CURVES:
        series[name] = [r[name] for r in reports]
    for name in (THEOREM_CURVE[plan.estimator],) + BASELINE_CURVES[plan.estimator]:
        try:
            series[name] = [eval_rate(name, r.grid.horizon, r.grid.n) for r in reports]
        except UndefinedRateError:
            continue
    for name, ys in series.items():
        if min(ys) <= 0:
            continue
        fit = fit_loglog_slope(horizons, ys)
        rows.append([plan.estimator, name, fmt(fit.slope), fmt(fit.intercept), fmt(fit.r_squared), str(fit.n_points)])
    return rows


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_json(path: Path, header: list[str], rows) -> None:
    records = [dict(zip(header, row)) for row in rows]
    path.write_text(json.dumps(records, indent=1) + "\n")


def run_plan(
    plan: ExperimentPlan,
    out_dir: str | Path,
    workers: int = 1,
    fmt_kind: str = "csv",
    chunk_size: int = DEFAULT_CHUNK,
) -> PlanResult:
    """Execute a plan and write its requested outputs into ``out_dir``.

    Output bytes depend only on the plan; wall-clock information goes to the
    ``run.log`` sidecar.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    writer = _write_csv if fmt_kind == "csv" else _write_json
    ext = "csv" if fmt_kind == "csv" else "json"
    params = plan.params
    reports: list[BoundReport] = []
    files: list[Path] = []
    sidecar = [f"plan estimator={plan.estimator} points={len(plan.grids)} M={plan.replications} workers={workers}"]

    for k, grid in enumerate(plan.grids):
        started = time.time()
        ensemble = run_estimator_ensemble(
            plan.estimator, params, grid, plan.replications, plan.master_seed, workers, chunk_size
        )
        # above the exact cap the covariance-based fields become Monte Carlo fields
        budget = plan.mc_budget or plan.replications
        report = bound_report(
            plan.estimator, params, grid, budget, plan.master_seed,
            plan.confidence, plan.exact_cap, workers, ensemble=ensemble,
        )
        if grid.n + 1 > plan.exact_cap:
            sidecar.append(f"point {k}: n={grid.n} above exact cap {plan.exact_cap}, components by Monte Carlo ({budget})")
        reports.append(report)
        if "ensembles" in plan.outputs:
            path = out / f"ensemble_{k:03d}.{ext}"
            rows = (
                [str(i), fmt(v) if np.isfinite(v) else "", "1" if not np.isfinite(v) else "0"]
                for i, v in enumerate(ensemble.values)
            )
            writer(path, ENSEMBLE_HEADER, rows)
            files.append(path)
        elapsed = time.time() - started
        sidecar.append(f"point {k} n={grid.n} delta={grid.delta!r} T={grid.horizon!r} seconds={elapsed:.2f}")
        log.info("grid point %d/%d done (n=%d, %.1fs)", k + 1, len(plan.grids), grid.n, elapsed)

    if "reports" in plan.outputs:
        path = out / f"reports.{ext}"
        writer(path, REPORT_HEADER, [row for r in reports for row in _report_rows(plan, r)])
        files.append(path)
    if "rate_fits" in plan.outputs:
        path = out / f"rate_fits.{ext}"
        writer(path, RATE_FIT_HEADER, rate_fits(plan, reports))
        files.append(path)
    stamp = time.strftime("%Y-%m-%dT%H:%M:%S")
    (out / "run.log").write_text("\n".join(f"{stamp} {line}" for line in sidecar) + "\n")
    return PlanResult(plan, reports, files)
