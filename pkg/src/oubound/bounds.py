"""Rate curves, log-log slope fits and per-grid-point bound reports."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import linregress

from .distances import (
    DEFAULT_EPS_GRID,
    ks_statistic_vs_normal,
    michel_pfanzagl_bound,
    wasserstein_empirical_vs_normal,
)
from .errors import DegenerateDesignError, UndefinedRateError
from .moments import BoundComponents, bound_components_for
from .montecarlo import EstimatorEnsemble, run_estimator_ensemble
from .process import DEFAULT_EXACT_CAP, OuParams, SamplingGrid


def _terms_thm41(T, n):
    return {"inv_sqrt_T": T**-0.5, "T2_over_n2": T**2 / n**2}


def _terms_thm42(T, n):
    return {"inv_sqrt_T": T**-0.5, "sqrt_T_over_n": math.sqrt(T / n), "sqrt_T3_over_n2": math.sqrt(T**3 / n**2)}


def _log_terms(power_T: float, power_n: float):
    def terms(T, n):
        if T <= 1:
            raise UndefinedRateError(f"rate undefined at T <= 1 (got T={T})")
        lg = math.log(T)
        return {"sqrt_logT_over_T": math.sqrt(lg / T), "discretization": T**power_T / (n**power_n * lg)}

    return terms


def _terms_wasserstein_hat(T, n):
    return {"inv_sqrt_T": T**-0.5, "sqrt_T3_over_n2": math.sqrt(T**3 / n**2)}


@dataclass(frozen=True)
class RateCurve:
    name: str
    terms: Callable[[float, float], dict[str, float]]
    description: str = ""

    def __call__(self, T: float, n: float) -> float:
        return eval_rate(self, T, n)


RATE_CURVES: dict[str, RateCurve] = {
    c.name: c
    for c in (
        RateCurve("thm41", _terms_thm41, "max(1/sqrt(T), T^2/n^2), AMCE Kolmogorov"),
        RateCurve("thm42", _terms_thm42, "max(1/sqrt(T), sqrt(T/n), sqrt(T^3/n^2)), increment AMLE"),
        RateCurve("thm43", _terms_thm41, "max(1/sqrt(T), T^2/n^2), Ito-form AMLE"),
        RateCurve("bishwal_amce", _log_terms(4, 2), "max(sqrt(log T/T), T^4/(n^2 log T))"),
        RateCurve("bb_amle_hat", _log_terms(2, 1), "max(sqrt(log T/T), T^2/(n log T))"),
        RateCurve("bb_amle_bar", _log_terms(4, 2), "max(sqrt(log T/T), T^4/(n^2 log T))"),
        RateCurve("wasserstein_amce", _terms_thm41, "max(1/sqrt(T), T^2/n^2), Wasserstein"),
        RateCurve("wasserstein_amle_hat", _terms_wasserstein_hat, "max(1/sqrt(T), sqrt(T^3/n^2)), Wasserstein"),
    )
}

THEOREM_CURVE = {"amce": "thm41", "amle_hat": "thm42", "amle_bar": "thm43"}
BASELINE_CURVES = {
    "amce": ("bishwal_amce", "wasserstein_amce"),
    "amle_hat": ("bb_amle_hat", "wasserstein_amle_hat"),
    "amle_bar": ("bb_amle_bar",),
}


def _curve(curve: RateCurve | str) -> RateCurve:
    return RATE_CURVES[curve] if isinstance(curve, str) else curve


def eval_rate(curve: RateCurve | str, T: float, n: float) -> float:
    """Constant-free value of a rate curve: the max of its terms."""
    return max(_curve(curve).terms(T, n).values())


def dominant_term(curve: RateCurve | str, T: float, n: float) -> str:
    terms = _curve(curve).terms(T, n)
    return max(terms, key=terms.get)


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r_squared: float
    points: tuple[tuple[float, float], ...]

    @property
    def n_points(self) -> int:
        return len(self.points)


def fit_loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> SlopeFit:
    """Ordinary least squares of ``log y`` on ``log x``."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise DegenerateDesignError("need at least two (x, y) pairs")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive data")
    lx, ly = np.log(x), np.log(y)
    if np.all(lx == lx[0]):
        raise DegenerateDesignError("degenerate design: all x values are equal")
    points = tuple(zip(lx.tolist(), ly.tolist()))
    if np.ptp(ly) <= 1e-12 * max(1.0, float(np.max(np.abs(ly)))):
        # flat data: rounding noise would otherwise give a spurious r^2 near 0
        return SlopeFit(0.0, float(np.mean(ly)), 1.0, points)
    res = linregress(lx, ly)
    return SlopeFit(float(res.slope), float(res.intercept), float(res.rvalue**2), points)


@dataclass(frozen=True)
class ReportEntry:
    value: float
    source: str
    stderr: Optional[float] = None


@dataclass(frozen=True)
class BoundReport:
    estimator: str
    params: OuParams
    grid: SamplingGrid
    entries: dict[str, ReportEntry] = field(default_factory=dict)

    def __getitem__(self, key: str) -> float:
        return self.entries[key].value


def empirical_entries(ensemble: EstimatorEnsemble, confidence: float = 0.95, eps_grid=DEFAULT_EPS_GRID) -> dict[str, ReportEntry]:
    """Distances of one ensemble to N(0, 1): KS with DKW radius, W1, 2 sqrt(W1) and the MP bound."""
    ok = ~ensemble.excluded
    values = ensemble.values[ok]
    ks = ks_statistic_vs_normal(values, confidence)
    w1 = wasserstein_empirical_vs_normal(values)
    num_ks = ks_statistic_vs_normal(ensemble.numerator[ok], confidence)
    mp = michel_pfanzagl_bound(num_ks.statistic, ensemble.denominator[ok], eps_grid, num_ks.stderr)
    two_sqrt = 2.0 * math.sqrt(w1.distance)
    return {
        "replications": ReportEntry(float(ensemble.values.size), "exact"),
        "excluded": ReportEntry(float(ensemble.excluded_count), "exact"),
        "ks_D": ReportEntry(ks.statistic, "monte_carlo", ks.stderr),
        "dkw_radius": ReportEntry(ks.dkw_radius, "closed_form"),
        "w1": ReportEntry(w1.distance, "monte_carlo", w1.stderr),
        "two_sqrt_w1": ReportEntry(two_sqrt, "monte_carlo", w1.stderr / math.sqrt(w1.distance) if w1.distance > 0 else 0.0),
        "numerator_ks_D": ReportEntry(num_ks.statistic, "monte_carlo", num_ks.stderr),
        "mp_bound": ReportEntry(mp.bound, "monte_carlo", mp.stderr),
        "mp_eps": ReportEntry(mp.eps, "closed_form"),
    }


_TERM_INPUTS = {
    "term_cumulant": ("kappa3_v", "kappa4_v"),
    "term_mean": ("mean_ratio_gap",),
    "term_variance": ("variance_gap",),
    "term_remainder": ("r_norm", "a_norm", "a_scalar"),
}


def component_entries(components: BoundComponents, horizon: float) -> dict[str, ReportEntry]:
    out = {}
    for name in ("rho", "sigma", "kappa3_v", "kappa4_v", "mean_ratio_gap", "variance_gap", "r_norm", "a_norm", "a_scalar"):
        src = components.sources.get(name, "exact")
        out[name] = ReportEntry(float(getattr(components, name)), src, components.stderr.get(name))
    for name, value in components.theorem_terms(horizon).items():
        inputs = _TERM_INPUTS[name]
        srcs = {components.sources.get(k, "exact") for k in inputs}
        if "monte_carlo" in srcs:
            # crude propagation: the inputs enter additively or through a max
            se = math.sqrt(sum(components.stderr.get(k, 0.0) ** 2 for k in inputs))
            if name == "term_remainder":
                se /= math.sqrt(horizon)
            out[name] = ReportEntry(value, "monte_carlo", se)
        else:
            out[name] = ReportEntry(value, "exact" if "exact" in srcs else "closed_form")
    return out


def rate_entries(estimator: str, grid: SamplingGrid) -> dict[str, ReportEntry]:
    T, n = grid.horizon, grid.n
    out = {}
    for name in (THEOREM_CURVE[estimator],) + BASELINE_CURVES[estimator]:
        try:
            out[f"rate_{name}"] = ReportEntry(eval_rate(name, T, n), "closed_form")
        except UndefinedRateError:
            continue
    return out


def bound_report(
    application: str,
    params: OuParams,
    grid: SamplingGrid,
    mc_budget: int,
    master_seed: int = 0,
    confidence: float = 0.95,
    max_size: int = DEFAULT_EXACT_CAP,
    workers: int = 1,
    ensemble: Optional[EstimatorEnsemble] = None,
) -> BoundReport:
    """Components of the four-term bound, the constant-free theorem rate, and the
    empirical distances of ``mc_budget`` replications, in one record."""
    components = bound_components_for(application, params, grid, mc_budget, master_seed, max_size, workers)
    if ensemble is None:
        ensemble = run_estimator_ensemble(application, params, grid, mc_budget, master_seed, workers)
    entries = component_entries(components, grid.horizon)
    entries.update(rate_entries(application, grid))
    entries.update(empirical_entries(ensemble, confidence))
    return BoundReport(application, params, grid, entries)
