"""Statistics and drift estimators computed from one discretely observed path.

Conventions (``x`` holds ``X_{t_0..t_n}``):

* ``f_n`` averages ``X^2`` over ``t_0..t_{n-1}`` (``from_zero``) or ``t_1..t_n`` (``from_one``);
* ``S_n = delta * sum_{i=1}^n X_{t_{i-1}}^2`` always uses left end points;
* ``Lambda_n = sum_i X_{t_{i-1}} (X_{t_i} - exp(-theta delta) X_{t_{i-1}})``.

The last form is what ``sum_i exp(-theta t_i) X_{t_{i-1}} (zeta_{t_i} - zeta_{t_{i-1}})`` with
``zeta_t = exp(theta t) X_t`` reduces to; it never forms ``exp(theta t)`` and so does not
overflow for long horizons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from .errors import DegenerateDenominatorError
from .process import OuParams, SamplingGrid, stationary_variance
from .sampler import PathSample

Indexing = Literal["from_zero", "from_one"]
ESTIMATORS = ("amce", "amle_hat", "amle_bar")

# each estimator's own summation convention for f_n
ESTIMATOR_INDEXING: dict[str, Indexing] = {
    "amce": "from_one",
    "amle_hat": "from_zero",
    "amle_bar": "from_zero",
}


@dataclass(frozen=True)
class StatisticSet:
    fn_x: float
    Fn_x: float
    s_n: float
    lambda_n: float
    quad_increment: float
    fn_z: Optional[float] = None
    Fn_z: Optional[float] = None


@dataclass(frozen=True)
class EstimateTriple:
    amce: Optional[float]
    amle_hat: Optional[float]
    amle_bar: Optional[float]


def _window(values: np.ndarray, indexing: Indexing) -> np.ndarray:
    if indexing == "from_zero":
        return values[..., :-1]
    if indexing == "from_one":
        return values[..., 1:]
    raise ValueError(f"unknown indexing {indexing!r}")


def empirical_second_moment(values: np.ndarray, indexing: Indexing = "from_zero") -> float:
    w = _window(np.asarray(values, dtype=float), indexing)
    return math.fsum(w * w) / w.size


def lambda_statistic(x: np.ndarray, params: OuParams, grid: SamplingGrid) -> float:
    decay = math.exp(-params.theta * grid.delta)
    prev, cur = x[:-1], x[1:]
    return math.fsum(prev * (cur - decay * prev))


def lambda_statistic_literal(x: np.ndarray, params: OuParams, grid: SamplingGrid) -> float:
    """``Lambda_n`` through ``zeta_t = exp(theta t) X_t``; overflows once ``theta T`` nears 700."""
    t = grid.times
    zeta = np.exp(params.theta * t) * x
    weights = np.exp(-params.theta * (t[1:] + t[:-1]))
    return math.fsum(weights * zeta[:-1] * (zeta[1:] - zeta[:-1]))


def compute_statistics(path: PathSample, params: OuParams, indexing: Indexing = "from_zero") -> StatisticSet:
    grid = path.grid
    x = np.asarray(path.x, dtype=float)
    if x.shape != (grid.n + 1,):
        raise ValueError(f"path must have n+1={grid.n + 1} points, got {x.shape}")
    root_t = math.sqrt(grid.horizon)
    centre = stationary_variance(params)
    fn_x = empirical_second_moment(x, indexing)
    s_n = grid.delta * math.fsum(x[:-1] * x[:-1])
    quad = math.fsum(x[:-1] * (x[1:] - x[:-1]))
    fn_z = Fn_z = None
    if path.z is not None:
        fn_z = empirical_second_moment(path.z, indexing)
        Fn_z = root_t * (fn_z - centre)
    return StatisticSet(
        fn_x=fn_x,
        Fn_x=root_t * (fn_x - centre),
        s_n=s_n,
        lambda_n=lambda_statistic(x, params, grid),
        quad_increment=quad,
        fn_z=fn_z,
        Fn_z=Fn_z,
    )


def decomposition_residual(stats: StatisticSet, params: OuParams, grid: SamplingGrid) -> float:
    """Relative gap in ``sum X dX = ((exp(-theta delta) - 1)/delta) S_n + Lambda_n``."""
    coef = math.expm1(-params.theta * grid.delta) / grid.delta
    lhs = stats.quad_increment
    drift = coef * stats.s_n
    scale = max(abs(lhs), abs(drift), abs(stats.lambda_n), np.finfo(float).tiny)
    return abs(lhs - (drift + stats.lambda_n)) / scale


def amce(path: PathSample) -> float:
    """Approximate minimum contrast estimator ``1 / ((2/n) sum_{i=1}^n X_{t_i}^2)``."""
    x = np.asarray(path.x, dtype=float)[1:]
    denom = 2.0 * math.fsum(x * x) / path.grid.n
    if denom <= 0:
        raise DegenerateDenominatorError("degenerate denominator: sum of X_{t_i}^2 is zero")
    return 1.0 / denom


def amle_hat(path: PathSample) -> float:
    x = np.asarray(path.x, dtype=float)
    s_n = path.grid.delta * math.fsum(x[:-1] * x[:-1])
    if s_n <= 0:
        raise DegenerateDenominatorError("degenerate denominator: S_n is zero")
    return -math.fsum(x[:-1] * (x[1:] - x[:-1])) / s_n


def amle_bar(path: PathSample) -> float:
    """Ito-form AMLE ``(T - X_T^2) / (2 S_n)``.

    Sign chosen so the estimate is consistent for theta, i.e. the discretisation of
    ``-int X dX / int X^2 ds`` with ``int X dX = (X_T^2 - T)/2``.
    """
    grid = path.grid
    x = np.asarray(path.x, dtype=float)
    s_n = grid.delta * math.fsum(x[:-1] * x[:-1])
    if s_n <= 0:
        raise DegenerateDenominatorError("degenerate denominator: S_n is zero")
    return 0.5 * (grid.horizon - x[-1] ** 2) / s_n


def estimate_all(path: PathSample) -> EstimateTriple:
    out = {}
    for name, fn in (("amce", amce), ("amle_hat", amle_hat), ("amle_bar", amle_bar)):
        try:
            out[name] = fn(path)
        except DegenerateDenominatorError:
            out[name] = None
    return EstimateTriple(**out)


def normalized_error(estimate: float, params: OuParams, grid: SamplingGrid) -> float:
    return math.sqrt(grid.horizon / (2.0 * params.theta)) * (params.theta - estimate)


def batch_ratio_parts(
    x: np.ndarray, params: OuParams, grid: SamplingGrid, estimator: str
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row-wise normalized errors and their ratio representation.

    Returns ``(values, numerator, denominator)`` where ``values = numerator / denominator``
    is ``sqrt(T/(2 theta)) (theta - estimate)`` and ``denominator = 2 theta f_n(X)``
    (with the estimator's own index convention).  Rows with a non-positive
    denominator get ``nan`` values; callers exclude them.
    """
    theta, n = params.theta, grid.n
    horizon = grid.horizon
    x = np.atleast_2d(x)
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}")
    fn = np.sum(_window(x, ESTIMATOR_INDEXING[estimator]) ** 2, axis=1) / n
    denominator = 2.0 * theta * fn
    if estimator == "amce":
        sigma = math.sqrt(1.0 / (2.0 * theta**3))
        numerator = math.sqrt(horizon) / sigma * (fn - 1.0 / (2.0 * theta))
        with np.errstate(divide="ignore", invalid="ignore"):
            estimate = 1.0 / (2.0 * fn)
    else:
        s_n = horizon * fn
        if estimator == "amle_hat":
            top = -np.sum(x[:, :-1] * np.diff(x, axis=1), axis=1)
        else:
            top = 0.5 * (horizon - x[:, -1] ** 2)
        numerator = math.sqrt(2.0 * theta / horizon) * (theta * s_n - top)
        with np.errstate(divide="ignore", invalid="ignore"):
            estimate = top / s_n
    values = math.sqrt(horizon / (2.0 * theta)) * (theta - estimate)
    values = np.where(denominator > 0, values, np.nan)
    return values, numerator, denominator
