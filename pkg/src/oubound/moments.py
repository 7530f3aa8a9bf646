"""Exact moments of Gaussian quadratic statistics and the bound components built on them.

For a centered Gaussian vector ``x`` with covariance ``S`` and a symmetric matrix ``A``,
the quadratic form ``x'Ax`` has mean ``tr(AS)`` and cumulants
``kappa_r = 2^(r-1) (r-1)! tr((AS)^r)``.  Everything deterministic in the bounds
(cumulants of ``F_n(Z)``, variance and mean gaps, L2 norms of the remainder terms)
reduces to such traces over the exact covariances of :mod:`oubound.process`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Literal, Optional

import numpy as np
import scipy.sparse as sp
from scipy.stats import kstat

from .errors import ExactEngineSizeError, OracleSizeError
from .estimators import ESTIMATOR_INDEXING, ESTIMATORS, Indexing
from .process import (
    DEFAULT_EXACT_CAP,
    CovarianceMatrix,
    OuParams,
    SamplingGrid,
    build_stationary_covariance,
    build_x_covariance,
)

ORACLE_MAX_DIM = 6
Source = Literal["exact", "closed_form", "monte_carlo"]


@dataclass(frozen=True)
class CumulantSet:
    mean: float
    kappa2: float
    kappa3: Optional[float] = None
    kappa4: Optional[float] = None
    source: Source = "exact"
    stderr: Optional[dict[str, float]] = None

    def scaled(self, factor: float) -> "CumulantSet":
        """Cumulants of ``factor * Y`` given those of ``Y``."""
        err = None
        if self.stderr is not None:
            powers = {"mean": 1, "kappa2": 2, "kappa3": 3, "kappa4": 4}
            err = {k: v * abs(factor) ** powers[k] for k, v in self.stderr.items()}
        return CumulantSet(
            mean=self.mean * factor,
            kappa2=self.kappa2 * factor**2,
            kappa3=None if self.kappa3 is None else self.kappa3 * factor**3,
            kappa4=None if self.kappa4 is None else self.kappa4 * factor**4,
            source=self.source,
            stderr=err,
        )


def cumulants_from_moments(m1: float, m2: float, m3: float, m4: float) -> tuple[float, float, float]:
    """Second, third and fourth cumulants from raw moments."""
    k2 = m2 - m1**2
    k3 = m3 - 3 * m2 * m1 + 2 * m1**3
    k4 = m4 - 4 * m1 * m3 - 3 * m2**2 + 12 * m1**2 * m2 - 6 * m1**4
    return k2, k3, k4


def _cov_array(cov: CovarianceMatrix | np.ndarray) -> np.ndarray:
    return cov.entries if isinstance(cov, CovarianceMatrix) else np.asarray(cov, dtype=float)


def matrix_form_cumulants(
    matrix, cov: CovarianceMatrix | np.ndarray, order: int = 4, max_size: int = DEFAULT_EXACT_CAP
) -> CumulantSet:
    """Exact cumulants of ``x'Ax`` for ``x ~ N(0, cov)``; ``matrix`` may be dense or scipy-sparse."""
    if order not in (2, 3, 4):
        raise ValueError("order must be 2, 3 or 4")
    s = _cov_array(cov)
    if s.shape[0] > max_size:
        raise ExactEngineSizeError(f"exact engine size exceeded: {s.shape[0]} > cap {max_size}")
    p = matrix @ s
    p = np.asarray(p.toarray() if sp.issparse(p) else p)
    mean = float(np.trace(p))
    k2 = 2.0 * float(np.sum(p * p.T))
    k3 = k4 = None
    if order >= 3:
        p2 = p @ p
        k3 = 8.0 * float(np.sum(p2 * p.T))
        if order == 4:
            k4 = 48.0 * float(np.sum(p2 * p2.T))
    return CumulantSet(mean=mean, kappa2=k2, kappa3=k3, kappa4=k4)


def quadratic_form_cumulants(
    cov: CovarianceMatrix | np.ndarray, weights, order: int = 4, max_size: int = DEFAULT_EXACT_CAP
) -> CumulantSet:
    """Exact cumulants of ``sum_i w_i x_i^2`` via the trace formula.

    ``mean`` is the (uncentered) expectation ``sum_i w_i cov_ii``; higher cumulants
    do not depend on centering.
    """
    s = _cov_array(cov)
    w = np.asarray(weights, dtype=float)
    if w.shape != (s.shape[0],):
        raise ValueError("weights and covariance are not conformable")
    return matrix_form_cumulants(sp.diags(w), s, order, max_size)


@lru_cache(maxsize=None)
def _perfect_matchings(size: int) -> tuple[tuple[tuple[int, int], ...], ...]:
    def rec(items):
        if not items:
            yield ()
            return
        first, rest = items[0], items[1:]
        for k, partner in enumerate(rest):
            for tail in rec(rest[:k] + rest[k + 1 :]):
                yield ((first, partner),) + tail

    return tuple(rec(tuple(range(size))))


def isserlis_oracle(cov: CovarianceMatrix | np.ndarray, weights, order: int = 4) -> CumulantSet:
    """Cumulants of ``sum_i w_i x_i^2`` by brute-force Wick/Isserlis pairing.

    Raw moments ``E[Q^k]`` are expanded over all index tuples and all perfect matchings
    of the ``2k`` Gaussian factors, then converted to cumulants.  No trace identity is
    used, which is the point: this is the independent check on
    :func:`quadratic_form_cumulants`.
    """
    s = _cov_array(cov)
    w = np.asarray(weights, dtype=float)
    m = s.shape[0]
    if m > ORACLE_MAX_DIM:
        raise OracleSizeError(f"oracle size exceeded: dimension {m} > {ORACLE_MAX_DIM}")
    if order not in (2, 3, 4):
        raise ValueError("order must be 2, 3 or 4")
    moments = [1.0]
    for k in range(1, 5):
        tuples = np.array(list(itertools.product(range(m), repeat=k)), dtype=int)
        coeff = np.prod(w[tuples], axis=1)
        # each index appears twice: x_i^2
        variables = np.repeat(tuples, 2, axis=1)
        total = np.zeros(len(tuples))
        for matching in _perfect_matchings(2 * k):
            term = np.ones(len(tuples))
            for a, b in matching:
                term = term * s[variables[:, a], variables[:, b]]
            total += term
        moments.append(float(np.dot(coeff, total)))
    k2, k3, k4 = cumulants_from_moments(*moments[1:])
    return CumulantSet(
        mean=moments[1],
        kappa2=k2,
        kappa3=k3 if order >= 3 else None,
        kappa4=k4 if order == 4 else None,
    )


def sample_cumulants(values: np.ndarray, batches: int = 100) -> CumulantSet:
    """k-statistics of a sample, with standard errors from batch means.

    The point estimates use the whole sample; the standard error of each entry is the
    spread of the same statistic over ``batches`` contiguous sub-samples divided by
    ``sqrt(batches)``.
    """
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    est = {"mean": float(np.mean(v))}
    for r in (2, 3, 4):
        est[f"kappa{r}"] = float(kstat(v, r))
    stderr = None
    if batches >= 2 and v.size >= 8 * batches:
        parts = np.array_split(v, batches)
        per = {
            "mean": [float(np.mean(p)) for p in parts],
            **{f"kappa{r}": [float(kstat(p, r)) for p in parts] for r in (2, 3, 4)},
        }
        stderr = {k: float(np.std(vals, ddof=1) / math.sqrt(batches)) for k, vals in per.items()}
    return CumulantSet(source="monte_carlo", stderr=stderr, **est)


def normalization_constants(params: OuParams) -> tuple[float, float]:
    """``(rho, sigma)`` shared by the three estimators: ``1/(2 theta)`` and ``(2 theta^3)^(-1/2)``."""
    theta = params.theta
    return 1.0 / (2.0 * theta), math.sqrt(1.0 / (2.0 * theta**3))


def fn_z_cumulants(
    params: OuParams, grid: SamplingGrid, max_size: int = DEFAULT_EXACT_CAP
) -> tuple[CumulantSet, CumulantSet]:
    """Exact cumulants of ``F_n(Z)`` and of ``F_n(Z)/sigma``.

    ``F_n(Z) = sqrt(T) (f_n(Z) - 1/(2 theta))`` is the quadratic form with constant
    weight ``sqrt(T)/n`` over ``Z_{t_0..t_{n-1}}``, recentred to mean zero.
    """
    n = grid.n
    cov = build_stationary_covariance(params, grid, n, max_size=max_size)
    raw = quadratic_form_cumulants(cov, np.full(n, math.sqrt(grid.horizon) / n), 4, max_size)
    centred = CumulantSet(
        mean=raw.mean - math.sqrt(grid.horizon) / (2.0 * params.theta),
        kappa2=raw.kappa2,
        kappa3=raw.kappa3,
        kappa4=raw.kappa4,
    )
    _, sigma = normalization_constants(params)
    return centred, centred.scaled(1.0 / sigma)


def fn_z_second_moment(params: OuParams, grid: SamplingGrid) -> float:
    """``E[F_n(Z)^2]`` from the lag sums of the Toeplitz covariance; O(n), no size cap."""
    theta, delta, n = params.theta, grid.delta, grid.n
    k = np.arange(1, n)
    lag_sum = n + 2.0 * math.fsum((n - k) * np.exp(-2.0 * theta * delta * k))
    trace_sq = lag_sum / (4.0 * theta**2)
    return 2.0 * grid.horizon / n**2 * trace_sq


def variance_gap_FnZ(params: OuParams, grid: SamplingGrid) -> float:
    """``|E[F_n(Z)^2] - 1/(2 theta^3)|``, exact."""
    return abs(fn_z_second_moment(params, grid) - 1.0 / (2.0 * params.theta**3))


def _index_range(grid: SamplingGrid, indexing: Indexing) -> tuple[int, int]:
    if indexing == "from_zero":
        return 0, grid.n
    if indexing == "from_one":
        return 1, grid.n + 1
    raise ValueError(f"unknown indexing {indexing!r}")


def mean_gap_direct(params: OuParams, grid: SamplingGrid, indexing: Indexing = "from_zero") -> float:
    lo, hi = _index_range(grid, indexing)
    t = np.arange(lo, hi) * grid.delta
    return -math.fsum(np.exp(-2.0 * params.theta * t)) / (2.0 * params.theta * grid.n)


def mean_gap_and_aT(
    params: OuParams, grid: SamplingGrid, indexing: Indexing = "from_zero"
) -> tuple[float, float]:
    """``E f_n(X) - E f_n(Z)`` as a geometric sum, and ``a_T = (T/sigma)`` times it."""
    theta, delta, n = params.theta, grid.delta, grid.n
    lo, _ = _index_range(grid, indexing)
    ratio = math.expm1(-2.0 * theta * delta * n) / math.expm1(-2.0 * theta * delta)
    gap = -math.exp(-2.0 * theta * delta * lo) * ratio / (2.0 * theta * n)
    _, sigma = normalization_constants(params)
    return gap, grid.horizon / sigma * gap


@dataclass(frozen=True)
class LambdaCrossTerms:
    a_nT: float
    b_nT: float
    cross_term: float


def lambda_cross_closed_forms(params: OuParams, grid: SamplingGrid) -> LambdaCrossTerms:
    """Closed forms behind ``T/theta - 2 theta sqrt(T) E[Lambda_n F_n(X)] = a_{n,T} + b_{n,T}``."""
    theta, delta, n = params.theta, grid.delta, grid.n
    horizon = grid.horizon
    e1 = math.exp(-theta * delta)
    one_minus_e2 = -math.expm1(-2.0 * theta * delta)
    geometric = -math.expm1(-2.0 * theta * delta * (n - 1)) / one_minus_e2
    a = (
        horizon / theta * (-math.expm1(-theta * delta))
        + delta / theta * e1
        + delta / theta * math.exp(-3.0 * theta * delta) * geometric
    )
    j = np.arange(1, n)  # j - 1 for j = 2..n
    b = (
        delta / theta
        * one_minus_e2
        * math.fsum(j * np.exp(theta * delta - 2.0 * theta * delta * j))
    )
    return LambdaCrossTerms(a_nT=a, b_nT=b, cross_term=a + b)


def a_nT_double_sum(params: OuParams, grid: SamplingGrid) -> float:
    """``a_{n,T}`` as the literal double sum, before any geometric telescoping."""
    theta, delta, n = params.theta, grid.delta, grid.n
    t = np.arange(n + 1) * delta
    total = []
    for j in range(2, n + 1):
        i = np.arange(1, j)
        total.append(math.fsum(np.exp(theta * (t[i] + t[i - 1]) - 2.0 * theta * t[j - 1])))
    return grid.horizon / theta - delta / theta * (-math.expm1(-2.0 * theta * delta)) * math.fsum(total)


def cross_term_double_sum(params: OuParams, grid: SamplingGrid) -> float:
    """``a_{n,T} + b_{n,T}`` from the Wick-expanded double sum with the ``(1 - e^{-2 theta t_{i-1}})`` factor."""
    theta, delta, n = params.theta, grid.delta, grid.n
    t = np.arange(n + 1) * delta
    total = []
    for j in range(2, n + 1):
        i = np.arange(1, j)
        total.append(
            math.fsum(
                np.exp(theta * (t[i] + t[i - 1]) - 2.0 * theta * t[j - 1])
                * (-np.expm1(-2.0 * theta * t[i - 1]))
            )
        )
    return grid.horizon / theta - delta / theta * (-math.expm1(-2.0 * theta * delta)) * math.fsum(total)


def _lambda_matrix(params: OuParams, grid: SamplingGrid) -> sp.csr_matrix:
    """Symmetric ``A`` with ``x' A x = Lambda_n`` over ``x = X_{t_0..t_n}``."""
    n = grid.n
    decay = math.exp(-params.theta * grid.delta)
    diag = np.zeros(n + 1)
    diag[:-1] = -decay
    off = np.full(n, 0.5)
    return sp.diags([off, diag, off], [-1, 0, 1], format="csr")


def _increment_matrix(grid: SamplingGrid) -> sp.csr_matrix:
    """Symmetric ``Q`` with ``x' Q x = sum_i X_{t_{i-1}} (X_{t_i} - X_{t_{i-1}})``."""
    n = grid.n
    diag = np.zeros(n + 1)
    diag[:-1] = -1.0
    off = np.full(n, 0.5)
    return sp.diags([off, diag, off], [-1, 0, 1], format="csr")


def _left_sum_matrix(grid: SamplingGrid) -> sp.csr_matrix:
    """``x' D x = S_n`` (left end points)."""
    diag = np.full(grid.n + 1, grid.delta)
    diag[-1] = 0.0
    return sp.diags(diag, format="csr")


def _cov_of_forms(a, b, s: np.ndarray) -> float:
    """``Cov(x'Ax, x'Bx) = 2 tr(A S B S)`` for symmetric ``a``, ``b``."""
    pa = np.asarray(a @ s)
    pb = np.asarray(b @ s)
    return 2.0 * float(np.sum(pa * pb.T))


def cross_term_exact(params: OuParams, grid: SamplingGrid, max_size: int = DEFAULT_EXACT_CAP) -> float:
    """``T/theta - 2 theta E[Lambda_n S_n]`` by linear algebra on the exact covariance of X."""
    s = build_x_covariance(params, grid, grid.n + 1, max_size=max_size).entries
    # E[Lambda_n] = 0, so E[Lambda_n S_n] is a covariance
    cov = _cov_of_forms(_lambda_matrix(params, grid), _left_sum_matrix(grid), s)
    return grid.horizon / params.theta - 2.0 * params.theta * cov


@dataclass(frozen=True)
class BoundComponents:
    """Ingredients of the four-term Kolmogorov bound for one estimator and grid.

    ``sources`` tags each field ``exact``, ``closed_form`` or ``monte_carlo``; Monte Carlo
    fields also carry an entry in ``stderr``.
    """

    application: str
    mean_ratio_gap: float
    variance_gap: float
    r_norm: float
    a_norm: float
    a_scalar: float
    kappa3_v: float
    kappa4_v: float
    rho: float
    sigma: float
    sources: dict[str, str] = field(default_factory=dict)
    stderr: dict[str, float] = field(default_factory=dict)

    def theorem_terms(self, horizon: float) -> dict[str, float]:
        return {
            "term_cumulant": max(abs(self.kappa3_v), self.kappa4_v),
            "term_mean": horizon**0.25 * self.mean_ratio_gap,
            "term_variance": self.variance_gap,
            "term_remainder": (self.r_norm + self.a_norm + abs(self.a_scalar)) / math.sqrt(horizon),
        }


FIELDS = ("mean_ratio_gap", "variance_gap", "r_norm", "a_norm", "a_scalar", "kappa3_v", "kappa4_v", "rho", "sigma")


def _coupling_matrix(params: OuParams, grid: SamplingGrid, lo: int, hi: int) -> sp.csr_matrix:
    """``z' B z = f_n(X) - f_n(Z)`` over the stationary path, using ``X_t = Z_t - e^{-theta t} Z_0``."""
    n = grid.n
    e = np.exp(-params.theta * np.arange(n + 1) * grid.delta)
    idx = np.arange(lo, hi)
    rows, cols, vals = [0], [0], [float(np.sum(e[idx] ** 2)) / n]
    for i in idx:
        if i == 0:
            vals[0] -= 2.0 * e[0] / n
        else:
            rows += [0, i]
            cols += [i, 0]
            vals += [-e[i] / n, -e[i] / n]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n + 1, n + 1))


def _amle_bar_a_norm(params: OuParams, grid: SamplingGrid) -> float:
    theta, delta, n = params.theta, grid.delta, grid.n
    var_xt = -math.expm1(-2.0 * theta * grid.horizon) / (2.0 * theta)
    pinned = delta * math.fsum(np.exp(-2.0 * theta * delta * np.arange(n)))
    # A_T = sqrt(2 theta) (X_T^2 / 2 - (delta/2) sum e^{-2 theta t_i}) for i = 0..n-1
    mean = 0.5 * var_xt - 0.5 * pinned
    return math.sqrt(2.0 * theta * (0.5 * var_xt**2 + mean**2))


def bound_components_for(
    application: str,
    params: OuParams,
    grid: SamplingGrid,
    mc_budget: int = 0,
    master_seed: int = 0,
    max_size: int = DEFAULT_EXACT_CAP,
    workers: int = 1,
) -> BoundComponents:
    """Evaluate every term of the Kolmogorov bound for ``application``.

    With ``G_T = sqrt(T) f_n(X)``, ``V_T = F_n(Z)``, ``R_T = sqrt(T)(G_T - E G_T - V_T)``
    and the estimator-specific ``A_T``, ``a_T``.  All fields are computed exactly
    while ``n + 1`` coordinates fit under ``max_size``; beyond that the
    covariance-based fields fall back to ``mc_budget`` coupled Monte Carlo
    replications (an :class:`ExactEngineSizeError` is raised if the budget is zero).
    """
    if application not in ESTIMATORS:
        raise ValueError(f"unknown application {application!r}")
    theta, n, horizon = params.theta, grid.n, grid.horizon
    rho, sigma = normalization_constants(params)
    indexing = ESTIMATOR_INDEXING[application]
    lo, hi = _index_range(grid, indexing)
    gap, a_t = mean_gap_and_aT(params, grid, indexing)
    values = {
        "rho": rho,
        "sigma": sigma,
        "mean_ratio_gap": 2.0 * theta * abs(gap),
        "a_scalar": a_t if application == "amce" else 0.0,
    }
    sources = {k: "closed_form" for k in values}
    stderr: dict[str, float] = {}

    if application == "amce":
        values["a_norm"] = 0.0
        sources["a_norm"] = "closed_form"
    elif application == "amle_bar":
        values["a_norm"] = _amle_bar_a_norm(params, grid)
        sources["a_norm"] = "closed_form"

    if n + 1 <= max_size:
        _, normed = fn_z_cumulants(params, grid, max_size)
        values["kappa3_v"], values["kappa4_v"] = normed.kappa3, normed.kappa4
        sx = build_x_covariance(params, grid, n + 1, max_size=max_size).entries
        block = sx[lo:hi, lo:hi]
        var_fx = 2.0 * float(np.sum(block * block)) / n**2
        values["variance_gap"] = abs(horizon * var_fx - sigma**2)
        sz = build_stationary_covariance(params, grid, n + 1, max_size=max_size).entries
        b = _coupling_matrix(params, grid, lo, hi)
        values["r_norm"] = horizon * math.sqrt(_cov_of_forms(b, b, sz))
        if application == "amle_hat":
            q = _increment_matrix(grid)
            var_q = _cov_of_forms(q, q, sx)
            mean_q = float(np.sum(q.diagonal() * np.diag(sx))) + float(np.sum(np.diag(sx, 1)))
            mean_s = grid.delta * float(np.sum(np.diag(sx)[:-1]))
            values["a_norm"] = math.sqrt(2.0 * theta * (var_q + (mean_q + theta * mean_s) ** 2))
        for key in ("kappa3_v", "kappa4_v", "variance_gap", "r_norm", "a_norm"):
            sources.setdefault(key, "exact")
    else:
        if mc_budget < 1:
            raise ExactEngineSizeError(
                f"exact engine size exceeded: {n + 1} coordinates > cap {max_size} and no Monte Carlo budget"
            )
        from .montecarlo import sample_component_draws

        draws = sample_component_draws(
            application, params, grid, range(lo, hi), mc_budget, master_seed, workers
        )
        m = mc_budget
        cums = sample_cumulants(draws["Fn_z"] / sigma, batches=min(100, max(2, m // 64)))
        values["kappa3_v"], values["kappa4_v"] = cums.kappa3, cums.kappa4
        if cums.stderr:
            stderr["kappa3_v"], stderr["kappa4_v"] = cums.stderr["kappa3"], cums.stderr["kappa4"]
        g = math.sqrt(horizon) * draws["fx"]
        var_g = float(np.var(g, ddof=1))
        values["variance_gap"] = abs(var_g - sigma**2)
        stderr["variance_gap"] = var_g * math.sqrt(2.0 / (m - 1))
        r = horizon * draws["diff"]
        values["r_norm"] = float(np.std(r, ddof=1))
        stderr["r_norm"] = values["r_norm"] / math.sqrt(2.0 * (m - 1))
        if application == "amle_hat":
            mean_s = float(np.mean(draws["s_n"]))
            a_draws = math.sqrt(2.0 * theta) * (draws["extra"] + theta * mean_s)
            sq = a_draws**2
            values["a_norm"] = math.sqrt(float(np.mean(sq)))
            stderr["a_norm"] = float(np.std(sq, ddof=1)) / math.sqrt(m) / (2.0 * values["a_norm"])
        for key in ("kappa3_v", "kappa4_v", "variance_gap", "r_norm", "a_norm"):
            sources.setdefault(key, "monte_carlo")

    return BoundComponents(application=application, sources=sources, stderr=stderr, **values)
