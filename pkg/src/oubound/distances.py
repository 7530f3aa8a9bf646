"""Distances between an empirical sample and the standard normal law."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtr, ndtri

DEFAULT_EPS_GRID = np.logspace(-4.0, 0.0, 40)


@dataclass(frozen=True)
class SampleEnsemble:
    values: np.ndarray
    master_seed: Optional[int] = None
    generator: dict = field(default_factory=dict)
    excluded: int = 0

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size < 1:
            raise ValueError("ensemble needs at least one value")
        if not np.all(np.isfinite(v)):
            raise ValueError("ensemble values must be finite; exclude degenerate replications first")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_raw(cls, raw, **kwargs) -> "SampleEnsemble":
        """Drop non-finite entries and record how many were dropped."""
        raw = np.asarray(raw, dtype=float).ravel()
        ok = np.isfinite(raw)
        return cls(values=raw[ok], excluded=int((~ok).sum()), **kwargs)

    @property
    def size(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class KsResult:
    statistic: float
    dkw_radius: float
    location: float
    stderr: float


def dkw_radius(size: int, confidence: float = 0.95) -> float:
    """Half-width of the Dvoretzky-Kiefer-Wolfowitz band at the given confidence."""
    if not 0 < confidence < 1:
        raise ValueError("confidence must lie in (0, 1)")
    return math.sqrt(math.log(2.0 / (1.0 - confidence)) / (2.0 * size))


def _values(sample) -> np.ndarray:
    return sample.values if isinstance(sample, SampleEnsemble) else np.asarray(sample, dtype=float).ravel()


def ks_statistic_vs_normal(sample, confidence: float = 0.95) -> KsResult:
    """One-sample two-sided KS distance to N(0, 1).

    ``D = max_i max(i/M - Phi(x_(i)), Phi(x_(i)) - (i-1)/M)``.  ``stderr`` is the
    binomial standard error of the empirical CDF at the maximizing point.
    """
    x = np.sort(_values(sample))
    m = x.size
    cdf = ndtr(x)
    i = np.arange(1, m + 1)
    upper = i / m - cdf
    lower = cdf - (i - 1) / m
    k_up, k_lo = int(np.argmax(upper)), int(np.argmax(lower))
    if upper[k_up] >= lower[k_lo]:
        d, k, p = upper[k_up], k_up, (k_up + 1) / m
    else:
        d, k, p = lower[k_lo], k_lo, k_lo / m
    return KsResult(
        statistic=float(d),
        dkw_radius=dkw_radius(m, confidence),
        location=float(x[k]),
        stderr=math.sqrt(p * (1.0 - p) / m),
    )


def _phi_antiderivative(z: np.ndarray) -> np.ndarray:
    # d/dz [z Phi(z) + phi(z)] = Phi(z); vanishes at -inf
    return z * ndtr(z) + np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class WassersteinResult:
    distance: float
    stderr: float


def wasserstein_empirical_vs_normal(sample) -> WassersteinResult:
    """``W1 = int |F_M(z) - Phi(z)| dz`` evaluated exactly, piece by piece.

    Between consecutive order statistics the empirical CDF is a constant ``c`` and the
    integrand changes sign at most once, at ``Phi^{-1}(c)``; each piece and both tails
    integrate in closed form through ``z Phi(z) + phi(z)``.

    ``stderr`` comes from the influence function ``x -> int_x^inf sign(F_M - Phi)``.
    """
    x = np.sort(_values(sample))
    m = x.size
    g = _phi_antiderivative
    left_tail = float(g(np.array([x[0]]))[0])
    right_tail = float(g(np.array([-x[-1]]))[0])
    if m == 1:
        return WassersteinResult(left_tail + right_tail, 0.0)
    a, b = x[:-1], x[1:]
    c = np.arange(1, m) / m
    cross = np.clip(ndtri(c), a, b)
    ga, gb, gc = g(a), g(b), g(cross)
    below = c * (cross - a) - (gc - ga)  # F_M > Phi on [a, cross]
    above = (gb - gc) - c * (b - cross)  # F_M < Phi on [cross, b]
    pieces = np.maximum(below, 0.0) + np.maximum(above, 0.0)
    distance = left_tail + float(np.sum(pieces)) + right_tail

    signed = (cross - a) - (b - cross)
    influence = np.concatenate([np.cumsum(signed[::-1])[::-1], [0.0]])
    stderr = float(np.std(influence, ddof=1) / math.sqrt(m))
    return WassersteinResult(distance, stderr)


@dataclass(frozen=True)
class MichelPfanzaglResult:
    bound: float
    eps: float
    tail_probability: float
    stderr: float = 0.0


def michel_pfanzagl_bound(
    numerator_distance: float,
    denominator_sample,
    eps_grid: Sequence[float] = DEFAULT_EPS_GRID,
    numerator_stderr: float = 0.0,
) -> MichelPfanzaglResult:
    """``min_eps [ d_Kol(X, N) + P{|Z - 1| > eps} + eps ]`` with the tail estimated empirically.

    ``stderr`` combines ``numerator_stderr`` with the binomial error of the tail
    frequency at the minimizing ``eps``.
    """
    eps = np.asarray(eps_grid, dtype=float)
    if eps.size == 0 or np.any(eps <= 0):
        raise ValueError("eps_grid must be nonempty and positive")
    dev = np.sort(np.abs(_values(denominator_sample) - 1.0))
    tail = 1.0 - np.searchsorted(dev, eps, side="right") / dev.size
    totals = numerator_distance + tail + eps
    k = int(np.argmin(totals))
    p = float(tail[k])
    se = math.sqrt(numerator_stderr**2 + p * (1.0 - p) / dev.size)
    return MichelPfanzaglResult(bound=float(totals[k]), eps=float(eps[k]), tail_probability=p, stderr=se)
