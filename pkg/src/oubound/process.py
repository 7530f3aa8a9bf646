"""Ornstein-Uhlenbeck model, observation grids and exact covariances.

The model is ``dX_t = -theta X_t dt + dW_t`` with ``X_0 = 0``.  Its stationary
companion ``Z`` starts from the invariant law ``N(0, 1/(2 theta))`` and the two
are coupled through ``X_t = Z_t - exp(-theta t) Z_0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz

from .errors import ExactEngineSizeError

DEFAULT_EXACT_CAP = 4096


@dataclass(frozen=True)
class OuParams:
    theta: float = 1.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.theta) and self.theta > 0):
            raise ValueError(f"theta must be a positive finite number, got {self.theta!r}")


@dataclass(frozen=True)
class SamplingGrid:
    """Equidistant observation scheme ``t_i = i * delta`` for ``i = 0..n``."""

    n: int
    delta: float

    def __post_init__(self) -> None:
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        if not (math.isfinite(self.delta) and self.delta > 0):
            raise ValueError(f"delta must be positive, got {self.delta!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "delta", float(self.delta))

    @property
    def horizon(self) -> float:
        return self.n * self.delta

    T = horizon

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.delta

    @classmethod
    def from_horizon(cls, horizon: float, delta: float) -> "SamplingGrid":
        """Grid with step ``delta`` and ``n = round(horizon / delta)`` steps."""
        return cls(n=max(1, int(round(horizon / delta))), delta=delta)


@dataclass(frozen=True)
class CovarianceMatrix:
    entries: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("covariance must be a square matrix")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


def stationary_variance(params: OuParams) -> float:
    return 1.0 / (2.0 * params.theta)


def _check_count(count: int, max_size: int) -> None:
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if count > max_size:
        raise ExactEngineSizeError(
            f"exact engine size exceeded: {count} coordinates > cap {max_size}"
        )


def build_stationary_covariance(
    params: OuParams,
    grid: SamplingGrid,
    count: int,
    offset: int = 0,
    max_size: int = DEFAULT_EXACT_CAP,
) -> CovarianceMatrix:
    """Covariance of ``(Z_{t_offset}, ..., Z_{t_{offset+count-1}})``.

    Stationarity makes the result Toeplitz with entry ``exp(-theta delta |i-j|)/(2 theta)``
    and independent of ``offset``; the argument is accepted for symmetry with
    :func:`build_x_covariance`.
    """
    _check_count(count, max_size)
    lags = np.arange(count) * grid.delta
    column = np.exp(-params.theta * lags) / (2.0 * params.theta)
    return CovarianceMatrix(toeplitz(column))


def build_x_covariance(
    params: OuParams,
    grid: SamplingGrid,
    count: int,
    offset: int = 0,
    max_size: int = DEFAULT_EXACT_CAP,
) -> CovarianceMatrix:
    """Exact covariance of ``(X_{t_offset}, ..., X_{t_{offset+count-1}})``.

    Uses ``E[X_s X_t] = (exp(-theta|t-s|) - exp(-theta(t+s))) / (2 theta)``, which is
    the stationary covariance corrected for the pinned start ``X_0 = 0``.
    """
    _check_count(count, max_size)
    theta, delta = params.theta, grid.delta
    idx = np.arange(offset, offset + count)
    lag = np.abs(idx[:, None] - idx[None, :]) * delta
    total = (idx[:, None] + idx[None, :]) * delta
    entries = (np.exp(-theta * lag) - np.exp(-theta * total)) / (2.0 * theta)
    return CovarianceMatrix(entries)


def joint_stationary_covariance(
    params: OuParams, grid: SamplingGrid, max_size: int = DEFAULT_EXACT_CAP
) -> CovarianceMatrix:
    """Covariance of the whole observed stationary path ``Z_{t_0..t_n}``."""
    return build_stationary_covariance(params, grid, grid.n + 1, max_size=max_size)
