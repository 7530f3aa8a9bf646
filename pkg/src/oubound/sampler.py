"""Exact-in-law sampling of discretely observed OU paths.

Each replication owns a Philox stream keyed by the master seed, with the
replication index placed in the counter.  Draw order inside a stream is fixed:
first the standardized stationary start ``Z_0``, then the ``n`` innovations.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, TextIO

import numpy as np
from scipy.signal import lfilter

from .process import OuParams, SamplingGrid

_U64 = 2**64


@dataclass(frozen=True)
class RngStreamSpec:
    master_seed: int
    replication_index: int = 0

    def __post_init__(self) -> None:
        if not 0 <= int(self.master_seed) < _U64:
            raise ValueError("master_seed must fit in an unsigned 64-bit integer")
        if not 0 <= int(self.replication_index) < _U64:
            raise ValueError("replication_index must be a nonnegative 64-bit integer")

    def generator(self) -> np.random.Generator:
        bits = np.random.Philox(
            key=int(self.master_seed), counter=[0, 0, int(self.replication_index), 0]
        )
        return np.random.Generator(bits)


@dataclass(frozen=True)
class PathSample:
    grid: SamplingGrid
    x: np.ndarray
    z: Optional[np.ndarray] = None
    z0: Optional[float] = None
    stream: Optional[RngStreamSpec] = None


def transition_coefficients(params: OuParams, delta: float) -> tuple[float, float]:
    """AR(1) factor and innovation scale of the exact OU transition over ``delta``."""
    theta = params.theta
    decay = math.exp(-theta * delta)
    scale = math.sqrt(-math.expm1(-2.0 * theta * delta) / (2.0 * theta))
    return decay, scale


def draw_noise(grid: SamplingGrid, master_seed: int, start: int, stop: int) -> np.ndarray:
    """Standard normal draws for replications ``start..stop-1``, one row each."""
    noise = np.empty((stop - start, grid.n + 1))
    for row, rep in enumerate(range(start, stop)):
        noise[row] = RngStreamSpec(master_seed, rep).generator().standard_normal(grid.n + 1)
    return noise


def paths_from_innovations(
    params: OuParams,
    grid: SamplingGrid,
    z0: np.ndarray,
    xi: np.ndarray,
    *,
    want_x: bool = True,
    want_z: bool = True,
) -> tuple[Optional[np.ndarray], Optional[np.ndarray]]:
    """Run the exact recursions row-wise.

    ``z0`` has shape ``(m,)`` and ``xi`` shape ``(m, n)``.  ``X`` is propagated from
    zero with the same innovations as ``Z`` rather than computed from the coupling
    identity, so the identity is a genuine check on the output.
    """
    decay, scale = transition_coefficients(params, grid.delta)
    z0 = np.asarray(z0, dtype=float)
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    m = xi.shape[0]
    x = z = None
    if want_x:
        x = np.zeros((m, grid.n + 1))
        x[:, 1:] = lfilter([scale], [1.0, -decay], xi, axis=1)
    if want_z:
        z = np.empty((m, grid.n + 1))
        z[:, 0] = z0
        z[:, 1:] = lfilter([scale], [1.0, -decay], xi, axis=1, zi=(decay * z0)[:, None])[0]
    return x, z


def sample_block(
    params: OuParams,
    grid: SamplingGrid,
    master_seed: int,
    start: int,
    stop: int,
    *,
    want_x: bool = True,
    want_z: bool = True,
) -> tuple[Optional[np.ndarray], Optional[np.ndarray], np.ndarray]:
    """Sample replications ``start..stop-1``; returns ``(x, z, z0)`` with one row per replication."""
    noise = draw_noise(grid, master_seed, start, stop)
    z0 = noise[:, 0] / math.sqrt(2.0 * params.theta)
    x, z = paths_from_innovations(params, grid, z0, noise[:, 1:], want_x=want_x, want_z=want_z)
    return x, z, z0


def sample_coupled_paths(params: OuParams, grid: SamplingGrid, stream: RngStreamSpec) -> PathSample:
    rep = int(stream.replication_index)
    x, z, z0 = sample_block(params, grid, stream.master_seed, rep, rep + 1)
    return PathSample(grid=grid, x=x[0], z=z[0], z0=float(z0[0]), stream=stream)


def sample_x_only(params: OuParams, grid: SamplingGrid, stream: RngStreamSpec) -> PathSample:
    # consumes the stationary start draw too, so x matches the coupled sampler bit for bit
    rep = int(stream.replication_index)
    x, _, _ = sample_block(params, grid, stream.master_seed, rep, rep + 1, want_z=False)
    return PathSample(grid=grid, x=x[0], stream=stream)


def coupling_residual(params: OuParams, path: PathSample) -> float:
    """``max_i |x_i - (z_i - exp(-theta t_i) z_0)|`` for a coupled path."""
    if path.z is None or path.z0 is None:
        raise ValueError("path has no stationary companion")
    pred = path.z - np.exp(-params.theta * path.grid.times) * path.z0
    return float(np.max(np.abs(path.x - pred)))


def write_path_csv(path: PathSample, target: str | Path | TextIO) -> None:
    """Write ``i,t,x,z`` rows with round-trip float text to a file name or open text stream."""
    if hasattr(target, "write"):
        _write_path_rows(path, target)
        return
    with open(target, "w", newline="") as fh:
        _write_path_rows(path, fh)


def _write_path_rows(path: PathSample, fh: TextIO) -> None:
    times = path.grid.times
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["i", "t", "x", "z"])
    for i in range(path.grid.n + 1):
        zval = "" if path.z is None else repr(float(path.z[i]))
        w.writerow([i, repr(float(times[i])), repr(float(path.x[i])), zval])


def read_path_csv(source: str | Path) -> PathSample:
    with open(source, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) < 2:
        raise ValueError("a path needs at least two grid points")
    n = int(rows[-1]["i"])
    if n != len(rows) - 1:
        raise ValueError("rows must be indexed 0..n without gaps")
    delta = float(rows[1]["t"]) - float(rows[0]["t"])
    x = np.array([float(r["x"]) for r in rows])
    z = None
    if all(r.get("z") not in (None, "") for r in rows):
        z = np.array([float(r["z"]) for r in rows])
    return PathSample(grid=SamplingGrid(n, delta), x=x, z=z, z0=None if z is None else float(z[0]))
