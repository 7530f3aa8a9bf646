"""Deterministic chunked Monte Carlo over replication indices.

Replications are split into fixed-size chunks that do not depend on the worker
count.  Every chunk is a pure function of ``(master_seed, start, stop)`` and the
chunk results are concatenated in index order, so outputs are identical for any
number of workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Callable, Sequence

import numpy as np

from .estimators import batch_ratio_parts
from .process import OuParams, SamplingGrid
from .sampler import sample_block

DEFAULT_CHUNK = 1024


def chunk_bounds(replications: int, chunk_size: int = DEFAULT_CHUNK) -> list[tuple[int, int]]:
    if replications < 1:
        raise ValueError("replications must be >= 1")
    return [(s, min(s + chunk_size, replications)) for s in range(0, replications, chunk_size)]


def _call(fn: Callable, bounds: tuple[int, int]):
    return fn(*bounds)


def map_chunks(
    fn: Callable[[int, int], dict[str, np.ndarray]],
    replications: int,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
) -> dict[str, np.ndarray]:
    """Apply ``fn(start, stop)`` to every chunk and concatenate each returned array.

    ``fn`` must be picklable (a module-level function or a ``functools.partial`` of one)
    when ``workers > 1``.
    """
    bounds = chunk_bounds(replications, chunk_size)
    if workers <= 1 or len(bounds) == 1:
        parts = [fn(*b) for b in bounds]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(partial(_call, fn), bounds))
    return {key: np.concatenate([p[key] for p in parts]) for key in parts[0]}


def _estimator_chunk(
    start: int, stop: int, *, estimator: str, params: OuParams, grid: SamplingGrid, master_seed: int
) -> dict[str, np.ndarray]:
    x, _, _ = sample_block(params, grid, master_seed, start, stop, want_z=False)
    values, num, den = batch_ratio_parts(x, params, grid, estimator)
    return {"values": values, "numerator": num, "denominator": den}


@dataclass(frozen=True)
class EstimatorEnsemble:
    """Normalized errors of one estimator over ``M`` replications.

    ``values[k]`` is ``nan`` exactly when replication ``k`` had a degenerate
    denominator; ``excluded`` flags those rows.
    """

    estimator: str
    params: OuParams
    grid: SamplingGrid
    master_seed: int
    values: np.ndarray
    numerator: np.ndarray
    denominator: np.ndarray

    @property
    def excluded(self) -> np.ndarray:
        return ~np.isfinite(self.values)

    @property
    def excluded_count(self) -> int:
        return int(self.excluded.sum())

    @property
    def valid_values(self) -> np.ndarray:
        return self.values[~self.excluded]


def run_estimator_ensemble(
    estimator: str,
    params: OuParams,
    grid: SamplingGrid,
    replications: int,
    master_seed: int,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
) -> EstimatorEnsemble:
    fn = partial(_estimator_chunk, estimator=estimator, params=params, grid=grid, master_seed=master_seed)
    out = map_chunks(fn, replications, workers, chunk_size)
    return EstimatorEnsemble(estimator, params, grid, master_seed, out["values"], out["numerator"], out["denominator"])


def _fn_z_chunk(start: int, stop: int, *, params: OuParams, grid: SamplingGrid, master_seed: int):
    _, z, _ = sample_block(params, grid, master_seed, start, stop, want_x=False)
    fn = np.sum(z[:, :-1] ** 2, axis=1) / grid.n
    return {"Fn_z": math.sqrt(grid.horizon) * (fn - 1.0 / (2.0 * params.theta))}


def sample_fn_z(
    params: OuParams,
    grid: SamplingGrid,
    replications: int,
    master_seed: int,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
) -> np.ndarray:
    """Monte Carlo draws of ``F_n(Z) = sqrt(T) (f_n(Z) - 1/(2 theta))``."""
    fn = partial(_fn_z_chunk, params=params, grid=grid, master_seed=master_seed)
    return map_chunks(fn, replications, workers, chunk_size)["Fn_z"]


def _components_chunk(
    start: int,
    stop: int,
    *,
    params: OuParams,
    grid: SamplingGrid,
    master_seed: int,
    indices: Sequence[int],
    estimator: str,
) -> dict[str, np.ndarray]:
    theta, n, horizon = params.theta, grid.n, grid.horizon
    x, z, _ = sample_block(params, grid, master_seed, start, stop)
    idx = np.asarray(indices)
    fx = np.sum(x[:, idx] ** 2, axis=1) / n
    fz = np.sum(z[:, idx] ** 2, axis=1) / n
    fz0 = np.sum(z[:, :-1] ** 2, axis=1) / n
    s_n = grid.delta * np.sum(x[:, :-1] ** 2, axis=1)
    if estimator == "amle_hat":
        quad = np.sum(x[:, :-1] * np.diff(x, axis=1), axis=1)
        extra = quad
    elif estimator == "amle_bar":
        extra = 0.5 * (x[:, -1] ** 2 - horizon)
    else:
        extra = np.zeros(len(fx))
    return {
        "fx": fx,
        "diff": fx - fz,
        "Fn_z": math.sqrt(horizon) * (fz0 - 1.0 / (2.0 * theta)),
        "s_n": s_n,
        "extra": extra,
    }


def sample_component_draws(
    estimator: str,
    params: OuParams,
    grid: SamplingGrid,
    indices: Sequence[int],
    replications: int,
    master_seed: int,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
) -> dict[str, np.ndarray]:
    """Coupled draws feeding the Monte Carlo fallback of the bound components."""
    fn = partial(
        _components_chunk,
        params=params,
        grid=grid,
        master_seed=master_seed,
        indices=tuple(int(i) for i in indices),
        estimator=estimator,
    )
    return map_chunks(fn, replications, workers, chunk_size)
