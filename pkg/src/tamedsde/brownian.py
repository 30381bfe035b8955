"""Wiener increment generation with exact coupling across grid resolutions.

Increments are generated once at a finest dyadic-style resolution ``n_ref``
and summed down to any coarser resolution ``n`` that divides it, so the
coarse increment over ``[k/n, (k+1)/n]`` is the sum of the fine increments
it contains: no resampling, pairwise accumulation, bit-reproducible for a
given segment.  Every path owns private counter-based streams:

    Philox keyed by SeedSequence(entropy=master_seed, spawn_key=(path_id, s))

with substream s = 0 for Wiener increments and s = 1 for the draw of a
random initial value, which makes a path reproducible from
``(master_seed, path_id)`` alone, independent of batching, scheduling or how
many paths run in parallel.  Gaussians come from the inverse normal CDF
applied to the stream's uniforms (the single documented sampling rule; a
uniform of exactly 0 is clamped to 2**-54 to avoid the -inf tail).
"""
from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_U_FLOOR = 2.0 ** -54

INCREMENT_STREAM = 0
INITIAL_STREAM = 1


def path_rng(master_seed: int, path_id: int, stream: int = INCREMENT_STREAM) -> np.random.Generator:
    """The per-path random stream; the only RNG construction in the package."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(path_id, stream))
    return np.random.Generator(np.random.Philox(ss))


def n_intervals(n: int, horizon: float) -> int:
    """Number of grid intervals: ceil(n * horizon), exact in rational arithmetic."""
    num, den = float(horizon).as_integer_ratio()
    return -((-n * num) // den)


def grid_times(n: int, horizon: float) -> np.ndarray:
    """Times k/n for k = 0..ceil(n*horizon), with the final point clipped to horizon."""
    k = n_intervals(n, horizon)
    t = np.arange(k + 1) / n
    t[-1] = horizon
    return t


def interval_lengths(n: int, horizon: float) -> np.ndarray:
    """Step sizes 1/n, except a possibly shorter final step reaching horizon."""
    k = n_intervals(n, horizon)
    dts = np.full(k, 1.0 / n)
    dts[-1] = horizon - (k - 1) / n
    return dts


def draw_increments(rng: np.random.Generator, n: int, horizon: float, d1: int) -> np.ndarray:
    """Increments over the n-grid of [0, horizon], shape (K, d1), var dt_k per row."""
    dts = interval_lengths(n, horizon)
    u = rng.random((len(dts), d1))
    z = ndtri(np.maximum(u, _U_FLOOR))
    return z * np.sqrt(dts)[:, None]


def aggregate_increments(fine: np.ndarray, n: int, n_ref: int, horizon: float) -> np.ndarray:
    """Sum fine increments (…, K_ref, d1) at resolution n_ref down to resolution n.

    Requires n to divide n_ref; the coarse grid is then a subset of the fine
    grid and each coarse increment is the sum of consecutive fine ones.  All
    coarse intervals cover ``n_ref//n`` fine rows except possibly the final
    (clipped) one.  Summation is numpy's pairwise reduction per segment, so
    the result is independent of batching.
    """
    if n_ref % n != 0:
        raise ValueError(f"{n} does not divide {n_ref}")
    if n == n_ref:
        return fine
    stride = n_ref // n
    k_coarse = n_intervals(n, horizon)
    k_fine = fine.shape[-2]
    body = k_coarse - 1
    lead = fine.shape[:-2]
    d1 = fine.shape[-1]
    head = fine[..., : body * stride, :].reshape(lead + (body, stride, d1)).sum(axis=-2)
    tail = fine[..., body * stride: k_fine, :].sum(axis=-2)[..., None, :]
    return np.concatenate([head, tail], axis=-2)


def batch_increments(
    master_seed: int, path_ids, n_ref: int, horizon: float, d1: int
) -> np.ndarray:
    """Stack per-path fine increments for a batch, shape (B, K_ref, d1)."""
    path_ids = list(path_ids)
    k = n_intervals(n_ref, horizon)
    out = np.empty((len(path_ids), k, d1))
    for row, pid in enumerate(path_ids):
        out[row] = draw_increments(path_rng(master_seed, pid), n_ref, horizon, d1)
    return out


class BrownianTree:
    """One path's Wiener increments at a finest resolution, aggregatable downward.

    Fully deterministic given (master_seed, path_id); the fine increments are
    generated lazily on first access and cached.
    """

    def __init__(self, master_seed: int, path_id: int, finest_resolution: int,
                 horizon: float, dim_noise: int = 1):
        if finest_resolution < 1:
            raise ValueError("finest_resolution must be >= 1")
        self.master_seed = int(master_seed)
        self.path_id = int(path_id)
        self.finest_resolution = int(finest_resolution)
        self.horizon = float(horizon)
        self.dim_noise = int(dim_noise)
        self._fine: np.ndarray | None = None

    @property
    def fine_increments(self) -> np.ndarray:
        if self._fine is None:
            rng = path_rng(self.master_seed, self.path_id)
            self._fine = draw_increments(
                rng, self.finest_resolution, self.horizon, self.dim_noise
            )
        return self._fine

    def increments(self, n: int) -> np.ndarray:
        """Increments over the n-grid, exact sums of the fine increments."""
        return aggregate_increments(
            self.fine_increments, n, self.finest_resolution, self.horizon
        )

    def wiener_values(self, n: int) -> np.ndarray:
        """W evaluated at the n-grid times (cumulative fine sums), shape (K_n+1, d1)."""
        if self.finest_resolution % n != 0:
            raise ValueError(f"{n} does not divide {self.finest_resolution}")
        fine = self.fine_increments
        w = np.concatenate([np.zeros((1, self.dim_noise)), np.cumsum(fine, axis=0)])
        stride = self.finest_resolution // n
        idx = np.arange(n_intervals(n, self.horizon) + 1) * stride
        idx[-1] = len(fine)
        return w[idx]
