"""Explicit Euler scheme with frozen left-endpoint coefficients, plus the
coupled-path Monte Carlo engines.

The scheme advances on the uniform grid t_k = k/n (final step clipped to the
horizon), evaluating the damped coefficients at the left grid point only:

    X(t_{k+1}) = X(t_k) + b_n(t_k, X(t_k)) dt_k + sigma_n(t_k, X(t_k)) dW_k

Path-level parallelism: every path owns its RNG streams and output rows, so
estimates are bit-identical for any batch size and thread count; reductions
happen once over full per-path arrays in path-id order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .brownian import (
    INITIAL_STREAM,
    BrownianTree,
    aggregate_increments,
    batch_increments,
    grid_times,
    n_intervals,
    path_rng,
)
from .core import SdeProblem, TamingScheme
from .taming import TamedCoefficients, tame


def kappa(n: int, t: float) -> float:
    """Left grid point floor(n*t)/n.

    The candidate from the rounded product n*t can be off by one when n*t
    sits within an ulp of an integer, so it is corrected against the grid
    values themselves; this makes grid points exact fixed points,
    kappa(n, k/n) == k/n, even when k/n is not representable.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if t < 0:
        raise ValueError("t must be nonnegative")
    k = math.floor(n * t)
    while (k + 1) / n <= t:
        k += 1
    while k > 0 and k / n > t:
        k -= 1
    return k / n


def euler_step(x: np.ndarray, t_k: float, dt: float, dw: np.ndarray,
               coeffs: TamedCoefficients) -> np.ndarray:
    """One explicit step from state ``x`` at time ``t_k``.

    Coefficients are evaluated at the left endpoint state only, never at
    intermediate states.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    dw = np.atleast_1d(np.asarray(dw, dtype=float))
    b, s = coeffs.both(t_k, x[None])
    return (x + b[0] * dt) + s[0] @ dw


@dataclass(frozen=True, eq=False)
class GridPath:
    """States of one simulated path on the resolution-n grid."""

    resolution: int
    times: np.ndarray
    states: np.ndarray  # (K+1, d)
    diverged: bool


def _initial_batch(problem: SdeProblem, master_seed: int, path_ids) -> np.ndarray:
    if callable(problem.initial):
        out = np.empty((len(path_ids), problem.dim_state))
        for row, pid in enumerate(path_ids):
            rng = path_rng(master_seed, pid, INITIAL_STREAM)
            x0 = np.atleast_1d(np.asarray(problem.initial(rng), dtype=float))
            if x0.shape != (problem.dim_state,) or not np.isfinite(x0).all():
                raise ValueError(f"initial sampler returned invalid value {x0}")
            out[row] = x0
        return out
    return np.broadcast_to(problem.initial, (len(path_ids), problem.dim_state)).copy()


def simulate_path(problem: SdeProblem, scheme: TamingScheme, n: int,
                  tree: BrownianTree, backend: str | None = None) -> GridPath:
    """Run the scheme at resolution ``n`` driven by one Brownian tree."""
    if tree.finest_resolution % n != 0:
        raise ValueError(f"{n} does not divide {tree.finest_resolution}")
    if tree.dim_noise != problem.dim_noise:
        raise ValueError("tree and problem disagree on the noise dimension")
    dw = tree.increments(n)[None]
    x0 = _initial_batch(problem, tree.master_seed, [tree.path_id])
    tamed = tame(problem, scheme, n)
    states, diverged = kernels.simulate_batch(tamed, dw, x0, problem.horizon, backend)
    return GridPath(n, grid_times(n, problem.horizon), states[0], bool(diverged[0]))


def simulate_coupled(problem: SdeProblem, scheme: TamingScheme, resolutions,
                     reference_resolution: int, tree: BrownianTree,
                     backend: str | None = None):
    """Paths at several resolutions driven by the same Brownian tree.

    Returns ``(paths, reference)`` where ``paths`` maps each resolution to
    its GridPath and ``reference`` is the path at ``reference_resolution``
    (damped at its own resolution), the stand-in for the exact solution.
    """
    for n in resolutions:
        if reference_resolution % n != 0:
            raise ValueError(f"{n} does not divide {reference_resolution}")
    if tree.finest_resolution != reference_resolution:
        raise ValueError("tree must be generated at the reference resolution")
    reference = simulate_path(problem, scheme, reference_resolution, tree, backend)
    paths = {int(n): simulate_path(problem, scheme, int(n), tree, backend)
             for n in resolutions}
    return paths, reference


def _shared_indices(n: int, n_ref: int, horizon: float) -> np.ndarray:
    """Fine-grid indices of the coarse grid points (coarse grid is a subset)."""
    stride = n_ref // n
    idx = np.arange(n_intervals(n, horizon) + 1) * stride
    idx[-1] = n_intervals(n_ref, horizon)
    return idx


def _norms(a: np.ndarray) -> np.ndarray:
    return np.sqrt((a * a).sum(axis=-1))


@dataclass(eq=False)
class CoupledResult:
    """Per-path coupled errors against the fine-grid reference proxy.

    ``norm_diffs[n]`` has shape (M, K_n+1): Euclidean distance between the
    reference path and the resolution-n path at the shared grid times.
    ``exact_norm_diffs`` holds the same against a closed-form solution when
    one was supplied.  Rows are indexed by path id.
    """

    model_name: str
    scheme: TamingScheme
    resolutions: tuple[int, ...]
    reference_resolution: int
    horizon: float
    path_count: int
    master_seed: int
    times: dict[int, np.ndarray]
    norm_diffs: dict[int, np.ndarray]
    diverged: dict[int, np.ndarray]
    ref_diverged: np.ndarray
    exact_norm_diffs: dict[int, np.ndarray] | None = None

    def diverged_count(self, n: int) -> int:
        return int(self.diverged[n].sum() + self.ref_diverged.sum())


def run_coupled_mc(problem: SdeProblem, scheme: TamingScheme, resolutions,
                   reference_resolution: int, path_count: int, master_seed: int,
                   *, batch_size: int = 2048, backend: str | None = None,
                   exact_solution=None) -> CoupledResult:
    """Monte Carlo over coupled paths at every resolution plus the reference.

    ``exact_solution(t, w)``, when given (scalar problems only), is evaluated
    on the shared grid from the same Brownian path and recorded as a second
    set of error rows.
    """
    resolutions = tuple(int(n) for n in sorted(resolutions))
    for n in resolutions:
        if reference_resolution % n != 0:
            raise ValueError(f"{n} does not divide {reference_resolution}")
    if path_count < 1:
        raise ValueError("path_count must be >= 1")
    if exact_solution is not None and problem.dim_state != 1:
        raise ValueError("exact-solution comparison supports scalar problems only")
    T = problem.horizon
    n_ref = reference_resolution
    tamed_ref = tame(problem, scheme, n_ref)
    tamed_by_n = {n: tame(problem, scheme, n) for n in resolutions}
    times = {n: grid_times(n, T) for n in resolutions}
    diffs = {n: np.empty((path_count, n_intervals(n, T) + 1)) for n in resolutions}
    ediffs = ({n: np.empty((path_count, n_intervals(n, T) + 1)) for n in resolutions}
              if exact_solution is not None else None)
    diverged = {n: np.zeros(path_count, dtype=bool) for n in resolutions}
    ref_diverged = np.zeros(path_count, dtype=bool)

    for lo in range(0, path_count, batch_size):
        ids = range(lo, min(lo + batch_size, path_count))
        rows = slice(lo, lo + len(ids))
        fine = batch_increments(master_seed, ids, n_ref, T, problem.dim_noise)
        x0 = _initial_batch(problem, master_seed, list(ids))
        ref, rdiv = kernels.simulate_batch(tamed_ref, fine, x0, T, backend)
        ref_diverged[rows] = rdiv
        if exact_solution is not None:
            w = np.concatenate(
                [np.zeros((len(ids), 1)), np.cumsum(fine[:, :, 0], axis=1)], axis=1
            )
        for n in resolutions:
            dw = aggregate_increments(fine, n, n_ref, T)
            st, dv = kernels.simulate_batch(tamed_by_n[n], dw, x0, T, backend)
            idx = _shared_indices(n, n_ref, T)
            with np.errstate(all="ignore"):
                diffs[n][rows] = _norms(ref[:, idx] - st)
                if exact_solution is not None:
                    ex = exact_solution(times[n][None, :], w[:, idx])
                    ediffs[n][rows] = np.abs(ex - st[:, :, 0])
            diverged[n][rows] = dv
    return CoupledResult(
        model_name=problem.name, scheme=scheme, resolutions=resolutions,
        reference_resolution=n_ref, horizon=T, path_count=path_count,
        master_seed=master_seed, times=times, norm_diffs=diffs,
        diverged=diverged, ref_diverged=ref_diverged, exact_norm_diffs=ediffs,
    )


@dataclass(eq=False)
class SingleResolutionStats:
    """Per-path state norms and one-step displacement norms at each resolution.

    All resolutions are driven by increments aggregated from one tree at
    ``finest``, so the same Brownian excursions hit every resolution and
    cross-resolution comparisons are not confounded by independent sampling
    noise.
    """

    model_name: str
    scheme: TamingScheme
    resolutions: tuple[int, ...]
    finest: int
    horizon: float
    path_count: int
    master_seed: int
    times: dict[int, np.ndarray]
    state_norms: dict[int, np.ndarray]  # (M, K_n+1) |X_n(t_k)|
    step_norms: dict[int, np.ndarray]   # (M, K_n)   |X_n(t_{k+1}) - X_n(t_k)|
    diverged: dict[int, np.ndarray]


def run_single_resolution(problem: SdeProblem, scheme: TamingScheme, resolutions,
                          path_count: int, master_seed: int, *,
                          finest: int | None = None, batch_size: int = 2048,
                          backend: str | None = None) -> SingleResolutionStats:
    """Independent (uncoupled-to-reference) runs at each resolution, sharing
    one Brownian tree across resolutions, for moment and one-step diagnostics."""
    resolutions = tuple(int(n) for n in sorted(resolutions))
    finest = int(finest) if finest is not None else max(resolutions)
    for n in resolutions:
        if finest % n != 0:
            raise ValueError(f"{n} does not divide {finest}")
    T = problem.horizon
    tamed_by_n = {n: tame(problem, scheme, n) for n in resolutions}
    norms = {n: np.empty((path_count, n_intervals(n, T) + 1)) for n in resolutions}
    steps = {n: np.empty((path_count, n_intervals(n, T))) for n in resolutions}
    diverged = {n: np.zeros(path_count, dtype=bool) for n in resolutions}
    for lo in range(0, path_count, batch_size):
        ids = range(lo, min(lo + batch_size, path_count))
        rows = slice(lo, lo + len(ids))
        fine = batch_increments(master_seed, ids, finest, T, problem.dim_noise)
        x0 = _initial_batch(problem, master_seed, list(ids))
        for n in resolutions:
            dw = aggregate_increments(fine, n, finest, T)
            st, dv = kernels.simulate_batch(tamed_by_n[n], dw, x0, T, backend)
            with np.errstate(all="ignore"):
                norms[n][rows] = _norms(st)
                steps[n][rows] = _norms(np.diff(st, axis=1))
            diverged[n][rows] = dv
    return SingleResolutionStats(
        model_name=problem.name, scheme=scheme, resolutions=resolutions,
        finest=finest, horizon=T, path_count=path_count, master_seed=master_seed,
        times={n: grid_times(n, T) for n in resolutions},
        state_norms=norms, step_norms=steps, diverged=diverged,
    )
