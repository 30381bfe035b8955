"""Hot simulation loops: numba-jitted kernels with a pure-numpy fallback.

Backend selection is controlled by the environment variable

    TAMEDSDE_BACKEND = auto | numba | numpy        (default: auto)

``auto`` uses the jitted kernels whenever numba is importable *and* the
problem carries a compiled-kernel handle (all catalog models do); problems
defined by arbitrary Python callables always run on the numpy path.  Both
backends perform the identical sequence of floating-point operations, so for
scalar problems they agree bit-for-bit; for multi-dimensional problems they
agree to a few ulp (summation grouping may differ) — see the tests.

The numpy path vectorizes one Euler step across all paths of a batch; the
numba path parallelizes across paths with a sequential time loop per path.
Each path writes only its own output rows, so results are independent of the
thread count.
"""
from __future__ import annotations

import os
import warnings

import numpy as np

from .brownian import grid_times, interval_lengths, n_intervals

try:
    from numba import njit, prange
    from numba import set_num_threads as _numba_set_threads

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap

    prange = range
    _numba_set_threads = None

_MODEL_IDS = {"linear": 0, "ginzburg-landau": 1, "three-half": 2}
_TAME_IDS = {"identity": 0, "model1": 1, "model2": 2}

_ENV_VAR = "TAMEDSDE_BACKEND"


def resolve_backend(backend: str | None = None) -> str:
    """Return 'numba' or 'numpy' from an explicit request or the environment."""
    choice = backend or os.environ.get(_ENV_VAR, "auto")
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(f"{_ENV_VAR} must be auto, numba or numpy, got {choice!r}")
    if choice == "numpy":
        return "numpy"
    if choice == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but numba is not importable")
        return "numba"
    return "numba" if HAVE_NUMBA else "numpy"


def kernel_supported(problem) -> bool:
    """True if the problem carries a handle the jitted kernel understands."""
    return problem.kernel is not None and problem.kernel.model_id in _MODEL_IDS


def set_threads(n: int) -> None:
    """Cap the parallel degree of the numba backend (no-op without numba)."""
    if HAVE_NUMBA and n > 0:
        _numba_set_threads(n)


@njit(cache=True, parallel=True)
def _simulate_kernel(model_id, mp, xi, tame_kind, na, l_exp, x0, dts, dW, states, diverged):
    B, K, d1 = dW.shape
    d = x0.shape[1]
    for i in prange(B):
        xc = np.empty(d)
        bv = np.empty(d)
        sv = np.empty((d, d1))
        for j in range(d):
            xc[j] = x0[i, j]
            states[i, 0, j] = xc[j]
        ok = True
        for k in range(K):
            if not ok:
                for j in range(d):
                    states[i, k + 1, j] = np.nan
                continue
            if model_id == 0:  # linear scalar: b = a x, sigma = c x
                bv[0] = mp[0] * xc[0]
                sv[0, 0] = mp[1] * xc[0]
            elif model_id == 1:  # cubic-drift scalar: b = a x - x^3, sigma = c x
                bv[0] = mp[0] * xc[0] - xc[0] * xc[0] * xc[0]
                sv[0, 0] = mp[1] * xc[0]
            else:  # mean-reverting 3/2-power model
                r2 = 0.0
                for j in range(d):
                    r2 += xc[j] * xc[j]
                r = np.sqrt(r2)
                for j in range(d):
                    bv[j] = mp[0] * xc[j] * (mp[1] - r)
                r15 = r * np.sqrt(r)
                for j in range(d):
                    for m in range(d1):
                        sv[j, m] = xi[j, m] * r15
            if tame_kind == 1:
                nb2 = 0.0
                s2 = 0.0
                for j in range(d):
                    nb2 += bv[j] * bv[j]
                for j in range(d):
                    for m in range(d1):
                        s2 += sv[j, m] * sv[j, m]
                f = 1.0 / (1.0 + na * np.sqrt(nb2) + na * s2)
            elif tame_kind == 2:
                r2 = 0.0
                for j in range(d):
                    r2 += xc[j] * xc[j]
                r = np.sqrt(r2)
                if l_exp == 0.0:
                    f = 1.0 / (1.0 + na)
                elif l_exp == 1.0:
                    f = 1.0 / (1.0 + na * r)
                elif l_exp == 2.0:
                    f = 1.0 / (1.0 + na * (r * r))
                else:
                    f = 1.0 / (1.0 + na * r ** l_exp)
            else:
                f = 1.0
            dt = dts[k]
            fin = True
            for j in range(d):
                noise = 0.0
                for m in range(d1):
                    noise += (f * sv[j, m]) * dW[i, k, m]
                acc = (xc[j] + (f * bv[j]) * dt) + noise
                xc[j] = acc
                states[i, k + 1, j] = acc
                if not np.isfinite(acc):
                    fin = False
            if not fin:
                ok = False
                diverged[i] = True
                for j in range(d):
                    states[i, k + 1, j] = np.nan


def _simulate_numpy(both, times, dts, dW, x0, states):
    x = x0.copy()
    states[:, 0] = x
    with np.errstate(all="ignore"):
        for k in range(dW.shape[1]):
            b, s = both(times[k], x)
            x = (x + b * dts[k]) + np.einsum("bjm,bm->bj", s, dW[:, k])
            states[:, k + 1] = x
    # normalize diverged rows: finite prefix, NaN from the first bad state on
    finite = np.isfinite(states).all(axis=2)
    diverged = ~finite.all(axis=1)
    for i in np.nonzero(diverged)[0]:
        states[i, int(np.argmin(finite[i])):] = np.nan
    return diverged


def simulate_batch(tamed, dW: np.ndarray, x0: np.ndarray, horizon: float,
                   backend: str | None = None):
    """Run the explicit scheme for a batch of paths at one resolution.

    tamed   -- TamedCoefficients at resolution n
    dW      -- increments over the n-grid, shape (B, K, d1)
    x0      -- initial states, shape (B, d)
    returns (states, diverged): shapes (B, K+1, d) and (B,).  Diverged rows
    hold their finite prefix followed by NaNs.
    """
    problem = tamed.problem
    n = tamed.resolution
    K = n_intervals(n, horizon)
    if dW.shape[1] != K:
        raise ValueError(f"expected {K} increments for resolution {n}, got {dW.shape[1]}")
    B = dW.shape[0]
    states = np.empty((B, K + 1, problem.dim_state))
    dts = interval_lengths(n, horizon)
    which = resolve_backend(backend)
    if which == "numba" and kernel_supported(problem):
        spec = problem.kernel
        xi = spec.matrix if spec.matrix is not None else np.zeros((1, 1))
        scheme = tamed.scheme
        na = float(n) ** -scheme.alpha if scheme.kind != "identity" else 0.0
        l_exp = float(scheme.l) if scheme.kind == "model2" else 0.0
        diverged = np.zeros(B, dtype=np.bool_)
        _simulate_kernel(
            _MODEL_IDS[spec.model_id],
            np.asarray(spec.params, dtype=float),
            np.ascontiguousarray(xi, dtype=float),
            _TAME_IDS[scheme.kind],
            na,
            l_exp,
            np.ascontiguousarray(x0, dtype=float),
            dts,
            np.ascontiguousarray(dW, dtype=float),
            states,
            diverged,
        )
        return states, diverged
    if which == "numba" and backend == "numba":
        warnings.warn(
            "numba backend requested but the problem has no compiled kernel;"
            " falling back to numpy", RuntimeWarning,
        )
    times = grid_times(n, horizon)
    diverged = _simulate_numpy(tamed.both, times, dts, dW, np.asarray(x0, float), states)
    return states, diverged
