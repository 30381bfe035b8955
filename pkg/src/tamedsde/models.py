"""Catalog of concrete SDEs with analytically derived condition certificates.

Each builder returns a :class:`ModelSpec` whose certificate constants are
derived in closed form from the model parameters (derivations sketched in
the builder docstrings) and validated by the sampled checker in the tests.
The coefficient closures are written so that the numpy backend reproduces
the jitted kernels' arithmetic operation for operation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import ConditionCertificate, KernelSpec, SdeProblem


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """A catalog entry: problem, certificate, and optional exact oracles.

    ``exact_solution(t, w)`` maps grid times ``(K+1,)`` and Wiener values
    ``(..., K+1)`` to exact solution values (scalar models only).
    ``moment_oracle(t, p)`` returns E|X(t)|^p in closed form where known.
    """

    name: str
    params: dict
    problem: SdeProblem
    certificate: ConditionCertificate
    sampling_radius: float
    notes: str = ""
    exact_solution: Callable | None = None
    moment_oracle: Callable | None = None


def _norm_last(x: np.ndarray) -> np.ndarray:
    return np.sqrt((x * x).sum(axis=-1))


def three_half_model(lam: float = 2.5, mu: float = 1.0, xi=1.0, x0=1.0) -> ModelSpec:
    """Mean-reverting model with 3/2-power diffusion:

        dX = lam * X * (mu - |X|) dt + xi * |X|^(3/2) dW

    Both coefficients grow superlinearly.  With s2 = |xi|^2 (Frobenius), the
    growth/monotonicity constants are

        p0 = (2*lam + s2) / s2,   p1 = (lam + s2) / s2,   K = L = 2*lam*mu,

    with drift growth degree l = 1: the coercivity left side equals
    2*lam*mu*|x|^2 + ((p0-1)*s2 - 2*lam)*|x|^3, whose cubic term vanishes at
    the stated p0, and the monotonicity cross terms cancel at the stated p1
    because |sigma(x)-sigma(y)|^2 <= 2*s2*(|x|+|y|)*(|x|-|y|)^2.

    For d > 1, a scalar ``xi`` is embedded as xi * I(d, d1); a matrix ``xi``
    is used as given and must have xi.xi^T positive definite (the package's
    reading of positive definiteness for rectangular coefficient matrices).
    The stated L also serves as the polynomial Lipschitz constant, which
    requires mu >= 1/2; the sampled checker refutes certificates outside
    that range.
    """
    if lam <= 0 or mu <= 0:
        raise ValueError("lam and mu must be positive")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if (x0 <= 0).any():
        raise ValueError("all components of x0 must be positive")
    d = len(x0)
    if np.ndim(xi) == 0:
        if float(xi) <= 0:
            raise ValueError("scalar xi must be positive")
        xi_mat = float(xi) * np.eye(d, d)
        d1 = d
    else:
        xi_mat = np.asarray(xi, dtype=float)
        if xi_mat.ndim != 2 or xi_mat.shape[0] != d:
            raise ValueError(f"xi must have shape ({d}, d1)")
        d1 = xi_mat.shape[1]
        gram_eigs = np.linalg.eigvalsh(xi_mat @ xi_mat.T)
        if gram_eigs.min() <= 0:
            raise ValueError("xi @ xi.T must be positive definite")
    s2 = float((xi_mat * xi_mat).sum())

    def drift(t, x):
        r = _norm_last(x)
        return lam * x * (mu - r)[..., None]

    def diffusion(t, x):
        r = _norm_last(x)
        # r * sqrt(r) instead of r**1.5: sqrt and multiply are correctly
        # rounded, so the numpy and jitted backends agree bit for bit
        return xi_mat * (r * np.sqrt(r))[..., None, None]

    cert = ConditionCertificate(
        p0=(2 * lam + s2) / s2,
        p1=(lam + s2) / s2,
        K=2 * lam * mu,
        L=2 * lam * mu,
        l=1.0,
    )
    problem = SdeProblem(
        drift=drift, diffusion=diffusion, dim_state=d, dim_noise=d1,
        horizon=1.0, initial=x0, name="three-half",
        kernel=KernelSpec("three-half", (float(lam), float(mu)), xi_mat),
    )
    return ModelSpec(
        name="three-half",
        params={"lam": lam, "mu": mu, "xi": xi if np.ndim(xi) == 0 else xi_mat,
                "x0": x0 if d > 1 else float(x0[0])},
        problem=problem,
        certificate=cert,
        sampling_radius=10.0,
        notes=(
            "p0 = (2*lam+|xi|^2)/|xi|^2, p1 = (lam+|xi|^2)/|xi|^2, K = L = 2*lam*mu,"
            " l = 1; drift differences obey |b(x)-b(y)| <="
            " lam*max(mu,1)*(1+|x|+|y|)*|x-y| (certificate L covers it for mu >= 1/2)."
        ),
    )


def ginzburg_landau_model(a: float = 1.0, c: float = 1.0, x0: float = 1.0,
                          p0: float = 12.0, p1: float = 4.0) -> ModelSpec:
    """Scalar double-well-drift model with linear noise:

        dX = (a X - X^3) dt + c X dW

    The cubic drift is superlinear (growth degree l = 2); the diffusion is
    globally Lipschitz, so the coercivity exponent p0 is unconstrained and
    only enlarges K.  Constant derivations:

      coercivity:     2x(ax - x^3) + (p0-1)c^2 x^2
                        = (2a + (p0-1)c^2) x^2 - 2x^4 <= K (1+x^2)
                      with K = 2a + (p0-1)c^2 (the quartic term only helps);
      monotonicity:   (x-y)(x^3-y^3) >= 0 gives
                      2(x-y)(b(x)-b(y)) + (p1-1)c^2(x-y)^2
                        <= (2a + (p1-1)c^2)(x-y)^2;
      poly-Lipschitz: |b(x)-b(y)| <= (a + x^2+|xy|+y^2)|x-y|
                        <= max(a, 3/2) (1 + x^2 + y^2) |x-y|.

    The certificate takes L as the max of the last two constants.
    """
    if a <= 0 or c <= 0:
        raise ValueError("a and c must be positive")

    def drift(t, x):
        return a * x - x * x * x

    def diffusion(t, x):
        return (c * x)[..., None]

    cert = ConditionCertificate(
        p0=p0, p1=p1,
        K=2 * a + (p0 - 1) * c * c,
        L=max(2 * a + (p1 - 1) * c * c, a, 1.5),
        l=2.0,
    )
    problem = SdeProblem(
        drift=drift, diffusion=diffusion, dim_state=1, dim_noise=1,
        horizon=1.0, initial=np.array([float(x0)]), name="ginzburg-landau",
        kernel=KernelSpec("ginzburg-landau", (float(a), float(c))),
    )
    return ModelSpec(
        name="ginzburg-landau",
        params={"a": a, "c": c, "x0": x0, "p0": p0, "p1": p1},
        problem=problem,
        certificate=cert,
        sampling_radius=10.0,
        notes="K = 2a+(p0-1)c^2; L = max(2a+(p1-1)c^2, a, 3/2); l = 2.",
    )


def linear_model(a: float = 0.05, c: float = 0.2, x0: float = 1.0,
                 p0: float = 6.0, p1: float = 3.5) -> ModelSpec:
    """Scalar geometric Brownian motion: dX = a X dt + c X dW.

    Globally Lipschitz (growth degree l = 0) with the closed-form solution

        X(t) = x0 * exp((a - c^2/2) t + c W(t))

    exposed as an exact oracle, and E|X(t)|^p = |x0|^p exp(p a t +
    p (p-1) c^2 t / 2) as a moment oracle.  Certificate: K = 2a + (p0-1)c^2,
    L = max(2a + (p1-1)c^2, a), l = 0 (any exponents work, they only scale
    the constants).
    """
    def drift(t, x):
        return a * x

    def diffusion(t, x):
        return (c * x)[..., None]

    def exact_solution(t, w):
        return x0 * np.exp((a - 0.5 * c * c) * t + c * w)

    def moment_oracle(t, p):
        return abs(x0) ** p * np.exp(p * a * t + 0.5 * p * (p - 1) * c * c * t)

    cert = ConditionCertificate(
        p0=p0, p1=p1,
        K=max(2 * a + (p0 - 1) * c * c, 1e-12),
        L=max(2 * a + (p1 - 1) * c * c, abs(a), 1e-12),
        l=0.0,
    )
    problem = SdeProblem(
        drift=drift, diffusion=diffusion, dim_state=1, dim_noise=1,
        horizon=1.0, initial=np.array([float(x0)]), name="linear",
        kernel=KernelSpec("linear", (float(a), float(c))),
    )
    return ModelSpec(
        name="linear",
        params={"a": a, "c": c, "x0": x0, "p0": p0, "p1": p1},
        problem=problem,
        certificate=cert,
        sampling_radius=10.0,
        notes="Globally Lipschitz benchmark with exact solution and moment oracles.",
        exact_solution=exact_solution,
        moment_oracle=moment_oracle,
    )


MODELS: dict[str, Callable[..., ModelSpec]] = {
    "three-half": three_half_model,
    "ginzburg-landau": ginzburg_landau_model,
    "linear": linear_model,
}


def get_model(name: str, **params) -> ModelSpec:
    """Construct a catalog model by name with keyword parameter overrides."""
    try:
        builder = MODELS[name]
    except KeyError:
        raise KeyError(
            f"unknown model {name!r}; available: {', '.join(sorted(MODELS))}"
        ) from None
    return builder(**params)
