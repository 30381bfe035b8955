"""Resolution-dependent damping of drift and diffusion coefficients.

Two damping factors are provided, both scalar multipliers in (0, 1]:

  model1:  1 / (1 + n^-alpha |b(t,x)| + n^-alpha |sigma(t,x)|^2)
  model2:  1 / (1 + n^-alpha |x|^l)

applied to the drift and the diffusion alike.  |x| is Euclidean, |sigma| is
the Frobenius norm.  Because the factor is a positive scalar, damping never
flips the sign of x.b and the damped coefficients are pointwise dominated by
the raw ones.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    CheckResult,
    ConditionCertificate,
    ConditionReport,
    SampleSpec,
    SdeProblem,
    TamingScheme,
    VIOLATION_SLACK,
    _fro2,
    _norm,
)


@dataclass(frozen=True, eq=False)
class TamedCoefficients:
    """Coefficients (b_n, sigma_n) of one problem at one resolution.

    ``drift_n``/``diffusion_n`` follow the same vectorized calling convention
    as the raw problem coefficients.  ``both`` evaluates the pair with a
    single evaluation of the raw coefficients (the hot-loop entry point; the
    factor is recomputed per call, never cached).
    """

    resolution: int
    drift_n: object
    diffusion_n: object
    both: object
    problem: SdeProblem
    scheme: TamingScheme


def _factor_model1(problem, na):
    def factor(t, x, b, s):
        return 1.0 / (1.0 + na * _norm(b) + na * _fro2(s))

    return factor


def _factor_model2(na, l):
    # common degrees avoid pow, whose vectorized and scalar code paths can
    # disagree by an ulp; the jitted kernel mirrors these branches exactly
    if l == 0:
        const = 1.0 / (1.0 + na)

        def factor(t, x, b, s):
            return np.full(x.shape[:-1], const)
    elif l == 1:
        def factor(t, x, b, s):
            return 1.0 / (1.0 + na * _norm(x))
    elif l == 2:
        def factor(t, x, b, s):
            r = _norm(x)
            return 1.0 / (1.0 + na * (r * r))
    else:
        def factor(t, x, b, s):
            return 1.0 / (1.0 + na * _norm(x) ** l)

    return factor


def _build(problem: SdeProblem, scheme: TamingScheme, n: int) -> TamedCoefficients:
    if scheme.kind == "identity":
        def both(t, x):
            return problem.drift(t, x), problem.diffusion(t, x)

        return TamedCoefficients(
            n, problem.drift, problem.diffusion, both, problem, scheme
        )

    na = float(n) ** -scheme.alpha
    if scheme.kind == "model1":
        factor = _factor_model1(problem, na)
    else:
        factor = _factor_model2(na, scheme.l)

    def both(t, x):
        b = problem.drift(t, x)
        s = problem.diffusion(t, x)
        f = factor(t, x, b, s)
        return b * f[..., None], s * f[..., None, None]

    def drift_n(t, x):
        return both(t, x)[0]

    def diffusion_n(t, x):
        return both(t, x)[1]

    return TamedCoefficients(n, drift_n, diffusion_n, both, problem, scheme)


def tame(problem: SdeProblem, scheme: TamingScheme, n: int) -> TamedCoefficients:
    """Tamed coefficients of ``problem`` under ``scheme`` at resolution ``n``."""
    if n < 1:
        raise ValueError("resolution must be >= 1")
    return _build(problem, scheme, n)


def tame_model1(problem: SdeProblem, n: int, alpha: float = 0.5) -> TamedCoefficients:
    return tame(problem, TamingScheme.model1(alpha), n)


def tame_model2(problem: SdeProblem, n: int, alpha: float = 0.5, l: float = 0.0) -> TamedCoefficients:
    return tame(problem, TamingScheme.model2(alpha, l), n)


def tame_identity(problem: SdeProblem, n: int = 1) -> TamedCoefficients:
    return tame(problem, TamingScheme.identity(), n)


def _merge(name: str, excess: np.ndarray, xs: np.ndarray, t: float) -> CheckResult:
    bad = excess > VIOLATION_SLACK
    n_bad = int(bad.sum())
    if n_bad:
        i = int(np.argmax(excess))
        return CheckResult(name, float(excess[i]), n_bad, excess.size, (t, xs[i]))
    return CheckResult(name, 0.0, 0, excess.size)


def check_B2(
    tamed: TamedCoefficients, C: float, sample_spec: SampleSpec = SampleSpec()
) -> ConditionReport:
    """Sampled check of the linear-growth caps on the damped coefficients:

      |b_n|       <= min(C n^alpha (1 + |x|),   |b|)
      |sigma_n|^2 <= min(C n^alpha (1 + |x|^2), |sigma|^2)
    """
    problem = tamed.problem
    n_alpha = float(tamed.resolution) ** tamed.scheme.alpha
    checks = []
    for t in sample_spec.times(problem.horizon):
        xs = sample_spec.points(problem.dim_state)
        b = np.asarray(problem.drift(float(t), xs), dtype=float)
        s = np.asarray(problem.diffusion(float(t), xs), dtype=float)
        bn, sn = tamed.both(float(t), xs)
        xn = _norm(xs)
        cap_b = np.minimum(C * n_alpha * (1 + xn), _norm(b))
        cap_s = np.minimum(C * n_alpha * (1 + xn * xn), _fro2(s))
        checks.append(_merge("drift-growth-cap", _norm(bn) - cap_b, xs, float(t)))
        checks.append(_merge("diffusion-growth-cap", _fro2(sn) - cap_s, xs, float(t)))
    merged = []
    for name in ("drift-growth-cap", "diffusion-growth-cap"):
        rows = [c for c in checks if c.name == name]
        worst = max(rows, key=lambda c: c.max_violation)
        merged.append(
            CheckResult(name, worst.max_violation,
                        sum(c.n_violations for c in rows),
                        sum(c.n_samples for c in rows), worst.worst_point)
        )
    return ConditionReport(tuple(merged))


def check_B3(
    tamed: TamedCoefficients,
    cert: ConditionCertificate,
    sample_spec: SampleSpec = SampleSpec(),
) -> ConditionReport:
    """Sampled coercivity check on the damped coefficients:

      2 x.b_n + (p0-1)|sigma_n|^2 <= K (1 + |x|^2)
    """
    problem = tamed.problem
    checks = []
    for t in sample_spec.times(problem.horizon):
        xs = sample_spec.points(problem.dim_state)
        bn, sn = tamed.both(float(t), xs)
        lhs = 2 * (xs * bn).sum(-1) + (cert.p0 - 1) * _fro2(sn)
        rhs = cert.K * (1 + (xs * xs).sum(-1))
        checks.append(_merge("damped-coercivity", lhs - rhs, xs, float(t)))
    worst = max(checks, key=lambda c: c.max_violation)
    merged = CheckResult(
        "damped-coercivity", worst.max_violation,
        sum(c.n_violations for c in checks),
        sum(c.n_samples for c in checks), worst.worst_point,
    )
    return ConditionReport((merged,))


def check_B1_rate(
    problem: SdeProblem,
    scheme: TamingScheme,
    R: float,
    n_list,
    grid_points: int = 513,
    n_times: int = 3,
) -> list[tuple[int, float, float]]:
    """Sup-distance of damped to raw coefficients over the ball |x| <= R.

    Returns rows ``(n, sup|b_n - b|, sup|sigma_n - sigma|)`` with the sup
    taken over a deterministic grid of the ball and over a time grid; a
    discrete stand-in for the vanishing-difference requirement.  For the
    damping schemes the sup decays like n^-alpha once n^-alpha R^l is small.
    """
    if R <= 0:
        raise ValueError("R must be positive")
    if not n_list:
        raise ValueError("n_list must be nonempty")
    d = problem.dim_state
    if d == 1:
        xs = np.linspace(-R, R, grid_points)[:, None]
    else:
        rng = np.random.default_rng(0)  # fixed seed: grid is deterministic
        xs = rng.uniform(-R, R, size=(grid_points, d))
        xs = xs[(xs * xs).sum(-1) <= R * R]
    times = np.linspace(0.0, problem.horizon, n_times)
    rows = []
    for n in n_list:
        tamed = tame(problem, scheme, n)
        sup_b = 0.0
        sup_s = 0.0
        for t in times:
            b = np.asarray(problem.drift(float(t), xs), dtype=float)
            s = np.asarray(problem.diffusion(float(t), xs), dtype=float)
            bn, sn = tamed.both(float(t), xs)
            sup_b = max(sup_b, float(_norm(bn - b).max()))
            sup_s = max(sup_s, float(np.sqrt(_fro2(sn - s)).max()))
        rows.append((int(n), sup_b, sup_s))
    return rows
