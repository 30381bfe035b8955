"""Domain types for SDE problems, taming configuration and condition checking.

No path simulation happens here; this module only holds validated data and
the sampled refutation checkers for the structural conditions a problem is
claimed to satisfy (coercivity, monotonicity, polynomial Lipschitz growth)
together with the admissibility gate for the order-1/2 rate guarantee.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

# Absolute slack used by every inequality checker; absorbs floating-point
# noise at equality boundaries (several catalog certificates are tight).
VIOLATION_SLACK = 1e-9

TAMING_KINDS = ("identity", "model1", "model2")


class ModelEvaluationError(RuntimeError):
    """A coefficient function returned a non-finite value at a finite input."""


@dataclass(frozen=True)
class KernelSpec:
    """Compiled-kernel handle for a catalog model: id plus flat parameters.

    ``matrix`` carries the diffusion coefficient matrix for models that have
    one (shape ``(dim_state, dim_noise)``); scalar models pass None.
    """

    model_id: str
    params: tuple[float, ...]
    matrix: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class SdeProblem:
    """An SDE ``dX = b(t, X) dt + sigma(t, X) dW`` on ``[0, horizon]``.

    ``drift`` maps ``(t, x)`` with ``x`` of shape ``(..., d)`` to ``(..., d)``;
    ``diffusion`` maps to ``(..., d, d1)``.  Both must be vectorized over the
    leading axes and must propagate (never raise on) non-finite states, which
    the integrator relies on for divergence detection of untamed runs.

    ``initial`` is either a fixed vector of shape ``(d,)`` or a callable
    ``rng -> vector`` drawing an initial value from the given generator.
    """

    drift: Callable[[float, np.ndarray], np.ndarray]
    diffusion: Callable[[float, np.ndarray], np.ndarray]
    dim_state: int
    dim_noise: int
    horizon: float
    initial: np.ndarray | Callable
    name: str = ""
    kernel: KernelSpec | None = None

    def __post_init__(self):
        if self.dim_state < 1 or self.dim_noise < 1:
            raise ValueError("dim_state and dim_noise must be >= 1")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if not callable(self.initial):
            x0 = np.atleast_1d(np.asarray(self.initial, dtype=float))
            if x0.shape != (self.dim_state,):
                raise ValueError(
                    f"initial value has shape {x0.shape}, expected ({self.dim_state},)"
                )
            if not np.isfinite(x0).all():
                raise ValueError("initial value must be finite")
            object.__setattr__(self, "initial", x0)

    def initial_value(self, rng) -> np.ndarray:
        if callable(self.initial):
            x0 = np.atleast_1d(np.asarray(self.initial(rng), dtype=float))
        else:
            x0 = self.initial
        return x0


@dataclass(frozen=True)
class ConditionCertificate:
    """User-declared constants for the growth and monotonicity conditions.

    p0 -- coercivity exponent:  2 x.b + (p0-1)|sigma|^2 <= K (1+|x|^2)
    p1 -- monotonicity exponent:
          2 (x-y).(b(x)-b(y)) + (p1-1)|sigma(x)-sigma(y)|^2 <= L |x-y|^2
    L  -- also the polynomial Lipschitz constant of the drift:
          |b(x)-b(y)| <= L (1+|x|^l+|y|^l) |x-y|
    l  -- polynomial growth degree of the drift differences.

    A certificate is a claim, not a proof; ``validate_certificate`` can only
    refute it on sample points.
    """

    p0: float
    p1: float
    K: float
    L: float
    l: float

    def __post_init__(self):
        if self.p0 < 2 or self.p1 < 2:
            raise ValueError("p0 and p1 must lie in [2, inf)")
        if self.K <= 0 or self.L <= 0:
            raise ValueError("K and L must be positive")
        if self.l < 0:
            raise ValueError("l must be nonnegative")


@dataclass(frozen=True)
class TamingScheme:
    """Selects how raw coefficients are damped at resolution n.

    kind      -- "identity" (no damping), "model1" (damp by the coefficient
                 sizes) or "model2" (damp by |x|^l).
    alpha     -- damping exponent in (0, 1/2]; the rate guarantee needs 1/2.
    l         -- growth degree used by model2 only.
    """

    kind: str
    alpha: float = 0.5
    l: float | None = None

    def __post_init__(self):
        if self.kind not in TAMING_KINDS:
            raise ValueError(f"kind must be one of {TAMING_KINDS}, got {self.kind!r}")
        if not 0 < self.alpha <= 0.5:
            raise ValueError("alpha must lie in (0, 1/2]")
        if self.kind == "model2":
            if self.l is None:
                raise ValueError("model2 taming requires the growth degree l")
            if self.l < 0:
                raise ValueError("l must be nonnegative")

    @classmethod
    def identity(cls) -> "TamingScheme":
        return cls("identity")

    @classmethod
    def model1(cls, alpha: float = 0.5) -> "TamingScheme":
        return cls("model1", alpha)

    @classmethod
    def model2(cls, alpha: float = 0.5, l: float = 0.0) -> "TamingScheme":
        return cls("model2", alpha, l)


@dataclass(frozen=True)
class PValidation:
    """Verdict of the admissibility gate for the order-1/2 rate claim in L^p."""

    p: float
    admissible: bool
    max_admissible_p: float
    p1_strict: bool  # True when the binding bound is the strict `p < p1` side
    reasons: tuple[str, ...] = ()


def validate_p_condition(
    cert: ConditionCertificate, scheme: TamingScheme, p: float
) -> PValidation:
    """Check whether the L^p rate-1/2 guarantee applies to (cert, scheme, p).

    Requires model2 taming with alpha = 1/2, l <= (p0-2)/4, p <= p0/(2l+1)
    and p < p1.  For l = 0 (globally Lipschitz coefficients) the p1 bound is
    dropped and the constraints collapse to p <= p0, matching the classical
    Euler theory.
    """
    reasons: list[str] = []
    if scheme.kind != "model2":
        reasons.append("rate condition requires the power-damping (model2) scheme")
    if scheme.alpha != 0.5:
        reasons.append("rate condition requires alpha = 1/2")
    l = scheme.l if scheme.l is not None else cert.l
    tol = VIOLATION_SLACK
    if l > (cert.p0 - 2) / 4 + tol:
        reasons.append(f"l={l:g} exceeds (p0-2)/4 = {(cert.p0 - 2) / 4:g}")
    growth_bound = cert.p0 / (2 * l + 1)
    if l == 0:
        max_admissible = cert.p0
        p1_strict = False
    else:
        max_admissible = min(cert.p1, growth_bound)
        p1_strict = cert.p1 <= growth_bound
        if not p < cert.p1:
            reasons.append(f"p={p:g} is not < p1={cert.p1:g}")
    if p > growth_bound + tol:
        reasons.append(f"p={p:g} exceeds p0/(2l+1) = {growth_bound:g}")
    if p <= 0:
        reasons.append("p must be positive")
    return PValidation(
        p=p,
        admissible=not reasons,
        max_admissible_p=max_admissible,
        p1_strict=p1_strict,
        reasons=tuple(reasons),
    )


@dataclass(frozen=True)
class SampleSpec:
    """Deterministic point cloud on which condition checkers evaluate.

    Points are drawn uniformly from the box ``[-radius, radius]^d`` (paired
    independently for the two-point conditions) at ``n_times`` evenly spaced
    times in ``[0, horizon]``, from a fixed seed.
    """

    n_points: int = 1000
    radius: float = 10.0
    n_times: int = 3
    seed: int = 0

    def times(self, horizon: float) -> np.ndarray:
        return np.linspace(0.0, horizon, self.n_times)

    def points(self, dim: int) -> np.ndarray:
        rng = np.random.default_rng(self.seed)
        return rng.uniform(-self.radius, self.radius, size=(self.n_points, dim))

    def pairs(self, dim: int) -> tuple[np.ndarray, np.ndarray]:
        rng = np.random.default_rng(self.seed + 1)
        x = rng.uniform(-self.radius, self.radius, size=(self.n_points, dim))
        y = rng.uniform(-self.radius, self.radius, size=(self.n_points, dim))
        return x, y


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one sampled inequality check.

    ``max_violation`` is max(lhs - rhs, 0) over the samples: 0 means no
    violation was found (which does not prove the condition holds).
    """

    name: str
    max_violation: float
    n_violations: int
    n_samples: int
    worst_point: tuple | None = None

    @property
    def ok(self) -> bool:
        return self.n_violations == 0


@dataclass(frozen=True)
class ConditionReport:
    checks: tuple[CheckResult, ...]
    ball_suprema: tuple[tuple[float, float, float], ...] = ()  # (R, sup|b|, sup|sigma|)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def summary(self) -> str:
        lines = []
        for c in self.checks:
            if c.ok:
                lines.append(f"{c.name}: no violation found ({c.n_samples} samples)")
            else:
                lines.append(
                    f"{c.name}: {c.n_violations} violations, worst {c.max_violation:.6g}"
                    f" at {c.worst_point}"
                )
        for r, sb, ss in self.ball_suprema:
            lines.append(f"ball |x|<={r:g}: sup|b|={sb:.6g}, sup|sigma|={ss:.6g}")
        return "\n".join(lines)


def _norm(x: np.ndarray) -> np.ndarray:
    return np.sqrt((x * x).sum(axis=-1))


def _fro2(s: np.ndarray) -> np.ndarray:
    return (s * s).sum(axis=(-2, -1))


def _eval_coeffs(problem: SdeProblem, t: float, x: np.ndarray, what: str):
    b = np.asarray(problem.drift(t, x), dtype=float)
    s = np.asarray(problem.diffusion(t, x), dtype=float)
    for name, arr in (("drift", b), ("diffusion", s)):
        bad = ~np.isfinite(arr).reshape(arr.shape[0], -1).all(axis=1)
        if bad.any():
            i = int(np.argmax(bad))
            raise ModelEvaluationError(
                f"{name} returned a non-finite value at t={t:g}, x={x[i]} ({what})"
            )
    return b, s


def _check(name, lhs, rhs, points, t) -> CheckResult:
    excess = lhs - rhs
    bad = excess > VIOLATION_SLACK
    n_bad = int(bad.sum())
    worst = None
    max_v = 0.0
    if n_bad:
        i = int(np.argmax(excess))
        max_v = float(excess[i])
        worst = (t, *(np.asarray(p[i]) for p in points))
    return CheckResult(name, max_v, n_bad, len(lhs), worst)


def validate_certificate(
    problem: SdeProblem,
    cert: ConditionCertificate,
    sample_spec: SampleSpec = SampleSpec(),
    ball_radii: Sequence[float] | None = None,
) -> ConditionReport:
    """Refutation-test a certificate on sampled points.

    Checks, pointwise over the samples,

      coercivity:     2 x.b + (p0-1)|sigma|^2          <= K (1+|x|^2)
      monotonicity:   2 (x-y).(b(x)-b(y))
                        + (p1-1)|sigma(x)-sigma(y)|^2  <= L |x-y|^2
      poly-Lipschitz: |b(x)-b(y)|                      <= L (1+|x|^l+|y|^l) |x-y|

    and reports per-ball suprema of |b| and |sigma| over the samples.
    Sampling can only refute a certificate, never prove it.
    """
    xs = sample_spec.points(problem.dim_state)
    xp, yp = sample_spec.pairs(problem.dim_state)
    checks: list[CheckResult] = []
    sup_b = np.zeros(len(xs))
    sup_s = np.zeros(len(xs))
    worst = {"coercivity": None, "monotonicity": None, "poly-lipschitz": None}
    for t in sample_spec.times(problem.horizon):
        b, s = _eval_coeffs(problem, float(t), xs, "coercivity samples")
        lhs = 2 * (xs * b).sum(-1) + (cert.p0 - 1) * _fro2(s)
        rhs = cert.K * (1 + (xs * xs).sum(-1))
        checks.append(_check("coercivity", lhs, rhs, (xs,), float(t)))
        sup_b = np.maximum(sup_b, _norm(b))
        sup_s = np.maximum(sup_s, np.sqrt(_fro2(s)))

        bx, sx = _eval_coeffs(problem, float(t), xp, "pair samples")
        by, sy = _eval_coeffs(problem, float(t), yp, "pair samples")
        diff = xp - yp
        lhs = 2 * (diff * (bx - by)).sum(-1) + (cert.p1 - 1) * _fro2(sx - sy)
        rhs = cert.L * (diff * diff).sum(-1)
        checks.append(_check("monotonicity", lhs, rhs, (xp, yp), float(t)))

        lhs = _norm(bx - by)
        rhs = cert.L * (1 + _norm(xp) ** cert.l + _norm(yp) ** cert.l) * _norm(diff)
        checks.append(_check("poly-lipschitz", lhs, rhs, (xp, yp), float(t)))

    # merge per-time results into one row per condition
    merged = []
    for name in ("coercivity", "monotonicity", "poly-lipschitz"):
        rows = [c for c in checks if c.name == name]
        worst_row = max(rows, key=lambda c: c.max_violation)
        merged.append(
            CheckResult(
                name,
                worst_row.max_violation,
                sum(c.n_violations for c in rows),
                sum(c.n_samples for c in rows),
                worst_row.worst_point,
            )
        )

    radii = tuple(ball_radii) if ball_radii is not None else (
        sample_spec.radius / 4, sample_spec.radius / 2, sample_spec.radius,
    )
    r_norm = _norm(xs)
    balls = []
    for r in radii:
        inside = r_norm <= r
        if inside.any():
            balls.append((float(r), float(sup_b[inside].max()), float(sup_s[inside].max())))
    return ConditionReport(tuple(merged), tuple(balls))
