"""Error statistics, convergence-order fits, and moment/pathwise diagnostics.

All estimators reduce full per-path arrays in path-id order, so reported
numbers do not depend on batch size or thread count.  Standard errors of
L^p-root statistics are delta-method propagated through the 1/p power.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import ConditionCertificate, SdeProblem, TamingScheme
from .integrator import CoupledResult, SingleResolutionStats, run_single_resolution


@dataclass(frozen=True)
class ErrorEntry:
    n: int
    p: float
    statistic: str  # "strong" | "uniform" (suffix "_exact" for oracle reference)
    value: float
    std_err: float
    path_count: int
    diverged_count: int


@dataclass(frozen=True)
class OrderFit:
    """Least-squares fit of log(error) = intercept - order * log(n).

    Positive ``order`` means decay; ``order_se`` is the regression standard
    error of the slope and ``residual`` the residual sum of squares.
    """

    order: float
    intercept: float
    order_se: float
    residual: float
    n_points: int
    excluded: tuple[int, ...] = ()


def _root_mean(values: np.ndarray, p: float) -> tuple[float, float]:
    """(E[values])^(1/p) with a delta-method standard error; values = |.|^p."""
    m = float(values.mean())
    sem = float(values.std(ddof=1) / np.sqrt(len(values)))
    if m <= 0:
        return 0.0, 0.0
    root = m ** (1.0 / p)
    return root, sem / p * m ** (1.0 / p - 1.0)


def _diff_table(coupled: CoupledResult, reference: str) -> dict[int, np.ndarray]:
    if reference == "scheme":
        return coupled.norm_diffs
    if reference == "exact":
        if coupled.exact_norm_diffs is None:
            raise ValueError("coupled result carries no exact-solution comparison")
        return coupled.exact_norm_diffs
    raise ValueError("reference must be 'scheme' or 'exact'")


def strong_error(coupled: CoupledResult, p: float, t_eval: str = "terminal",
                 reference: str = "scheme") -> list[ErrorEntry]:
    """Strong L^p error per resolution: (E |X_ref(t) - X_n(t)|^p)^(1/p).

    ``t_eval='terminal'`` evaluates at the horizon; ``'grid'`` takes the sup
    over the shared grid times of the per-time estimate before the root.
    """
    if p <= 0:
        raise ValueError("p must be positive")
    if t_eval not in ("terminal", "grid"):
        raise ValueError("t_eval must be 'terminal' or 'grid'")
    if coupled.path_count < 2:
        raise ValueError("need at least 2 paths to compute a standard error")
    diffs = _diff_table(coupled, reference)
    suffix = "" if reference == "scheme" else "_exact"
    entries = []
    for n in coupled.resolutions:
        d = diffs[n]
        if t_eval == "terminal":
            vals = d[:, -1] ** p
        else:
            per_time = np.mean(d ** p, axis=0)
            vals = d[:, int(np.argmax(per_time))] ** p
        value, se = _root_mean(vals, p)
        entries.append(ErrorEntry(n, p, "strong" + suffix, value, se,
                                  coupled.path_count, coupled.diverged_count(n)))
    return entries


def uniform_error(coupled: CoupledResult, q: float,
                  reference: str = "scheme") -> list[ErrorEntry]:
    """Uniform L^q error per resolution: (E sup_k |X_ref(t_k) - X_n(t_k)|^q)^(1/q),
    the sup running over the shared grid times of the coarse path."""
    if q <= 0:
        raise ValueError("q must be positive")
    if coupled.path_count < 2:
        raise ValueError("need at least 2 paths to compute a standard error")
    diffs = _diff_table(coupled, reference)
    suffix = "" if reference == "scheme" else "_exact"
    entries = []
    for n in coupled.resolutions:
        sup = diffs[n].max(axis=1)
        value, se = _root_mean(sup ** q, q)
        entries.append(ErrorEntry(n, q, "uniform" + suffix, value, se,
                                  coupled.path_count, coupled.diverged_count(n)))
    return entries


def fit_order(pairs) -> OrderFit:
    """Fit a decay order to (n, error) pairs on log-log axes.

    Zero, negative or non-finite errors are excluded with a warning; fewer
    than three usable points refuse the fit.
    """
    ns, errs, excluded = [], [], []
    for n, e in pairs:
        if e > 0 and np.isfinite(e):
            ns.append(float(n))
            errs.append(float(e))
        else:
            excluded.append(int(n))
    if excluded:
        warnings.warn(f"fit_order: excluded non-positive errors at n={excluded}")
    if len(ns) < 3:
        raise ValueError("fit_order needs at least 3 positive error values")
    x = np.log(np.asarray(ns))
    y = np.log(np.asarray(errs))
    xm = x - x.mean()
    sxx = float((xm * xm).sum())
    slope = float((xm * y).sum() / sxx)
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    rss = float((resid * resid).sum())
    m = len(x)
    se = float(np.sqrt(rss / (m - 2) / sxx)) if m > 2 else float("nan")
    return OrderFit(order=-slope, intercept=intercept, order_se=se,
                    residual=rss, n_points=m, excluded=tuple(excluded))


@dataclass(frozen=True)
class ErrorReport:
    """Strong/uniform errors with their fitted orders for one coupled run."""

    entries: tuple[ErrorEntry, ...]
    fits: dict
    path_count: int
    diverged_count: int

    def entries_for(self, statistic: str, p: float) -> list[ErrorEntry]:
        return [e for e in self.entries if e.statistic == statistic and e.p == p]


def _try_fit(rows) -> OrderFit | None:
    try:
        return fit_order([(e.n, e.value) for e in rows])
    except ValueError:
        return None  # fewer than 3 usable errors (e.g. fully diverged run)


def error_report(coupled: CoupledResult, strong_ps=(2.0,), uniform_qs=(),
                 t_eval: str = "terminal", include_exact: bool = False) -> ErrorReport:
    """Assemble the error table and order fits for the requested norms.

    Fits that cannot be computed (fewer than three positive, finite error
    values, as in a fully diverged run) are recorded as None.
    """
    entries: list[ErrorEntry] = []
    fits = {}
    references = ["scheme"] + (["exact"] if include_exact else [])
    for ref in references:
        for p in strong_ps:
            rows = strong_error(coupled, p, t_eval, ref)
            entries.extend(rows)
            fits[(rows[0].statistic, p)] = _try_fit(rows)
        for q in uniform_qs:
            rows = uniform_error(coupled, q, ref)
            entries.extend(rows)
            fits[(rows[0].statistic, q)] = _try_fit(rows)
    total_div = int(sum(coupled.diverged[n].sum() for n in coupled.resolutions)
                    + coupled.ref_diverged.sum())
    return ErrorReport(tuple(entries), fits, coupled.path_count, total_div)


@dataclass(frozen=True)
class MomentEntry:
    n: int
    p: float
    value: float  # max over grid times of the estimate of E|X_n(t)|^p
    std_err: float
    diverged_count: int
    exploded: bool


@dataclass(frozen=True)
class MomentReport:
    """Time-sup moment estimates per resolution with a non-explosion flag.

    ``bounded[p]`` is True when the finite estimates satisfy the heuristic
    max <= 2 * min + 3 * joint standard error and no resolution exploded.
    """

    entries: tuple[MomentEntry, ...]
    bounded: dict

    def entries_for(self, p: float) -> list[MomentEntry]:
        return [e for e in self.entries if e.p == p]


def moment_diagnostic(problem: SdeProblem, scheme: TamingScheme, resolutions,
                      p_list, path_count: int, master_seed: int, *,
                      certificate: ConditionCertificate | None = None,
                      finest: int | None = None, batch_size: int = 2048,
                      backend: str | None = None,
                      stats: SingleResolutionStats | None = None) -> MomentReport:
    """Estimate sup over grid times of E|X_n(t)|^p for each n and p.

    Diverged paths make an estimate infinite and are reported as an
    explosion (the expected finding for undamped schemes on superlinear
    models).  When a certificate is given, requested exponents must lie in
    (0, p0].
    """
    if certificate is not None:
        for p in p_list:
            if not 0 < p <= certificate.p0:
                raise ValueError(f"moment exponent p={p:g} outside (0, p0={certificate.p0:g}]")
    if stats is None:
        stats = run_single_resolution(problem, scheme, resolutions, path_count,
                                      master_seed, finest=finest,
                                      batch_size=batch_size, backend=backend)
    entries = []
    for p in p_list:
        for n in stats.resolutions:
            dcount = int(stats.diverged[n].sum())
            if dcount:
                entries.append(MomentEntry(n, p, float("inf"), float("nan"), dcount, True))
                continue
            vals = stats.state_norms[n] ** p
            per_time = vals.mean(axis=0)
            k = int(np.argmax(per_time))
            col = vals[:, k]
            se = float(col.std(ddof=1) / np.sqrt(len(col))) if len(col) > 1 else float("nan")
            entries.append(MomentEntry(n, p, float(per_time[k]), se, 0, False))
    bounded = {}
    for p in p_list:
        rows = [e for e in entries if e.p == p]
        if any(e.exploded for e in rows):
            bounded[p] = False
            continue
        vals = np.array([e.value for e in rows])
        lo, hi = int(np.argmin(vals)), int(np.argmax(vals))
        joint_se = float(np.hypot(rows[lo].std_err, rows[hi].std_err))
        bounded[p] = bool(vals[hi] <= 2 * vals[lo] + 3 * joint_se)
    return MomentReport(tuple(entries), bounded)


def one_step_diagnostic(problem: SdeProblem, scheme: TamingScheme, resolutions,
                        p: float, path_count: int, master_seed: int, *,
                        certificate: ConditionCertificate | None = None,
                        finest: int | None = None, batch_size: int = 2048,
                        backend: str | None = None,
                        stats: SingleResolutionStats | None = None) -> list[MomentEntry]:
    """Max over grid steps of E|X_n(t_{k+1}) - X_n(t_k)|^p, per resolution.

    The expected log-log slope against n is -p/2.
    """
    if certificate is not None:
        cap = max(2.0, 2 * certificate.p0 / (certificate.l + 2))
        if p > cap + 1e-12:
            raise ValueError(f"one-step exponent p={p:g} exceeds max(2, 2*p0/(l+2)) = {cap:g}")
        if certificate.l > certificate.p0 - 2:
            raise ValueError("one-step diagnostic requires l <= p0 - 2")
    if stats is None:
        stats = run_single_resolution(problem, scheme, resolutions, path_count,
                                      master_seed, finest=finest,
                                      batch_size=batch_size, backend=backend)
    entries = []
    for n in stats.resolutions:
        dcount = int(stats.diverged[n].sum())
        if dcount:
            entries.append(MomentEntry(n, p, float("inf"), float("nan"), dcount, True))
            continue
        vals = stats.step_norms[n] ** p
        per_step = vals.mean(axis=0)
        k = int(np.argmax(per_step))
        col = vals[:, k]
        se = float(col.std(ddof=1) / np.sqrt(len(col))) if len(col) > 1 else float("nan")
        entries.append(MomentEntry(n, p, float(per_step[k]), se, 0, False))
    return entries


@dataclass(frozen=True)
class AsRateReport:
    """Distribution of the pathwise statistic n^kappa * sup-error.

    ``per_resolution[n][q]`` is the q-quantile over paths of the statistic at
    resolution n; ``zeta_quantiles[q]`` the q-quantile of the per-path max
    over the resolution ladder (the proxy for the almost-sure bound's random
    constant).
    """

    kappa: float
    quantiles: tuple[float, ...]
    per_resolution: dict
    zeta_quantiles: dict

    def spread(self, q: float) -> float:
        """max/min of the q-quantile across the ladder (trend indicator)."""
        vals = [self.per_resolution[n][q] for n in self.per_resolution]
        return max(vals) / min(vals)


def as_rate_diagnostic(coupled: CoupledResult, kappa_exponent: float, *,
                       certificate: ConditionCertificate | None = None,
                       quantiles=(0.5, 0.9)) -> AsRateReport:
    """Pathwise rate statistic n^kappa * sup_k |X_ref(t_k) - X_n(t_k)|.

    When a certificate is given, kappa must lie in the admissible window
    (0, 1/2 - (2l+1)/p0) of the almost-sure rate result.
    """
    if kappa_exponent < 0:
        raise ValueError("kappa must be nonnegative")
    if certificate is not None:
        window = 0.5 - (2 * certificate.l + 1) / certificate.p0
        if window <= 0:
            raise ValueError(
                f"no admissible kappa: (2l+1)/p0 = {(2 * certificate.l + 1) / certificate.p0:g} >= 1/2"
            )
        if kappa_exponent >= window and kappa_exponent != 0:
            raise ValueError(
                f"kappa={kappa_exponent:g} outside the admissible window (0, {window:g})"
            )
    per_res = {}
    sup_by_n = {}
    for n in coupled.resolutions:
        sup = coupled.norm_diffs[n].max(axis=1)
        stat = float(n) ** kappa_exponent * sup
        sup_by_n[n] = stat
        per_res[n] = {q: float(np.quantile(stat, q)) for q in quantiles}
    zeta = np.max(np.stack([sup_by_n[n] for n in coupled.resolutions]), axis=0)
    zq = {q: float(np.quantile(zeta, q)) for q in quantiles}
    return AsRateReport(kappa_exponent, tuple(quantiles), per_res, zq)
