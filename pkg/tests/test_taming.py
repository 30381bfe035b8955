import numpy as np
import pytest

from tamedsde import (
    ConditionCertificate,
    SampleSpec,
    SdeProblem,
    TamingScheme,
    check_B1_rate,
    check_B2,
    check_B3,
    fit_order,
    get_model,
    tame,
    tame_identity,
    tame_model1,
    tame_model2,
)


def cubic_decay_problem(sign=-1.0):
    """Scalar b(x) = sign * x^3 with zero diffusion."""
    return SdeProblem(
        drift=lambda t, x: sign * x * x * x,
        diffusion=lambda t, x: np.zeros(x.shape + (1,)),
        dim_state=1, dim_noise=1, horizon=1.0, initial=np.array([1.0]),
    )


def x2(v):
    return np.array([[float(v)]])


class TestDampingFactors:
    def test_model1_worked_example(self):
        # b(x) = -x^3 at x = 2, n = 4, alpha = 1/2: factor 1/(1 + 8/2) = 1/5
        tamed = tame_model1(cubic_decay_problem(), 4, 0.5)
        assert tamed.drift_n(0.0, x2(2.0))[0, 0] == pytest.approx(-1.6, abs=1e-12)

    def test_model2_worked_example(self):
        # 3/2 model, lam = mu = 1: b(2) = -2; factor 1/(1 + 0.1*2) at n = 100
        model = get_model("three-half", lam=1.0, mu=1.0, xi=1.0)
        tamed = tame_model2(model.problem, 100, 0.5, 1.0)
        assert tamed.drift_n(0.0, x2(2.0))[0, 0] == pytest.approx(-2.0 / 1.2, abs=1e-12)

    def test_zero_state_is_fixed_point(self):
        model = get_model("three-half")
        for tamed in (tame_model1(model.problem, 8), tame_model2(model.problem, 8, l=1.0)):
            b, s = tamed.both(0.0, x2(0.0))
            assert b[0, 0] == 0.0
            assert np.all(s == 0.0)

    def test_model2_at_origin_power_conventions(self):
        # |x|^l at x = 0 is 0 for l > 0 and 1 for l = 0
        problem = cubic_decay_problem()
        b1 = tame_model2(problem, 4, 0.5, 1.0).drift_n(0.0, x2(0.0))
        assert b1[0, 0] == 0.0
        model = get_model("linear", a=1.0, c=0.2)
        bn = tame_model2(model.problem, 4, 0.5, 0.0).drift_n(0.0, x2(1.0))
        assert bn[0, 0] == pytest.approx(1.0 / 1.5, abs=1e-14)

    def test_identity_passthrough(self):
        problem = cubic_decay_problem()
        tamed = tame_identity(problem)
        assert tamed.drift_n is problem.drift
        assert tamed.diffusion_n is problem.diffusion

    def test_factor_in_unit_interval_and_sign_preserved(self):
        model = get_model("three-half", lam=2.5)
        rng = np.random.default_rng(0)
        xs = rng.uniform(-8, 8, size=(500, 1))
        b = model.problem.drift(0.0, xs)
        s = model.problem.diffusion(0.0, xs)
        for scheme in (TamingScheme.model1(0.5), TamingScheme.model2(0.5, 1.0)):
            tamed = tame(model.problem, scheme, 16)
            bn, sn = tamed.both(0.0, xs)
            assert np.all(np.abs(bn) <= np.abs(b) + 1e-15)
            assert np.all(np.abs(sn) <= np.abs(s) + 1e-15)
            assert np.all(bn * b >= 0)  # same sign: positive scalar factor
            assert np.all((xs * bn).sum(-1) * (xs * b).sum(-1) >= 0)

    def test_model1_resolution_cap(self):
        # |b_n| <= n^alpha pointwise, from u/(1+cu) <= 1/c
        model = get_model("three-half", lam=2.5)
        rng = np.random.default_rng(1)
        xs = rng.uniform(-50, 50, size=(2000, 1))
        for n in (1, 4, 64):
            bn = tame_model1(model.problem, n, 0.5).drift_n(0.0, xs)
            assert np.all(np.abs(bn) <= n ** 0.5 + 1e-12)

    def test_monotone_convergence_in_n(self):
        model = get_model("three-half", lam=2.5)
        x = x2(3.0)
        b = model.problem.drift(0.0, x)[0, 0]
        prev = 0.0
        for n in (2, 8, 32, 128, 512):
            bn = tame_model2(model.problem, n, 0.5, 1.0).drift_n(0.0, x)[0, 0]
            assert abs(bn) >= prev
            prev = abs(bn)
        assert abs(bn - b) < abs(b) * 0.2

    def test_pointwise_difference_bounds(self):
        model = get_model("three-half", lam=2.5)
        rng = np.random.default_rng(2)
        xs = rng.uniform(-6, 6, size=(400, 1))
        b = model.problem.drift(0.0, xs)
        s = model.problem.diffusion(0.0, xs)
        nb = np.abs(b[:, 0])
        s2 = (s * s).sum(axis=(-2, -1))
        for n in (4, 16, 64):
            na = n ** -0.5
            d1 = np.abs(tame_model1(model.problem, n, 0.5).drift_n(0.0, xs) - b)[:, 0]
            assert np.all(d1 <= na * (nb + s2) * nb + 1e-12)
            d2 = np.abs(tame_model2(model.problem, n, 0.5, 1.0).drift_n(0.0, xs) - b)[:, 0]
            assert np.all(d2 <= na * np.abs(xs[:, 0]) * nb + 1e-12)


class TestGrowthCapCheck:
    def test_model1_satisfies_cap_with_unit_constant(self):
        for name in ("three-half", "ginzburg-landau"):
            model = get_model(name)
            tamed = tame_model1(model.problem, 16, 0.5)
            assert check_B2(tamed, C=1.0, sample_spec=SampleSpec(500, 10.0)).ok

    def test_identity_cubic_drift_violates_cap(self):
        # |b_n| = |x|^3 exceeds min(1 + |x|, |x|^3) once |x|^3 > 1 + |x|
        problem = cubic_decay_problem()
        tamed = tame_identity(problem)
        xs = np.arange(0, 10, 1e-3)
        first = xs[np.argmax(xs ** 3 > 1 + xs)]
        report = check_B2(tamed, C=1.0, sample_spec=SampleSpec(500, 10.0))
        drift_check = [c for c in report.checks if c.name == "drift-growth-cap"][0]
        assert not drift_check.ok
        assert np.abs(drift_check.worst_point[1]).max() >= first

    def test_zero_coefficients_pass_any_constant(self):
        tamed = tame_identity(zero := SdeProblem(
            lambda t, x: np.zeros_like(x), lambda t, x: np.zeros(x.shape + (1,)),
            1, 1, 1.0, np.array([0.0])))
        assert check_B2(tamed, C=1e-6).ok


class TestDampedCoercivityCheck:
    def test_damped_schemes_inherit_coercivity(self):
        model = get_model("three-half", lam=2.5)
        for scheme in (TamingScheme.model1(0.5), TamingScheme.model2(0.5, 1.0)):
            tamed = tame(model.problem, scheme, 32)
            assert check_B3(tamed, model.certificate, SampleSpec(500, 10.0)).ok

    def test_wrong_sign_cubic_violates(self):
        problem = cubic_decay_problem(sign=+1.0)
        cert = ConditionCertificate(p0=6.0, p1=3.5, K=5.0, L=5.0, l=2.0)
        report = check_B3(tame_identity(problem), cert, SampleSpec(500, 10.0))
        assert not report.ok

    def test_zero_coefficients_pass(self):
        cert = ConditionCertificate(p0=6.0, p1=3.5, K=0.5, L=0.5, l=0.0)
        problem = SdeProblem(lambda t, x: np.zeros_like(x),
                             lambda t, x: np.zeros(x.shape + (1,)),
                             1, 1, 1.0, np.array([0.0]))
        assert check_B3(tame_identity(problem), cert).ok


class TestCoefficientDistanceRate:
    def test_identity_distance_is_zero(self):
        model = get_model("three-half")
        rows = check_B1_rate(model.problem, TamingScheme.identity(), 5.0, [4, 16, 64])
        assert all(sb == 0.0 and ss == 0.0 for _, sb, ss in rows)

    def test_model2_distance_matches_closed_form(self):
        # |b_n - b| = |b| * na*|x| / (1 + na*|x|), maximized at the ball edge
        model = get_model("three-half", lam=2.5, mu=1.0, xi=1.0)
        ns = [16, 64, 256, 1024]
        rows = check_B1_rate(model.problem, TamingScheme.model2(0.5, 1.0), 5.0, ns,
                             grid_points=2001)
        xs = np.linspace(-5, 5, 2001)
        babs = np.abs(2.5 * xs * (1.0 - np.abs(xs)))
        for (n, sup_b, _), n_expected in zip(rows, ns):
            assert n == n_expected
            na = n ** -0.5
            oracle = (babs * (na * np.abs(xs)) / (1 + na * np.abs(xs))).max()
            assert sup_b == pytest.approx(oracle, rel=1e-12)

    def test_model2_preasymptotic_and_asymptotic_slopes(self):
        # on n = 2^4..2^10 the damping denominator is still O(1) at the ball
        # edge and the fitted slope is ~-0.34; on 2^10..2^16 it approaches
        # the asymptotic -1/2
        model = get_model("three-half", lam=2.5)
        scheme = TamingScheme.model2(0.5, 1.0)
        rows = check_B1_rate(model.problem, scheme, 5.0, [2 ** k for k in range(4, 11)])
        fit = fit_order([(n, sb) for n, sb, _ in rows])
        assert -0.40 < -fit.order < -0.28
        rows = check_B1_rate(model.problem, scheme, 5.0, [2 ** k for k in range(10, 17)])
        fit = fit_order([(n, sb) for n, sb, _ in rows])
        assert -0.6 <= -fit.order <= -0.4

    def test_model1_pointwise_bound_on_ball(self):
        # |b_n - b| <= na * (|b| + |sigma|^2) * |b| pointwise
        model = get_model("three-half", lam=2.5)
        xs = np.linspace(-5, 5, 501)[:, None]
        b = model.problem.drift(0.0, xs)
        s = model.problem.diffusion(0.0, xs)
        nb = np.abs(b[:, 0])
        s2 = (s * s).sum(axis=(-2, -1))
        for n in (4, 64, 1024):
            tamed = tame(model.problem, TamingScheme.model1(0.5), n)
            d = np.abs(tamed.drift_n(0.0, xs) - b)[:, 0]
            assert np.all(d <= n ** -0.5 * (nb + s2) * nb + 1e-12)

    def test_input_validation(self):
        model = get_model("three-half")
        with pytest.raises(ValueError):
            check_B1_rate(model.problem, TamingScheme.identity(), -1.0, [4])
        with pytest.raises(ValueError):
            check_B1_rate(model.problem, TamingScheme.identity(), 5.0, [])
