import math
import warnings

import numpy as np
import pytest
from scipy.integrate import IntegrationWarning

from hjb_verify.errors import BeyondBlowUp, NonPositiveR, QuadratureDivergence, UnknownKind, UnsupportedProblem
from hjb_verify.oracles import (
    MANUFACTURED_KINDS,
    AuxiliaryParabolicSolution,
    RiccatiProblem,
    RungeKutta4,
    auxiliary_phi,
    auxiliary_phi_fd,
    lp_value_residual,
    manufactured_solution,
    riccati_solve,
)


class TestRungeKutta4:
    def test_exponential_growth(self):
        rk = RungeKutta4(0.01, lambda t, y: y)
        y, t = 1.0, 0.0
        for _ in range(100):
            y = rk.step(t, y)
            t += 0.01
        assert y == pytest.approx(math.e, rel=1e-9)


class TestRiccati:
    def test_blow_up_time_for_quadratic_case(self):
        """p = 2, rho = 0: phi(t) = -2/(t - 3), so tau = 3 on [0, 5]"""
        report = riccati_solve(RiccatiProblem(2.0, 0.0, 5.0), 1e-3)
        assert report.blew_up
        assert report.tau_quadrature == pytest.approx(3.0, abs=1e-10)
        assert report.tau == pytest.approx(3.0, abs=1e-4)
        lo, hi = report.tau_bracket
        assert lo <= report.tau <= hi
        assert report.bracket_width < 1e-6

    def test_no_blow_up_on_short_horizon(self):
        report = riccati_solve(RiccatiProblem(2.0, 0.0, 1.0), 1e-3)
        assert not report.blew_up
        assert report.tau_quadrature is None
        assert report.phi_at_start() == pytest.approx(-2.0, abs=1e-6)

    def test_ode_and_quadrature_agree_with_running_cost(self):
        report = riccati_solve(RiccatiProblem(2.0, 0.4, 6.0), 1e-3)
        assert report.blew_up
        assert 0.0 < report.tau < 6.0
        assert report.tau == pytest.approx(report.tau_quadrature, abs=1e-4)

    def test_no_blow_up_above_critical_product(self):
        prob = RiccatiProblem(2.0, 1.0, 10.0)
        assert prob.critical_product >= 1.0
        report = riccati_solve(prob, 1e-3)
        assert not report.blew_up
        assert math.isinf(report.quadrature_threshold)
        assert np.all(np.isfinite(report.values))

    def test_asserted_blow_up_diverges(self):
        with pytest.raises(QuadratureDivergence):
            RiccatiProblem(2.0, 1.0, 5.0, blow_up_asserted=True).quadrature_threshold()

    def test_quadrature_phi_matches_closed_form(self):
        prob = RiccatiProblem(2.0, 0.0, 5.0)
        for t in (3.5, 4.0, 4.9, 5.0):
            assert prob.quadrature_phi(t) == pytest.approx(-2.0 / (t - 3.0), rel=1e-10)
        with pytest.raises(BeyondBlowUp):
            prob.quadrature_phi(2.5)

    def test_quadrature_phi_close_to_blow_up(self):
        prob = RiccatiProblem(2.0, 0.0, 5.0)
        with warnings.catch_warnings():
            warnings.simplefilter("error", IntegrationWarning)
            for t in (3.1, 3.001, 3.000001):
                assert prob.quadrature_phi(t) == pytest.approx(-2.0 / (t - 3.0), rel=1e-6)
            assert prob.quadrature_phi(3.0 + 1e-9) < -1e8
            assert RiccatiProblem(3.0, 0.1, 5.0).quadrature_phi(4.0) < -1.0

    @pytest.mark.parametrize("p", [1.5, 1.8, 2.0, 2.5, 3.0])
    @pytest.mark.parametrize("product", [0.0, 0.3])
    def test_ode_matches_quadrature_sweep(self, p, product):
        rho = product * (p - 1.0) / p
        prob = RiccatiProblem(p, rho, p / (1.0 - product) + 1.0)
        report = riccati_solve(prob, 1e-3)
        assert report.blew_up
        assert report.tau == pytest.approx(report.tau_quadrature, abs=1e-4)

    def test_trajectory_csv(self, tmp_path):
        report = riccati_solve(RiccatiProblem(2.0, 0.0, 1.0), 1e-2)
        path = report.write_trajectory_csv(tmp_path / "phi.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == "t,phi"
        assert len(lines) == len(report.times) + 1

    @pytest.mark.parametrize("p,rho,T", [(1.0, 0.0, 1.0), (2.0, -1.0, 1.0), (2.0, 0.0, 0.0)])
    def test_invalid_problem(self, p, rho, T):
        with pytest.raises(ValueError):
            RiccatiProblem(p, rho, T)


class TestValueResidual:
    def test_zero_at_origin(self):
        prob = RiccatiProblem(2.0, 0.0, 5.0)
        assert lp_value_residual(prob, 0.0, 4.0) == 0.0

    def test_ansatz_solves_first_order_equation(self, rng):
        prob = RiccatiProblem(2.0, 0.0, 5.0)
        x = rng.uniform(-2.0, 2.0, size=10)
        for t in rng.uniform(3.6, 4.9, size=5):
            assert np.max(lp_value_residual(prob, x, float(t))) < 1e-8

    def test_ansatz_with_running_cost(self):
        prob = RiccatiProblem(3.0, 0.2, 2.0)
        assert np.max(lp_value_residual(prob, np.linspace(-1.0, 1.0, 5), 1.0)) < 1e-8

    def test_fourth_order_in_dt(self):
        prob = RiccatiProblem(2.0, 0.0, 5.0)
        coarse = lp_value_residual(prob, 1.0, 4.0, dt=0.1)
        fine = lp_value_residual(prob, 1.0, 4.0, dt=0.05)
        assert coarse > 1e-6
        assert coarse / fine >= 8.0

    def test_before_blow_up_rejected(self):
        with pytest.raises(BeyondBlowUp):
            lp_value_residual(RiccatiProblem(2.0, 0.0, 5.0), 1.0, 2.0)


class TestAuxiliaryProblem:
    def test_ramp_at_time_zero(self):
        aux = AuxiliaryParabolicSolution(1.0)
        r = np.linspace(0.0, 3.0, 31)
        assert aux.value(r, 0.0) == pytest.approx(np.maximum(0.0, r - 1.0))
        value, _ = auxiliary_phi(1.0, r, 1e-8)
        assert np.max(np.abs(value - np.maximum(0.0, r - 1.0))) < 1e-4

    @pytest.mark.parametrize("R", [1.0, 10.0, 100.0, 1000.0])
    def test_ramp_bound_derivative_and_convexity(self, R):
        aux = AuxiliaryParabolicSolution(R)
        r = np.linspace(0.0, 3.0 * R, 200)
        for t in (0.1, 0.5, 1.0):
            value, dr = aux.value(r, t), aux.dr(r, t)
            assert np.all(value >= np.maximum(0.0, r - R) - 1e-10 * R)
            assert np.all(dr >= 0.0)
            assert np.all(dr <= math.exp(t) + 1e-12)
            assert np.all(np.diff(value, 2) >= -1e-9 * R)
            assert value[0] == 0.0

    @pytest.mark.parametrize("t", [0.1, 0.5, 1.0])
    def test_decreasing_in_R(self, t):
        r = np.linspace(0.0, 10.0, 101)
        values = [AuxiliaryParabolicSolution(R).value(r, t) for R in (1.0, 10.0, 100.0, 1000.0)]
        for big, small in zip(values[1:], values):
            assert np.all(big <= small + 1e-12)
        if t <= 0.5:
            assert np.max(values[-1]) < 0.01

    def test_far_threshold_is_not_small_by_unit_time(self):
        # variance 2t = 2 puts mass past ln 1000 from r = 10
        assert float(AuxiliaryParabolicSolution(1000.0).value(10.0, 1.0)) > 0.1

    def test_satisfies_its_equation(self):
        aux = AuxiliaryParabolicSolution(2.0)
        r, t, h = np.array([0.5, 1.5, 2.0, 4.0]), 0.4, 1e-5
        dt_fd = (aux.value(r, t + h) - aux.value(r, t - h)) / (2.0 * h)
        assert aux.dt(r, t) == pytest.approx(dt_fd, rel=1e-5, abs=1e-8)

    def test_quadrature_matches_closed_form(self):
        for R in (1.0, 10.0):
            r = np.linspace(0.0, 3.0 * R, 50)
            for t in (0.1, 0.5, 1.0):
                aux = AuxiliaryParabolicSolution(R)
                value, dr = auxiliary_phi(R, r, t)
                closed = aux.value(r, t)
                assert np.max(np.abs(value - closed) / (1.0 + np.abs(closed))) < 1e-6
                assert dr[1:] == pytest.approx(aux.dr(r[1:], t), rel=1e-5, abs=1e-6)

    def test_finite_difference_cross_check(self):
        fd, _ = auxiliary_phi_fd(1.0, np.array([1.0]), 0.5)
        closed = float(AuxiliaryParabolicSolution(1.0).value(1.0, 0.5))
        assert abs(fd[0] - closed) < 1e-3

    def test_rejects_nonpositive_R(self):
        with pytest.raises(NonPositiveR):
            AuxiliaryParabolicSolution(0.0)
        with pytest.raises(NonPositiveR):
            auxiliary_phi(-1.0, 1.0, 0.5)
        with pytest.raises(NonPositiveR):
            auxiliary_phi_fd(0.0, 1.0, 0.5)

    def test_quadrature_point_floor(self):
        with pytest.raises(ValueError):
            auxiliary_phi(1.0, 1.0, 0.5, quad_points=16)


class TestManufactured:
    def test_kinds_registered(self):
        assert set(MANUFACTURED_KINDS) == {"gaussian_decay", "polynomial_p_growth", "separated_sine"}

    def test_sine_needs_no_forcing_under_heat(self, heat_spec):
        exact = manufactured_solution("separated_sine", heat_spec)
        x = np.linspace(-2.0, 2.0, 9)[:, None]
        assert np.max(np.abs(exact.forcing(x, 0.2))) < 1e-12
        value, forcing = exact
        assert value is exact.value

    def test_forcing_matches_finite_differences(self, power_spec):
        """u = (1 + t)(1 + x^2) is quadratic in x, so central differences are exact up to rounding"""
        exact = manufactured_solution("polynomial_p_growth", power_spec)
        x = np.linspace(-2.0, 2.0, 9)[:, None]
        t, h = 0.3, 1e-3
        u_t = (exact.value(x, t + h) - exact.value(x, t - h)) / (2.0 * h)
        u_x = (exact.value(x + h, t) - exact.value(x - h, t)) / (2.0 * h)
        u_xx = (exact.value(x + h, t) - 2.0 * exact.value(x, t) + exact.value(x - h, t)) / h ** 2
        expected = u_t - u_xx + u_x ** 2
        assert exact.forcing(x, t) == pytest.approx(expected, rel=1e-6, abs=1e-6)

    def test_forced_spec_has_zero_residual(self, briand_spec):
        exact = manufactured_solution("gaussian_decay", briand_spec, width=0.8, rate=0.5)
        forced = exact.forced_spec()
        x = np.linspace(-1.5, 1.5, 7)[:, None]
        t = 0.2
        # model residual of the forced problem at u itself
        residual = manufactured_solution("gaussian_decay", forced, width=0.8, rate=0.5).forcing(x, t)
        assert np.max(np.abs(residual)) < 1e-12
        assert exact.initial(x) == pytest.approx(exact.value(x, 0.0))

    def test_unknown_kind(self, heat_spec):
        with pytest.raises(UnknownKind):
            manufactured_solution("cubic", heat_spec)

    def test_controlled_problem_rejected(self, lq_spec):
        with pytest.raises(UnsupportedProblem):
            manufactured_solution("separated_sine", lq_spec)
