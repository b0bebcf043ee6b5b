import dataclasses

import numpy as np
import pytest

from hjb_verify.barriers import (
    BarrierFamily,
    build_eps_subsolution,
    build_power_barriers,
    build_strict_supersolution,
    check_linearized_operator,
    eps_envelope,
    linearized_operator,
    sample_ball,
    sample_space_time,
    viscosity_residual_check,
)
from hjb_verify.errors import DerivativeUnavailable, MissingConstants, MissingEnvelopes, UnsupportedProblem
from hjb_verify.transforms import ChangeOfFunctions


def _zero_family() -> BarrierFamily:
    def zeros(x, t):
        return np.zeros(x.shape[0])

    return BarrierFamily(
        form="power_barrier", sign="super", params={"K": 0.0}, valid_until=1.0,
        value_fn=zeros, gradient_fn=lambda x, t: np.zeros_like(x),
        hessian_fn=lambda x, t: np.zeros((x.shape[0], x.shape[1], x.shape[1])), time_fn=zeros,
    )


class TestSampling:
    def test_ball_contains_origin_and_stays_inside(self):
        pts = sample_ball(500, 2, 3.0, seed=4)
        assert np.all(pts[0] == 0.0)
        assert np.max(np.linalg.norm(pts, axis=1)) <= 3.0

    def test_deterministic(self, power_spec):
        a = sample_space_time(power_spec, 50, 2.0, 0.5, seed=9)
        b = sample_space_time(power_spec, 50, 2.0, 0.5, seed=9)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
        assert np.all((a[1] >= 0.0) & (a[1] <= 0.5))


class TestPowerBarriers:
    @pytest.mark.parametrize("fixture", ["power_spec", "briand_spec"])
    def test_both_roles_hold(self, fixture, request):
        spec = request.getfixturevalue(fixture)
        sub, sup = build_power_barriers(spec, sample_count=500)
        assert sup.params["K"] >= sup.params["C_psi"] + 1.0
        for role, family in (("super", sup), ("sub", sub)):
            report = viscosity_residual_check(family, spec, role, sample_count=300, seed=1)
            assert report.passed, report.to_dict(top=3)

    def test_initial_ordering(self, power_spec):
        sub, sup = build_power_barriers(power_spec, sample_count=500)
        x = np.linspace(-5.0, 5.0, 41)[:, None]
        assert np.all(sub.value(x, 0.0) <= power_spec.psi(x))
        assert np.all(sup.value(x, 0.0) >= power_spec.psi(x))

    def test_zero_candidate_fails(self, power_spec):
        report = viscosity_residual_check(_zero_family(), power_spec, "super", sample_count=50)
        assert not report.passed
        assert report.initial_violations

    def test_controlled_sub_reported_infeasible(self, lq_spec):
        sub, sup = build_power_barriers(lq_spec, sample_count=200)
        assert not sub.feasible
        assert sub.note
        report = viscosity_residual_check(sup, lq_spec, "super", sample_count=100)
        assert report.passed, report.to_dict(top=3)
        assert report.to_dict()["samples"] == 100

    def test_missing_constants(self, power_spec):
        with pytest.raises(MissingConstants):
            build_power_barriers(dataclasses.replace(power_spec, constants=None))

    def test_closed_form_derivatives(self, briand_spec):
        _, sup = build_power_barriers(briand_spec, sample_count=200)
        x, t, h = np.array([[0.7]]), 0.05, 1e-5
        grad_fd = (sup.value(x + h, t) - sup.value(x - h, t)) / (2.0 * h)
        hess_fd = (sup.value(x + h, t) - 2.0 * sup.value(x, t) + sup.value(x - h, t)) / h ** 2
        time_fd = (sup.value(x, t + h) - sup.value(x, t - h)) / (2.0 * h)
        assert sup.gradient(x, t)[0, 0] == pytest.approx(grad_fd[0], rel=1e-6)
        assert sup.hessian(x, t)[0, 0, 0] == pytest.approx(hess_fd[0], rel=1e-3)
        assert sup.time_derivative(x, t)[0] == pytest.approx(time_fd[0], rel=1e-6)


class TestEpsFamilies:
    @pytest.mark.parametrize("eps", [1.0, 0.1, 0.01])
    def test_subsolution_holds(self, power_spec, eps):
        family = build_eps_subsolution(power_spec, eps, sample_count=500)
        assert family.feasible
        report = viscosity_residual_check(family, power_spec, "sub", sample_count=300, seed=2)
        assert report.passed, report.to_dict(top=3)

    def test_zero_envelopes_give_zero_excess(self, power_spec):
        constants = dataclasses.replace(power_spec.constants, chi=lambda x: np.zeros(len(x)),
                                        gamma=lambda x: np.zeros(len(x)))
        spec = dataclasses.replace(power_spec, constants=constants, initial=lambda x: np.zeros(x.shape[0]))
        assert build_eps_subsolution(spec, 0.1).params["M_eps"] == 0.0

    def test_excess_grows_as_eps_shrinks(self, power_spec):
        m = [build_eps_subsolution(power_spec, eps).params["M_eps"] for eps in (1.0, 0.1, 0.01)]
        assert m[0] <= m[1] <= m[2]

    def test_controlled_small_eps_feasible(self, lq_spec):
        small = build_eps_subsolution(lq_spec, 0.1, sample_count=200)
        assert small.feasible
        report = viscosity_residual_check(small, lq_spec, "sub", sample_count=100)
        assert report.passed, report.to_dict(top=3)
        assert not build_eps_subsolution(lq_spec, 1.0, sample_count=200).feasible

    def test_missing_envelopes(self, lp_spec):
        with pytest.raises(MissingEnvelopes):
            build_eps_subsolution(lp_spec, 0.1)

    def test_eps_must_be_positive(self, power_spec):
        with pytest.raises(ValueError):
            build_eps_subsolution(power_spec, 0.0)

    def test_envelope_grows_with_more_families(self, power_spec):
        families = [build_eps_subsolution(power_spec, eps) for eps in (1.0, 0.1, 0.01)]
        x = np.linspace(-20.0, 20.0, 81)[:, None]
        t = 0.5 * min(f.valid_until for f in families)
        coarse = eps_envelope(families[:1]).value(x, t)
        fine = eps_envelope(families).value(x, t)
        assert np.all(fine >= coarse)
        assert eps_envelope(families).valid_until == min(f.valid_until for f in families)

    def test_envelope_rejects_other_forms(self, power_spec):
        sub, _ = build_power_barriers(power_spec)
        with pytest.raises(ValueError):
            eps_envelope([sub])
        with pytest.raises(ValueError):
            eps_envelope([])


class TestStrictSupersolution:
    @pytest.fixture
    def change(self, power_spec):
        _, sup = build_power_barriers(power_spec, sample_count=500)
        return ChangeOfFunctions.for_problem(power_spec, sup.params["C_psi"])

    @pytest.mark.parametrize("mu", [0.5, 0.9, 0.99])
    @pytest.mark.parametrize("R", [1.0, 1000.0])
    def test_linearized_operator_positive(self, power_spec, change, mu, R):
        phi = build_strict_supersolution(change, power_spec, R, mu)
        assert phi.feasible
        assert phi.params["L"] >= change.rate
        report = check_linearized_operator(phi, None, power_spec, mu, sample_count=300)
        assert report.passed, report.to_dict(top=3)
        assert report.min_residual > 0.0

    def test_nonnegative_and_above_shifted_weight(self, power_spec, change):
        phi = build_strict_supersolution(change, power_spec, 10.0, 0.9)
        x = np.linspace(-10.0, 10.0, 101)[:, None]
        t = 0.5 * phi.valid_until
        values = phi.value(x, t)
        assert np.all(values >= 0.0)
        assert np.all(values >= phi.change.h(x) - 10.0 - 1e-9)

    def test_decreasing_in_R(self, power_spec, change):
        x = np.array([[1.0]])
        values = []
        for R in (100.0, 1000.0, 10000.0):
            phi = build_strict_supersolution(change, power_spec, R, 0.5)
            values.append(phi.value(x, 0.5 * phi.valid_until)[0])
        assert values[0] >= values[1] >= values[2]

    def test_operator_matches_helper(self, power_spec, change):
        phi = build_strict_supersolution(change, power_spec, 1.0, 0.5)
        x = np.array([[0.0], [2.0]])
        t = np.full(2, 0.5 / phi.params["L"])
        direct = linearized_operator(phi, phi.change, power_spec, 0.5, x, t)
        report = check_linearized_operator(phi, None, power_spec, 0.5, samples=(x, t))
        assert report.residuals == pytest.approx(direct)

    def test_controlled_rejected(self, lq_spec):
        with pytest.raises(UnsupportedProblem):
            build_strict_supersolution(ChangeOfFunctions(1.0, 1.0, 2.0), lq_spec, 1.0, 0.5)

    @pytest.mark.parametrize("mu", [0.0, 1.0])
    def test_mu_range(self, power_spec, change, mu):
        with pytest.raises(ValueError):
            build_strict_supersolution(change, power_spec, 1.0, mu)


class TestResidualReport:
    def test_bad_role(self, power_spec):
        sub, _ = build_power_barriers(power_spec)
        with pytest.raises(ValueError):
            viscosity_residual_check(sub, power_spec, "both")
        with pytest.raises(ValueError):
            viscosity_residual_check(sub, power_spec, "sub", eta=0.0)

    def test_candidate_without_derivatives(self, power_spec):
        class ValueOnly:
            valid_until = 1.0

            def value(self, x, t):
                return np.zeros(np.atleast_2d(x).shape[0])

        with pytest.raises(DerivativeUnavailable):
            viscosity_residual_check(ValueOnly(), power_spec, "sub", sample_count=5)

    def test_offenders_sorted(self, power_spec):
        report = viscosity_residual_check(_zero_family(), power_spec, "sub", eta=1e-6,
                                          samples=(np.array([[0.0], [1.0]]), np.zeros(2)))
        payload = report.to_dict(top=1)
        assert payload["samples"] == 2
        assert len(payload["worst_points"]) <= 1
