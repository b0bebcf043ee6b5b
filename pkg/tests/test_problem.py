import dataclasses
import math

import numpy as np
import pytest

from hjb_verify.errors import DimensionMismatch, EmptyGrid, UnsupportedProblem
from hjb_verify.grid import Grid, GridFunction
from hjb_verify.oracles import manufactured_solution
from hjb_verify.problem import (
    AssumptionConstants,
    ExtendedReal,
    control_residual,
    growth_witness,
    hamiltonian_eval,
    legendre_power,
    maximise_control,
    model_residual,
    power_model_control_weight,
    validate_assumptions,
)


class TestLegendrePower:
    def test_matches_grid_search(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            nu = 0.1 + 9.9 * rng.random()
            m = 1.2 + 2.8 * rng.random()
            direction = rng.standard_normal(int(rng.integers(1, 4)))
            q = 10.0 * rng.random() * direction / np.linalg.norm(direction)
            norm = float(np.linalg.norm(q))
            peak = (norm / (nu * m)) ** (1.0 / (m - 1.0))
            r = np.linspace(0.0, 2.0 * peak, 200_001)
            brute = float(np.max(norm * r - nu * r ** m))
            value = legendre_power(nu, m, q)
            assert value == pytest.approx(brute, rel=1e-6, abs=1e-12)
            # no control off the q direction does better
            alpha = 2.0 * peak * rng.uniform(-1.0, 1.0, size=(200, q.size))
            trial = alpha @ q - nu * np.linalg.norm(alpha, axis=1) ** m
            assert np.all(trial <= value + 1e-9 * (1.0 + abs(value)))

    def test_follows_batch_shape(self):
        out = legendre_power(1.0, 2.0, [[3.0, 4.0], [0.0, 0.0]])
        assert out.shape == (2,)
        assert out == pytest.approx([6.25, 0.0])

    def test_scalar_in_scalar_out(self):
        assert isinstance(legendre_power(2.0, 3.0, -1.5), float)

    @pytest.mark.parametrize("nu,m", [(0.0, 2.0), (-1.0, 2.0), (1.0, 1.0), (1.0, 0.5)])
    def test_rejects_bad_parameters(self, nu, m):
        with pytest.raises(ValueError):
            legendre_power(nu, m, 1.0)

    def test_power_model_weight_reproduces_gradient_term(self):
        for p, c in [(2.0, 1.0), (3.0, 2.0), (1.5, 0.7)]:
            nu = power_model_control_weight(p, c)
            pc = p / (p - 1.0)
            for q in (0.3, 1.7, 5.0):
                assert legendre_power(nu, p, q) == pytest.approx(c * q ** pc, rel=1e-12)


class TestExtendedReal:
    def test_ordering(self):
        inf = ExtendedReal.pos_infinity()
        assert ExtendedReal.finite(1e300) < inf
        assert ExtendedReal.finite(-1.0) < ExtendedReal.finite(2.0)
        assert inf == ExtendedReal.pos_infinity()
        assert max(ExtendedReal.finite(3.0), inf) is inf

    def test_addition_absorbs_into_infinity(self):
        assert (ExtendedReal.finite(2.0) + 3.0) == 5.0
        assert not (ExtendedReal.pos_infinity() + ExtendedReal.finite(-1e9)).is_finite
        assert float(ExtendedReal.pos_infinity()) == math.inf

    def test_tag(self):
        assert ExtendedReal.finite(0.0).tag == "finite"
        assert ExtendedReal.pos_infinity().tag == "pos_infinity"


class TestAssumptionConstants:
    def test_rejects_negative_or_infinite(self):
        with pytest.raises(ValueError):
            AssumptionConstants(c_b=-1.0)
        with pytest.raises(ValueError):
            AssumptionConstants(c_f=math.inf)
        with pytest.raises(ValueError):
            AssumptionConstants(nu=0.0)

    def test_envelopes_need_both(self):
        assert not AssumptionConstants(chi=lambda x: x).has_envelopes


class TestHamiltonian:
    """eq3_lq has H finite iff 1 + κ Tr X > 0 at q = 0 (threshold Tr X = -2)"""

    def test_infinity_dichotomy(self, lq_spec):
        x, q = np.zeros(1), np.zeros(1)
        assert hamiltonian_eval(lq_spec, x, 0.0, q, np.array([[-1.9]])).is_finite
        assert not hamiltonian_eval(lq_spec, x, 0.0, q, np.array([[-2.1]])).is_finite
        assert hamiltonian_eval(lq_spec, x, 0.0, q, np.array([[5.0]])) == 0.0

    @pytest.mark.parametrize("closed_form", [True, False])
    def test_infinity_dichotomy_on_random_curvatures(self, lq_spec, closed_form):
        spec = lq_spec if closed_form else dataclasses.replace(lq_spec, power_form=None)
        rng = np.random.default_rng(3)
        x, q = np.zeros(1), np.zeros(1)
        for X in rng.uniform(-2.0, 8.0, size=100):
            assert hamiltonian_eval(spec, x, 0.0, q, np.array([[X]])).is_finite, X
        for X in rng.uniform(-12.0, -2.1, size=100):
            assert not hamiltonian_eval(spec, x, 0.0, q, np.array([[X]])).is_finite, X

    @pytest.mark.parametrize("closed_form", [True, False])
    def test_convex_in_gradient(self, lq_spec, closed_form, rng):
        spec = lq_spec if closed_form else dataclasses.replace(lq_spec, power_form=None)
        checked = 0
        for _ in range(50):
            x = rng.uniform(-2.0, 2.0, size=1)
            X = np.array([[rng.uniform(-2.5, 3.0)]])
            q1, q2 = rng.normal(scale=3.0, size=(2, 1))
            h1 = hamiltonian_eval(spec, x, 0.0, q1, X)
            h2 = hamiltonian_eval(spec, x, 0.0, q2, X)
            if not (h1.is_finite and h2.is_finite):
                continue
            mid = float(hamiltonian_eval(spec, x, 0.0, 0.5 * (q1 + q2), X))
            average = 0.5 * (float(h1) + float(h2))
            assert mid <= average + 1e-7 * (1.0 + abs(average))
            checked += 1
        assert checked > 20

    def test_closed_form_value(self, lq_spec):
        # sup_a {-a q - a^2 - 0.5 a^2 X} = q^2 / (4 (1 + 0.5 X))
        value = hamiltonian_eval(lq_spec, np.zeros(1), 0.0, np.array([1.0]), np.array([[0.5]]))
        assert float(value) == pytest.approx(0.2, rel=1e-12)

    def test_numerical_sup_matches_closed_form(self, lq_spec):
        generic = dataclasses.replace(lq_spec, power_form=None)
        value, alpha = maximise_control(generic, np.zeros(1), 0.0, np.array([1.0]), np.array([[0.5]]))
        assert value.is_finite
        assert float(value) == pytest.approx(0.2, abs=1e-8)
        assert alpha[0] == pytest.approx(-0.4, abs=1e-4)

    def test_numerical_sup_detects_infinity(self, lq_spec):
        generic = dataclasses.replace(lq_spec, power_form=None)
        value = hamiltonian_eval(generic, np.zeros(1), 0.0, np.zeros(1), np.array([[-2.5]]))
        assert not value.is_finite

    def test_nonincreasing_in_second_derivative(self, lq_spec, rng):
        x = np.array([0.3])
        for _ in range(20):
            q = rng.normal(size=1)
            lo, hi = np.sort(rng.uniform(-1.5, 4.0, size=2))
            h_lo = hamiltonian_eval(lq_spec, x, 0.0, q, np.array([[lo]]))
            h_hi = hamiltonian_eval(lq_spec, x, 0.0, q, np.array([[hi]]))
            assert h_hi <= h_lo

    def test_uncontrolled_problem_rejected(self, power_spec):
        with pytest.raises(UnsupportedProblem):
            hamiltonian_eval(power_spec, np.zeros(1), 0.0, np.zeros(1), np.zeros((1, 1)))

    def test_dimension_mismatch(self, lq_spec):
        with pytest.raises(DimensionMismatch):
            hamiltonian_eval(lq_spec, np.zeros(2), 0.0, np.zeros(2), np.zeros((2, 2)))


class TestResiduals:
    def test_heat_sine_solves_model_equation(self, heat_spec):
        exact = manufactured_solution("separated_sine", heat_spec)
        x = np.linspace(-2.0, 2.0, 11)[:, None]
        t = 0.3
        residual = model_residual(heat_spec, x, t, exact.value(x, t), exact.time_derivative(x, t),
                                  exact.gradient(x, t), exact.hessian(x, t))
        assert np.max(np.abs(residual)) < 1e-12

    def test_model_residual_rejects_controlled(self, lq_spec):
        with pytest.raises(UnsupportedProblem):
            model_residual(lq_spec, np.zeros((1, 1)), 0.0, np.zeros(1), np.zeros(1), np.zeros((1, 1)),
                           np.zeros((1, 1, 1)))

    def test_control_residual_reports_maximisers(self, lq_spec):
        x = np.array([[0.0], [1.0]])
        du = np.array([[1.0], [1.0]])
        d2u = np.full((2, 1, 1), 0.5)
        values, controls = control_residual(lq_spec, x, 0.0, np.zeros(2), np.zeros(2), du, d2u)
        # H = -λ x q + q^2 / (4 (1 + κ X))
        assert values == pytest.approx([0.2, -0.8])
        assert controls[:, 0] == pytest.approx([-0.4, -0.4])


class TestValidateAssumptions:
    @pytest.mark.parametrize("fixture", ["power_spec", "briand_spec", "lq_spec", "lp_spec"])
    def test_presets_pass(self, fixture, request):
        spec = request.getfixturevalue(fixture)
        report = validate_assumptions(spec, 100, 10.0, seed=3)
        assert report.passed, [v.to_dict() for v in report.violations[:3]]
        assert "convexity_in_z" in report.checks_run

    def test_concave_nonlinearity_flagged(self, power_spec):
        broken = dataclasses.replace(power_spec, nonlinearity=lambda x, t, u, z: -np.sum(z * z, axis=1))
        report = validate_assumptions(broken, 100, 10.0, seed=3)
        assert not report.passed
        assert report.violations_for("convexity_in_z")
        assert report.to_dict()["violation_count"] == len(report.violations)

    def test_understated_constant_flagged(self, briand_spec):
        constants = dataclasses.replace(briand_spec.constants, c_hat=0.1)
        report = validate_assumptions(dataclasses.replace(briand_spec, constants=constants), 50, 5.0)
        assert report.violations_for("lipschitz_in_u")

    def test_needs_samples(self, power_spec):
        with pytest.raises(ValueError):
            validate_assumptions(power_spec, 0, 1.0)


class TestGrowthWitness:
    def test_bounded_constant(self):
        grid = Grid.uniform(1, 5.0, 41, 1.0)
        frame = grid.sample(lambda x: 3.0 * (1.0 + np.sum(x * x, axis=1)))
        witness = growth_witness([frame], 2.0)
        assert witness.constant == pytest.approx(3.0)
        assert witness.to_dict()["class"] == "bounded"

    def test_strict_excess(self):
        grid = Grid.uniform(1, 5.0, 41, 1.0)
        frame = grid.sample(lambda x: np.sqrt(1.0 + np.sum(x * x, axis=1)))
        witness = growth_witness([frame], 2.0, mode="strict")
        assert witness.m_eps[1.0] == 0.0
        assert witness.m_eps[0.01] > 0.0
        assert witness.m_eps[0.01] >= witness.m_eps[0.1] >= witness.m_eps[1.0]

    def test_one_sided_envelope(self):
        grid = Grid.uniform(1, 2.0, 21, 1.0)
        frame = GridFunction(grid, -np.ones(grid.size))
        assert growth_witness([frame], 2.0).m_lambda(0.0) == pytest.approx(-1.0)

    def test_empty_input(self):
        with pytest.raises(EmptyGrid):
            growth_witness([], 2.0)

    def test_bad_mode(self):
        grid = Grid.uniform(1, 1.0, 5, 1.0)
        with pytest.raises(ValueError):
            growth_witness([grid.sample(lambda x: x[:, 0])], 2.0, mode="loose")
