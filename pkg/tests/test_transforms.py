import numpy as np
import pytest

from hjb_verify.errors import UnsupportedProblem
from hjb_verify.oracles import manufactured_solution
from hjb_verify.problem import model_residual
from hjb_verify.transforms import (
    ChangeOfFunctions,
    convex_combination_bound,
    forward_transform,
    g_tilde,
    inverse_transform,
    select_cbar,
    select_rate,
    transform_derivatives,
    transformed_initial_datum,
    transformed_nonlinearity,
    transformed_residual,
)


class TestConstantSelection:
    def test_cbar(self):
        assert select_cbar() == 1.0
        assert select_cbar(1.0, -3.0) == 7.0

    def test_rate_for_briand_hu(self, briand_spec):
        # Ĉ = 0.5, C_σ = 1, C_b = 0.5, p = 2, N = 1
        assert select_rate(briand_spec) == pytest.approx(max(0.5, 8.0 + 4.0 + 5.0) + 1.0)

    def test_rate_exceeds_lipschitz_constant(self, briand_spec, power_spec):
        for spec in (briand_spec, power_spec):
            assert select_rate(spec) > spec.constants.c_hat

    def test_invalid_change(self):
        with pytest.raises(ValueError):
            ChangeOfFunctions(0.0, 1.0, 2.0)
        with pytest.raises(ValueError):
            ChangeOfFunctions(1.0, -1.0, 2.0)


class TestChangeOfFunctions:
    def test_inverse_undoes_forward(self, rng):
        cf = ChangeOfFunctions(3.0, 2.0, 2.5)
        x = rng.uniform(-4.0, 4.0, size=(50, 2))
        u = rng.normal(size=50)
        back = inverse_transform(cf, forward_transform(cf, u, x, 0.7), x, 0.7)
        assert back == pytest.approx(u, rel=1e-12, abs=1e-10)

    def test_initial_datum(self, power_spec):
        cf = ChangeOfFunctions.for_problem(power_spec, 1.0)
        x = np.linspace(-3.0, 3.0, 7)[:, None]
        assert transformed_initial_datum(cf, power_spec.psi, x) == pytest.approx(power_spec.psi(x) + cf.h(x))

    def test_literal_weight(self):
        cf = ChangeOfFunctions(1.0, 2.0, 3.0, smooth=False)
        assert cf.h(np.array([[2.0]]))[0] == pytest.approx(2.0 * (1.0 + 8.0))

    def test_residual_scales_by_damping(self, briand_spec, rng):
        """The transformed residual at ũ equals e^{-Lt} times the model residual at u"""
        cf = ChangeOfFunctions.for_problem(briand_spec, 1.0)
        exact = manufactured_solution("polynomial_p_growth", briand_spec)
        x = rng.uniform(-3.0, 3.0, size=(25, 1))
        t = 0.3
        u, ut, du, d2u = (exact.value(x, t), exact.time_derivative(x, t), exact.gradient(x, t),
                          exact.hessian(x, t))
        # a wrong guess for u, so the residual is not zero
        u_off = u + 0.5
        original = model_residual(briand_spec, x, t, u_off, ut, du, d2u)
        tilde = transform_derivatives(cf, x, t, u_off, ut, du, d2u)
        transformed = transformed_residual(cf, briand_spec, x, t, *tilde)
        assert transformed == pytest.approx(cf.damping(t) * original, rel=1e-8, abs=1e-8)

    def test_nonlinearity_nondecreasing_in_v(self, briand_spec, rng):
        cf = ChangeOfFunctions.for_problem(briand_spec, 1.0)
        x = rng.uniform(-2.0, 2.0, size=(30, 1))
        z = rng.normal(size=(30, 1))
        v1 = rng.normal(size=30)
        v2 = v1 + rng.uniform(0.0, 3.0, size=30)
        lo = transformed_nonlinearity(cf, briand_spec, x, 0.2, v1, z)
        hi = transformed_nonlinearity(cf, briand_spec, x, 0.2, v2, z)
        assert np.all(hi - lo >= -1e-12)

    def test_g_tilde_for_heat(self, heat_spec):
        cf = ChangeOfFunctions(1.0, 1.0, 2.0)
        x = np.array([[0.0], [1.5]])
        # Tr(D²h) = 2 for h = 1 + x^2 and b = 0
        assert g_tilde(cf, heat_spec, x, 0.0) == pytest.approx([2.0, 2.0])

    def test_controlled_problem_rejected(self, lq_spec):
        cf = ChangeOfFunctions(1.0, 1.0, 2.0)
        with pytest.raises(UnsupportedProblem):
            g_tilde(cf, lq_spec, np.zeros((1, 1)), 0.0)


class TestConvexCombination:
    def test_bound_for_convex_function(self, rng):
        def psi(v):
            return float(np.sum(v * v))

        for mu in (0.5, 0.9, 0.99):
            for _ in range(20):
                xi, zeta = rng.normal(size=2), rng.normal(size=2)
                lhs, rhs = convex_combination_bound(psi, mu, xi, zeta)
                assert lhs <= rhs + 1e-10 * (1.0 + abs(rhs))

    @pytest.mark.parametrize("mu", [0.0, 1.0, 1.5])
    def test_mu_range(self, mu):
        with pytest.raises(ValueError):
            convex_combination_bound(lambda v: 0.0, mu, np.zeros(1), np.zeros(1))
