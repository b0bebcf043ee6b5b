"""
Exponential change of unknown u -> e^{-Lt} u + h(x) and the convexity helpers used with it.

The weight h is C̄ (1 + |x|^2)^{p/2} by default so that it has closed-form
derivatives everywhere; pass smooth=False for the literal C̄ (1 + |x|^p).
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Tuple

import numpy as np

from .errors import UnsupportedProblem
from .problem import ProblemSpec
from .weights import PowerWeight, as_points


@dataclass(frozen=True)
class ChangeOfFunctions:
    rate: float
    cbar: float
    p: float
    smooth: bool = True
    weight: PowerWeight = field(init=False, repr=False)

    def __post_init__(self):
        if self.rate <= 0.0:
            raise ValueError(f"rate L must be positive, got {self.rate}")
        if self.cbar <= 0.0:
            raise ValueError(f"C̄ must be positive, got {self.cbar}")
        object.__setattr__(self, "weight", PowerWeight(self.p, self.cbar, self.smooth))

    @classmethod
    def for_problem(cls, spec: ProblemSpec, *bounded_constants: float) -> "ChangeOfFunctions":
        return cls(select_rate(spec), select_cbar(*bounded_constants), spec.p)

    def with_rate(self, rate: float) -> "ChangeOfFunctions":
        return ChangeOfFunctions(rate, self.cbar, self.p, self.smooth)

    def h(self, x: np.ndarray) -> np.ndarray:
        return self.weight.value(x)

    def dh(self, x: np.ndarray) -> np.ndarray:
        return self.weight.gradient(x)

    def d2h(self, x: np.ndarray) -> np.ndarray:
        return self.weight.hessian(x)

    def damping(self, t: float) -> float:
        return math.exp(-self.rate * t)


def select_cbar(*bounded_constants: float) -> float:
    """C̄ = 2 max(bounded-class constants) + 1"""
    if not bounded_constants:
        return 1.0
    return 2.0 * max(abs(c) for c in bounded_constants) + 1.0


def select_rate(spec: ProblemSpec) -> float:
    """L = max(Ĉ, 4p(p-1) N C_σ² + 4p C_b + 10 Ĉ) + 1"""
    c, p, n = spec.constants, spec.p, spec.space_dim
    return max(c.c_hat, 4.0 * p * (p - 1.0) * n * c.c_sigma ** 2 + 4.0 * p * c.c_b + 10.0 * c.c_hat) + 1.0


def forward_transform(cf: ChangeOfFunctions, u, x: np.ndarray, t: float) -> np.ndarray:
    return cf.damping(t) * np.asarray(u, dtype=float) + cf.h(x)


def inverse_transform(cf: ChangeOfFunctions, u_tilde, x: np.ndarray, t: float) -> np.ndarray:
    return (np.asarray(u_tilde, dtype=float) - cf.h(x)) / cf.damping(t)


def transformed_initial_datum(cf: ChangeOfFunctions, psi: Callable[[np.ndarray], np.ndarray],
                              x: np.ndarray) -> np.ndarray:
    x = as_points(x)
    return np.asarray(psi(x), dtype=float) + cf.h(x)


def g_tilde(cf: ChangeOfFunctions, spec: ProblemSpec, x: np.ndarray, t: float) -> np.ndarray:
    """Tr(σσᵀ D²h) - <b, Dh>"""
    if spec.controlled:
        raise UnsupportedProblem("the change of functions applies to uncontrolled problems")
    x = as_points(x)
    return np.einsum("nij,nji->n", spec.a(x, t), cf.d2h(x)) - np.sum(spec.b(x, t) * cf.dh(x), axis=1)


def transformed_nonlinearity(cf: ChangeOfFunctions, spec: ProblemSpec, x: np.ndarray, t: float,
                             v, z: np.ndarray) -> np.ndarray:
    """L v + g̃(x, t) + e^{-Lt} f(x, t, e^{Lt} v, e^{Lt} z)"""
    x = as_points(x)
    v = np.broadcast_to(np.asarray(v, dtype=float), (x.shape[0],))
    grow = 1.0 / cf.damping(t)
    return cf.rate * v + g_tilde(cf, spec, x, t) + cf.damping(t) * spec.f(x, t, grow * v, grow * as_points(z))


def transform_derivatives(cf: ChangeOfFunctions, x: np.ndarray, t: float, u, u_t, du: np.ndarray,
                          d2u: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Value and derivatives of ũ from those of u"""
    x = as_points(x)
    k = cf.damping(t)
    u = np.asarray(u, dtype=float)
    return (
        k * u + cf.h(x),
        k * (np.asarray(u_t, dtype=float) - cf.rate * u),
        k * as_points(du) + cf.dh(x),
        k * np.asarray(d2u, dtype=float).reshape(x.shape[0], x.shape[1], x.shape[1]) + cf.d2h(x),
    )


def transformed_residual(cf: ChangeOfFunctions, spec: ProblemSpec, x: np.ndarray, t: float, u_tilde,
                         ut_tilde, du_tilde: np.ndarray, d2u_tilde: np.ndarray) -> np.ndarray:
    """ũ_t - Tr(σσᵀ D²ũ) + <b, Dũ> + f̃(x, t, ũ - h, s(Dũ - Dh))"""
    x = as_points(x)
    du_tilde = as_points(du_tilde)
    d2u_tilde = np.asarray(d2u_tilde, dtype=float).reshape(x.shape[0], x.shape[1], x.shape[1])
    v = np.asarray(u_tilde, dtype=float) - cf.h(x)
    z = np.einsum("nij,nj->ni", spec.s(x, t), du_tilde - cf.dh(x))
    trace = np.einsum("nij,nji->n", spec.a(x, t), d2u_tilde)
    drift = np.sum(spec.b(x, t) * du_tilde, axis=1)
    return np.asarray(ut_tilde, dtype=float) - trace + drift + transformed_nonlinearity(cf, spec, x, t, v, z)


def convex_combination_bound(psi: Callable[[np.ndarray], float], mu: float, xi: np.ndarray,
                             zeta: np.ndarray) -> Tuple[float, float]:
    """Both sides of -μΨ(ξ) + Ψ(ζ) <= (1-μ) Ψ((μξ - ζ)/(μ - 1))"""
    if not 0.0 < mu < 1.0:
        raise ValueError(f"mu must lie in (0, 1), got {mu}")
    xi = np.asarray(xi, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    lhs = -mu * float(psi(xi)) + float(psi(zeta))
    rhs = (1.0 - mu) * float(psi((mu * xi - zeta) / (mu - 1.0)))
    return lhs, rhs
