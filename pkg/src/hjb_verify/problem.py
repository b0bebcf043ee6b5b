#!/usr/bin/env python3
"""
HJB problem instances, structural assumption checks and the Hamiltonian.

Coefficient callables are vectorised over a leading batch axis:
    drift(x, t[, alpha])        -> (n, N)
    diffusion(x, t[, alpha])    -> (n, N, M)
    gradient_weight(x, t)       -> (n, N, N)
    running_cost(x, t, alpha)   -> (n,)
    nonlinearity(x, t, u, z)    -> (n,)
    initial(x)                  -> (n,)
with x of shape (n, N), alpha of shape (n, control_dim), u of shape (n,), z of shape (n, N).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import total_ordering
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DimensionMismatch, EmptyGrid, NonCoercive, UnsupportedProblem
from .weights import as_points

logger = logging.getLogger(__name__)

Coefficient = Callable[..., np.ndarray]

# control search settings
GRID_POINTS_PER_DIM = 64
MAX_CONTROL_GRID = 262144
PROBE_RADII = (2.0, 10.0)
PROBE_MARGIN = 1e-6
MAX_BOX_GROWTH = 30
CONVEXITY_TOL = 1e-10


@dataclass(frozen=True)
class AssumptionConstants:
    """Constants of the growth / Lipschitz assumptions, plus optional envelopes chi and gamma"""
    c_b: float = 0.0
    c_sigma: float = 0.0
    c_ell: float = 0.0
    nu: float = 1.0
    c_f: float = 0.0
    c_s: float = 0.0
    c_hat: float = 0.0
    chi: Optional[Callable[[np.ndarray], np.ndarray]] = None
    gamma: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        values = {
            "c_b": self.c_b, "c_sigma": self.c_sigma, "c_ell": self.c_ell, "nu": self.nu,
            "c_f": self.c_f, "c_s": self.c_s, "c_hat": self.c_hat,
        }
        for name, value in values.items():
            if not math.isfinite(value):
                raise ValueError(f"assumption constant {name} must be finite, got {value}")
            if value < 0.0:
                raise ValueError(f"assumption constant {name} must be nonnegative, got {value}")
        if self.nu <= 0.0:
            raise ValueError("coercivity constant nu must be positive")

    @property
    def has_envelopes(self) -> bool:
        return self.chi is not None and self.gamma is not None

    def as_dict(self) -> Dict[str, float]:
        return {
            "C_b": self.c_b, "C_sigma": self.c_sigma, "C_ell": self.c_ell, "nu": self.nu,
            "C_f": self.c_f, "C_s": self.c_s, "C_hat": self.c_hat,
        }


@total_ordering
@dataclass(frozen=True, eq=False)
class ExtendedReal:
    """A real number or +infinity"""
    value: float = 0.0
    infinite: bool = False

    @classmethod
    def finite(cls, value: float) -> "ExtendedReal":
        return cls(float(value), False)

    @classmethod
    def pos_infinity(cls) -> "ExtendedReal":
        return cls(0.0, True)

    @property
    def is_finite(self) -> bool:
        return not self.infinite

    @property
    def tag(self) -> str:
        return "pos_infinity" if self.infinite else "finite"

    def _key(self) -> Tuple[int, float]:
        return (1, 0.0) if self.infinite else (0, self.value)

    def __add__(self, other: Any) -> "ExtendedReal":
        if not isinstance(other, ExtendedReal):
            other = ExtendedReal.finite(other)
        if self.infinite or other.infinite:
            return ExtendedReal.pos_infinity()
        return ExtendedReal.finite(self.value + other.value)

    __radd__ = __add__

    def __eq__(self, other: Any) -> bool:
        if not isinstance(other, ExtendedReal):
            other = ExtendedReal.finite(other)
        return self._key() == other._key()

    def __lt__(self, other: Any) -> bool:
        if not isinstance(other, ExtendedReal):
            other = ExtendedReal.finite(other)
        return self._key() < other._key()

    def __hash__(self) -> int:
        return hash(self._key())

    def __float__(self) -> float:
        return math.inf if self.infinite else self.value

    def __repr__(self) -> str:
        return "ExtendedReal(+inf)" if self.infinite else f"ExtendedReal({self.value!r})"


def legendre_power(nu: float, m: float, q: Any) -> Any:
    """sup over alpha of <alpha, q> - nu |alpha|^m, in closed form.

    q may be a scalar, a vector (N,) or a batch (n, N); the result follows q's batch shape.
    """
    if nu <= 0.0:
        raise ValueError(f"nu must be positive, got {nu}")
    if m <= 1.0:
        raise ValueError(f"m must exceed 1, got {m}")
    q = np.asarray(q, dtype=float)
    norm = np.abs(q) if q.ndim == 0 else np.linalg.norm(q, axis=-1)
    conj = m / (m - 1.0)
    value = (m - 1.0) * m ** (-conj) * nu ** (-1.0 / (m - 1.0)) * norm ** conj
    return float(value) if np.ndim(value) == 0 else value


def power_model_control_weight(p: float, c: float = 1.0) -> float:
    """Cost weight nu with legendre_power(nu, p, q) == c |q|^(p')"""
    if c <= 0.0:
        raise ValueError("gradient coefficient must be positive")
    return (p - 1.0) ** (p - 1.0) * p ** (-p) * c ** (-(p - 1.0))


@dataclass(frozen=True)
class PowerForm:
    """Controlled coefficients of power type.

    b = drift_gain * alpha + state_drift * x,  l = cost_weight |alpha|^cost_power,
    sigma sigma^T = diffusion_gain |alpha|^2 I.
    """
    drift_gain: float = 1.0
    state_drift: float = 0.0
    cost_weight: float = 1.0
    cost_power: float = 2.0
    diffusion_gain: float = 0.0

    def hamiltonian(self, x: np.ndarray, q: np.ndarray, X: np.ndarray) -> Tuple[ExtendedReal, np.ndarray]:
        """Closed-form sup over controls, with a maximiser (or a divergent direction)"""
        base = -self.state_drift * float(np.dot(x, q))
        slope = abs(self.drift_gain) * float(np.linalg.norm(q))
        if slope > 0.0:
            direction = -np.sign(self.drift_gain) * q / np.linalg.norm(q)
        else:
            direction = np.zeros_like(q)
            direction[0] = 1.0
        curvature = self.diffusion_gain * float(np.trace(X))
        c, m = self.cost_weight, self.cost_power

        if m == 2.0:
            eff = c + curvature
            if eff > 0.0:
                radius = slope / (2.0 * eff)
                return ExtendedReal.finite(base + slope ** 2 / (4.0 * eff)), radius * direction
            if eff == 0.0 and slope == 0.0:
                return ExtendedReal.finite(base), np.zeros_like(q)
            return ExtendedReal.pos_infinity(), 1e6 * direction
        if curvature == 0.0:
            value = legendre_power(c, m, slope)
            radius = (slope / (c * m)) ** (1.0 / (m - 1.0)) if slope > 0.0 else 0.0
            return ExtendedReal.finite(base + value), radius * direction
        if m < 2.0 and curvature < 0.0:
            return ExtendedReal.pos_infinity(), 1e6 * direction

        def negative_profile(r: float) -> float:
            return -(slope * r - c * r ** m - curvature * r * r)

        if m > 2.0:
            r_hi = 2.0 * max(1.0, ((slope + abs(curvature)) / c) ** (1.0 / (m - 2.0)))
        else:
            r_hi = 2.0 * max(1.0, slope / curvature)
        result = minimize_scalar(negative_profile, bounds=(0.0, r_hi), method="bounded",
                                 options={"xatol": 1e-12})
        radius = float(result.x) if -result.fun > 0.0 else 0.0
        return ExtendedReal.finite(base + max(-float(result.fun), 0.0)), radius * direction

    def diverges(self, q_norm: np.ndarray, trace: np.ndarray) -> np.ndarray:
        """Batched +inf test of `hamiltonian`, from |q| and Tr X per point"""
        slope = abs(self.drift_gain) * np.asarray(q_norm, dtype=float)
        curvature = self.diffusion_gain * np.asarray(trace, dtype=float)
        if self.cost_power == 2.0:
            eff = self.cost_weight + curvature
            return (eff < 0.0) | ((eff == 0.0) & (slope > 0.0))
        if self.cost_power < 2.0:
            return curvature < 0.0
        return np.zeros(curvature.shape, dtype=bool)


@dataclass(frozen=True)
class ProblemSpec:
    """One HJB instance: coefficients, data, horizon and assumption constants"""
    space_dim: int
    p: float
    drift: Coefficient
    diffusion: Coefficient
    initial: Callable[[np.ndarray], np.ndarray]
    horizon: float
    constants: AssumptionConstants
    nonlinearity: Optional[Coefficient] = None
    gradient_weight: Optional[Coefficient] = None
    running_cost: Optional[Coefficient] = None
    controlled: bool = False
    control_dim: Optional[int] = None
    power_form: Optional[PowerForm] = None
    z_min_at_origin: bool = False
    name: str = "custom"
    p_conj: float = field(init=False)

    def __post_init__(self):
        if self.space_dim < 1:
            raise ValueError("space_dim must be a positive integer")
        if self.p <= 1.0:
            raise ValueError(f"p must exceed 1, got {self.p}")
        if self.horizon <= 0.0:
            raise ValueError("horizon T must be positive")
        if self.controlled and self.running_cost is None:
            raise ValueError("controlled problems need a running cost")
        object.__setattr__(self, "p_conj", self.p / (self.p - 1.0))
        if abs(1.0 / self.p + 1.0 / self.p_conj - 1.0) > 1e-14:
            raise ValueError("conjugate exponent lost precision")

    @property
    def m(self) -> int:
        """Control dimension"""
        return self.control_dim or self.space_dim

    def b(self, x: np.ndarray, t: float, alpha: Optional[np.ndarray] = None) -> np.ndarray:
        x = as_points(x)
        if self.controlled:
            return np.asarray(self.drift(x, t, self._alpha(alpha, x)), dtype=float)
        return np.asarray(self.drift(x, t), dtype=float)

    def sigma(self, x: np.ndarray, t: float, alpha: Optional[np.ndarray] = None) -> np.ndarray:
        x = as_points(x)
        if self.controlled:
            return np.asarray(self.diffusion(x, t, self._alpha(alpha, x)), dtype=float)
        return np.asarray(self.diffusion(x, t), dtype=float)

    def a(self, x: np.ndarray, t: float, alpha: Optional[np.ndarray] = None) -> np.ndarray:
        """sigma sigma^T, shape (n, N, N)"""
        sig = self.sigma(x, t, alpha)
        return np.einsum("nim,njm->nij", sig, sig)

    def s(self, x: np.ndarray, t: float) -> np.ndarray:
        x = as_points(x)
        if self.gradient_weight is None:
            return np.broadcast_to(np.eye(self.space_dim), (x.shape[0], self.space_dim, self.space_dim)).copy()
        return np.asarray(self.gradient_weight(x, t), dtype=float)

    def f(self, x: np.ndarray, t: float, u: np.ndarray, z: np.ndarray) -> np.ndarray:
        x = as_points(x)
        if self.nonlinearity is None:
            return np.zeros(x.shape[0])
        return np.asarray(self.nonlinearity(x, t, np.asarray(u, dtype=float), as_points(z)), dtype=float)

    def ell(self, x: np.ndarray, t: float, alpha: np.ndarray) -> np.ndarray:
        if self.running_cost is None:
            raise UnsupportedProblem("problem has no running cost")
        x = as_points(x)
        return np.asarray(self.running_cost(x, t, self._alpha(alpha, x)), dtype=float)

    def psi(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.initial(as_points(x)), dtype=float)

    def _alpha(self, alpha: Optional[np.ndarray], x: np.ndarray) -> np.ndarray:
        if alpha is None:
            return np.zeros((x.shape[0], self.m))
        alpha = np.asarray(alpha, dtype=float)
        if alpha.ndim == 1:
            alpha = np.broadcast_to(alpha, (x.shape[0], alpha.shape[0]))
        if alpha.shape[-1] != self.m:
            raise DimensionMismatch(f"control has dimension {alpha.shape[-1]}, expected {self.m}")
        return alpha

    def with_forcing(self, forcing: Callable[[np.ndarray, float], np.ndarray]) -> "ProblemSpec":
        """Same problem with nonlinearity f - forcing(x, t)"""
        base = self.f

        def forced(x, t, u, z):
            return base(x, t, u, z) - np.asarray(forcing(x, t), dtype=float)

        return replace(self, nonlinearity=forced, name=f"{self.name}+forcing")


def _check_point(spec: ProblemSpec, x: np.ndarray, q: np.ndarray, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float).reshape(-1)
    q = np.asarray(q, dtype=float).reshape(-1)
    X = np.asarray(X, dtype=float)
    n = spec.space_dim
    if x.shape != (n,) or q.shape != (n,):
        raise DimensionMismatch(f"x and q must have shape ({n},)")
    X = X.reshape(n, n) if X.size == n * n else X
    if X.shape != (n, n):
        raise DimensionMismatch(f"X must have shape ({n}, {n})")
    if not np.allclose(X, X.T, atol=1e-12):
        raise ValueError("X must be symmetric")
    return x, q, X


def control_objective(spec: ProblemSpec, x: np.ndarray, t: float, q: np.ndarray, X: np.ndarray,
                      alphas: np.ndarray) -> np.ndarray:
    """-<b, q> - l - Tr(sigma sigma^T X) for each control row of alphas"""
    alphas = np.atleast_2d(np.asarray(alphas, dtype=float))
    xs = np.broadcast_to(x, (alphas.shape[0], x.shape[0]))
    b = spec.b(xs, t, alphas)
    a = spec.a(xs, t, alphas)
    ell = spec.ell(xs, t, alphas)
    return -b @ q - ell - np.einsum("kij,ij->k", a, X)


def coercive_radius(spec: ProblemSpec, q: np.ndarray, X: np.ndarray) -> float:
    """Control radius beyond which nu |alpha|^p dominates every other alpha-term"""
    c = spec.constants
    if c.nu <= 0.0:
        raise NonCoercive("nu must be positive")
    inner = (np.linalg.norm(q) * c.c_b + np.linalg.norm(X) * c.c_sigma ** 2 + c.c_ell) * 2.0 / c.nu
    radius = max(1.0, inner ** (1.0 / (spec.p - 1.0)))
    if not math.isfinite(radius):
        raise NonCoercive("growth constants leave the control radius undefined")
    return radius


def _probe_directions(m: int) -> np.ndarray:
    """Eight fixed unit directions in control space (fewer when m == 1)"""
    if m == 1:
        return np.array([[1.0], [-1.0]])
    rng = np.random.default_rng(8)
    dirs = [np.eye(m)[0], -np.eye(m)[0], np.eye(m)[1], -np.eye(m)[1]]
    while len(dirs) < 8:
        v = rng.standard_normal(m)
        dirs.append(v / np.linalg.norm(v))
    return np.array(dirs)


def _diverges(objective: Callable[[np.ndarray], np.ndarray], radius: float, m: int) -> Optional[np.ndarray]:
    """Return a divergent control if the objective keeps growing along a probe ray"""
    dirs = _probe_directions(m)
    radii = np.array(PROBE_RADII) * radius
    values = np.array([objective(r * dirs) for r in radii])  # (len(radii), n_dirs)
    last, prev = values[-1], values[-2]
    growing = last > prev + PROBE_MARGIN * np.maximum(1.0, np.abs(prev))
    if np.any(growing):
        k = int(np.argmax(np.where(growing, last - prev, -np.inf)))
        return radii[-1] * dirs[k]
    return None


def _grid_maximise(objective: Callable[[np.ndarray], np.ndarray], radius: float, m: int) -> Tuple[np.ndarray, float, float, bool]:
    per_dim = min(GRID_POINTS_PER_DIM, int(round(MAX_CONTROL_GRID ** (1.0 / m))))
    axis = np.linspace(-radius, radius, per_dim)
    mesh = np.stack(np.meshgrid(*([axis] * m), indexing="ij"), axis=-1).reshape(-1, m)
    values = objective(mesh)
    k = int(np.argmax(values))
    idx = np.unravel_index(k, (per_dim,) * m)
    on_edge = any(i in (0, per_dim - 1) for i in idx)
    return mesh[k].copy(), float(values[k]), axis[1] - axis[0], on_edge


def _refine(objective: Callable[[np.ndarray], np.ndarray], alpha: np.ndarray, value: float, cell: float) -> Tuple[np.ndarray, float]:
    """One bounded scalar sweep per coordinate around the best grid cell"""
    best = alpha.copy()
    for i in range(best.size):
        def neg(s, i=i):
            trial = best.copy()
            trial[i] = s
            return -float(objective(trial[None, :])[0])

        result = minimize_scalar(neg, bounds=(best[i] - cell, best[i] + cell), method="bounded",
                                 options={"xatol": 1e-12})
        if -result.fun > value:
            best[i] = result.x
            value = -float(result.fun)
    return best, value


def maximise_control(spec: ProblemSpec, x: np.ndarray, t: float, q: np.ndarray, X: np.ndarray) -> Tuple[ExtendedReal, np.ndarray]:
    """sup over controls with the maximising (or a divergent) control"""
    if not spec.controlled:
        raise UnsupportedProblem("the Hamiltonian sup is defined for controlled problems only")
    x, q, X = _check_point(spec, x, q, X)
    if spec.power_form is not None:
        value, alpha = spec.power_form.hamiltonian(x, q, X)
        return value, np.resize(alpha, spec.m)

    def objective(alphas: np.ndarray) -> np.ndarray:
        return control_objective(spec, x, t, q, X, alphas)

    radius = coercive_radius(spec, q, X)
    divergent = _diverges(objective, radius, spec.m)
    if divergent is not None:
        return ExtendedReal.pos_infinity(), divergent

    for _ in range(MAX_BOX_GROWTH):
        alpha, value, cell, on_edge = _grid_maximise(objective, radius, spec.m)
        if not on_edge:
            break
        radius *= 2.0
    else:
        logger.warning("control maximiser stayed on the search box edge at radius %.3g", radius)
    alpha, value = _refine(objective, alpha, value, cell)
    return ExtendedReal.finite(value), alpha


def hamiltonian_eval(spec: ProblemSpec, x: np.ndarray, t: float, q: np.ndarray, X: np.ndarray) -> ExtendedReal:
    """H(x, t, q, X) = sup_alpha { -<b, q> - l - Tr(sigma sigma^T X) }"""
    value, _ = maximise_control(spec, x, t, q, X)
    return value


def model_residual(spec: ProblemSpec, x: np.ndarray, t: float, u: np.ndarray, u_t: np.ndarray,
                   du: np.ndarray, d2u: np.ndarray) -> np.ndarray:
    """u_t - Tr(sigma sigma^T D2u) + <b, Du> + f(x, t, u, s Du) at a batch of points"""
    if spec.controlled:
        raise UnsupportedProblem("use control_residual for controlled problems")
    x = as_points(x)
    du = as_points(du)
    d2u = np.asarray(d2u, dtype=float).reshape(x.shape[0], spec.space_dim, spec.space_dim)
    a = spec.a(x, t)
    b = spec.b(x, t)
    z = np.einsum("nij,nj->ni", spec.s(x, t), du)
    trace = np.einsum("nij,nji->n", a, d2u)
    return np.asarray(u_t, dtype=float) - trace + np.sum(b * du, axis=1) + spec.f(x, t, u, z)


def control_residual(spec: ProblemSpec, x: np.ndarray, t: float, u: np.ndarray, u_t: np.ndarray,
                     du: np.ndarray, d2u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """u_t + H(x, t, Du, D2u) + f for controlled problems, with the maximising controls"""
    x = as_points(x)
    du = as_points(du)
    d2u = np.asarray(d2u, dtype=float).reshape(x.shape[0], spec.space_dim, spec.space_dim)
    u = np.broadcast_to(np.asarray(u, dtype=float), (x.shape[0],))
    u_t = np.broadcast_to(np.asarray(u_t, dtype=float), (x.shape[0],))
    z = np.einsum("nij,nj->ni", spec.s(x, t), du)
    fvals = spec.f(x, t, u, z)
    out = np.empty(x.shape[0])
    controls = np.zeros((x.shape[0], spec.m))
    for i in range(x.shape[0]):
        h, alpha = maximise_control(spec, x[i], t, du[i], 0.5 * (d2u[i] + d2u[i].T))
        out[i] = float(h) + u_t[i] + fvals[i]
        controls[i] = alpha
    return out, controls


# ---------------------------------------------------------------- validation

@dataclass
class Violation:
    check: str
    point: Dict[str, Any]
    lhs: float
    rhs: float

    def to_dict(self) -> Dict[str, Any]:
        return {"check": self.check, "point": self.point, "lhs": self.lhs, "rhs": self.rhs}


@dataclass
class ValidationReport:
    sample_count: int
    checks_run: List[str] = field(default_factory=list)
    violations: List[Violation] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def violations_for(self, check: str) -> List[Violation]:
        return [v for v in self.violations if v.check == check]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "passed": self.passed,
            "sample_count": self.sample_count,
            "checks_run": list(self.checks_run),
            "violation_count": len(self.violations),
            "violations": [v.to_dict() for v in self.violations[:50]],
        }


def _ball(rng: np.random.Generator, n: int, dim: int, radius: float) -> np.ndarray:
    v = rng.standard_normal((n, dim))
    v /= np.maximum(np.linalg.norm(v, axis=1, keepdims=True), 1e-300)
    return v * radius * rng.random((n, 1)) ** (1.0 / dim)


def validate_assumptions(spec: ProblemSpec, sample_count: int, domain_radius: float,
                         seed: int = 0) -> ValidationReport:
    """Monte-Carlo point checks of the structural assumptions; violations are reported, not raised"""
    if sample_count < 1:
        raise ValueError("sample_count must be at least 1")
    rng = np.random.default_rng(seed)
    c = spec.constants
    n, dim, p, pc = sample_count, spec.space_dim, spec.p, spec.p_conj
    report = ValidationReport(sample_count=sample_count)

    x = _ball(rng, n, dim, domain_radius)
    y = _ball(rng, n, dim, domain_radius)
    t = rng.random(n) * spec.horizon
    alpha = _ball(rng, n, spec.m, domain_radius) if spec.controlled else None
    rx = np.linalg.norm(x, axis=1)
    dxy = np.maximum(np.linalg.norm(x - y, axis=1), 1e-300)
    anorm = np.linalg.norm(alpha, axis=1) if alpha is not None else np.zeros(n)

    def tol(rhs: np.ndarray) -> np.ndarray:
        return 1e-9 * (1.0 + np.abs(rhs))

    def record(check: str, lhs: np.ndarray, rhs: np.ndarray, points: Callable[[int], Dict[str, Any]],
               tolerance: Optional[np.ndarray] = None) -> None:
        report.checks_run.append(check)
        slack = tol(rhs) if tolerance is None else tolerance
        for i in np.flatnonzero(lhs > rhs + slack):
            report.violations.append(Violation(check, points(int(i)), float(lhs[i]), float(rhs[i])))

    def at(i: int, **extra: Any) -> Dict[str, Any]:
        point = {"x": x[i].tolist(), "t": float(t[i])}
        if alpha is not None:
            point["alpha"] = alpha[i].tolist()
        point.update({k: (v[i].tolist() if isinstance(v, np.ndarray) else v) for k, v in extra.items()})
        return point

    # drift and diffusion: growth and Lipschitz bounds
    b_x = np.stack([spec.b(x[i:i + 1], t[i], None if alpha is None else alpha[i:i + 1])[0] for i in range(n)])
    b_y = np.stack([spec.b(y[i:i + 1], t[i], None if alpha is None else alpha[i:i + 1])[0] for i in range(n)])
    record("drift_growth", np.linalg.norm(b_x, axis=1), c.c_b * (1.0 + rx + anorm), at)
    lip_b = c.c_b * (1.0 + anorm) if spec.controlled else c.c_b * np.ones(n)
    record("drift_lipschitz", np.linalg.norm(b_x - b_y, axis=1) / dxy, lip_b, lambda i: at(i, y=y))

    sig_x = np.stack([spec.sigma(x[i:i + 1], t[i], None if alpha is None else alpha[i:i + 1])[0] for i in range(n)])
    sig_y = np.stack([spec.sigma(y[i:i + 1], t[i], None if alpha is None else alpha[i:i + 1])[0] for i in range(n)])
    record("diffusion_growth", np.linalg.norm(sig_x, axis=(1, 2)), c.c_sigma * (1.0 + rx + anorm), at)
    record("diffusion_lipschitz", np.linalg.norm(sig_x - sig_y, axis=(1, 2)) / dxy, c.c_sigma * np.ones(n),
           lambda i: at(i, y=y))

    # running cost: coercivity and upper growth
    if spec.controlled:
        ell = np.array([spec.ell(x[i:i + 1], t[i], alpha[i:i + 1])[0] for i in range(n)])
        lower = c.nu * anorm ** p - c.c_ell * (1.0 + rx ** p)
        record("coercivity", lower, ell, at)
        record("running_cost_growth", ell, c.c_ell * (1.0 + rx ** p + anorm ** p), at)

    # gradient weight s
    s_x = np.stack([spec.s(x[i:i + 1], t[i])[0] for i in range(n)])
    s_y = np.stack([spec.s(y[i:i + 1], t[i])[0] for i in range(n)])
    record("gradient_weight_bound", np.linalg.norm(s_x, ord=2, axis=(1, 2)), c.c_s * np.ones(n), at)
    record("gradient_weight_lipschitz", np.linalg.norm(s_x - s_y, ord=2, axis=(1, 2)) / dxy,
           c.c_s * np.ones(n), lambda i: at(i, y=y))

    # nonlinearity f
    u_scale = 1.0 + domain_radius ** p
    u1 = (2.0 * rng.random(n) - 1.0) * u_scale
    u2 = (2.0 * rng.random(n) - 1.0) * u_scale
    z1 = _ball(rng, n, dim, domain_radius)
    z2 = _ball(rng, n, dim, domain_radius)
    zm = 0.5 * (z1 + z2)

    def f_rows(u: np.ndarray, z: np.ndarray) -> np.ndarray:
        return np.array([spec.f(x[i:i + 1], t[i], u[i:i + 1], z[i:i + 1])[0] for i in range(n)])

    f1, f2, fm = f_rows(u1, z1), f_rows(u1, z2), f_rows(u1, zm)
    record("convexity_in_z", fm, 0.5 * (f1 + f2),
           lambda i: at(i, u=u1, z1=z1, z2=z2), tolerance=np.full(n, CONVEXITY_TOL))

    znorm = np.linalg.norm(z1, axis=1)
    record("nonlinearity_growth", np.abs(f1),
           c.c_f * (1.0 + rx ** p + np.abs(u1) + znorm ** pc), lambda i: at(i, u=u1, z=z1))

    f_u2 = f_rows(u2, z1)
    record("lipschitz_in_u", np.abs(f1 - f_u2), c.c_hat * np.abs(u1 - u2), lambda i: at(i, u1=u1, u2=u2, z=z1))

    lam = 1.0 + rng.random(n)
    f_scaled = f_rows(u1, lam[:, None] * z1)
    record("radial_monotonicity", f1, f_scaled, lambda i: at(i, u=u1, z=z1, scale=lam))

    if report.violations:
        logger.info("assumption check on %s: %d violation(s) in %s", spec.name, len(report.violations),
                    sorted({v.check for v in report.violations}))
    return report


# ---------------------------------------------------------------- growth classes

@dataclass
class GrowthClassWitness:
    """Witness that sampled values belong to the strict (C_p) or bounded (C~_p) growth class"""
    class_tag: str
    p: float
    constant: Optional[float] = None
    m_eps: Dict[float, float] = field(default_factory=dict)
    peak_abs: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    peak_signed: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    weight: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    def m_epsilon(self, eps: float) -> float:
        """max over nodes of |u| - eps (1 + |x|^p), clamped at 0"""
        if eps <= 0.0:
            raise ValueError("eps must be positive")
        return max(0.0, float(np.max(self.peak_abs - eps * self.weight)))

    def m_lambda(self, lam: float) -> float:
        """One-sided envelope sup{u - lam (1 + |x|^p)}"""
        return float(np.max(self.peak_signed - lam * self.weight))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "class": self.class_tag,
            "p": self.p,
            "constant": self.constant,
            "m_eps": {str(k): v for k, v in self.m_eps.items()},
        }


def growth_witness(u: Sequence[Any], p: float, mode: str = "bounded",
                   eps_values: Sequence[float] = (1.0, 0.1, 0.01)) -> GrowthClassWitness:
    """Growth-class witness for a sequence of grid functions (one per time level)"""
    if mode not in ("bounded", "strict"):
        raise ValueError(f"mode must be 'bounded' or 'strict', got {mode!r}")
    frames = list(u)
    if not frames or any(np.size(g.values) == 0 for g in frames):
        raise EmptyGrid("growth_witness needs at least one non-empty grid function")
    grid = frames[0].grid
    if grid.radius < 1.0:
        logger.warning("grid radius %.3g is below 1; growth witness may be loose", grid.radius)

    points = grid.points()
    weight = 1.0 + np.linalg.norm(points, axis=1) ** p
    stack = np.stack([np.asarray(g.values, dtype=float) for g in frames])
    peak_abs = np.max(np.abs(stack), axis=0)
    peak_signed = np.max(stack, axis=0)

    witness = GrowthClassWitness(class_tag=mode, p=p, peak_abs=peak_abs, peak_signed=peak_signed, weight=weight)
    if mode == "bounded":
        witness.constant = float(np.max(peak_abs / weight))
    else:
        witness.m_eps = {float(e): witness.m_epsilon(e) for e in eps_values}
    return witness
