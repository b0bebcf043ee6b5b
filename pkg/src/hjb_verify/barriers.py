#!/usr/bin/env python3
"""
Closed-form sub/supersolutions and residual certificates.

Three families are built here:
    power_barrier    ±K e^{ρt} (1 + |x|^2)^{p/2}
    eps_family       -e^{ρt} (M_ε + ε g(x)),  g = 1 + |x|^p (smoothed for p < 2)
    phi_R_composite  φ_R(h(x), C t), the strict supersolution of the linearized operator
All of them carry closed-form value, gradient, Hessian and time derivative.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DerivativeUnavailable, MissingConstants, MissingEnvelopes, UnsupportedProblem
from .oracles import AuxiliaryParabolicSolution
from .problem import ProblemSpec, hamiltonian_eval, maximise_control, model_residual
from .transforms import ChangeOfFunctions, select_rate
from .weights import PowerWeight, as_points

logger = logging.getLogger(__name__)

FieldFn = Callable[[np.ndarray, np.ndarray], np.ndarray]

SAMPLE_RADIUS = 10.0
SAMPLE_COUNT = 2000
THETA_SAMPLES = 5
MIN_TAU = 1e-12


def sample_ball(count: int, dim: int, radius: float, seed: int = 0) -> np.ndarray:
    """Uniform points in the closed ball of the given radius, origin included"""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((count, dim))
    v /= np.maximum(np.linalg.norm(v, axis=1, keepdims=True), 1e-300)
    pts = v * radius * rng.random((count, 1)) ** (1.0 / dim)
    pts[0] = 0.0
    return pts


def sample_space_time(spec: ProblemSpec, count: int, radius: float, t_max: float,
                      seed: int = 0, t_min: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed + 1)
    x = sample_ball(count, spec.space_dim, radius, seed)
    t = t_min + (t_max - t_min) * rng.random(count)
    return x, t


@dataclass
class BarrierFamily:
    form: str
    sign: str
    params: Dict[str, float]
    valid_until: float
    value_fn: FieldFn = field(repr=False)
    gradient_fn: FieldFn = field(repr=False)
    hessian_fn: FieldFn = field(repr=False)
    time_fn: FieldFn = field(repr=False)
    feasible: bool = True
    note: str = ""
    change: Optional[ChangeOfFunctions] = None

    @staticmethod
    def _args(x: np.ndarray, t) -> Tuple[np.ndarray, np.ndarray]:
        x = as_points(x)
        return x, np.broadcast_to(np.asarray(t, dtype=float), (x.shape[0],))

    def value(self, x: np.ndarray, t) -> np.ndarray:
        return self.value_fn(*self._args(x, t))

    def gradient(self, x: np.ndarray, t) -> np.ndarray:
        return self.gradient_fn(*self._args(x, t))

    def hessian(self, x: np.ndarray, t) -> np.ndarray:
        return self.hessian_fn(*self._args(x, t))

    def time_derivative(self, x: np.ndarray, t) -> np.ndarray:
        return self.time_fn(*self._args(x, t))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "form": self.form,
            "sign": self.sign,
            "params": dict(self.params),
            "valid_until": self.valid_until,
            "feasible": self.feasible,
            "note": self.note,
        }


def _scaled_weight_family(form: str, sign: str, weight: PowerWeight, shift: float, scale: float,
                          rho: float, valid_until: float, params: Dict[str, float]) -> BarrierFamily:
    """sign * e^{ρt} (shift + scale * weight(x))"""
    k = 1.0 if sign == "super" else -1.0

    def growth(t):
        return k * np.exp(rho * t)

    return BarrierFamily(
        form=form,
        sign=sign,
        params=params,
        valid_until=valid_until,
        value_fn=lambda x, t: growth(t) * (shift + scale * weight.value(x)),
        gradient_fn=lambda x, t: (growth(t) * scale)[:, None] * weight.gradient(x),
        hessian_fn=lambda x, t: (growth(t) * scale)[:, None, None] * weight.hessian(x),
        time_fn=lambda x, t: rho * growth(t) * (shift + scale * weight.value(x)),
    )


def _require_constants(spec: ProblemSpec) -> None:
    if spec.constants is None:
        raise MissingConstants(f"problem '{spec.name}' has no assumption constants")


def _theta_range(spec: ProblemSpec) -> np.ndarray:
    """Values of e^{ρt} on [0, τ] when (p' - 1) ρ τ <= 1"""
    return np.linspace(1.0, math.exp(1.0 / (spec.p_conj - 1.0)), THETA_SAMPLES)


def _sampled_rate(spec: ProblemSpec, x: np.ndarray, t: np.ndarray, shift: float, scale: float,
                  weight: PowerWeight) -> float:
    """sup over samples and θ of (H + f)/(θ W) at u = -θ (shift + scale w), for controlled problems.

    Returns inf when the Hamiltonian is +inf somewhere.
    """
    best = 0.0
    for theta in _theta_range(spec):
        base = shift + scale * weight.value(x)
        u = -theta * base
        du = -theta * scale * weight.gradient(x)
        d2u = -theta * scale * weight.hessian(x)
        z = np.einsum("nij,nj->ni", spec.s(x, t[0]), du)
        for i in range(x.shape[0]):
            h_val = hamiltonian_eval(spec, x[i], t[i], du[i], d2u[i])
            if not h_val.is_finite:
                return math.inf
            f_val = spec.f(x[i:i + 1], t[i], u[i:i + 1], z[i:i + 1])[0]
            best = max(best, (float(h_val) + f_val) / (theta * base[i]))
    return best


def build_power_barriers(spec: ProblemSpec, sample_radius: float = SAMPLE_RADIUS,
                         sample_count: int = SAMPLE_COUNT, seed: int = 0) -> Tuple[BarrierFamily, BarrierFamily]:
    """Sub/supersolutions ∓K e^{ρt}(1 + |x|^2)^{p/2} with K, ρ, τ from the assumption constants"""
    _require_constants(spec)
    c, p, pc = spec.constants, spec.p, spec.p_conj
    weight = PowerWeight(p)
    x = sample_ball(sample_count, spec.space_dim, sample_radius, seed)
    c_psi = float(np.max(np.abs(spec.psi(x)) / weight.value(x)))
    K = c_psi + 1.0

    diffusion_term = 2.0 * c.c_sigma ** 2 * p * (1.0 + abs(p - 2.0))
    drift_term = math.sqrt(2.0) * p * c.c_b
    f_linear = c.c_f * (1.0 + 2.0 / K)
    f_gradient = c.c_f * (c.c_s * p) ** pc * K ** (pc - 1.0)
    params = {"K": K, "C_psi": c_psi}

    if spec.controlled:
        rho_super = diffusion_term + drift_term + 2.0 * c.c_ell / K + f_linear + f_gradient * math.e + 1.0
        _, t = sample_space_time(spec, min(sample_count, 200), sample_radius, spec.horizon, seed)
        xs = x[: t.size]
        rho_sub = _sampled_rate(spec, xs, t, 0.0, K, weight)
        sub_feasible = math.isfinite(rho_sub)
        rho_sub = rho_sub + 1.0 if sub_feasible else math.inf
    else:
        rho_super = diffusion_term + drift_term + f_linear + f_gradient * math.e + 1.0
        rho_sub, sub_feasible = rho_super, True

    tau_super = min(spec.horizon, 1.0 / ((pc - 1.0) * rho_super))
    # with f minimal at z = 0 (or absent) the gradient term never hurts the supersolution
    super_until = spec.horizon if (spec.nonlinearity is None or spec.z_min_at_origin) else tau_super
    sup = _scaled_weight_family("power_barrier", "super", weight, 0.0, K, rho_super, super_until,
                                dict(params, rho=rho_super, tau=tau_super))

    if sub_feasible:
        tau_sub = min(spec.horizon, 1.0 / ((pc - 1.0) * rho_sub))
        sub = _scaled_weight_family("power_barrier", "sub", weight, 0.0, K, rho_sub, tau_sub,
                                    dict(params, rho=rho_sub, tau=tau_sub))
    else:
        sub = _scaled_weight_family("power_barrier", "sub", weight, 0.0, K, 0.0, 0.0,
                                    dict(params, rho=math.inf, tau=0.0))
        sub.feasible = False
        sub.note = "Hamiltonian is +inf at the candidate subsolution"
        logger.warning("power subsolution for %s is infeasible: %s", spec.name, sub.note)
    logger.debug("power barriers for %s: K=%.4g rho_super=%.4g rho_sub=%.4g", spec.name, K, rho_super, rho_sub)
    return sub, sup


def build_eps_subsolution(spec: ProblemSpec, eps: float, sample_radius: float = SAMPLE_RADIUS,
                          sample_count: int = SAMPLE_COUNT, seed: int = 0) -> BarrierFamily:
    """u_ε = -e^{ρt}(M_ε + ε g(x)) with M_ε the sampled envelope excess"""
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    _require_constants(spec)
    c, p, pc = spec.constants, spec.p, spec.p_conj
    if not c.has_envelopes:
        raise MissingEnvelopes(f"problem '{spec.name}' has no chi/gamma envelopes")
    weight = PowerWeight(p, smooth=p < 2.0)
    x = sample_ball(sample_count, spec.space_dim, sample_radius, seed)
    envelope = np.maximum.reduce([np.abs(spec.psi(x)), np.abs(c.chi(x)), np.abs(c.gamma(x))])
    m_eps = max(0.0, float(np.max(envelope - eps * weight.value(x))))

    if spec.controlled:
        _, t = sample_space_time(spec, min(sample_count, 200), sample_radius, spec.horizon, seed)
        rho = _sampled_rate(spec, x[: t.size], t, m_eps, eps, weight)
        feasible = math.isfinite(rho)
        rho = rho + 1.0 if feasible else math.inf
    else:
        rho = (2.0 * p * c.c_b + 4.0 * p * (p + 1.0) * c.c_sigma ** 2 + c.c_f * (2.0 + 1.0 / eps)
               + c.c_f * (c.c_s * p) ** pc * eps ** (pc - 1.0) * math.e + 1.0)
        feasible = True

    tau = min(spec.horizon, 1.0 / ((pc - 1.0) * rho)) if feasible else 0.0
    family = _scaled_weight_family("eps_family", "sub", weight, m_eps, eps, rho if feasible else 0.0, tau,
                                   {"eps": eps, "M_eps": m_eps, "rho": rho, "tau": tau})
    if not feasible:
        family.feasible = False
        family.note = f"Hamiltonian is +inf at u_eps for eps={eps}; try a smaller eps"
        logger.warning("eps-subsolution for %s: %s", spec.name, family.note)
    return family


@dataclass
class EpsEnvelope:
    """Pointwise sup of several ε-subsolutions"""
    families: List[BarrierFamily]

    def value(self, x: np.ndarray, t) -> np.ndarray:
        return np.max(np.stack([f.value(x, t) for f in self.families]), axis=0)

    @property
    def valid_until(self) -> float:
        return min(f.valid_until for f in self.families)


def eps_envelope(families: Sequence[BarrierFamily]) -> EpsEnvelope:
    if not families:
        raise ValueError("need at least one eps family")
    if any(f.form != "eps_family" for f in families):
        raise ValueError("eps_envelope combines eps_family barriers only")
    return EpsEnvelope(list(families))


def strict_time_scale(spec: ProblemSpec) -> float:
    """C with C h^2 φ_rr and C h φ_r dominating the diffusion and drift terms"""
    c, p, n = spec.constants, spec.p, spec.space_dim
    return max(
        p * (p - 1.0) * n * c.c_sigma ** 2 + p * c.c_b,
        p * p * c.c_sigma ** 2,
        2.0 * p * (1.0 + abs(p - 2.0)) * c.c_sigma ** 2 + math.sqrt(2.0) * p * c.c_b,
        2.0 * p * p * c.c_sigma ** 2,
    ) + 1.0


def strict_rate(cf: ChangeOfFunctions, spec: ProblemSpec, mu: float, time_scale: float) -> float:
    c, p, pc = spec.constants, spec.p, spec.p_conj
    gradient_gain = (math.exp(spec.horizon) / (1.0 - mu) + 1.0) ** pc
    f_bound = (8.0 * c.c_f / cf.cbar
               + 4.0 * c.c_f * p ** pc * c.c_s ** pc * cf.cbar ** (pc - 1.0) * math.e ** pc * gradient_gain)
    return max(cf.rate, select_rate(spec), f_bound + 1.0, time_scale / spec.horizon) + 1.0


def build_strict_supersolution(cf: ChangeOfFunctions, spec: ProblemSpec, R: float, mu: float) -> BarrierFamily:
    """Φ(x, t) = φ_R(h(x), C t), valid on (0, 1/L]; `change` carries the enlarged rate L"""
    if spec.controlled:
        raise UnsupportedProblem("the strict supersolution is built for uncontrolled problems")
    if not 0.0 < mu < 1.0:
        raise ValueError(f"mu must lie in (0, 1), got {mu}")
    _require_constants(spec)
    aux = AuxiliaryParabolicSolution(R)
    C = strict_time_scale(spec)
    L = strict_rate(cf, spec, mu, C)
    change = cf.with_rate(L) if math.isfinite(L) else cf

    def value(x, t):
        return aux.value(change.h(x), C * t)

    def gradient(x, t):
        return aux.dr(change.h(x), C * t)[:, None] * change.dh(x)

    def hessian(x, t):
        r = change.h(x)
        dh = change.dh(x)
        outer = dh[:, :, None] * dh[:, None, :]
        return aux.drr(r, C * t)[:, None, None] * outer + aux.dr(r, C * t)[:, None, None] * change.d2h(x)

    def time_derivative(x, t):
        return C * aux.dt(change.h(x), C * t)

    tau = 1.0 / L if math.isfinite(L) else 0.0
    family = BarrierFamily(
        form="phi_R_composite",
        sign="super",
        params={"Cbar": cf.cbar, "C_time": C, "R": R, "L": L, "mu": mu},
        valid_until=tau,
        value_fn=value,
        gradient_fn=gradient,
        hessian_fn=hessian,
        time_fn=time_derivative,
        change=change,
    )
    if not math.isfinite(L) or tau < MIN_TAU:
        family.feasible = False
        family.note = f"rate L={L:.4g} leaves no usable time window for mu={mu}"
        logger.warning("strict supersolution: %s", family.note)
    return family


# ---------------------------------------------------------------- residual checks

@dataclass
class ResidualReport:
    role: str
    points: np.ndarray
    times: np.ndarray
    residuals: np.ndarray
    violations: np.ndarray
    slack: float = 0.0
    witnesses: List[Optional[List[float]]] = field(default_factory=list)
    initial_violations: List[int] = field(default_factory=list)

    @property
    def worst_violation(self) -> float:
        return float(np.max(self.violations)) if self.violations.size else 0.0

    @property
    def passed(self) -> bool:
        return self.worst_violation <= 0.0 and not self.initial_violations

    @property
    def min_residual(self) -> float:
        return float(np.min(self.residuals)) if self.residuals.size else math.nan

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residuals)) if self.residuals.size else math.nan

    def offenders(self, top: int = 10) -> List[Dict[str, Any]]:
        order = np.argsort(-self.violations)[:top]
        out = []
        for i in order:
            if self.violations[i] <= 0.0:
                break
            entry = {"x": self.points[i].tolist(), "t": float(self.times[i]), "residual": float(self.residuals[i])}
            if self.witnesses and self.witnesses[i] is not None:
                entry["alpha"] = self.witnesses[i]
            out.append(entry)
        return out

    def to_dict(self, top: int = 10) -> Dict[str, Any]:
        return {
            "role": self.role,
            "passed": self.passed,
            "samples": int(self.residuals.size),
            "min_residual": self.min_residual,
            "max_residual": self.max_residual,
            "worst_violation": self.worst_violation,
            "slack": self.slack,
            "initial_violations": len(self.initial_violations),
            "worst_points": self.offenders(top),
        }


def _candidate_fields(candidate: Any, x: np.ndarray, t: np.ndarray) -> Tuple[np.ndarray, ...]:
    try:
        return (candidate.value(x, t), candidate.time_derivative(x, t),
                candidate.gradient(x, t), candidate.hessian(x, t))
    except AttributeError as exc:
        raise DerivativeUnavailable(f"candidate lacks closed-form derivatives: {exc}") from exc


def viscosity_residual_check(candidate: Any, spec: ProblemSpec, role: str, eta: float = 1e-6,
                             samples: Optional[Tuple[np.ndarray, np.ndarray]] = None,
                             sample_count: int = 1000, sample_radius: float = SAMPLE_RADIUS,
                             seed: int = 0) -> ResidualReport:
    """Check the sub- or supersolution inequality of a smooth candidate at sampled points.

    Uncontrolled problems use the model residual directly. Controlled ones use the sup over
    controls: for `sub` every control must satisfy the inequality, for `super` one control
    within eta suffices and is recorded as the witness. The initial ordering against ψ is
    checked as well.
    """
    if role not in ("sub", "super"):
        raise ValueError(f"role must be 'sub' or 'super', got {role!r}")
    if eta <= 0.0:
        raise ValueError("eta must be positive")
    if samples is None:
        t_max = min(spec.horizon, getattr(candidate, "valid_until", spec.horizon))
        samples = sample_space_time(spec, sample_count, sample_radius, t_max, seed)
    x, t = samples
    x = as_points(x)
    t = np.broadcast_to(np.asarray(t, dtype=float), (x.shape[0],))

    residuals = np.empty(x.shape[0])
    witnesses: List[Optional[List[float]]] = [None] * x.shape[0]
    for i in range(x.shape[0]):
        xi, ti = x[i:i + 1], t[i:i + 1]
        u, u_t, du, d2u = _candidate_fields(candidate, xi, ti)
        if spec.controlled:
            z = np.einsum("nij,nj->ni", spec.s(xi, ti[0]), du)
            value, alpha = maximise_control(spec, xi[0], ti[0], du[0], 0.5 * (d2u[0] + d2u[0].T))
            residuals[i] = float(value) + u_t[0] + spec.f(xi, ti[0], u, z)[0]
            witnesses[i] = np.asarray(alpha, dtype=float).tolist()
        else:
            residuals[i] = model_residual(spec, xi, ti[0], u, u_t, du, d2u)[0]

    excess = residuals - eta if role == "sub" else -residuals - eta
    violations = np.maximum(excess, 0.0)

    start = candidate.value(x, np.zeros(x.shape[0]))
    psi = spec.psi(x)
    gap = start - psi if role == "sub" else psi - start
    initial = [int(i) for i in np.flatnonzero(gap > eta)]
    report = ResidualReport(role, x, t, residuals, violations, eta, witnesses if spec.controlled else [], initial)
    if not report.passed:
        logger.info("%s check: worst violation %.3g, %d initial-time violations",
                    role, report.worst_violation, len(initial))
    return report


def linearized_operator(phi: BarrierFamily, cf: ChangeOfFunctions, spec: ProblemSpec, mu: float,
                        x: np.ndarray, t: np.ndarray) -> np.ndarray:
    """w_t - Tr(σσᵀ D²w) - C_b(1+|x|)|Dw| + (L/4)(1-μ)h - (1-μ)e^{-Lt} f(x, t, 0, e^{Lt} s(Dw/(μ-1) - Dh))"""
    x = as_points(x)
    t = np.broadcast_to(np.asarray(t, dtype=float), (x.shape[0],))
    L = cf.rate
    w_t = phi.time_derivative(x, t)
    dw = phi.gradient(x, t)
    d2w = phi.hessian(x, t)
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        xi, ti = x[i:i + 1], float(t[i])
        trace = np.einsum("nij,nji->n", spec.a(xi, ti), d2w[i:i + 1])[0]
        drift = spec.constants.c_b * (1.0 + np.linalg.norm(xi)) * np.linalg.norm(dw[i])
        grow = math.exp(L * ti)
        z = grow * np.einsum("nij,nj->ni", spec.s(xi, ti), dw[i:i + 1] / (mu - 1.0) - cf.dh(xi))
        f_val = spec.f(xi, ti, np.zeros(1), z)[0]
        out[i] = (w_t[i] - trace - drift + 0.25 * L * (1.0 - mu) * cf.h(xi)[0]
                  - (1.0 - mu) * f_val / grow)
    return out


def check_linearized_operator(phi: BarrierFamily, cf: Optional[ChangeOfFunctions], spec: ProblemSpec, mu: float,
                              samples: Optional[Tuple[np.ndarray, np.ndarray]] = None,
                              sample_count: int = 1000, sample_radius: float = SAMPLE_RADIUS,
                              seed: int = 0) -> ResidualReport:
    """Sample the linearized operator at Φ on R^N x (0, 1/L]; passes when every value is positive"""
    change = cf if cf is not None else phi.change
    if change is None:
        raise ValueError("no change of functions available for the linearized operator")
    if samples is None:
        t_max = 1.0 / change.rate
        samples = sample_space_time(spec, sample_count, sample_radius, t_max, seed, t_min=1e-3 * t_max)
    x, t = samples
    values = linearized_operator(phi, change, spec, mu, x, t)
    violations = np.maximum(-values, 0.0)
    violations[values == 0.0] = np.finfo(float).tiny
    report = ResidualReport("strict", as_points(x), np.asarray(t, dtype=float), values, violations)
    if not report.passed:
        logger.info("linearized operator not positive: min %.3g", report.min_residual)
    return report
