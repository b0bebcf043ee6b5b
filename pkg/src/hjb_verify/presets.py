#!/usr/bin/env python3
"""
Named problem presets.

    eq3_lq            stochastic LQ control problem, u_t + sup_α{-<βα + λx, Du> - |α|^2 - κ|α|^2 Δu} = 0
    power_model       u_t - dΔu + c|Du|^{p'} + G = 0
    lp_deterministic  forward form of the deterministic L^p control problem, σ = 0
    briand_hu         BSDE-type equation with s = σ and f = (γ/2)|z|^2 - θu
"""

import logging
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np

from .errors import ConfigInvalid, UnknownPreset
from .oracles import RiccatiProblem
from .problem import AssumptionConstants, PowerForm, ProblemSpec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ParamDomain:
    low: float
    high: float = math.inf
    low_open: bool = False

    def contains(self, value: float) -> bool:
        if not math.isfinite(value):
            return False
        above = value > self.low if self.low_open else value >= self.low
        return above and value <= self.high

    def describe(self) -> str:
        return f"{'(' if self.low_open else '['}{self.low:g}, {self.high:g}]"


@dataclass(frozen=True)
class PresetDescriptor:
    name: str
    form: str
    defaults: Mapping[str, float]
    domains: Mapping[str, ParamDomain]
    suites: Tuple[str, ...]
    builder: Callable[[Mapping[str, float]], ProblemSpec] = field(repr=False)
    controlled: bool = False
    infinity_path: bool = False
    diffusion_zero: bool = False
    blow_up: bool = False

    def resolve(self, overrides: Optional[Mapping[str, Any]] = None) -> Dict[str, float]:
        """Defaults updated with overrides, each checked against its domain"""
        params = dict(self.defaults)
        for key, raw in (overrides or {}).items():
            if key not in self.defaults:
                raise ConfigInvalid(f"preset '{self.name}' has no parameter '{key}'. "
                                    f"Known: {', '.join(sorted(self.defaults))}")
            try:
                value = float(raw)
            except (TypeError, ValueError):
                raise ConfigInvalid(f"parameter '{key}' must be a number, got {raw!r}")
            domain = self.domains.get(key)
            if domain is not None and not domain.contains(value):
                raise ConfigInvalid(f"parameter '{key}'={value:g} outside {domain.describe()} for '{self.name}'")
            params[key] = value
        if "dim" in params and params["dim"] not in (1.0, 2.0):
            raise ConfigInvalid("dim must be 1 or 2")
        return params

    def build(self, overrides: Optional[Mapping[str, Any]] = None) -> ProblemSpec:
        return self.builder(self.resolve(overrides))

    def applies(self, suite: str) -> bool:
        return suite in self.suites

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "form": self.form,
            "defaults": dict(self.defaults),
            "domains": {k: d.describe() for k, d in self.domains.items()},
            "suites": list(self.suites),
            "controlled": self.controlled,
            "infinity_path": self.infinity_path,
            "diffusion_zero": self.diffusion_zero,
            "blow_up": self.blow_up,
        }


def _identity_stack(x: np.ndarray, scale: float = 1.0) -> np.ndarray:
    n, dim = x.shape
    return np.broadcast_to(scale * np.eye(dim), (n, dim, dim)).copy()


def _constant(value: float) -> Callable[[np.ndarray], np.ndarray]:
    def envelope(x: np.ndarray) -> np.ndarray:
        return np.full(np.atleast_2d(x).shape[0], value)
    return envelope


def _soft_norm(amplitude: float) -> Callable[[np.ndarray], np.ndarray]:
    def initial(x: np.ndarray) -> np.ndarray:
        return amplitude * np.sqrt(1.0 + np.sum(x * x, axis=1))
    return initial


def _eq3_lq(params: Mapping[str, float]) -> ProblemSpec:
    dim = int(params["dim"])
    beta, lam, kappa = params["beta"], params["lam"], params["kappa"]
    form = PowerForm(drift_gain=beta, state_drift=lam, cost_weight=1.0, cost_power=2.0, diffusion_gain=kappa)

    def drift(x, t, alpha):
        return beta * alpha + lam * x

    def diffusion(x, t, alpha):
        return math.sqrt(kappa) * np.linalg.norm(alpha, axis=1)[:, None, None] * np.eye(dim)[None]

    def running_cost(x, t, alpha):
        return np.sum(alpha * alpha, axis=1)

    constants = AssumptionConstants(
        c_b=max(1.0, beta, lam), c_sigma=math.sqrt(kappa * dim), c_ell=1.0, nu=1.0, c_s=1.0,
        chi=_constant(0.0), gamma=_constant(0.0),
    )
    return ProblemSpec(
        space_dim=dim, p=2.0, drift=drift, diffusion=diffusion, initial=_soft_norm(params["amplitude"]),
        horizon=params["T"], constants=constants, running_cost=running_cost, controlled=True,
        control_dim=dim, power_form=form, name="eq3_lq",
    )


def _power_model(params: Mapping[str, float]) -> ProblemSpec:
    dim = int(params["dim"])
    p, c, d, forcing = params["p"], params["c"], params["d"], params["forcing"]
    pc = p / (p - 1.0)

    def drift(x, t):
        return np.zeros_like(x)

    def diffusion(x, t):
        return _identity_stack(x, math.sqrt(d))

    def nonlinearity(x, t, u, z):
        return c * np.linalg.norm(z, axis=1) ** pc + forcing

    constants = AssumptionConstants(
        c_sigma=math.sqrt(d * dim), c_f=max(c, abs(forcing)), c_s=1.0,
        chi=_constant(abs(forcing)), gamma=_constant(abs(forcing)),
    )
    return ProblemSpec(
        space_dim=dim, p=p, drift=drift, diffusion=diffusion, initial=_soft_norm(params["amplitude"]),
        horizon=params["T"], constants=constants, nonlinearity=nonlinearity, z_min_at_origin=True,
        name="power_model",
    )


def _lp_deterministic(params: Mapping[str, float]) -> ProblemSpec:
    """v(x, s) = w(x, T - s) solves v_s + p^{-p'}|v_x|^{p'}/p' = ρ|x|^p, v(x, 0) = -|x|^p"""
    dim = int(params["dim"])
    p, rho = params["p"], params["rho"]
    pc = p / (p - 1.0)
    gain = p ** (-pc) / pc

    def drift(x, t):
        return np.zeros_like(x)

    def diffusion(x, t):
        return np.zeros((x.shape[0], dim, dim))

    def nonlinearity(x, t, u, z):
        return gain * np.linalg.norm(z, axis=1) ** pc - rho * np.linalg.norm(x, axis=1) ** p

    def initial(x):
        return -np.linalg.norm(x, axis=1) ** p

    constants = AssumptionConstants(c_f=max(gain, rho), c_s=1.0)
    return ProblemSpec(
        space_dim=dim, p=p, drift=drift, diffusion=diffusion, initial=initial, horizon=params["T"],
        constants=constants, nonlinearity=nonlinearity, z_min_at_origin=True, name="lp_deterministic",
    )


def _briand_hu(params: Mapping[str, float]) -> ProblemSpec:
    dim = int(params["dim"])
    kappa, sigma0, gamma, theta = params["kappa"], params["sigma0"], params["gamma"], params["theta"]

    def drift(x, t):
        return -kappa * x

    def diffusion(x, t):
        return _identity_stack(x, sigma0)

    def gradient_weight(x, t):
        return _identity_stack(x, sigma0)

    def nonlinearity(x, t, u, z):
        return 0.5 * gamma * np.sum(z * z, axis=1) - theta * u

    constants = AssumptionConstants(
        c_b=kappa, c_sigma=sigma0 * math.sqrt(dim), c_f=max(0.5 * gamma, theta), c_s=sigma0, c_hat=theta,
        chi=_constant(0.0), gamma=_constant(0.0),
    )
    return ProblemSpec(
        space_dim=dim, p=2.0, drift=drift, diffusion=diffusion, initial=_soft_norm(params["amplitude"]),
        horizon=params["T"], constants=constants, nonlinearity=nonlinearity, gradient_weight=gradient_weight,
        z_min_at_origin=True, name="briand_hu",
    )


_DIM = ParamDomain(1.0, 2.0)
_POSITIVE = ParamDomain(0.0, low_open=True)
_NONNEGATIVE = ParamDomain(0.0)


def _descriptor(name: str, form: str, defaults: Dict[str, float], domains: Dict[str, ParamDomain],
                suites: Tuple[str, ...], builder: Callable, **flags: bool) -> PresetDescriptor:
    return PresetDescriptor(name, form, MappingProxyType(defaults), MappingProxyType(domains), suites, builder,
                            **flags)


_REGISTRY: Tuple[PresetDescriptor, ...] = (
    _descriptor(
        "eq3_lq",
        "u_t + sup_a{-<b a + l x, Du> - |a|^2 - k|a|^2 Tr D2u} = 0",
        {"dim": 1.0, "T": 1.0, "beta": 1.0, "lam": 1.0, "kappa": 0.5, "amplitude": 1.0},
        {"dim": _DIM, "T": _POSITIVE, "beta": _NONNEGATIVE, "lam": _NONNEGATIVE, "kappa": _POSITIVE,
         "amplitude": _NONNEGATIVE},
        ("validate", "barriers", "solve"),
        _eq3_lq,
        controlled=True, infinity_path=True,
    ),
    _descriptor(
        "power_model",
        "u_t - d Lap u + c|Du|^p' + G = 0",
        {"dim": 1.0, "p": 2.0, "T": 1.0, "c": 1.0, "d": 1.0, "forcing": 0.0, "amplitude": 1.0},
        {"dim": _DIM, "p": ParamDomain(1.0, 10.0, low_open=True), "T": _POSITIVE, "c": _POSITIVE,
         "d": _POSITIVE, "forcing": ParamDomain(-1e6, 1e6), "amplitude": _NONNEGATIVE},
        ("validate", "barriers", "oracles", "solve", "comparison", "convergence"),
        _power_model,
    ),
    _descriptor(
        "lp_deterministic",
        "v_s + p^-p'|v_x|^p'/p' - rho|x|^p = 0, v(x,0) = -|x|^p",
        {"dim": 1.0, "p": 2.0, "rho": 0.0, "T": 5.0},
        {"dim": _DIM, "p": ParamDomain(1.0, 10.0, low_open=True), "rho": _NONNEGATIVE, "T": _POSITIVE},
        ("validate", "oracles", "solve"),
        _lp_deterministic,
        diffusion_zero=True, blow_up=True,
    ),
    _descriptor(
        "briand_hu",
        "u_t - s0^2 Lap u - k<x, Du> + (g/2)|s0 Du|^2 - th u = 0",
        {"dim": 1.0, "T": 1.0, "kappa": 0.5, "sigma0": 1.0, "gamma": 1.0, "theta": 0.5, "amplitude": 1.0},
        {"dim": _DIM, "T": _POSITIVE, "kappa": _NONNEGATIVE, "sigma0": _POSITIVE, "gamma": _NONNEGATIVE,
         "theta": _NONNEGATIVE, "amplitude": _NONNEGATIVE},
        ("validate", "barriers", "solve", "comparison", "convergence"),
        _briand_hu,
    ),
)


def preset_registry() -> List[PresetDescriptor]:
    return list(_REGISTRY)


def get_preset(name: str) -> PresetDescriptor:
    for descriptor in _REGISTRY:
        if descriptor.name == name:
            return descriptor
    raise UnknownPreset(name, (d.name for d in _REGISTRY))


def spec_from_document(document: Mapping[str, Any]) -> ProblemSpec:
    """Build a ProblemSpec from {"preset": name, "params": {...}}"""
    if not isinstance(document, Mapping) or "preset" not in document:
        raise ConfigInvalid("problem document needs a 'preset' entry")
    params = document.get("params") or {}
    if not isinstance(params, Mapping):
        raise ConfigInvalid("'params' must be an object")
    return get_preset(str(document["preset"])).build(params)


def riccati_for(spec_params: Mapping[str, float], blow_up_asserted: bool = False) -> RiccatiProblem:
    """Blow-up ODE matching resolved lp_deterministic parameters"""
    return RiccatiProblem(spec_params["p"], spec_params["rho"], spec_params["T"], blow_up_asserted)
