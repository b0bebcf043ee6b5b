#!/usr/bin/env python3
"""
Reference solutions: the blow-up ODE of the |x|^p value ansatz, the auxiliary
parabolic problem phi_t = r^2 phi_rr + r phi_r, and manufactured solutions.
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Optional, Tuple, Union

import numpy as np
from scipy import integrate, optimize, sparse
from scipy.sparse import linalg as sparse_linalg
from scipy.special import ndtr

from .errors import BeyondBlowUp, NonPositiveR, QuadratureDivergence, UnknownKind, UnsupportedProblem
from .problem import ProblemSpec, model_residual
from .weights import PowerWeight, as_points

logger = logging.getLogger(__name__)

BLOW_UP_LEVEL = 1e8
TAIL_TOLERANCE = 1e-6
AGREEMENT_TOLERANCE = 1e-4
MAX_RICCATI_STEPS = 5_000_000


class RungeKutta4:
    """Classic fourth-order one-step method for y' = f(t, y)"""

    def __init__(self, dt: float, f: Callable[[float, float], float]):
        self.dt = dt
        self.f = f

    def step(self, t: float, y: float) -> float:
        k1 = self.f(t, y)
        k2 = self.f(t + 0.5 * self.dt, y + 0.5 * self.dt * k1)
        k3 = self.f(t + 0.5 * self.dt, y + 0.5 * self.dt * k2)
        k4 = self.f(t + self.dt, y + self.dt * k3)
        return y + self.dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6


# ---------------------------------------------------------------- blow-up ODE

@dataclass(frozen=True)
class RiccatiProblem:
    """-phi' + |phi|^{p'}/p' = rho on [0, T], phi(T) = -1"""
    p: float
    rho: float
    horizon: float
    blow_up_asserted: bool = False
    p_conj: float = field(init=False)

    def __post_init__(self):
        if self.p <= 1.0:
            raise ValueError(f"p must exceed 1, got {self.p}")
        if self.rho < 0.0:
            raise ValueError(f"rho must be nonnegative, got {self.rho}")
        if self.horizon <= 0.0:
            raise ValueError("horizon T must be positive")
        object.__setattr__(self, "p_conj", self.p / (self.p - 1.0))

    @property
    def critical_product(self) -> float:
        """rho p'; blow-up is possible only below 1"""
        return self.rho * self.p_conj

    def rhs(self, t: float, phi: float) -> float:
        return abs(phi) ** self.p_conj / self.p_conj - self.rho

    def quadrature_threshold(self) -> float:
        """Integral of p'/(|y|^{p'} - rho p') over (-inf, -1]; inf when it diverges"""
        pc, k = self.p_conj, self.critical_product
        if k >= 1.0:
            if self.blow_up_asserted:
                raise QuadratureDivergence(f"rho p' = {k:.6g} >= 1: the blow-up integral diverges")
            return math.inf

        # y = -1/w maps (-inf, -1] onto (0, 1]
        def integrand(w: float) -> float:
            return pc * w ** (pc - 2.0) / (1.0 - k * w ** pc)

        value, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=1e-12, epsrel=1e-12, limit=200)
        return float(value)

    def quadrature_tau(self) -> Optional[float]:
        """Blow-up time from the integral identity, or None when there is none in (0, T)"""
        threshold = self.quadrature_threshold()
        if not math.isfinite(threshold) or self.horizon <= threshold:
            return None
        return self.horizon - threshold

    def elapsed(self, phi: float) -> float:
        """Integral of p'/(|y|^{p'} - rho p') from -1 to phi, which equals t - T"""
        pc, k = self.p_conj, self.critical_product
        if phi < -1.0:
            # y = -1/w keeps the range bounded however large |phi| gets
            def tail(w: float) -> float:
                return pc * w ** (pc - 2.0) / (1.0 - k * w ** pc)

            value, _ = integrate.quad(tail, 1.0 / abs(phi), 1.0, epsabs=1e-13, epsrel=1e-12, limit=200)
            return -value

        def integrand(y: float) -> float:
            return pc / (abs(y) ** pc - k)

        value, _ = integrate.quad(integrand, -1.0, phi, epsabs=1e-13, epsrel=1e-12, limit=200,
                                  points=[0.0] if phi > 0.0 else None)
        return value

    def quadrature_phi(self, t: float) -> float:
        """phi(t) by inverting the integral identity with a bracketing root finder"""
        if not 0.0 <= t <= self.horizon:
            raise ValueError(f"t must lie in [0, {self.horizon}]")
        target = t - self.horizon
        if target == 0.0:
            return -1.0
        k = self.critical_product
        if k == 1.0:
            return -1.0
        tau = self.quadrature_tau()
        if tau is not None and t <= tau:
            raise BeyondBlowUp(f"t = {t} is at or before the blow-up time {tau:.6g}")

        def g(phi: float) -> float:
            return self.elapsed(phi) - target

        if k < 1.0:
            lo = -2.0
            while g(lo) > 0.0:
                lo *= 2.0
            return float(optimize.brentq(g, lo, -1.0, xtol=1e-14, rtol=1e-14))
        equilibrium = k ** (1.0 / self.p_conj)
        gap = 0.5 * (equilibrium + 1.0)
        hi = equilibrium - gap
        while g(hi) > 0.0:
            gap *= 0.5
            hi = equilibrium - gap
        return float(optimize.brentq(g, -1.0, hi, xtol=1e-14, rtol=1e-14))


@dataclass
class BlowUpReport:
    problem: RiccatiProblem
    times: np.ndarray
    values: np.ndarray
    tau: Optional[float] = None
    tau_bracket: Optional[Tuple[float, float]] = None
    quadrature_threshold: float = math.inf
    tau_quadrature: Optional[float] = None
    steps: int = 0

    @property
    def blew_up(self) -> bool:
        return self.tau is not None

    @property
    def bracket_width(self) -> Optional[float]:
        if self.tau_bracket is None:
            return None
        return self.tau_bracket[1] - self.tau_bracket[0]

    def phi_at_start(self) -> Optional[float]:
        """phi(0) when the trajectory reaches t = 0"""
        return None if self.blew_up else float(self.values[0])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "p": self.problem.p,
            "p_conj": self.problem.p_conj,
            "rho": self.problem.rho,
            "T": self.problem.horizon,
            "blew_up": self.blew_up,
            "tau": self.tau,
            "tau_quadrature": self.tau_quadrature,
            "tau_bracket": list(self.tau_bracket) if self.tau_bracket else None,
            "bracket_width": self.bracket_width,
            "quadrature_threshold": self.quadrature_threshold,
            "steps": self.steps,
        }

    def write_trajectory_csv(self, path: Union[str, Path], max_rows: int = 5000) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        stride = max(1, len(self.times) // max_rows)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["t", "phi"])
            for t, phi in zip(self.times[::stride], self.values[::stride]):
                writer.writerow([f"{t:.12g}", f"{phi:.12g}"])
        return path


def riccati_solve(prob: RiccatiProblem, dt: float) -> BlowUpReport:
    """Integrate the blow-up ODE backward from t = T with RK4, shrinking the step as |phi| doubles"""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    threshold = prob.quadrature_threshold()
    pc, k = prob.p_conj, prob.critical_product
    shrink = 2.0 ** (1.0 - pc)

    # march in s = T - t, where dphi/ds = -rhs
    def backward(s: float, phi: float) -> float:
        return -prob.rhs(prob.horizon - s, phi)

    s, phi, step = 0.0, -1.0, dt
    next_doubling = 2.0
    times: List[float] = [prob.horizon]
    values: List[float] = [phi]
    tau: Optional[float] = None
    bracket: Optional[Tuple[float, float]] = None
    count = 0

    while s < prob.horizon and count < MAX_RICCATI_STEPS:
        h = min(step, prob.horizon - s)
        candidate = RungeKutta4(h, backward).step(s, phi)
        if not math.isfinite(candidate):
            step *= 0.5
            continue
        s, phi = s + h, candidate
        count += 1
        times.append(prob.horizon - s)
        values.append(phi)
        while abs(phi) >= next_doubling:
            step *= shrink
            next_doubling *= 2.0
        if abs(phi) > BLOW_UP_LEVEL and k < 1.0:
            tail = pc * abs(phi) ** (1.0 - pc) / ((pc - 1.0) * (1.0 - k * abs(phi) ** (-pc)))
            if tail < TAIL_TOLERANCE:
                hi = prob.horizon - s
                bracket = (hi - tail, hi)
                tau = hi - 0.5 * tail
                break
    if count >= MAX_RICCATI_STEPS:
        logger.warning("riccati_solve stopped after %d steps at t=%.6g", count, prob.horizon - s)

    report = BlowUpReport(
        problem=prob,
        times=np.array(times[::-1]),
        values=np.array(values[::-1]),
        tau=tau,
        tau_bracket=bracket,
        quadrature_threshold=threshold,
        tau_quadrature=prob.quadrature_tau(),
        steps=count,
    )
    if tau is not None and report.tau_quadrature is not None:
        gap = abs(tau - report.tau_quadrature)
        if gap > AGREEMENT_TOLERANCE:
            logger.warning("ODE and quadrature blow-up times differ by %.3g", gap)
    logger.debug("riccati_solve: %s", report.to_dict())
    return report


def _phi_lattice(prob: RiccatiProblem, t: float, h: float, offsets: Tuple[int, ...]) -> Dict[int, float]:
    """phi at t + j h for each offset j, by RK4 from T on the lattice T - n h"""
    def rhs(time: float, phi: float) -> float:
        return prob.rhs(time, phi)

    n = int(round((prob.horizon - t) / h))
    out: Dict[int, float] = {}
    wanted = {n - j: j for j in offsets}  # lattice index counted backward from T
    back = RungeKutta4(-h, rhs)
    fwd = RungeKutta4(h, rhs)
    phi, time = -1.0, prob.horizon
    lowest = max(wanted)
    for idx in range(0, lowest + 1):
        if idx in wanted:
            out[wanted[idx]] = phi
        phi = back.step(time, phi)
        time -= h
    phi, time = -1.0, prob.horizon
    for idx in range(0, -min(min(wanted), 0) + 1):
        if -idx in wanted:
            out[wanted[-idx]] = phi
        phi = fwd.step(time, phi)
        time += h
    return out


def lp_value_residual(prob: RiccatiProblem, x, t: float, dt: float = 1e-3) -> Union[float, np.ndarray]:
    """|-w_t + p^{-p'} |w_x|^{p'}/p' - rho |x|^p| at w = phi(t)|x|^p, with w_t by finite differences"""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    tau = prob.quadrature_tau()
    if tau is not None and t <= tau:
        raise BeyondBlowUp(f"t = {t} is at or before the blow-up time {tau:.6g}")
    p, pc = prob.p, prob.p_conj
    gap = prob.horizon - t
    if gap <= 0.0:
        h = dt
    else:
        cap = dt if tau is None else min(dt, (t - tau) / 4.0)
        h = gap / max(1, math.ceil(gap / cap))
    phi = _phi_lattice(prob, t, h, (-2, -1, 0, 1, 2))
    phi_t = (phi[-2] - 8.0 * phi[-1] + 8.0 * phi[1] - phi[2]) / (12.0 * h)

    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    w_t = phi_t * ax ** p
    w_x = p * phi[0] * ax ** (p - 1.0) * np.sign(x)
    residual = np.abs(-w_t + p ** (-pc) * np.abs(w_x) ** pc / pc - prob.rho * ax ** p)
    return float(residual) if residual.ndim == 0 else residual


# ---------------------------------------------------------------- auxiliary problem

@dataclass(frozen=True)
class AuxiliaryParabolicSolution:
    """phi_t = r^2 phi_rr + r phi_r, phi(r, 0) = max(0, r - R), in normal-CDF closed form.

    In s = ln r this is the heat equation phi_t = phi_ss, so phi is the expectation
    of the ramp under a log-normal law of variance 2t.
    """
    R: float

    def __post_init__(self):
        if not self.R > 0.0:
            raise NonPositiveR(f"R must be positive, got {self.R}")

    def _d(self, r: np.ndarray, t: float) -> Tuple[np.ndarray, np.ndarray, float]:
        spread = math.sqrt(2.0 * t)
        with np.errstate(divide="ignore"):
            d2 = (np.log(r) - math.log(self.R)) / spread
        return d2 + spread, d2, spread

    def value(self, r, t: float) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if t <= 0.0:
            return np.maximum(0.0, r - self.R)
        d1, d2, _ = self._d(r, t)
        return np.where(r > 0.0, r * math.exp(t) * ndtr(d1) - self.R * ndtr(d2), 0.0)

    def dr(self, r, t: float) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if t <= 0.0:
            return (r > self.R).astype(float)
        d1, _, _ = self._d(r, t)
        return np.where(r > 0.0, math.exp(t) * ndtr(d1), 0.0)

    def drr(self, r, t: float) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if t <= 0.0:
            return np.zeros_like(r)
        d1, _, spread = self._d(r, t)
        safe = np.where(r > 0.0, r, 1.0)
        density = np.exp(-0.5 * d1 * d1) / math.sqrt(2.0 * math.pi)
        return np.where(r > 0.0, math.exp(t) * density / (safe * spread), 0.0)

    def dt(self, r, t: float) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return r * r * self.drr(r, t) + r * self.dr(r, t)


def auxiliary_phi(R: float, r, t: float, quad_points: int = 64) -> Tuple[np.ndarray, np.ndarray]:
    """Value and r-derivative of the auxiliary solution by Gauss-Legendre heat-kernel quadrature"""
    if not R > 0.0:
        raise NonPositiveR(f"R must be positive, got {R}")
    if quad_points < 64:
        raise ValueError("quad_points must be at least 64")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0.0):
        raise ValueError("r must be nonnegative")
    if t <= 0.0:
        return np.maximum(0.0, r - R), (r > R).astype(float)

    flat = r.reshape(-1)
    value = np.zeros_like(flat)
    deriv = np.zeros_like(flat)
    live = flat > 0.0
    if np.any(live):
        nodes, weights = np.polynomial.legendre.leggauss(quad_points)
        var = 2.0 * t
        spread = math.sqrt(var)
        s = np.log(flat[live])
        lo = np.maximum(math.log(R), s - 12.0 * spread)
        hi = s + 12.0 * spread
        width = np.maximum(hi - lo, 0.0)
        y = 0.5 * (lo + hi)[:, None] + 0.5 * width[:, None] * nodes[None, :]
        kernel = np.exp(-((s[:, None] - y) ** 2) / (2.0 * var)) / math.sqrt(2.0 * math.pi * var)
        ramp = np.exp(y) - R
        half = 0.5 * width
        value[live] = half * np.sum(weights * kernel * ramp, axis=1)
        # d/dr = (1/r) d/ds, and d/ds of the kernel is -(s - y)/var times the kernel
        ds = half * np.sum(weights * (-(s[:, None] - y) / var) * kernel * ramp, axis=1)
        deriv[live] = ds / flat[live]
    return value.reshape(r.shape), deriv.reshape(r.shape)


def auxiliary_phi_fd(R: float, r, t: float, r_max: float = 20.0, nodes: int = 4001,
                     time_steps: int = 400) -> Tuple[np.ndarray, np.ndarray]:
    """Independent implicit finite-difference solve of the r-form equation on [0, r_max].

    Four backward-Euler half steps then Crank-Nicolson; boundary values phi(0) = 0 and
    phi(r_max) = r_max e^t - R.
    """
    if not R > 0.0:
        raise NonPositiveR(f"R must be positive, got {R}")
    if time_steps < 3:
        raise ValueError("time_steps must be at least 3")
    grid = np.linspace(0.0, r_max, nodes)
    hr = grid[1] - grid[0]
    phi = np.maximum(0.0, grid - R)
    if t <= 0.0:
        return np.interp(r, grid, phi), np.interp(r, grid, np.gradient(phi, hr))

    inner = grid[1:-1]
    lower = inner ** 2 / hr ** 2 - inner / (2.0 * hr)
    diag = -2.0 * inner ** 2 / hr ** 2
    upper = inner ** 2 / hr ** 2 + inner / (2.0 * hr)
    op = sparse.diags([lower[1:], diag, upper[:-1]], [-1, 0, 1], format="csc")
    eye = sparse.identity(inner.size, format="csc")

    def advance(phi: np.ndarray, time: float, k: float, theta: float, solver) -> np.ndarray:
        right_now = r_max * math.exp(time) - R
        right_next = r_max * math.exp(time + k) - R
        rhs = phi[1:-1] + (1.0 - theta) * k * (op @ phi[1:-1])
        rhs[-1] += k * upper[-1] * ((1.0 - theta) * right_now + theta * right_next)
        out = np.empty_like(phi)
        out[0] = 0.0
        out[-1] = right_next
        out[1:-1] = solver(rhs)
        return out

    k = t / time_steps
    # a backward-Euler half step and a Crank-Nicolson step share one matrix
    solver = sparse_linalg.factorized((eye - 0.5 * k * op).tocsc())
    time = 0.0
    for _ in range(4):
        phi = advance(phi, time, 0.5 * k, 1.0, solver)
        time += 0.5 * k
    for _ in range(time_steps - 2):
        phi = advance(phi, time, k, 0.5, solver)
        time += k
    return np.interp(r, grid, phi), np.interp(r, grid, np.gradient(phi, hr))


# ---------------------------------------------------------------- manufactured solutions

@dataclass
class ManufacturedSolution:
    """Smooth u with closed-form derivatives and the forcing that makes it solve the model equation"""
    kind: str
    spec: ProblemSpec
    value: Callable[[np.ndarray, float], np.ndarray]
    time_derivative: Callable[[np.ndarray, float], np.ndarray]
    gradient: Callable[[np.ndarray, float], np.ndarray]
    hessian: Callable[[np.ndarray, float], np.ndarray]

    def forcing(self, x: np.ndarray, t: float) -> np.ndarray:
        """The model operator applied to u"""
        x = as_points(x)
        return model_residual(self.spec, x, t, self.value(x, t), self.time_derivative(x, t),
                              self.gradient(x, t), self.hessian(x, t))

    def forced_spec(self) -> ProblemSpec:
        return self.spec.with_forcing(self.forcing)

    def initial(self, x: np.ndarray) -> np.ndarray:
        return self.value(as_points(x), 0.0)

    def __iter__(self) -> Iterator[Callable]:
        return iter((self.value, self.forcing))


MANUFACTURED_KINDS = ("gaussian_decay", "polynomial_p_growth", "separated_sine")


def manufactured_solution(kind: str, spec: ProblemSpec, **params: Any) -> ManufacturedSolution:
    if kind not in MANUFACTURED_KINDS:
        raise UnknownKind(f"unknown manufactured solution '{kind}'. Valid kinds: {', '.join(MANUFACTURED_KINDS)}")
    if spec.controlled:
        raise UnsupportedProblem("manufactured solutions are built for uncontrolled problems")
    dim = spec.space_dim

    if kind == "gaussian_decay":
        width = float(params.get("width", 1.0))
        rate = float(params.get("rate", 1.0))

        def value(x, t):
            x = as_points(x)
            return math.exp(-rate * t) * np.exp(-np.sum(x * x, axis=1) / (2.0 * width ** 2))

        def time_derivative(x, t):
            return -rate * value(x, t)

        def gradient(x, t):
            x = as_points(x)
            return -x / width ** 2 * value(x, t)[:, None]

        def hessian(x, t):
            x = as_points(x)
            outer = x[:, :, None] * x[:, None, :] / width ** 4
            return (outer - np.eye(dim)[None] / width ** 2) * value(x, t)[:, None, None]

    elif kind == "polynomial_p_growth":
        weight = PowerWeight(float(params.get("p", spec.p)))

        def value(x, t):
            return (1.0 + t) * weight.value(x)

        def time_derivative(x, t):
            return weight.value(x)

        def gradient(x, t):
            return (1.0 + t) * weight.gradient(x)

        def hessian(x, t):
            return (1.0 + t) * weight.hessian(x)

    else:
        k = np.broadcast_to(np.asarray(params.get("k", math.pi / 2.0), dtype=float), (dim,)).copy()
        rate = float(params.get("rate", float(k @ k)))
        phase = float(params.get("phase", 0.0))

        def value(x, t):
            return math.exp(-rate * t) * np.sin(as_points(x) @ k + phase)

        def time_derivative(x, t):
            return -rate * value(x, t)

        def gradient(x, t):
            return math.exp(-rate * t) * np.cos(as_points(x) @ k + phase)[:, None] * k[None, :]

        def hessian(x, t):
            return -value(x, t)[:, None, None] * np.outer(k, k)[None]

    return ManufacturedSolution(kind, spec, value, time_derivative, gradient, hessian)
