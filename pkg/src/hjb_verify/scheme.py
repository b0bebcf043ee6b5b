#!/usr/bin/env python3
"""
Monotone explicit finite differences for

    u_t - Tr(σσᵀ D²u) + <b, Du> + f(x, t, u, s Du) = 0            (uncontrolled)
    u_t + sup_α {-<b, Du> - l - Tr(σσᵀ D²u)} + f(x, t, u, s Du) = 0  (controlled)

on a rectangular 1D or 2D grid. Diffusion uses central second differences, the drift
is upwinded by the sign of each component and the gradient argument of f takes the
Godunov one-sided difference of largest magnitude per axis.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import BeyondBlowUp, CflViolation, DimensionMismatch, NonFiniteValue
from .grid import Grid, GridFunction
from .problem import (
    MAX_BOX_GROWTH,
    PROBE_MARGIN,
    PROBE_RADII,
    ProblemSpec,
    _probe_directions,
    coercive_radius,
)

logger = logging.getLogger(__name__)

BoundaryFn = Callable[[np.ndarray, float], np.ndarray]

CFL_SAFETY = 0.9
BLOW_UP_FACTOR = 1e6
CONTROL_POINTS = 64
DIAGONAL_TOL = 1e-12


@dataclass
class BoundaryPair:
    """Dirichlet data for the outer nodes: lower/upper callables (x, t) -> values.

    `side` picks which one feeds the boundary nodes. A pair with no callable on the
    chosen side keeps the boundary nodes at their previous values.
    """
    lower: Optional[BoundaryFn] = None
    upper: Optional[BoundaryFn] = None
    side: str = "upper"

    def __post_init__(self):
        if self.side not in ("lower", "upper"):
            raise ValueError(f"side must be 'lower' or 'upper', got {self.side!r}")

    @classmethod
    def from_barriers(cls, sub: Any, sup: Any, side: str = "upper") -> "BoundaryPair":
        """Use the value routines of a sub/supersolution pair"""
        return cls(lower=sub.value, upper=sup.value, side=side)

    @classmethod
    def dirichlet(cls, fn: BoundaryFn) -> "BoundaryPair":
        return cls(lower=fn, upper=fn)

    exact = dirichlet

    @classmethod
    def zero(cls) -> "BoundaryPair":
        return cls.dirichlet(lambda x, t: np.zeros(x.shape[0]))

    @classmethod
    def frozen(cls) -> "BoundaryPair":
        return cls()

    def values(self, points: np.ndarray, t: float) -> Optional[np.ndarray]:
        fn = self.upper if self.side == "upper" else self.lower
        if fn is None:
            return None
        return np.asarray(fn(points, t), dtype=float).reshape(-1)


@dataclass
class SolveOutcome:
    final: GridFunction
    status: str
    tau_num: Optional[float] = None
    history: List[Tuple[float, float]] = field(default_factory=list)
    steps: int = 0
    threshold: float = np.inf
    snapshots: List[GridFunction] = field(default_factory=list)

    @property
    def blew_up(self) -> bool:
        return self.status == "blew_up"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "status": self.status,
            "tau_num": self.tau_num,
            "steps": self.steps,
            "final_time": self.final.time,
            "threshold": self.threshold,
            "max_norm_history": [[t, m] for t, m in self.history],
        }


@dataclass
class ComparisonReport:
    steps: int
    max_violation: float
    step_violations: List[float] = field(default_factory=list)
    final_time: float = 0.0

    def ordered(self, tol: float = 1e-10) -> bool:
        return self.max_violation <= tol

    def to_dict(self) -> Dict[str, Any]:
        return {
            "steps": self.steps,
            "max_violation": self.max_violation,
            "final_time": self.final_time,
            "ordered": self.ordered(),
        }


class _Stencil:
    """One-sided and second differences at the interior nodes of a grid function"""

    def __init__(self, grid: Grid, values: np.ndarray):
        arr = values.reshape(grid.shape)
        n = grid.space_dim
        center = tuple(slice(1, -1) for _ in range(n))
        minus, plus, second = [], [], []
        for axis, h in enumerate(grid.widths):
            lo = list(center)
            hi = list(center)
            lo[axis] = slice(0, -2)
            hi[axis] = slice(2, None)
            u0, um, up = arr[center], arr[tuple(lo)], arr[tuple(hi)]
            minus.append(((u0 - um) / h).reshape(-1))
            plus.append(((up - u0) / h).reshape(-1))
            second.append(((up - 2.0 * u0 + um) / (h * h)).reshape(-1))
        self.minus = np.stack(minus, axis=1)
        self.plus = np.stack(plus, axis=1)
        self.second = np.stack(second, axis=1)
        self.center = values[grid.interior_mask()]

    def godunov(self) -> np.ndarray:
        """Per axis, the one-sided candidate of larger magnitude (zero between an upslope and a downslope)"""
        back = np.maximum(self.minus, 0.0)
        fwd = np.minimum(self.plus, 0.0)
        return np.where(back >= -fwd, back, fwd)

    def upwind(self, b: np.ndarray, downstream: bool = False) -> np.ndarray:
        """Backward difference where b > 0, forward where b < 0 (reversed when downstream)"""
        positive = b > 0.0 if not downstream else b < 0.0
        return np.where(positive, self.minus, self.plus)

    def central(self) -> np.ndarray:
        return 0.5 * (self.minus + self.plus)

    def repeat(self, node: int, count: int) -> "_Stencil":
        """The differences of one node, stacked `count` times"""
        rows = object.__new__(_Stencil)
        for name in ("minus", "plus", "second"):
            setattr(rows, name, np.repeat(getattr(self, name)[node:node + 1], count, axis=0))
        rows.center = np.full(count, self.center[node])
        return rows


def _check_dims(spec: ProblemSpec, grid: Grid, current: GridFunction) -> None:
    if spec.space_dim != grid.space_dim:
        raise DimensionMismatch(f"problem has N={spec.space_dim}, grid has N={grid.space_dim}")
    if current.grid.shape != grid.shape:
        raise DimensionMismatch("grid function does not live on this grid")


def _diagonal(matrices: np.ndarray, what: str) -> np.ndarray:
    diag = np.diagonal(matrices, axis1=1, axis2=2)
    if matrices.shape[-1] > 1:
        off = matrices - np.einsum("ni,ij->nij", diag, np.eye(matrices.shape[-1]))
        if np.max(np.abs(off)) > DIAGONAL_TOL * (1.0 + np.max(np.abs(diag))):
            raise DimensionMismatch(f"{what} must be diagonal in 2D for a monotone stencil")
    return diag


def _nonlinearity_slope(spec: ProblemSpec, x: np.ndarray, t: float, u: np.ndarray, s_diag: np.ndarray,
                        p_sel: np.ndarray) -> np.ndarray:
    """|df/dz_i| |s_ii| at the selected gradient, per node and axis"""
    if spec.nonlinearity is None:
        return np.zeros_like(p_sel)
    z = s_diag * p_sel
    slopes = np.empty_like(z)
    for i in range(z.shape[1]):
        delta = 1e-6 * (1.0 + np.abs(z[:, i]))
        zp, zm = z.copy(), z.copy()
        zp[:, i] += delta
        zm[:, i] -= delta
        slopes[:, i] = np.abs(spec.f(x, t, u, zp) - spec.f(x, t, u, zm)) / (2.0 * delta)
    return slopes * np.abs(s_diag)


def _control_box(radius: float, dim: int) -> np.ndarray:
    axis = np.linspace(-radius, radius, CONTROL_POINTS)
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def _control_radius(spec: ProblemSpec, stencil: "_Stencil") -> float:
    q_scale = float(np.max(np.abs(np.concatenate([stencil.minus, stencil.plus])))) if stencil.minus.size else 0.0
    x_scale = float(np.max(np.abs(stencil.second))) if stencil.second.size else 0.0
    return coercive_radius(spec, np.full(spec.space_dim, q_scale), x_scale * np.eye(spec.space_dim))


def _upwinded_objective(spec: ProblemSpec, x: np.ndarray, t: float, stencil: "_Stencil", alpha: np.ndarray,
                        widths: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Control objective with the drift upwinded, and the CFL row sum of the same control"""
    a = _diagonal(spec.a(x, t, alpha), "σσᵀ")
    b = spec.b(x, t, alpha)
    value = (-np.sum(b * stencil.upwind(b, downstream=True), axis=1)
             - spec.ell(x, t, alpha)
             - np.sum(a * stencil.second, axis=1))
    return value, np.sum(2.0 * a / widths ** 2 + np.abs(b) / widths, axis=1)


def _infinite_nodes(spec: ProblemSpec, x: np.ndarray, t: float, stencil: "_Stencil", radius: float,
                    widths: np.ndarray) -> np.ndarray:
    """Nodes where the control sup is +inf"""
    if spec.power_form is not None:
        q_norm = np.linalg.norm(stencil.central(), axis=1)
        return spec.power_form.diverges(q_norm, np.sum(stencil.second, axis=1))
    radii = np.array(PROBE_RADII) * radius
    growing = np.zeros(x.shape[0], dtype=bool)
    for direction in _probe_directions(spec.m):
        near, _ = _upwinded_objective(spec, x, t, stencil, np.tile(radii[-2] * direction, (x.shape[0], 1)), widths)
        far, _ = _upwinded_objective(spec, x, t, stencil, np.tile(radii[-1] * direction, (x.shape[0], 1)), widths)
        growing |= far > near + PROBE_MARGIN * np.maximum(1.0, np.abs(near))
    return growing


def _grown_sup(spec: ProblemSpec, x_node: np.ndarray, t: float, rows: "_Stencil", radius: float,
               widths: np.ndarray) -> Tuple[float, float]:
    """Sup and CFL row sum at one node, doubling the box until its edge stops beating the interior.

    `rows` repeats the node's differences once per control of the box.
    """
    xs = np.repeat(x_node[None, :], rows.minus.shape[0], axis=0)
    edge = _on_control_edge(np.arange(rows.minus.shape[0]), spec.m)
    for _ in range(MAX_BOX_GROWTH):
        values, sums = _upwinded_objective(spec, xs, t, rows, _control_box(radius, spec.m), widths)
        if np.max(values[edge]) <= np.max(values[~edge]):
            break
        radius *= 2.0
    else:
        logger.warning("scheme control maximiser stayed on the box edge at radius %.3g", radius)
    return float(np.max(values)), float(np.max(sums))


def _controlled_terms(spec: ProblemSpec, grid: Grid, x: np.ndarray, t: float,
                      stencil: "_Stencil") -> Tuple[np.ndarray, np.ndarray]:
    """Best upwinded control objective per node and its CFL denominator.

    Raises NonFiniteValue as soon as one node has an infinite sup.
    """
    widths = np.asarray(grid.widths)
    radius = _control_radius(spec, stencil)
    infinite = np.flatnonzero(_infinite_nodes(spec, x, t, stencil, radius, widths))
    if infinite.size:
        node = infinite[0]
        raise NonFiniteValue(f"Hamiltonian is +inf at {infinite.size} node(s), first x={x[node].tolist()}, "
                             f"t={t:.6g}", time=t)

    best = np.full(x.shape[0], -np.inf)
    best_index = np.zeros(x.shape[0], dtype=int)
    denominator = np.zeros(x.shape[0])
    for k, alpha in enumerate(_control_box(radius, spec.m)):
        value, row = _upwinded_objective(spec, x, t, stencil, alpha, widths)
        better = value > best
        best = np.where(better, value, best)
        best_index = np.where(better, k, best_index)
        denominator = np.maximum(denominator, row)

    for node in np.flatnonzero(_on_control_edge(best_index, spec.m)):
        rows = stencil.repeat(node, CONTROL_POINTS ** spec.m)
        best[node], denominator[node] = _grown_sup(spec, x[node], t, rows, radius, widths)
    return best, denominator


def _on_control_edge(index: np.ndarray, dim: int) -> np.ndarray:
    idx = np.stack(np.unravel_index(index, (CONTROL_POINTS,) * dim), axis=1)
    return np.any((idx == 0) | (idx == CONTROL_POINTS - 1), axis=1)


def cfl_dt(spec: ProblemSpec, grid: Grid, current: GridFunction, cap: Optional[float] = None) -> float:
    """Largest dt keeping the explicit update nondecreasing in every node value (capped at T/100 by default)"""
    _check_dims(spec, grid, current)
    t = current.time
    x = grid.points()[grid.interior_mask()]
    stencil = _Stencil(grid, current.values)
    widths = np.asarray(grid.widths)
    s_diag = _diagonal(spec.s(x, t), "s")

    if spec.controlled:
        _, denominator = _controlled_terms(spec, grid, x, t, stencil)
    else:
        a = _diagonal(spec.a(x, t), "σσᵀ")
        b = spec.b(x, t)
        denominator = np.sum(2.0 * a / widths ** 2 + np.abs(b) / widths, axis=1)
    slope = _nonlinearity_slope(spec, x, t, stencil.center, s_diag, stencil.godunov())
    denominator = denominator + np.sum(slope / widths, axis=1) + spec.constants.c_hat
    peak = float(np.max(denominator)) if denominator.size else 0.0
    if not np.isfinite(peak):
        raise NonFiniteValue(f"CFL bound is undefined at t={t:.6g}: non-finite coefficients", time=t)
    cap = grid.dt_cap if cap is None else cap
    return cap if peak <= 0.0 else min(1.0 / peak, cap)


def step_explicit(spec: ProblemSpec, grid: Grid, u_n: GridFunction, dt: float,
                  boundary: Optional[BoundaryPair] = None, check_cfl: bool = True) -> GridFunction:
    """One explicit step from u_n.time to u_n.time + dt"""
    _check_dims(spec, grid, u_n)
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if check_cfl:
        bound = cfl_dt(spec, grid, u_n)
        if dt > bound * (1.0 + 1e-12):
            raise CflViolation(f"dt={dt:.6g} exceeds the monotonicity bound {bound:.6g}")

    t = u_n.time
    points = grid.points()
    interior = grid.interior_mask()
    x = points[interior]
    stencil = _Stencil(grid, u_n.values)
    s_diag = _diagonal(spec.s(x, t), "s")
    f_val = spec.f(x, t, stencil.center, s_diag * stencil.godunov())

    if spec.controlled:
        best, _ = _controlled_terms(spec, grid, x, t, stencil)
        rate = -best - f_val
    else:
        a = _diagonal(spec.a(x, t), "σσᵀ")
        b = spec.b(x, t)
        rate = np.sum(a * stencil.second, axis=1) - np.sum(b * stencil.upwind(b), axis=1) - f_val

    new_values = u_n.values.copy()
    new_values[interior] = stencil.center + dt * rate
    edge_values = (boundary or BoundaryPair.frozen()).values(points[~interior], t + dt)
    if edge_values is not None:
        new_values[~interior] = edge_values
    if not np.all(np.isfinite(new_values)):
        raise NonFiniteValue(f"non-finite value after step to t={t + dt:.6g}", time=t + dt)
    return GridFunction(grid, new_values, t + dt)


def solve(spec: ProblemSpec, grid: Grid, init: GridFunction, boundary: Optional[BoundaryPair] = None,
          safety: float = CFL_SAFETY, snapshot_times: Sequence[float] = (),
          max_steps: int = 2_000_000, dt_cap: Optional[float] = None) -> SolveOutcome:
    """March from init.time to T with dt = min(safety * cfl_dt, remaining time).

    dt_cap replaces the default T/100 ceiling on the step; convergence studies lift it so
    the step keeps shrinking with the mesh.
    """
    _check_dims(spec, grid, init)
    if not 0.0 < safety <= 1.0:
        raise ValueError("safety must lie in (0, 1]")
    threshold = BLOW_UP_FACTOR * (1.0 + float(np.max(np.abs(init.values))))
    current = init.copy()
    history = [(current.time, current.max_norm(interior=True))]
    pending = sorted(float(s) for s in snapshot_times)
    snapshots: List[GridFunction] = []
    if pending and pending[0] <= current.time:
        snapshots.append(current.copy())
        pending.pop(0)
    floor = 1e-12 * grid.horizon
    steps = 0

    def outcome(status: str, tau: Optional[float] = None) -> SolveOutcome:
        return SolveOutcome(current, status, tau, history, steps, threshold, snapshots)

    while current.time < grid.horizon - floor and steps < max_steps:
        try:
            dt = safety * cfl_dt(spec, grid, current, dt_cap)
        except NonFiniteValue as exc:
            logger.info("solution left every bounded set near t=%.6g: %s", current.time, exc)
            return outcome("blew_up", current.time)
        if dt < floor:
            logger.warning("time step collapsed to %.3g at t=%.6g", dt, current.time)
            return outcome("cfl_violation")
        dt = min(dt, grid.horizon - current.time)
        if pending:
            dt = min(dt, max(pending[0] - current.time, floor))
        try:
            current = step_explicit(spec, grid, current, dt, boundary, check_cfl=False)
        except (NonFiniteValue, BeyondBlowUp) as exc:
            logger.info("solution left every bounded set near t=%.6g: %s", current.time + dt, exc)
            return outcome("blew_up", current.time + dt)
        steps += 1
        norm = current.max_norm(interior=True)
        history.append((current.time, norm))
        logger.debug("step %d: t=%.6g dt=%.3g max|u|=%.6g", steps, current.time, dt, norm)
        while pending and current.time >= pending[0] - floor:
            snapshots.append(current.copy())
            pending.pop(0)
        if norm > threshold:
            return outcome("blew_up", current.time)
    if steps >= max_steps:
        logger.warning("solve stopped after %d steps at t=%.6g", steps, current.time)
    return outcome("completed")


def discrete_comparison_trial(spec: ProblemSpec, grid: Grid, u0: GridFunction, v0: GridFunction, steps: int,
                              boundary: Optional[BoundaryPair] = None,
                              safety: float = CFL_SAFETY) -> ComparisonReport:
    """Evolve two ordered initial data with one shared dt sequence and record max (u - v)+"""
    _check_dims(spec, grid, u0)
    _check_dims(spec, grid, v0)
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    if np.any(u0.values > v0.values):
        raise ValueError("initial data must satisfy u0 <= v0 nodewise")
    u, v = u0.copy(), v0.copy()
    violations: List[float] = []
    for _ in range(steps):
        dt = safety * min(cfl_dt(spec, grid, u), cfl_dt(spec, grid, v))
        u = step_explicit(spec, grid, u, dt, boundary, check_cfl=False)
        v = step_explicit(spec, grid, v, dt, boundary, check_cfl=False)
        violations.append(float(np.max(np.maximum(u.values - v.values, 0.0))))
    worst = max(violations) if violations else 0.0
    if worst > 0.0:
        logger.debug("comparison trial: max ordering violation %.3g", worst)
    return ComparisonReport(steps=steps, max_violation=worst, step_violations=violations, final_time=u.time)
