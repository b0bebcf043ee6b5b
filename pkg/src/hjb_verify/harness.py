#!/usr/bin/env python3
"""
Experiment driver: reads an ExperimentConfig, runs the selected suites in a fixed
order and persists reports, grid snapshots and summary.json under the output directory.
"""

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from rich.progress import Progress

from .barriers import (
    build_eps_subsolution,
    build_power_barriers,
    build_strict_supersolution,
    check_linearized_operator,
    eps_envelope,
    sample_space_time,
    viscosity_residual_check,
)
from .errors import ConfigInvalid, MissingArtifact, MissingEnvelopes
from .grid import Grid, GridFunction, csv_header, write_snapshots_csv
from .oracles import AuxiliaryParabolicSolution, auxiliary_phi, auxiliary_phi_fd, lp_value_residual, \
    manufactured_solution, riccati_solve
from .presets import PresetDescriptor, get_preset, riccati_for
from .problem import ProblemSpec, growth_witness, hamiltonian_eval, validate_assumptions
from .scheme import BoundaryPair, discrete_comparison_trial, solve
from .transforms import ChangeOfFunctions
from .utils import console, read_json, resolve_output_dir, write_json

logger = logging.getLogger(__name__)

SUITE_ORDER = ("validate", "barriers", "oracles", "solve", "comparison", "convergence")
PLOT_KINDS = ("profiles", "blowup", "envelopes", "convergence")
SUMMARY_NAME = "summary.json"

COMPARISON_TOLERANCE = 1e-10
CONFINEMENT_TOLERANCE = 1e-8
MIN_CONVERGENCE_RATIO = 1.7
BLOW_UP_TIME_TOLERANCE = 0.1
AGREEMENT_TOLERANCE = 1e-4
QUADRATURE_TOLERANCE = 1e-6
FD_ORACLE_TOLERANCE = 1e-3


@dataclass
class ExperimentConfig:
    preset: str
    params: Dict[str, float] = field(default_factory=dict)
    suites: Optional[List[str]] = None
    extent: float = 4.0
    nodes: int = 81
    samples: int = 200
    sample_radius: float = 10.0
    eps: List[float] = field(default_factory=lambda: [1.0, 0.1, 0.01])
    mu: List[float] = field(default_factory=lambda: [0.5, 0.9, 0.99])
    R: List[float] = field(default_factory=lambda: [1.0, 10.0, 100.0, 1000.0])
    trials: int = 20
    steps: int = 100
    levels: int = 3
    convergence_extent: float = 2.0
    convergence_nodes: int = 41
    convergence_horizon: float = 0.1
    ode_dt: float = 1e-3
    output_dir: Optional[str] = None
    seed: int = 0

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> "ExperimentConfig":
        if not isinstance(document, dict):
            raise ConfigInvalid("configuration must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(document) - known)
        if unknown:
            raise ConfigInvalid(f"unknown configuration keys: {', '.join(unknown)}")
        if "preset" not in document:
            raise ConfigInvalid("configuration needs a 'preset'")
        try:
            config = cls(**document)
        except TypeError as exc:
            raise ConfigInvalid(str(exc)) from exc
        config.validate()
        return config

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigInvalid(f"configuration file not found: {path}")
        try:
            document = read_json(path)
        except ValueError as exc:
            raise ConfigInvalid(f"{path} is not valid JSON: {exc}") from exc
        return cls.from_dict(document)

    def validate(self) -> None:
        descriptor = get_preset(self.preset)
        descriptor.resolve(self.params)
        if self.suites is not None:
            bad = [s for s in self.suites if s not in SUITE_ORDER]
            if bad:
                raise ConfigInvalid(f"unknown suites {bad}. Valid suites: {', '.join(SUITE_ORDER)}")
        checks = {
            "extent": self.extent > 0.0,
            "nodes": self.nodes >= 3,
            "samples": self.samples >= 1,
            "sample_radius": self.sample_radius > 0.0,
            "trials": self.trials >= 0,
            "steps": self.steps >= 0,
            "levels": self.levels >= 2,
            "convergence_extent": self.convergence_extent > 0.0,
            "convergence_nodes": self.convergence_nodes >= 3,
            "convergence_horizon": self.convergence_horizon > 0.0,
            "ode_dt": self.ode_dt > 0.0,
            "eps": all(e > 0.0 for e in self.eps),
            "mu": all(0.0 < m < 1.0 for m in self.mu),
            "R": all(r > 0.0 for r in self.R),
        }
        failed = [name for name, ok in checks.items() if not ok]
        if failed:
            raise ConfigInvalid(f"invalid values for: {', '.join(failed)}")

    def selected_suites(self) -> List[str]:
        chosen = SUITE_ORDER if self.suites is None else self.suites
        return [s for s in SUITE_ORDER if s in chosen]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


class SuiteResult:
    """Result object for one suite"""

    def __init__(self, success: bool, data: Any = None, message: str = "", error: str = "", skipped: bool = False):
        self.success = success
        self.data = data
        self.message = message
        self.error = error
        self.skipped = skipped

    @property
    def status(self) -> str:
        if self.skipped:
            return "skipped"
        return "passed" if self.success else "failed"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "status": self.status,
            "success": self.success,
            "message": self.message,
            "error": self.error,
            "data": self.data,
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "SuiteResult":
        return cls(payload.get("success", False), payload.get("data"), payload.get("message", ""),
                   payload.get("error", ""), payload.get("status") == "skipped")


@dataclass
class RunRecord:
    config: Dict[str, Any]
    output_dir: Path
    suites: Dict[str, SuiteResult] = field(default_factory=dict)
    artifacts: Dict[str, str] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.success or r.skipped for r in self.suites.values())

    @property
    def complete(self) -> bool:
        return not any(r.error for r in self.suites.values())

    def artifact_path(self, key: str) -> Path:
        if key not in self.artifacts:
            raise MissingArtifact(f"run has no '{key}' artifact")
        path = self.output_dir / self.artifacts[key]
        if not path.exists():
            raise MissingArtifact(f"artifact '{key}' is missing on disk: {path}")
        return path

    def to_dict(self) -> Dict[str, Any]:
        """Everything but wall-clock times, which live under their own key in the summary"""
        return {
            "config": self.config,
            "passed": self.passed,
            "complete": self.complete,
            "suites": {name: result.to_dict() for name, result in self.suites.items()},
            "artifacts": dict(sorted(self.artifacts.items())),
        }

    def save(self) -> Path:
        payload = self.to_dict()
        payload["timings"] = dict(self.timings)
        return write_json(self.output_dir / SUMMARY_NAME, payload)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RunRecord":
        path = Path(path)
        if path.is_dir():
            path = path / SUMMARY_NAME
        if not path.exists():
            raise MissingArtifact(f"no run summary at {path}")
        payload = read_json(path)
        return cls(
            config=payload.get("config", {}),
            output_dir=path.parent,
            suites={k: SuiteResult.from_dict(v) for k, v in payload.get("suites", {}).items()},
            artifacts=payload.get("artifacts", {}),
            timings=payload.get("timings", {}),
        )


@dataclass
class _RunContext:
    config: ExperimentConfig
    descriptor: PresetDescriptor
    params: Dict[str, float]
    spec: ProblemSpec
    output_dir: Path
    artifacts: Dict[str, str]
    barriers: Dict[str, Any] = field(default_factory=dict)

    def grid(self) -> Grid:
        return Grid.uniform(self.spec.space_dim, self.config.extent, self.config.nodes, self.spec.horizon)

    def rng(self, offset: int) -> np.random.Generator:
        return np.random.default_rng(self.config.seed + offset)

    def register(self, key: str, path: Path) -> Path:
        self.artifacts[key] = str(path.relative_to(self.output_dir))
        return path


# ---------------------------------------------------------------- suites

def _suite_validate(ctx: _RunContext) -> SuiteResult:
    spec, config = ctx.spec, ctx.config
    report = validate_assumptions(spec, config.samples, config.sample_radius, seed=config.seed)
    data: Dict[str, Any] = {"assumptions": report.to_dict()}

    witness = growth_witness([ctx.grid().sample(spec.psi)], spec.p, mode="bounded")
    data["initial_growth"] = witness.to_dict()

    success = report.passed
    if ctx.descriptor.infinity_path:
        dichotomy = _infinity_dichotomy(spec, ctx.rng(11), config.samples)
        data["infinity_dichotomy"] = dichotomy
        success = success and dichotomy["misclassified"] == 0
    message = "assumptions hold at all samples" if success else "assumption violations found"
    return SuiteResult(success, data, message)


def _infinity_dichotomy(spec: ProblemSpec, rng: np.random.Generator, count: int) -> Dict[str, Any]:
    """With q = 0, H is finite iff Tr X is above -c/κ for a quadratic-cost power form"""
    form = spec.power_form
    if form is None or form.cost_power != 2.0 or form.diffusion_gain <= 0.0:
        return {"applicable": False, "misclassified": 0}
    threshold = -form.cost_weight / form.diffusion_gain
    above = threshold + 0.1 + 10.0 * rng.random(count)
    below = threshold - 0.05 * abs(threshold) - 10.0 * rng.random(count)
    n = spec.space_dim
    x, q = np.zeros(n), np.zeros(n)
    wrong = 0
    for trace in above:
        wrong += not hamiltonian_eval(spec, x, 0.0, q, (trace / n) * np.eye(n)).is_finite
    for trace in below:
        wrong += hamiltonian_eval(spec, x, 0.0, q, (trace / n) * np.eye(n)).is_finite
    return {"applicable": True, "threshold": threshold, "samples": 2 * count, "misclassified": int(wrong)}


def _suite_barriers(ctx: _RunContext) -> SuiteResult:
    spec, config = ctx.spec, ctx.config
    common = {"sample_count": config.samples, "sample_radius": config.sample_radius, "seed": config.seed}
    data: Dict[str, Any] = {}
    failures: List[str] = []

    sub, sup = build_power_barriers(spec, config.sample_radius, seed=config.seed)
    ctx.barriers.update(sub=sub, sup=sup)
    data["power"] = {"sub": sub.to_dict(), "super": sup.to_dict()}
    for role, family in (("super", sup), ("sub", sub)):
        if not family.feasible:
            continue
        report = viscosity_residual_check(family, spec, role, **common)
        data["power"][f"{role}_check"] = report.to_dict()
        if not report.passed:
            failures.append(f"power {role}solution")

    eps_families = []
    data["eps"] = []
    for eps in config.eps:
        try:
            family = build_eps_subsolution(spec, eps, config.sample_radius, seed=config.seed)
        except MissingEnvelopes as exc:
            data["eps"].append({"eps": eps, "skipped": str(exc)})
            continue
        entry = family.to_dict()
        if family.feasible:
            report = viscosity_residual_check(family, spec, "sub", **common)
            entry["check"] = report.to_dict()
            if not report.passed:
                failures.append(f"eps={eps:g} subsolution")
            eps_families.append(family)
        data["eps"].append(entry)
    if eps_families and sub.feasible:
        envelope = eps_envelope(eps_families)
        x, t = sample_space_time(spec, config.samples, config.sample_radius, envelope.valid_until, config.seed)
        values = np.array([envelope.value(x[i], t[i])[0] for i in range(x.shape[0])])
        gap = values - np.array([sub.value(x[i], t[i])[0] for i in range(x.shape[0])])
        data["eps_envelope"] = {"families": len(eps_families), "valid_until": envelope.valid_until,
                                "min_gap_to_power_sub": float(np.min(gap))}

    if not spec.controlled:
        cf = ChangeOfFunctions.for_problem(spec, sup.params["C_psi"])
        data["strict"] = []
        for mu in config.mu:
            for R in config.R:
                phi = build_strict_supersolution(cf, spec, R, mu)
                entry = phi.to_dict()
                if phi.feasible:
                    report = check_linearized_operator(phi, None, spec, mu, sample_count=config.samples,
                                                       sample_radius=config.sample_radius, seed=config.seed)
                    entry["check"] = report.to_dict()
                    if not report.passed:
                        failures.append(f"strict supersolution mu={mu:g} R={R:g}")
                data["strict"].append(entry)

    if failures:
        return SuiteResult(False, data, "certificate failures: " + "; ".join(failures))
    return SuiteResult(True, data, "all feasible certificates hold")


def _suite_oracles(ctx: _RunContext) -> SuiteResult:
    if ctx.descriptor.blow_up:
        return _riccati_oracle(ctx)
    return _auxiliary_oracle(ctx)


def _riccati_oracle(ctx: _RunContext) -> SuiteResult:
    prob = riccati_for(ctx.params)
    report = riccati_solve(prob, ctx.config.ode_dt)
    data: Dict[str, Any] = {"riccati": report.to_dict()}
    path = report.write_trajectory_csv(ctx.output_dir / "blowup" / "trajectory.csv")
    ctx.register("trajectory", path)

    expected = report.tau_quadrature
    if expected is None:
        success = not report.blew_up
        message = "no blow-up on [0, T], as the integral predicts" if success else "unexpected blow-up"
    else:
        success = report.blew_up and abs(report.tau - expected) <= AGREEMENT_TOLERANCE
        message = f"tau={report.tau} vs quadrature {expected:.6g}"

    # residual of the |x|^p ansatz halfway between the blow-up time and T
    start = max(expected or 0.0, 0.0)
    t_mid = 0.5 * (start + prob.horizon)
    xs = np.linspace(-2.0, 2.0, 9)
    residual = np.asarray(lp_value_residual(prob, xs, t_mid, dt=ctx.config.ode_dt))
    scale = 1.0 + np.max(np.abs(xs)) ** prob.p * abs(prob.quadrature_phi(t_mid))
    data["ansatz_residual"] = {"t": t_mid, "max": float(np.max(residual)), "scale": scale}
    if float(np.max(residual)) > 1e-6 * scale:
        success = False
        message += "; ansatz residual too large"
    return SuiteResult(success, data, message)


def _auxiliary_oracle(ctx: _RunContext) -> SuiteResult:
    T = ctx.spec.horizon
    times = sorted({0.1, 0.5, T})
    failures: List[str] = []
    per_R = []
    near = np.linspace(0.0, 10.0, 200)
    small_time = min(0.5, T)
    previous = None
    for R in sorted(ctx.config.R):
        aux = AuxiliaryParabolicSolution(R)
        r = np.linspace(0.0, 3.0 * R, 200)
        entry: Dict[str, Any] = {"R": R}
        for t in times:
            value, dr = aux.value(r, t), aux.dr(r, t)
            quad, _ = auxiliary_phi(R, r, t)
            entry[f"t={t:g}"] = {
                "ramp_gap": float(np.min(value - np.maximum(0.0, r - R))),
                "dr_min": float(np.min(dr)),
                "dr_max": float(np.max(dr)),
                "second_difference_min": float(np.min(np.diff(value, 2))),
                "quadrature_gap": float(np.max(np.abs(quad - value) / (1.0 + np.abs(value)))),
            }
            stats = entry[f"t={t:g}"]
            if stats["ramp_gap"] < -1e-8:
                failures.append(f"ramp bound R={R:g} t={t:g}")
            if stats["dr_min"] < -1e-8 or stats["dr_max"] > math.exp(T) + 1e-8:
                failures.append(f"derivative bound R={R:g} t={t:g}")
            if stats["second_difference_min"] < -1e-8:
                failures.append(f"convexity R={R:g} t={t:g}")
            if stats["quadrature_gap"] > QUADRATURE_TOLERANCE:
                failures.append(f"quadrature vs closed form R={R:g} t={t:g}")
        current = np.stack([aux.value(near, t) for t in times])
        if previous is not None and np.any(current > previous + 1e-12):
            failures.append(f"not decreasing in R at R={R:g}")
        previous = current
        entry["max_near_origin"] = float(np.max(aux.value(near, small_time)))
        per_R.append(entry)
    data: Dict[str, Any] = {"auxiliary": per_R, "small_time": small_time}
    # φ_1000 is O(0.3) on r <= 10 by t = 1, so smallness is asserted at t <= 0.5 only
    far = [e for e in per_R if e["R"] == 1000.0]
    if far and far[0]["max_near_origin"] >= 0.01:
        failures.append("phi_1000 is not small on r <= 10")

    fd_value, _ = auxiliary_phi_fd(1.0, np.array([1.0]), 0.5)
    closed = float(AuxiliaryParabolicSolution(1.0).value(1.0, 0.5))
    data["fd_cross_check"] = {"fd": float(fd_value[0]), "closed_form": closed}
    if abs(float(fd_value[0]) - closed) > FD_ORACLE_TOLERANCE:
        failures.append("finite-difference cross-oracle")
    if failures:
        return SuiteResult(False, data, "; ".join(failures))
    return SuiteResult(True, data, "auxiliary solution properties hold")


def _blow_up_boundary(ctx: _RunContext) -> BoundaryPair:
    """Exact data φ(T - s)|x|^p of the forward first-order problem"""
    prob = riccati_for(ctx.params)

    def exact(x: np.ndarray, s: float) -> np.ndarray:
        phi = prob.quadrature_phi(max(prob.horizon - s, 0.0))
        return phi * np.linalg.norm(x, axis=1) ** prob.p

    return BoundaryPair.exact(exact)


def _suite_solve(ctx: _RunContext) -> SuiteResult:
    spec = ctx.spec
    grid = ctx.grid()
    init = grid.sample(spec.psi)
    T = spec.horizon
    snapshot_times = [0.25 * T, 0.5 * T, 0.75 * T, T]

    if ctx.descriptor.blow_up:
        outcome = solve(spec, grid, init, _blow_up_boundary(ctx), snapshot_times=snapshot_times)
        tau = riccati_for(ctx.params).quadrature_tau()
        data: Dict[str, Any] = {"outcome": outcome.to_dict()}
        if outcome.snapshots:
            ctx.register("snapshots", write_snapshots_csv(ctx.output_dir / "solve" / "snapshots.csv",
                                                          outcome.snapshots))
        if tau is None:
            return SuiteResult(outcome.status == "completed", data, f"status {outcome.status}")
        expected = T - tau
        data["expected_blow_up"] = expected
        ok = outcome.blew_up and abs(outcome.tau_num - expected) <= BLOW_UP_TIME_TOLERANCE * expected
        return SuiteResult(ok, data, f"numerical blow-up at {outcome.tau_num} vs {expected:.6g}")

    sub, sup = ctx.barriers.get("sub"), ctx.barriers.get("sup")
    if sup is None:
        sub, sup = build_power_barriers(spec, ctx.config.sample_radius, seed=ctx.config.seed)
    boundary = BoundaryPair.frozen() if spec.controlled else BoundaryPair.from_barriers(sub, sup)
    outcome = solve(spec, grid, init, boundary, snapshot_times=snapshot_times)
    data = {"outcome": outcome.to_dict()}
    frames = [init] + outcome.snapshots
    ctx.register("snapshots", write_snapshots_csv(ctx.output_dir / "solve" / "snapshots.csv", frames))
    path, worst = _write_envelopes(ctx.output_dir / "solve" / "envelopes.csv", frames, sub, sup)
    ctx.register("envelopes", path)
    data["confinement_violation"] = worst

    success = outcome.status == "completed" and worst <= CONFINEMENT_TOLERANCE
    return SuiteResult(success, data, f"status {outcome.status}, confinement violation {worst:.3g}")


def _write_envelopes(path: Path, frames: Sequence[GridFunction], sub: Any, sup: Any) -> Tuple[Path, float]:
    """Rows x.., t, u_num, barrier_sub, barrier_super for frames inside the barriers' validity window"""
    path.parent.mkdir(parents=True, exist_ok=True)
    worst = 0.0
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(csv_header(frames[0].grid.space_dim, ("t", "u_num", "barrier_sub", "barrier_super")))
        for frame in frames:
            points = frame.grid.points()
            upper = sup.value(points, frame.time)
            lower_ok = sub.feasible and frame.time <= sub.valid_until
            lower = sub.value(points, frame.time) if lower_ok else np.full(points.shape[0], -np.inf)
            scale = CONFINEMENT_TOLERANCE * (1.0 + np.abs(frame.values))
            if frame.time <= sup.valid_until:
                worst = max(worst, float(np.max(frame.values - upper - scale)))
            worst = max(worst, float(np.max(lower - frame.values - scale)))
            for i in range(points.shape[0]):
                writer.writerow(list(points[i]) + [frame.time, frame.values[i], lower[i], upper[i]])
    return path, max(worst, 0.0)


def _suite_comparison(ctx: _RunContext) -> SuiteResult:
    spec, config = ctx.spec, ctx.config
    grid = ctx.grid()
    base = grid.sample(spec.psi).values
    rng = ctx.rng(31)
    worst = 0.0
    trials = []
    for _ in range(config.trials):
        u0 = base + rng.standard_normal(grid.size)
        v0 = u0 + np.abs(rng.standard_normal(grid.size))
        report = discrete_comparison_trial(spec, grid, GridFunction(grid, u0), GridFunction(grid, v0), config.steps)
        worst = max(worst, report.max_violation)
        trials.append(report.max_violation)
    data = {"trials": config.trials, "steps": config.steps, "max_violation": worst,
            "violations": trials}
    return SuiteResult(worst <= COMPARISON_TOLERANCE, data, f"max ordering violation {worst:.3g}")


def _suite_convergence(ctx: _RunContext) -> SuiteResult:
    config = ctx.config
    spec = ctx.spec
    exact = manufactured_solution("separated_sine", spec)
    forced = exact.forced_spec()
    horizon = min(config.convergence_horizon, spec.horizon)
    grid = Grid.uniform(spec.space_dim, config.convergence_extent, config.convergence_nodes, horizon)
    boundary = BoundaryPair.exact(exact.value)
    levels = []
    for _ in range(config.levels):
        outcome = solve(forced, grid, grid.sample(exact.initial), boundary, dt_cap=math.inf)
        interior = grid.interior_mask()
        error = float(np.max(np.abs(outcome.final.values - exact.value(grid.points(), outcome.final.time))[interior]))
        levels.append({"h": grid.widths[0], "nodes": grid.nodes[0], "error": error, "status": outcome.status})
        grid = grid.refine()
    for coarse, fine in zip(levels, levels[1:]):
        fine["order"] = math.log2(coarse["error"] / fine["error"]) if fine["error"] > 0.0 else math.inf
    ratios = [c["error"] / f["error"] if f["error"] > 0.0 else math.inf for c, f in zip(levels, levels[1:])]
    success = all(r >= MIN_CONVERGENCE_RATIO for r in ratios) and all(l["status"] == "completed" for l in levels)
    return SuiteResult(success, {"levels": levels, "ratios": ratios},
                       "error ratios " + ", ".join(f"{r:.3g}" for r in ratios))


_SUITES: Dict[str, Callable[[_RunContext], SuiteResult]] = {
    "validate": _suite_validate,
    "barriers": _suite_barriers,
    "oracles": _suite_oracles,
    "solve": _suite_solve,
    "comparison": _suite_comparison,
    "convergence": _suite_convergence,
}


def run_experiment(config: ExperimentConfig, show_progress: bool = False) -> RunRecord:
    """Run the selected suites in fixed order; a failing suite never stops the later ones"""
    config.validate()
    descriptor = get_preset(config.preset)
    params = descriptor.resolve(config.params)
    spec = descriptor.build(config.params)
    output_dir = resolve_output_dir(config.output_dir)
    record = RunRecord(config=config.to_dict(), output_dir=output_dir)
    ctx = _RunContext(config, descriptor, params, spec, output_dir, record.artifacts)
    selected = config.selected_suites()

    def run_one(name: str) -> None:
        if not descriptor.applies(name):
            record.suites[name] = SuiteResult(True, None, f"not applicable to {descriptor.name}", skipped=True)
            return
        logger.info("suite %s: start", name)
        started = time.perf_counter()
        try:
            result = _SUITES[name](ctx)
        except Exception as exc:
            logger.error("suite %s raised %s: %s", name, type(exc).__name__, exc)
            result = SuiteResult(False, None, "suite raised", f"{type(exc).__name__}: {exc}")
        record.timings[name] = time.perf_counter() - started
        record.suites[name] = result
        logger.info("suite %s: %s (%.2fs)", name, result.status, record.timings[name])

    if show_progress and selected:
        with Progress(console=console, transient=True) as progress:
            task = progress.add_task(f"[cyan]{descriptor.name}", total=len(selected))
            for name in selected:
                progress.update(task, description=f"[cyan]{descriptor.name}: {name}")
                run_one(name)
                progress.advance(task)
    else:
        for name in selected:
            run_one(name)

    record.save()
    return record


# ---------------------------------------------------------------- plot exports

def _copy_rows(source: Path, target: Path, transform: Callable[[List[str], List[str]], List[str]]) -> Path:
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(source, newline="") as src, open(target, "w", newline="") as dst:
        reader = csv.reader(src)
        writer = csv.writer(dst)
        header = next(reader)
        writer.writerow(transform(header, header))
        for row in reader:
            writer.writerow(transform(header, row))
    return target


def emit_plot_data(record: RunRecord, what: str) -> List[Path]:
    """Long-format CSV series for plotting, written under <output_dir>/plots"""
    if what not in PLOT_KINDS:
        raise ValueError(f"what must be one of {', '.join(PLOT_KINDS)}, got {what!r}")
    plots = record.output_dir / "plots"

    if what == "profiles":
        source = record.artifact_path("snapshots")
        return [_copy_rows(source, plots / "profiles.csv", lambda header, row: row)]

    if what == "blowup":
        source = record.artifact_path("trajectory")
        suite = record.suites.get("oracles")
        riccati = (suite.data or {}).get("riccati") if suite else None
        if not riccati:
            raise MissingArtifact("run has no blow-up report")
        csv_path = _copy_rows(source, plots / "blowup.csv", lambda header, row: row)
        sidecar = write_json(plots / "blowup.json",
                             {"tau": riccati.get("tau"), "tau_quadrature": riccati.get("tau_quadrature")})
        return [csv_path, sidecar]

    if what == "envelopes":
        source = record.artifact_path("envelopes")

        def inside(header: List[str], row: List[str]) -> List[str]:
            if row is header:
                return row + ["inside"]
            values = dict(zip(header, row))
            u, lo, hi = (float(values[k]) for k in ("u_num", "barrier_sub", "barrier_super"))
            return row + [str(int(lo <= u <= hi))]

        return [_copy_rows(source, plots / "envelopes.csv", inside)]

    suite = record.suites.get("convergence")
    levels = (suite.data or {}).get("levels") if suite else None
    if not levels:
        raise MissingArtifact("run has no convergence study")
    target = plots / "convergence.csv"
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["h", "error", "order"])
        for level in levels:
            writer.writerow([level["h"], level["error"], level.get("order", "")])
    return [target]
