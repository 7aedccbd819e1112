"""Drivers behind the CLI subcommands: solve, study, verify, oracle-compare."""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import replace
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd

from .records import RunRecord, results_frame
from ..config.models import MlpConfig, PicardConfig, RuntimeConfig, StudySweep
from ..config.problem_file import problem_hash, problem_to_dict
from ..core.estimate import Estimate
from ..core.mlp import mlp_estimate
from ..core.oracle import FdGrid, FdSolution, interior_half, solve_with_cfl
from ..core.picard import picard_solve
from ..core.problem import ProblemSpec
from ..core.rng import RngStream, Tag
from ..core.sde import PathPlan, paths_frame, resolve_scheme, simulate_paths
from ..system.environment import environment_note
from ..system.parallel import BatchRunner
from ..utils.console import console
from ..utils.exceptions import AdmissibilityFailure, ConfigurationError
from ..utils.logging import get_logger
from ..verification.admissibility import (
    check_growth_ratio,
    check_heat_type,
    check_radial_growth,
    check_supersolution,
    heat_type_constant,
    lipschitz_probe,
    local_lipschitz_probe,
    random_lipschitz_sample,
)
from ..verification.comparison import fd_compare
from ..verification.dynamics import coercivity_check
from ..verification.sampling import ball_points, lattice_points

logger = get_logger("app.runner")

SolverConfig = Union[PicardConfig, MlpConfig]

VERIFY_RADIUS = 10.0
GROWTH_RADII = (1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0)
SHELL_SAMPLES = 64
PROBE_SAMPLES = 512


def method_of(config: SolverConfig) -> str:
    return "picard" if isinstance(config, PicardConfig) else "mlp"


def _runner(runtime: RuntimeConfig) -> BatchRunner:
    return BatchRunner(threads=runtime.threads)


def estimate_at(problem: ProblemSpec, config: SolverConfig, t: float, x: np.ndarray,
                rng: RngStream, runner: BatchRunner) -> tuple:
    """
    Run one estimator at one query point.

    Returns:
        (Estimate, per-iteration Estimates or None, wall time in ms)
    """
    start = time.perf_counter()
    if isinstance(config, PicardConfig):
        estimate, iterates = picard_solve(problem, config, (t, x), rng, runner)
    else:
        estimate, iterates = mlp_estimate(problem, config, t, x, rng, runner), None
    return estimate, iterates, (time.perf_counter() - start) * 1000.0


def _result_row(problem: ProblemSpec, config: SolverConfig, t: float, x: np.ndarray,
                estimate: Estimate, iterates: Optional[list], wall_ms: float) -> dict:
    row = {
        "problem_id": problem.id,
        "method": method_of(config),
        "config": config.to_dict(),
        "t": float(t),
        "x": np.asarray(x, dtype=float).tolist(),
        "value": estimate.value,
        "std_error": estimate.std_error,
        "samples": estimate.samples,
        "work": estimate.work,
        "wall_time_ms": wall_ms,
    }
    if iterates is not None:
        row["iterates"] = [e.value for e in iterates]
    return row


def _persist(record: RunRecord, runtime: RuntimeConfig, frames: Optional[dict] = None):
    """Save the record; csv output adds a flat results table."""
    frames = dict(frames or {})
    if runtime.output_format == "csv" and record.results and "results" not in frames:
        frames["results"] = results_frame(record)
    return record.save(runtime.out_dir, frames)


def _gate(problem: ProblemSpec, runtime: RuntimeConfig, force: bool) -> Optional[dict]:
    if not problem.admissibility_profile:
        return None
    report = run_verify(problem, RngStream(runtime.seed))
    if report["failed"]:
        if not force:
            raise AdmissibilityFailure(report["failed"], report)
        logger.warning(f"Admissibility checks failed but --force given: {', '.join(report['failed'])}")
        console.print_warning(f"Forced run despite failed checks: {', '.join(report['failed'])}")
    return report


def run_solve(problem: ProblemSpec, config: SolverConfig, probes: Sequence[tuple],
              runtime: RuntimeConfig, force: bool = False, save: bool = True) -> RunRecord:
    """
    Estimate v at each probe; probe i draws from the stream (PROBE, i).

    Raises:
        AdmissibilityFailure: If a check in the problem's profile fails and
            force is not set
    """
    if not probes:
        raise ConfigurationError("at least one probe is required")
    gate = _gate(problem, runtime, force)
    rng = RngStream(runtime.seed)
    runner = _runner(runtime)

    logger.info(f"Solving '{problem.id}' with {method_of(config)} at {len(probes)} probe(s)")
    results = []
    for index, (t, x) in enumerate(probes):
        estimate, iterates, wall_ms = estimate_at(problem, config, t, x, rng.child(Tag.PROBE, index), runner)
        results.append(_result_row(problem, config, t, x, estimate, iterates, wall_ms))

    record = RunRecord(
        command="solve",
        problem_id=problem.id,
        problem_hash=problem_hash(problem),
        config={"solver": config.to_dict(), "seed": runtime.seed, "problem": problem_to_dict(problem)},
        results=results,
        environment=environment_note(runtime.threads),
        forced=bool(force and gate is not None and gate["failed"]),
    )
    console.print_table(
        f"{problem.id}: {method_of(config)}",
        ["probe", "t", "x", "value", "SE", "work", "ms"],
        [(i, r["t"], r["x"], r["value"], r["std_error"], r["work"], r["wall_time_ms"])
         for i, r in enumerate(results)],
    )
    if save:
        _persist(record, runtime)
    return record


def _sweep_configs(base: SolverConfig, sweep: StudySweep) -> list:
    depth_field = "iterations" if isinstance(base, PicardConfig) else "levels"
    samples = sweep.samples or (base.samples,)
    depths = sweep.depths or (getattr(base, depth_field),)
    steps = sweep.sde_steps or (base.sde_steps,)
    configs = []
    for m, depth, s in itertools.product(samples, depths, steps):
        changes = {"samples": m, depth_field: depth, "sde_steps": s}
        if isinstance(base, PicardConfig) and base.inner_samples == base.samples:
            changes["inner_samples"] = m
        configs.append(replace(base, **changes))
    return configs


def run_study(problem: ProblemSpec, base: SolverConfig, sweep: StudySweep, probes: Sequence[tuple],
              runtime: RuntimeConfig, fd_solution: Optional[FdSolution] = None,
              save: bool = True) -> tuple:
    """
    Error-versus-work table over the sweep.

    Errors are measured against the reference solution, or against the
    finite-difference table when one is given.

    Returns:
        (RunRecord, DataFrame with the study CSV columns)
    """
    if not probes:
        raise ConfigurationError("at least one probe is required")
    if problem.reference is None and fd_solution is None:
        raise ConfigurationError(f"problem '{problem.id}' has neither a reference solution nor an oracle")

    rng = RngStream(runtime.seed)
    runner = _runner(runtime)
    rows = []
    for config in _sweep_configs(base, sweep):
        depth = config.iterations if isinstance(config, PicardConfig) else config.levels
        console.print_step(f"M={config.samples}, depth={depth}, steps={config.sde_steps}")
        for index, (t, x) in enumerate(probes):
            x = np.asarray(x, dtype=float)
            estimate, _, wall_ms = estimate_at(problem, config, t, x, rng.child(Tag.PROBE, index), runner)
            if fd_solution is not None:
                truth = fd_solution.interpolate(float(t), float(x[0]))
            else:
                truth = float(problem.reference_values(np.array([t]), x.reshape(1, -1))[0])
            rows.append({
                "method": method_of(config),
                "M": config.samples,
                "K_or_n": depth,
                "sde_steps": config.sde_steps,
                "probe_t": float(t),
                "probe_x_repr": " ".join(f"{v:g}" for v in x),
                "value": estimate.value,
                "std_error": estimate.std_error,
                "abs_error_vs_reference": abs(estimate.value - truth),
                "work": estimate.work,
                "wall_ms": wall_ms,
            })
        logger.info(f"Study point M={config.samples}, depth={depth}, steps={config.sde_steps} done")

    frame = pd.DataFrame(rows)
    record = RunRecord(
        command="study",
        problem_id=problem.id,
        problem_hash=problem_hash(problem),
        config={"base": base.to_dict(), "sweep": {"M": list(sweep.samples), "K_or_n": list(sweep.depths),
                                                  "sde_steps": list(sweep.sde_steps)},
                "seed": runtime.seed},
        results=frame.to_dict(orient="records"),
        environment=environment_note(runtime.threads),
    )
    if save:
        _persist(record, runtime, {"study": frame})
    return record, frame


def fit_standard_error_slope(frame: pd.DataFrame) -> float:
    """Least-squares slope of log(std_error) against log(M)."""
    usable = frame[frame["std_error"].notna() & (frame["std_error"] > 0)]
    if usable["M"].nunique() < 2:
        raise ValueError("need at least two distinct M values with positive standard errors")
    slope, _ = np.polyfit(np.log(usable["M"].astype(float)), np.log(usable["std_error"].astype(float)), 1)
    return float(slope)


def verification_points(problem: ProblemSpec, rng: RngStream, radius: float = VERIFY_RADIUS):
    times = (0.0, 0.5 * problem.T, problem.T)
    if problem.d == 1:
        return lattice_points(1, radius, 81, times)
    if problem.d == 2:
        return lattice_points(2, radius, 21, times)
    return ball_points(problem.d, radius, PROBE_SAMPLES, rng.child(Tag.START), times)


def run_verify(problem: ProblemSpec, rng: RngStream, radius: float = VERIFY_RADIUS) -> dict:
    """
    Every admissibility check with its witness.

    Returns:
        {"problem_id", "checks": {name: report}, "failed": profile checks that
        failed, "pass": no failures}; without a profile every applicable check
        counts
    """
    c, spec = problem.c, problem.lyapunov
    grid = verification_points(problem, rng, radius)
    checks = {}

    checks["coercivity"] = coercivity_check(c, c.lipschitz_L, grid).to_dict()

    sample = random_lipschitz_sample(problem.d, PROBE_SAMPLES, rng.child(Tag.PROBE, 0), radius,
                                     horizon=problem.T)
    f_report = lipschitz_probe(problem.f, problem.L, sample).to_dict()
    coefficient_report = local_lipschitz_probe(c, radius, PROBE_SAMPLES, rng.child(Tag.PROBE, 1),
                                               problem.T).to_dict()
    checks["lipschitz"] = {"f": f_report, "coefficients": coefficient_report,
                           "pass": f_report["pass"] and coefficient_report["pass"]}

    checks["supersolution"] = check_supersolution(spec, c, grid).to_dict()
    checks["growth_ratio"] = check_growth_ratio(problem.f_at_zero, problem.g, spec, GROWTH_RADII,
                                                SHELL_SAMPLES, rng.child(Tag.SHELL), problem.T).to_dict()
    checks["radial_growth"] = check_radial_growth(spec, GROWTH_RADII, SHELL_SAMPLES,
                                                  rng.child(Tag.SHELL, 1), problem.d).to_dict()

    if problem.growth.is_gaussian:
        if c.has_constant_diffusion:
            constant = heat_type_constant(c.constant_diffusion())
            checks["heat_type"] = check_heat_type(problem.growth.param, constant, problem.T).to_dict()
        else:
            checks["heat_type"] = {"pass": False, "reason": "heat-type rule needs constant diffusion"}
    else:
        checks["heat_type"] = {"pass": None, "reason": "not a gaussian growth problem"}

    names = problem.admissibility_profile or [n for n, r in checks.items() if r["pass"] is not None]
    failed = [name for name in names if not checks[name]["pass"]]
    if "heat_type" in failed and "max_admissible_horizon" in checks["heat_type"]:
        logger.error(f"Horizon {problem.T} violates c < 1/(2aT); "
                     f"maximal admissible horizon is {checks['heat_type']['max_admissible_horizon']:.6g}")
    return {"problem_id": problem.id, "checks": checks, "failed": failed, "pass": not failed}


def report_verify(report: dict) -> None:
    console.print_header(f"Admissibility: {report['problem_id']}")
    for name, result in report["checks"].items():
        if result["pass"] is None:
            console.print_info(f"{name}: skipped ({result.get('reason', '')})")
            continue
        detail = ""
        if "max_violation" in result:
            detail = f"max violation {result['max_violation']:.3e}"
        elif "sups" in result:
            detail = f"last shell sup {result['sups'][-1]:.3e}"
        elif "max_admissible_horizon" in result:
            detail = f"max admissible T {result['max_admissible_horizon']:.6g}"
        console.print_check(name, bool(result["pass"]), detail)


def run_verify_record(problem: ProblemSpec, runtime: RuntimeConfig, save: bool = True) -> tuple:
    report = run_verify(problem, RngStream(runtime.seed))
    report_verify(report)
    record = RunRecord(
        command="verify",
        problem_id=problem.id,
        problem_hash=problem_hash(problem),
        config={"seed": runtime.seed, "radius": VERIFY_RADIUS, "problem": problem_to_dict(problem)},
        results=[report],
        environment=environment_note(runtime.threads),
    )
    if save:
        _persist(record, runtime)
    return record, report


def run_oracle_compare(problem: ProblemSpec, grid: FdGrid, config: SolverConfig, probes: Sequence[tuple],
                       runtime: RuntimeConfig, fd_tol: float = 2e-2, nt: Optional[int] = None,
                       save: bool = True) -> tuple:
    """
    Finite differences against Monte Carlo at the probes. Probes outside the
    interior half of the grid are reported, not rejected.

    Raises:
        ConfigurationError: If the problem is not one-dimensional
    """
    if problem.d != 1:
        raise ConfigurationError(f"oracle comparison needs d = 1, problem '{problem.id}' has d = {problem.d}")
    if not probes:
        raise ConfigurationError("at least one probe is required")
    low, high = interior_half(grid)
    outside = [index for index, (_, x) in enumerate(probes)
               if not low <= float(np.atleast_1d(x)[0]) <= high]
    if outside:
        message = f"probes {outside} lie outside the interior half [{low:.4g}, {high:.4g}] of the grid"
        logger.warning(message)
        console.print_warning(message)

    with console.status("Marching the finite-difference scheme"):
        solution = solve_with_cfl(problem, grid, nt)
    rng = RngStream(runtime.seed)
    runner = _runner(runtime)
    estimates = []
    results = []
    for index, (t, x) in enumerate(probes):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        estimate, iterates, wall_ms = estimate_at(problem, config, t, x, rng.child(Tag.PROBE, index), runner)
        estimates.append((t, x, estimate))
        results.append(_result_row(problem, config, t, x, estimate, iterates, wall_ms))
    comparison = fd_compare(solution, estimates, fd_tol)

    console.print_table(
        f"{problem.id}: finite differences vs {method_of(config)}",
        ["t", "x", "FD", "MC", "SE", "|diff|", "pass"],
        [(r["t"], r["x"], r["fd"], r["mc"], r["std_error"], r["abs_diff"], r["pass"]) for r in comparison.rows],
    )
    record = RunRecord(
        command="oracle-compare",
        problem_id=problem.id,
        problem_hash=problem_hash(problem),
        config={"solver": config.to_dict(), "seed": runtime.seed,
                "grid": {"x_min": grid.x_min, "x_max": grid.x_max, "nx": grid.nx,
                         "nt": solution.grid.nt, "boundary": grid.boundary},
                "fd": solution.metadata, "probes_outside_interior": outside},
        results=results + [{"comparison": comparison.to_dict()}],
        environment=environment_note(runtime.threads),
    )
    if save:
        _persist(record, runtime, {"fd_solution": solution.to_frame()})
    return record, comparison


def paths_dump(problem: ProblemSpec, x0: Sequence[float], paths: int, steps: int,
               runtime: RuntimeConfig, t_start: float = 0.0, scheme: Optional[str] = None,
               save: bool = True) -> tuple:
    """Simulate raw paths and write them as paths.csv."""
    resolved = resolve_scheme(problem.c, scheme)
    plan = PathPlan(t_start, problem.T, steps, resolved)
    times, states, _ = simulate_paths(x0, plan, problem.c, RngStream(runtime.seed), paths, _runner(runtime))
    frame = paths_frame(times, states)
    record = RunRecord(
        command="paths-dump",
        problem_id=problem.id,
        problem_hash=problem_hash(problem),
        config={"x0": list(map(float, x0)), "paths": paths, "steps": steps, "scheme": resolved,
                "seed": runtime.seed},
        environment=environment_note(runtime.threads),
    )
    if save:
        _persist(record, runtime, {"paths": frame})
    return record, frame


def default_grid(x_min: float, x_max: float, nx: int = 200, boundary: str = "extrapolate_linear") -> FdGrid:
    return FdGrid(x_min, x_max, nx, 1, boundary)


def probe_list(values: Sequence[str], d: int) -> list:
    """Parse CLI probes of the form 't:x1,x2,...'."""
    probes = []
    for text in values:
        t_text, _, x_text = text.partition(":")
        try:
            t = float(t_text)
            x = np.array([float(v) for v in x_text.split(",")]) if x_text else np.zeros(d)
        except ValueError as e:
            raise ConfigurationError(f"invalid probe '{text}', expected t:x1,...,xd") from e
        if x.size != d:
            raise ConfigurationError(f"probe '{text}' has {x.size} components, problem has d = {d}")
        if math.isnan(t):
            raise ConfigurationError(f"invalid probe time in '{text}'")
        probes.append((t, x))
    return probes
