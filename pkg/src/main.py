"""Command-line entry point for the SFPE solver."""

import argparse
import logging
import sys
from typing import Optional, Sequence

from .app import runner
from .app.catalog import catalog, export_catalog, get_entry, standard_probes
from .config.environment import load_runtime_config
from .config.models import MlpConfig, PicardConfig, RuntimeConfig, StudySweep
from .config.problem_file import load_problem
from .core.oracle import DIRICHLET_EXACT, DIRICHLET_G, EXTRAPOLATE_LINEAR, FdGrid, solve_with_cfl
from .core.quadrature import TimeRule
from .core.sde import EULER, EXACT
from .utils.console import console
from .utils.exceptions import (
    AdmissibilityFailure,
    ConfigurationError,
    ExpressionError,
    NumericalError,
)
from .utils.logging import get_logger, setup_logging

logger = get_logger("main")

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_ADMISSIBILITY = 2
EXIT_NUMERICAL = 3
EXIT_CONFIGURATION = 4


def _add_problem_arguments(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("problem", nargs="?", help="Catalog problem id")
    group.add_argument("--problem-file", help="Path to a problem JSON document")


def _add_method_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--method", choices=("picard", "mlp"), default="picard")
    parser.add_argument("-K", "--iterations", type=int, default=3, help="Picard iterations")
    parser.add_argument("-n", "--levels", type=int, default=3, help="MLP levels")
    parser.add_argument("-M", "--samples", type=int, default=64)
    parser.add_argument("--inner-samples", type=int, help="Picard samples below the outer level")
    parser.add_argument("--replications", type=int, default=16, help="MLP replications")
    parser.add_argument("--steps", type=int, default=1, help="SDE steps per unit path")
    parser.add_argument("--v0", choices=("zero", "terminal_g"), default="zero")
    parser.add_argument("--time-rule", default="uniform",
                        help="uniform, midpoint or gauss_legendre:q")
    parser.add_argument("--scheme", choices=(EULER, EXACT), help="Path scheme (default: automatic)")
    parser.add_argument("--probe", action="append", default=[], metavar="T:X1,...,XD",
                        help="Query point; repeatable (default: the standard probes)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sfpe",
        description="Monte-Carlo solver for semilinear Kolmogorov PDEs via their stochastic fixed-point equation",
    )
    parser.add_argument("--seed", type=int, help="Master seed (env SFPE_SEED)")
    parser.add_argument("--threads", type=int, help="Worker threads (env SFPE_THREADS)")
    parser.add_argument("--out", dest="out_dir", help="Run directory root (env SFPE_OUT_DIR)")
    parser.add_argument("--force", action="store_true", help="Run despite failed admissibility checks")
    parser.add_argument("--format", dest="output_format", choices=("json", "csv"), default="json")
    parser.add_argument("--env-file", help="Path to a .env file")
    parser.add_argument("--log-level", help="Logging level (env SFPE_LOG_LEVEL)")
    parser.add_argument("--log-file", help="Also log to logs/<name>")
    parser.add_argument("--no-save", action="store_true", help="Do not write a run directory")

    commands = parser.add_subparsers(dest="command", required=True)

    solve = commands.add_parser("solve", help="Estimate the solution at query points")
    _add_problem_arguments(solve)
    _add_method_arguments(solve)

    study = commands.add_parser("study", help="Error-versus-work sweep")
    _add_problem_arguments(study)
    _add_method_arguments(study)
    study.add_argument("--sweep-M", type=int, nargs="+", default=[])
    study.add_argument("--sweep-depth", type=int, nargs="+", default=[], help="K or n values")
    study.add_argument("--sweep-steps", type=int, nargs="+", default=[])
    study.add_argument("--against-oracle", action="store_true",
                       help="Measure errors against finite differences (d = 1)")

    verify = commands.add_parser("verify", help="Run every admissibility check")
    _add_problem_arguments(verify)

    oracle = commands.add_parser("oracle-compare", help="Finite differences against Monte Carlo (d = 1)")
    _add_problem_arguments(oracle)
    _add_method_arguments(oracle)
    oracle.add_argument("--x-min", type=float)
    oracle.add_argument("--x-max", type=float)
    oracle.add_argument("--nx", type=int, default=200)
    oracle.add_argument("--nt", type=int, help="Time steps (default: smallest stable count)")
    oracle.add_argument("--boundary", choices=(DIRICHLET_EXACT, DIRICHLET_G, EXTRAPOLATE_LINEAR))
    oracle.add_argument("--fd-tol", type=float, default=2e-2)

    cat = commands.add_parser("catalog", help="Built-in problems")
    cat_commands = cat.add_subparsers(dest="catalog_command", required=True)
    cat_commands.add_parser("list", help="List catalog problems")
    export = cat_commands.add_parser("export", help="Write every problem as JSON")
    export.add_argument("directory")

    paths = commands.add_parser("paths-dump", help="Write raw SDE paths as CSV")
    _add_problem_arguments(paths)
    paths.add_argument("--x0", required=True, help="Start point x1,...,xd")
    paths.add_argument("--paths", type=int, default=10)
    paths.add_argument("--steps", type=int, default=100)
    paths.add_argument("--t-start", type=float, default=0.0)
    paths.add_argument("--scheme", choices=(EULER, EXACT))

    return parser


def _resolve_problem(args: argparse.Namespace):
    """Returns (ProblemSpec, CatalogEntry or None)."""
    if args.problem_file:
        return load_problem(args.problem_file), None
    try:
        entry = get_entry(args.problem)
    except KeyError as e:
        raise ConfigurationError(str(e.args[0])) from e
    return entry.problem, entry


def _solver_config(args: argparse.Namespace, runtime: RuntimeConfig):
    try:
        rule = TimeRule.parse(args.time_rule)
        if args.method == "picard":
            return PicardConfig(
                iterations=args.iterations,
                samples=args.samples,
                sde_steps=args.steps,
                inner_samples=args.inner_samples,
                v0=args.v0,
                time_rule=rule,
                scheme=args.scheme,
                work_budget=runtime.work_budget,
            )
        return MlpConfig(
            levels=args.levels,
            samples=args.samples,
            sde_steps=args.steps,
            replications=args.replications,
            time_rule=rule,
            scheme=args.scheme,
            work_budget=runtime.work_budget,
        )
    except ValueError as e:
        raise ConfigurationError(f"Invalid solver configuration: {e}") from e


def _probes(args: argparse.Namespace, problem, entry) -> list:
    if args.probe:
        return runner.probe_list(args.probe, problem.d)
    if entry is not None:
        return standard_probes(entry)
    return runner.probe_list(["0"], problem.d)


def _grid(args: argparse.Namespace, problem, entry) -> FdGrid:
    domain = entry.oracle_domain if entry is not None else None
    x_min = args.x_min if args.x_min is not None else (domain.x_min if domain else None)
    x_max = args.x_max if args.x_max is not None else (domain.x_max if domain else None)
    if x_min is None or x_max is None:
        raise ConfigurationError("--x-min and --x-max are required for problems without an oracle domain")
    boundary = args.boundary or (domain.boundary if domain else EXTRAPOLATE_LINEAR)
    try:
        return runner.default_grid(x_min, x_max, args.nx, boundary)
    except ValueError as e:
        raise ConfigurationError(f"Invalid grid: {e}") from e


def cmd_solve(args, runtime: RuntimeConfig) -> int:
    problem, entry = _resolve_problem(args)
    config = _solver_config(args, runtime)
    console.print_header(f"Solving {problem.id}")
    runner.run_solve(problem, config, _probes(args, problem, entry), runtime,
                     force=runtime.force, save=not args.no_save)
    console.print_success("Solve finished")
    return EXIT_OK


def cmd_study(args, runtime: RuntimeConfig) -> int:
    problem, entry = _resolve_problem(args)
    config = _solver_config(args, runtime)
    try:
        sweep = StudySweep(args.sweep_M, args.sweep_depth, args.sweep_steps)
    except ValueError as e:
        raise ConfigurationError(f"Invalid sweep: {e}") from e

    fd_solution = None
    if args.against_oracle or problem.reference is None:
        if entry is None or entry.oracle_domain is None:
            raise ConfigurationError(f"problem '{problem.id}' has no reference solution and no oracle domain")
        domain = entry.oracle_domain
        fd_solution = solve_with_cfl(problem, runner.default_grid(domain.x_min, domain.x_max,
                                                                  boundary=domain.boundary))

    console.print_header(f"Study {problem.id}: {len(sweep)} configuration(s)")
    _, frame = runner.run_study(problem, config, sweep, _probes(args, problem, entry), runtime,
                                fd_solution=fd_solution, save=not args.no_save)
    if frame["M"].nunique() > 1:
        try:
            console.print_info(f"Standard error slope in M: {runner.fit_standard_error_slope(frame):.3f}")
        except ValueError as e:
            logger.debug(f"No slope fitted: {e}")
    console.print_success(f"Study finished with {len(frame)} rows")
    return EXIT_OK


def cmd_verify(args, runtime: RuntimeConfig) -> int:
    problem, _ = _resolve_problem(args)
    _, report = runner.run_verify_record(problem, runtime, save=not args.no_save)
    if report["failed"]:
        raise AdmissibilityFailure(report["failed"], report)
    console.print_success(f"All admissibility checks passed for {problem.id}")
    return EXIT_OK


def cmd_oracle_compare(args, runtime: RuntimeConfig) -> int:
    problem, entry = _resolve_problem(args)
    config = _solver_config(args, runtime)
    grid = _grid(args, problem, entry)
    console.print_header(f"Oracle comparison {problem.id}")
    _, comparison = runner.run_oracle_compare(problem, grid, config, _probes(args, problem, entry), runtime,
                                              fd_tol=args.fd_tol, nt=args.nt, save=not args.no_save)
    if not comparison.passed:
        console.print_warning("Finite differences and Monte Carlo disagree at some probes")
        return EXIT_NUMERICAL
    console.print_success("Finite differences and Monte Carlo agree")
    return EXIT_OK


def cmd_catalog(args, runtime: RuntimeConfig) -> int:
    if args.catalog_command == "export":
        paths = export_catalog(args.directory)
        console.print_success(f"Exported {len(paths)} problems to {args.directory}")
        return EXIT_OK
    rows = [
        (entry.id, entry.problem.d, entry.problem.f.source, entry.problem.L,
         "yes" if entry.reference_solution is not None else "no",
         ", ".join(entry.admissibility_profile), entry.description)
        for entry in catalog().values()
    ]
    console.print_table("Catalog", ["id", "d", "f", "L", "reference", "profile", "description"], rows)
    return EXIT_OK


def cmd_paths_dump(args, runtime: RuntimeConfig) -> int:
    problem, _ = _resolve_problem(args)
    x0 = runner.probe_list([f"0:{args.x0}"], problem.d)[0][1]
    _, frame = runner.paths_dump(problem, x0, args.paths, args.steps, runtime,
                                 t_start=args.t_start, scheme=args.scheme, save=not args.no_save)
    console.print_success(f"Simulated {args.paths} path(s), {len(frame)} rows")
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "study": cmd_study,
    "verify": cmd_verify,
    "oracle-compare": cmd_oracle_compare,
    "catalog": cmd_catalog,
    "paths-dump": cmd_paths_dump,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    args = build_parser().parse_args(argv)

    try:
        runtime = load_runtime_config(
            args.env_file,
            seed=args.seed,
            threads=args.threads,
            out_dir=args.out_dir,
            log_level=args.log_level,
            force=args.force or None,
            output_format=args.output_format,
        )
    except ConfigurationError as e:
        setup_logging()
        console.print_error(f"Configuration error: {e}")
        return EXIT_CONFIGURATION

    setup_logging(level=getattr(logging, runtime.log_level.upper()), log_file=args.log_file)
    logger.debug(f"Command {args.command} with seed {runtime.seed} on {runtime.threads} thread(s)")

    try:
        return COMMANDS[args.command](args, runtime)
    except AdmissibilityFailure as e:
        console.print_error(str(e))
        if e.report and "max_admissible_horizon" in e.report.get("checks", {}).get("heat_type", {}):
            horizon = e.report["checks"]["heat_type"]["max_admissible_horizon"]
            console.print_info(f"Maximal admissible horizon: {horizon:.6g}")
        return EXIT_ADMISSIBILITY
    except NumericalError as e:
        console.print_error(f"Numerical failure: {e}")
        return EXIT_NUMERICAL
    except (ConfigurationError, ExpressionError) as e:
        console.print_error(f"Configuration error: {e}")
        return EXIT_CONFIGURATION
    except Exception as e:
        logger.exception("Unexpected error in main")
        console.print_error(f"Unexpected error: {e}")
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
