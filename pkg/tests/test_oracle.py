import math

import numpy as np
import pytest

from src.app.catalog import get_entry
from src.config.problem_file import problem_from_dict, problem_to_dict
from src.core.estimate import Estimate
from src.core.oracle import (
    DIRICHLET_EXACT,
    DIRICHLET_G,
    EXTRAPOLATE_LINEAR,
    FdGrid,
    fd_solve,
    interior_half,
    required_steps,
    solve_with_cfl,
)
from src.utils.exceptions import CflViolationError, ConfigurationError, ProbeOutOfRangeError
from src.verification.comparison import fd_compare

HEAT_SIN = get_entry("heat_sin_1d").problem
ALLEN_CAHN = get_entry("allen_cahn_trunc").problem


def variant(p, **fields):
    document = problem_to_dict(p)
    document.update(fields)
    return problem_from_dict(document)


@pytest.fixture(scope="module")
def heat_solution():
    return solve_with_cfl(HEAT_SIN, FdGrid(-math.pi, math.pi, 200, 1, DIRICHLET_EXACT))


class TestGrid:
    def test_spacing_and_nodes(self):
        grid = FdGrid(0.0, 1.0, 9, 10)
        assert grid.h == pytest.approx(0.1)
        assert grid.nodes().size == 11
        assert grid.interior()[0] == pytest.approx(0.1)
        assert interior_half(grid) == (0.25, 0.75)

    @pytest.mark.parametrize("args", [
        (1.0, 0.0, 10, 10),
        (0.0, 1.0, 2, 10),
        (0.0, 1.0, 10, 0),
    ])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            FdGrid(*args)

    def test_unknown_boundary(self):
        with pytest.raises(ValueError):
            FdGrid(0.0, 1.0, 10, 10, "periodic")


class TestSolve:
    def test_heat_equation_matches_closed_form(self, heat_solution):
        x = heat_solution.x
        exact = math.exp(-1.0) * np.sin(x)
        assert np.max(np.abs(heat_solution.values[-1] - exact)) <= 1e-3
        assert heat_solution.metadata["cfl_ratio"] <= 0.45
        assert heat_solution.times[0] == 1.0 and heat_solution.times[-1] == pytest.approx(0.0)

    def test_interpolation(self, heat_solution):
        for x in np.linspace(-math.pi / 2, math.pi / 2, 5):
            assert heat_solution.interpolate(0.0, x) == pytest.approx(math.exp(-1.0) * math.sin(x), abs=1e-3)
        assert heat_solution.interpolate(1.0, 1.0) == pytest.approx(math.sin(1.0), abs=1e-3)
        assert heat_solution.interpolate(0.5, 0.3) == pytest.approx(math.exp(-0.5) * math.sin(0.3), abs=1e-3)

    def test_interpolation_outside_table(self, heat_solution):
        with pytest.raises(ProbeOutOfRangeError):
            heat_solution.interpolate(0.0, 4.0)
        with pytest.raises(ProbeOutOfRangeError):
            heat_solution.interpolate(-0.1, 0.0)

    def test_cfl_violation_reports_required_steps(self):
        grid = FdGrid(-math.pi, math.pi, 200, 100, DIRICHLET_EXACT)
        with pytest.raises(CflViolationError) as info:
            fd_solve(HEAT_SIN, grid)
        assert info.value.required_nt == required_steps(HEAT_SIN, grid)
        fd_solve(HEAT_SIN, grid.with_nt(info.value.required_nt))

    def test_lipschitz_step_limit(self):
        grid = FdGrid(-4.0, 4.0, 10, 20)
        assert required_steps(ALLEN_CAHN, grid) == 40
        with pytest.raises(CflViolationError):
            fd_solve(ALLEN_CAHN, grid)

    def test_rejects_higher_dimensions(self):
        with pytest.raises(ConfigurationError):
            fd_solve(get_entry("sine_reaction").problem, FdGrid(-1.0, 1.0, 10, 10))

    def test_exact_boundary_needs_reference(self):
        with pytest.raises(ConfigurationError):
            fd_solve(ALLEN_CAHN, FdGrid(-4.0, 4.0, 50, 1000, DIRICHLET_EXACT))

    @pytest.mark.parametrize("boundary", [DIRICHLET_G, EXTRAPOLATE_LINEAR])
    def test_boundary_choice_does_not_reach_interior_half(self, boundary):
        solution = solve_with_cfl(ALLEN_CAHN, FdGrid(-4.0, 4.0, 80, 1, boundary))
        reference = solve_with_cfl(ALLEN_CAHN, FdGrid(-4.0, 4.0, 80, 1, EXTRAPOLATE_LINEAR))
        for x in np.linspace(-1.0, 1.0, 5):
            assert solution.interpolate(0.0, x) == pytest.approx(reference.interpolate(0.0, x), abs=1e-2)

    def test_error_falls_with_grid_refinement(self):
        errors = []
        for nx in (49, 99):
            solution = solve_with_cfl(HEAT_SIN, FdGrid(-math.pi, math.pi, nx, 1, DIRICHLET_EXACT))
            exact = HEAT_SIN.reference_values(0.0, solution.x.reshape(-1, 1))
            errors.append(np.max(np.abs(solution.values[-1] - exact)))
        assert errors[0] / errors[1] >= 3.0

    def test_maximum_principle_without_reaction(self):
        p = variant(ALLEN_CAHN, id="heat_bump", f="0")
        solution = solve_with_cfl(p, FdGrid(-4.0, 4.0, 80, 1, DIRICHLET_G))
        g = p.g_values(solution.full_x().reshape(-1, 1))
        table = solution.full_values()
        assert table.min() >= g.min() - 1e-15
        assert table.max() <= g.max() + 1e-15

    def test_ordered_terminal_data_gives_ordered_solutions(self):
        upper = variant(ALLEN_CAHN, id="allen_cahn_raised", g="1/(1 + x1^2) + 0.5*exp(-x1^2)")
        grid = FdGrid(-4.0, 4.0, 80, 1, DIRICHLET_G)
        low, high = solve_with_cfl(ALLEN_CAHN, grid), solve_with_cfl(upper, grid)
        assert low.grid.nt == high.grid.nt
        assert np.all(high.full_values() >= low.full_values() - 1e-14)
        assert high.interpolate(0.0, 0.0) > low.interpolate(0.0, 0.0)

    def test_frame(self, heat_solution):
        frame = heat_solution.to_frame()
        assert list(frame.columns) == ["t", "x", "u"]
        assert len(frame) == heat_solution.times.size * 202


class TestCompare:
    def test_agreement_within_tolerance(self, heat_solution):
        points = [(0.0, [x], Estimate(math.exp(-1.0) * math.sin(x) + 0.005, 0.001, 100, 0))
                  for x in (-1.0, 0.0, 1.0)]
        report = fd_compare(heat_solution, points)
        assert report.passed
        assert [row["x"] for row in report.rows] == [-1.0, 0.0, 1.0]
        assert report.to_dict()["fd_tol"] == 2e-2

    def test_disagreement_is_flagged(self, heat_solution):
        points = [(0.0, 0.5, Estimate(2.0, 0.01, 100, 0)), (0.0, 0.0, Estimate(0.0, 0.01, 100, 0))]
        report = fd_compare(heat_solution, points)
        assert not report.passed
        assert [row["pass"] for row in report.rows] == [False, True]

    def test_missing_standard_error_uses_tolerance_only(self, heat_solution):
        report = fd_compare(heat_solution, [(0.0, 0.0, Estimate(0.015, None, 1, 0))])
        assert report.passed
        assert not fd_compare(heat_solution, [(0.0, 0.0, Estimate(0.025, None, 1, 0))]).passed
