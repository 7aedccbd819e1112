import dataclasses
import math

import numpy as np
import pytest

from src.app.catalog import catalog, get_entry, standard_probes
from src.config.models import PicardConfig
from src.config.problem_file import problem_from_dict, problem_to_dict
from src.core.estimate import within_standard_errors
from src.core.expr import parse
from src.core.picard import (
    FAIL,
    NOISE_FLOOR,
    PASS,
    NestedPicard,
    constant_evaluator,
    contraction_diagnostic,
    expression_evaluator,
    fixed_point_residual,
    picard_apply,
    picard_solve,
    picard_work_estimate,
    pointwise,
    zero_evaluator,
)
from src.core.quadrature import TimeRule
from src.core.rng import Tag
from src.core.sde import EULER, EXACT
from src.utils.exceptions import BudgetExceededError


def problem(problem_id):
    return get_entry(problem_id).problem


def exponential_partial_sums(count):
    return [sum(1.0 / math.factorial(j) for j in range(k)) for k in range(1, count + 1)]


def linear_reaction(lam):
    document = problem_to_dict(problem("lambda_reaction"))
    document.update(id=f"linear_reaction_{lam:g}", f=f"{lam}*v",
                    reference_solution=f"exp({lam}*(1 - t))*(x1^2 + (1 - t))")
    return problem_from_dict(document)


REFERENCE_IDS = sorted(pid for pid, entry in catalog().items() if entry.reference_solution is not None)
EXACT_RULE = TimeRule.gauss_legendre(3)


class TestPicardApply:
    def test_terminal_expectation_only(self, rng):
        p = problem("heat_quadratic")
        estimate = picard_apply(zero_evaluator, p, 0.0, np.zeros(10), 4096, 1, rng)
        assert within_standard_errors(estimate, 10.0, k=4.0)
        assert estimate.samples == 4096
        assert estimate.work > 0

    def test_deterministic_problem_has_no_noise(self, rng):
        p = problem("deterministic_exp")
        estimate = picard_apply(constant_evaluator(1.0), p, 0.0, [0.0], 1, 1, rng, EXACT_RULE)
        assert estimate.value == pytest.approx(2.0, abs=1e-12)
        assert estimate.std_error is None

    def test_same_stream_same_value(self, rng):
        p = problem("lambda_reaction")
        v = expression_evaluator(p.reference)
        first = picard_apply(v, p, 0.2, [0.5], 64, 1, rng)
        second = picard_apply(v, p, 0.2, [0.5], 64, 1, rng)
        other = picard_apply(v, p, 0.2, [0.5], 64, 1, rng.child(Tag.PROBE))
        assert first.value == second.value
        assert first.value != other.value

    def test_pointwise_evaluator(self, rng):
        p = problem("deterministic_exp")
        v = pointwise(lambda t, x: 1.0 + (1.0 - t))
        estimate = picard_apply(v, p, 0.0, [3.0], 1, 1, rng, EXACT_RULE)
        assert estimate.value == pytest.approx(2.5, abs=1e-12)

    @pytest.mark.parametrize("t", [-0.1, 1.0, 1.5])
    def test_rejects_time_outside_horizon(self, rng, t):
        with pytest.raises(ValueError):
            picard_apply(zero_evaluator, problem("lambda_reaction"), t, [0.0], 8, 1, rng)

    def test_rejects_zero_samples(self, rng):
        with pytest.raises(ValueError):
            picard_apply(zero_evaluator, problem("lambda_reaction"), 0.0, [0.0], 0, 1, rng)


class TestPicardSolve:
    def test_deterministic_iterates_are_exponential_partial_sums(self, rng):
        p = problem("deterministic_exp")
        cfg = PicardConfig(iterations=6, samples=1, inner_samples=1, time_rule=EXACT_RULE)
        last, iterates = picard_solve(p, cfg, (0.0, [0.0]), rng)
        values = [e.value for e in iterates]
        np.testing.assert_allclose(values, exponential_partial_sums(6), atol=1e-9)
        assert last.value == pytest.approx(2.716667, abs=1e-6)
        assert abs(last.value - math.e) <= 2e-3

    def test_heat_quadratic_first_iterate(self, rng):
        p = problem("heat_quadratic")
        last, iterates = picard_solve(p, PicardConfig(iterations=1, samples=4096), (0.0, np.zeros(10)), rng)
        assert len(iterates) == 1
        assert within_standard_errors(last, 10.0)

    def test_lambda_reaction_converges(self, rng):
        p = problem("lambda_reaction")
        cfg = PicardConfig(iterations=5, samples=64, inner_samples=8)
        last, _ = picard_solve(p, cfg, (0.0, [0.0]), rng)
        truncated = exponential_partial_sums(5)[-1]
        assert within_standard_errors(last, truncated, k=4.0)
        assert within_standard_errors(last, math.e, k=4.0, abs_tol=0.01)

    def test_terminal_initial_guess(self, rng):
        p = problem("deterministic_exp")
        cfg = PicardConfig(iterations=1, samples=1, inner_samples=1, v0="terminal_g", time_rule=EXACT_RULE)
        last, _ = picard_solve(p, cfg, (0.0, [0.0]), rng)
        assert last.value == pytest.approx(2.0, abs=1e-12)

    @pytest.mark.parametrize("lam", [-1.0, 0.0])
    def test_linear_reaction_partial_sums(self, rng, lam):
        cfg = PicardConfig(iterations=5, samples=64, inner_samples=8)
        last, _ = picard_solve(linear_reaction(lam), cfg, (0.0, [0.0]), rng)
        truncated = sum(lam ** j / math.factorial(j) for j in range(5))
        assert within_standard_errors(last, truncated, k=4.0)
        assert within_standard_errors(last, math.exp(lam), k=4.0, abs_tol=0.01)

    def test_initial_guess_is_forgotten(self, rng):
        p = problem("lambda_reaction")
        query = (0.0, [0.0])
        from_zero, _ = picard_solve(p, PicardConfig(iterations=5, samples=64, inner_samples=8), query, rng)
        from_g, _ = picard_solve(p, PicardConfig(iterations=5, samples=64, inner_samples=8, v0="terminal_g"),
                                 query, rng.child(Tag.START))
        # the exact iterates differ by 1/144 at K = 5
        assert within_standard_errors(from_zero, from_g, k=3.0)

    def test_bit_identical_across_thread_counts(self, rng, threaded):
        p = problem("sine_reaction")
        cfg = PicardConfig(iterations=3, samples=100, inner_samples=4)
        serial, _ = picard_solve(p, cfg, (0.0, [0.1, -0.2]), rng)
        parallel, _ = picard_solve(p, cfg, (0.0, [0.1, -0.2]), rng, threaded)
        assert serial.value == parallel.value
        assert serial.std_error == parallel.std_error

    def test_budget(self, rng):
        cfg = PicardConfig(iterations=6, samples=1000, work_budget=1e6)
        with pytest.raises(BudgetExceededError) as info:
            picard_solve(problem("lambda_reaction"), cfg, (0.0, [0.0]), rng)
        assert info.value.estimated > info.value.budget

    def test_work_estimate(self):
        cfg = PicardConfig(iterations=3, samples=10, inner_samples=2, sde_steps=5,
                           time_rule=TimeRule.gauss_legendre(2))
        assert picard_work_estimate(cfg, EULER) == pytest.approx(10 * (1 + 4 + 16) * 5)
        assert picard_work_estimate(cfg, EXACT) == pytest.approx(10 * (1 + 4 + 16))

    def test_nested_streams_are_distinct(self, rng):
        p = problem("lambda_reaction")
        nested = NestedPicard(p, PicardConfig(iterations=2, samples=16, inner_samples=16))
        t, x = np.zeros(1), np.zeros((1, 1))
        own = nested.evaluator(1, rng)(t, x)
        child = nested.evaluator(1, rng.child(Tag.ITERATE, 1))(t, x)
        assert own[0] != child[0]
        np.testing.assert_array_equal(nested.evaluator(0, rng)(t, x), [0.0])


class TestResidual:
    def test_exact_solution_is_a_fixed_point(self, rng):
        p = problem("lambda_reaction")
        probes = [(0.0, [0.0]), (0.0, [0.5]), (0.5, [0.0]), (0.25, [-0.5])]
        report = fixed_point_residual(expression_evaluator(p.reference), p, probes, 4096, rng)
        assert report.passed(k_se=4.0)
        assert len(report.rows) == 4
        assert report.rows[0]["v_hat"] == pytest.approx(math.e)

    @pytest.mark.parametrize("problem_id", REFERENCE_IDS)
    def test_catalog_reference_is_a_fixed_point(self, rng, problem_id):
        entry = get_entry(problem_id)
        p = entry.problem
        report = fixed_point_residual(expression_evaluator(p.reference), p, standard_probes(entry), 4096, rng,
                                      sde_steps=16)
        assert report.passed(k_se=4.0), report.rows

    @pytest.mark.parametrize("lam", [-1.0, 0.0, 1.0])
    def test_linear_reaction_reference_is_a_fixed_point(self, rng, lam):
        p = linear_reaction(lam)
        report = fixed_point_residual(expression_evaluator(p.reference), p, [(0.0, [0.0]), (0.5, [1.0])],
                                      4096, rng)
        assert report.passed(k_se=4.0), report.rows
        assert report.rows[0]["v_hat"] == pytest.approx(math.exp(lam))

    def test_zero_is_not_a_fixed_point(self, rng):
        p = problem("lambda_reaction")
        report = fixed_point_residual(zero_evaluator, p, [(0.0, [0.0])], 4096, rng)
        assert not report.passed()
        assert report.rows[0]["residual"] == pytest.approx(1.0, abs=0.15)
        assert report.summary == pytest.approx(1.0, abs=0.15)

    def test_probe_streams_are_independent_of_order(self, rng):
        p = problem("lambda_reaction")
        v = expression_evaluator(p.reference)
        forward = fixed_point_residual(v, p, [(0.0, [0.0]), (0.5, [1.0])], 64, rng)
        single = fixed_point_residual(v, p, [(0.0, [0.0])], 64, rng)
        assert forward.rows[0]["phi"] == single.rows[0]["phi"]

    def test_requires_probes(self, rng):
        with pytest.raises(ValueError):
            fixed_point_residual(zero_evaluator, problem("lambda_reaction"), [], 16, rng)


class TestContraction:
    def test_deterministic_iterates_contract(self, rng):
        p = problem("deterministic_exp")
        cfg = PicardConfig(iterations=6, samples=1, inner_samples=1, time_rule=EXACT_RULE)
        report = contraction_diagnostic(p, cfg, (0.0, [0.0]), rng)
        assert report.status == PASS
        assert report.ratio == pytest.approx(0.2994, abs=1e-3)
        assert report.threshold == pytest.approx(1.55)
        np.testing.assert_allclose(report.differences, [1 / math.factorial(k) for k in range(1, 6)], atol=1e-9)

    def test_understated_lipschitz_constant_fails(self, rng):
        p = dataclasses.replace(problem("deterministic_exp"), f=parse("10*v", 1, allow_v=True))
        cfg = PicardConfig(iterations=6, samples=1, inner_samples=1, time_rule=EXACT_RULE)
        report = contraction_diagnostic(p, cfg, (0.0, [0.0]), rng)
        assert report.status == FAIL
        assert not report.passed
        assert report.ratio > report.threshold

    def test_linear_heat_problem_sits_at_noise_floor(self, rng):
        p = problem("heat_quadratic")
        report = contraction_diagnostic(p, PicardConfig(iterations=3, samples=256, inner_samples=1),
                                        (0.0, np.zeros(10)), rng)
        assert report.status == NOISE_FLOOR
        assert report.passed
        assert report.ratio is None

    def test_needs_three_iterations(self, rng):
        with pytest.raises(ValueError):
            contraction_diagnostic(problem("lambda_reaction"), PicardConfig(iterations=2, samples=4),
                                   (0.0, [0.0]), rng)
