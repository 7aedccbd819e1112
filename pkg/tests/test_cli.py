import json

import pandas as pd
import pytest

from src.main import (
    EXIT_ADMISSIBILITY,
    EXIT_CONFIGURATION,
    EXIT_NUMERICAL,
    EXIT_OK,
    build_parser,
    main,
)

from .test_runner import WIDE_HEAT

pytestmark = pytest.mark.usefixtures("clean_environment")


def run(tmp_path, *argv):
    return main(["--out", str(tmp_path / "runs"), "--seed", "5", *argv])


def records(tmp_path, command):
    return [json.loads(path.read_text()) for path in sorted((tmp_path / "runs").glob(f"{command}-*/record.json"))]


@pytest.fixture
def wide_heat_file(tmp_path):
    path = tmp_path / "wide_heat.json"
    path.write_text(json.dumps(WIDE_HEAT, indent=2))
    return path


class TestParser:
    def test_problem_and_file_are_exclusive(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["solve", "lambda_reaction", "--problem-file", "p.json"])
        with pytest.raises(SystemExit):
            build_parser().parse_args(["solve"])

    def test_defaults(self):
        args = build_parser().parse_args(["solve", "lambda_reaction"])
        assert (args.method, args.iterations, args.samples, args.time_rule) == ("picard", 3, 64, "uniform")
        assert args.probe == []


class TestCommands:
    def test_catalog_list_and_export(self, tmp_path):
        assert run(tmp_path, "catalog", "list") == EXIT_OK
        assert run(tmp_path, "catalog", "export", str(tmp_path / "problems")) == EXIT_OK
        assert len(list((tmp_path / "problems").glob("*.json"))) == 7

    def test_verify_passing_problem(self, tmp_path):
        assert run(tmp_path, "verify", "allen_cahn_trunc") == EXIT_OK
        assert records(tmp_path, "verify")[0]["results"][0]["pass"] is True

    def test_verify_heat_type_failure(self, tmp_path, wide_heat_file, capsys):
        assert run(tmp_path, "verify", "--problem-file", str(wide_heat_file)) == EXIT_ADMISSIBILITY
        assert "Maximal admissible horizon" in capsys.readouterr().out

    def test_solve_writes_record(self, tmp_path):
        code = run(tmp_path, "solve", "deterministic_exp", "-K", "3", "-M", "1", "--inner-samples", "1",
                   "--time-rule", "gauss_legendre:2", "--probe", "0:0")
        assert code == EXIT_OK
        record = records(tmp_path, "solve")[0]
        assert record["results"][0]["value"] == pytest.approx(2.5, abs=1e-12)
        assert record["config"]["seed"] == 5

    def test_solve_is_reproducible(self, tmp_path):
        for threads in ("1", "3"):
            assert run(tmp_path, "--threads", threads, "solve", "lambda_reaction", "-K", "2", "-M", "32",
                       "--probe", "0:0.5") == EXIT_OK
        first, second = records(tmp_path, "solve")
        assert first["results"][0]["value"] == second["results"][0]["value"]

    def test_solve_gate_and_force(self, tmp_path, wide_heat_file):
        args = ("solve", "--problem-file", str(wide_heat_file), "-K", "1", "-M", "16")
        assert run(tmp_path, *args) == EXIT_ADMISSIBILITY
        assert run(tmp_path, "--force", *args) == EXIT_OK
        assert records(tmp_path, "solve")[0]["forced"] is True

    def test_mlp_with_csv_output(self, tmp_path):
        code = run(tmp_path, "--format", "csv", "solve", "sine_reaction", "--method", "mlp", "-n", "2",
                   "-M", "4", "--replications", "4")
        assert code == EXIT_OK
        directory = next((tmp_path / "runs").glob("solve-sine_reaction-*"))
        assert len(pd.read_csv(directory / "results.csv")) == 5

    def test_study(self, tmp_path):
        code = run(tmp_path, "study", "lambda_reaction", "-K", "2", "-M", "16", "--inner-samples", "4",
                   "--sweep-M", "16", "64", "--probe", "0:0")
        assert code == EXIT_OK
        directory = next((tmp_path / "runs").glob("study-lambda_reaction-*"))
        assert list(pd.read_csv(directory / "study.csv")["M"]) == [16, 64]

    def test_oracle_compare(self, tmp_path):
        code = run(tmp_path, "oracle-compare", "heat_sin_1d", "-K", "1", "-M", "4096", "--nx", "100")
        assert code == EXIT_OK

    def test_oracle_disagreement_is_numerical_failure(self, tmp_path):
        # one Picard iterate drops the reaction term entirely
        code = run(tmp_path, "oracle-compare", "allen_cahn_trunc", "-K", "1", "-M", "4096", "--nx", "100",
                   "--probe", "0:0")
        assert code == EXIT_NUMERICAL

    def test_paths_dump(self, tmp_path):
        code = run(tmp_path, "paths-dump", "gbm_linear", "--x0", "1", "--paths", "3", "--steps", "5")
        assert code == EXIT_OK
        directory = next((tmp_path / "runs").glob("paths-dump-gbm_linear-*"))
        assert len(pd.read_csv(directory / "paths.csv")) == 18


class TestExitCodes:
    def test_unknown_problem(self, tmp_path):
        assert run(tmp_path, "solve", "burgers") == EXIT_CONFIGURATION

    def test_expression_error_in_file(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text(json.dumps(dict(WIDE_HEAT, f="v +")))
        assert run(tmp_path, "solve", "--problem-file", str(path)) == EXIT_CONFIGURATION

    def test_budget_exceeded(self, tmp_path):
        assert run(tmp_path, "solve", "lambda_reaction", "-K", "6", "-M", "1000") == EXIT_NUMERICAL

    def test_invalid_runtime_setting(self, tmp_path):
        assert main(["--seed", "-1", "catalog", "list"]) == EXIT_CONFIGURATION

    def test_invalid_solver_setting(self, tmp_path):
        assert run(tmp_path, "solve", "lambda_reaction", "--method", "mlp", "-n", "9") == EXIT_CONFIGURATION

    def test_oracle_needs_one_dimension(self, tmp_path):
        assert run(tmp_path, "oracle-compare", "sine_reaction", "--x-min", "-1", "--x-max", "1") == EXIT_CONFIGURATION

    def test_no_save(self, tmp_path):
        assert run(tmp_path, "--no-save", "verify", "gbm_linear") == EXIT_OK
        assert not (tmp_path / "runs").exists()
