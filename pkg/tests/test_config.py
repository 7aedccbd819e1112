from pathlib import Path

import pytest

from src.config.environment import load_runtime_config
from src.config.models import MlpConfig, PicardConfig, RuntimeConfig, StudySweep
from src.core.quadrature import GAUSS_LEGENDRE, UNIFORM, TimeRule
from src.utils.exceptions import ConfigurationError


pytestmark = pytest.mark.usefixtures("clean_environment")


class TestRuntimeConfig:
    def test_environment_values(self, monkeypatch):
        monkeypatch.setenv("SFPE_SEED", "42")
        monkeypatch.setenv("SFPE_THREADS", "3")
        monkeypatch.setenv("SFPE_WORK_BUDGET", "1e6")
        monkeypatch.setenv("SFPE_LOG_LEVEL", "debug")
        config = load_runtime_config()
        assert (config.seed, config.threads, config.work_budget, config.log_level) == (42, 3, 1e6, "DEBUG")

    def test_flags_override_environment(self, monkeypatch):
        monkeypatch.setenv("SFPE_SEED", "42")
        config = load_runtime_config(seed=5, threads=None, out_dir="elsewhere")
        assert config.seed == 5
        assert config.out_dir == Path("elsewhere")
        assert config.threads >= 1

    def test_env_file(self, tmp_path):
        env_file = tmp_path / "solver.env"
        env_file.write_text("SFPE_SEED=99\nSFPE_OUT_DIR=results\n")
        config = load_runtime_config(str(env_file))
        assert config.seed == 99
        assert config.out_dir == Path("results")

    def test_missing_env_file(self, tmp_path):
        with pytest.raises(ConfigurationError, match="not found"):
            load_runtime_config(str(tmp_path / "absent.env"))

    @pytest.mark.parametrize("key, value", [
        ("SFPE_SEED", "-1"),
        ("SFPE_SEED", "seed"),
        ("SFPE_THREADS", "0"),
        ("SFPE_WORK_BUDGET", "0"),
        ("SFPE_LOG_LEVEL", "LOUD"),
    ])
    def test_invalid_values(self, monkeypatch, key, value):
        monkeypatch.setenv(key, value)
        with pytest.raises(ConfigurationError):
            load_runtime_config()

    def test_blank_values_fall_back(self, monkeypatch):
        monkeypatch.setenv("SFPE_SEED", "  ")
        assert load_runtime_config().seed == RuntimeConfig().seed

    def test_output_format(self):
        with pytest.raises(ValueError):
            RuntimeConfig(output_format="xml")


class TestSolverConfigs:
    def test_inner_samples_default_to_outer(self):
        assert PicardConfig(iterations=3, samples=32).inner_samples == 32
        assert PicardConfig(iterations=3, samples=32, inner_samples=4).inner_samples == 4

    @pytest.mark.parametrize("kwargs", [
        {"iterations": 0, "samples": 4},
        {"iterations": 2, "samples": 0},
        {"iterations": 2, "samples": 4, "sde_steps": 0},
        {"iterations": 2, "samples": 4, "inner_samples": 0},
        {"iterations": 2, "samples": 4, "v0": "one"},
    ])
    def test_invalid_picard(self, kwargs):
        with pytest.raises(ValueError):
            PicardConfig(**kwargs)

    def test_to_dict(self):
        picard = PicardConfig(iterations=2, samples=8, time_rule=TimeRule.gauss_legendre(3)).to_dict()
        assert picard["time_rule"] == "gauss_legendre:3"
        assert picard["scheme"] == "auto"
        assert MlpConfig(levels=3, samples=5).to_dict()["replications"] == 16

    def test_sweep(self):
        sweep = StudySweep(samples=[16, 64], depths=(1, 2, 3))
        assert len(sweep) == 6
        assert sweep.samples == (16, 64)
        with pytest.raises(ValueError):
            StudySweep()
        with pytest.raises(ValueError):
            StudySweep(samples=(0,))


class TestTimeRule:
    @pytest.mark.parametrize("text, kind, nodes", [
        ("uniform", UNIFORM, 1),
        ("midpoint", GAUSS_LEGENDRE, 1),
        ("gauss_legendre:4", GAUSS_LEGENDRE, 4),
        ("gauss_legendre", GAUSS_LEGENDRE, 1),
    ])
    def test_parse(self, text, kind, nodes):
        rule = TimeRule.parse(text)
        assert (rule.kind, rule.nodes) == (kind, nodes)

    @pytest.mark.parametrize("text", ["simpson", "uniform:2", "midpoint:3", "gauss_legendre:0"])
    def test_parse_rejects(self, text):
        with pytest.raises(ValueError):
            TimeRule.parse(text)

    def test_gauss_legendre_integrates_cubic(self, rng):
        times, weights = TimeRule.gauss_legendre(2).sample([0.0, 0.5], 1.0, rng)
        integrals = (weights * times ** 3).sum(axis=1)
        assert integrals == pytest.approx([0.25, (1 - 0.5 ** 4) / 4])

    def test_uniform_nodes_inside_interval(self, rng):
        times, weights = TimeRule.uniform().sample([0.25] * 100, 1.0, rng)
        assert times.shape == (100, 1)
        assert ((times > 0.25) & (times < 1.0)).all()
        assert (weights == 0.75).all()
