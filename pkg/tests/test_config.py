# wienernet/tests/test_config.py
"""
Tests for config.py layered experiment configuration
"""
from pathlib import Path

import pytest
import yaml

from wienernet.config import (
    ExperimentConfig,
    create_config_template,
    load_config,
    parse_lambda_rule,
)
from wienernet.errors import ConfigurationError


class TestDefaults:
    """Tests for built-in defaults"""

    def test_defaults(self):
        """Should load the field defaults with no sources"""
        config = load_config()
        assert config.epsilon == 0.05
        assert config.trials == 45
        assert config.graph.kind == "grid"
        assert config.model.target_radius == 0.69
        assert config.N is None
        assert config._sources == {}

    def test_success_target(self):
        """Should require every trial unless required_successes is set"""
        assert ExperimentConfig(trials=10).success_target == 10
        assert ExperimentConfig(trials=10, required_successes=9).success_target == 9

    def test_to_dict_is_yaml_safe(self):
        """Should contain only plain values"""
        data = ExperimentConfig().to_dict()
        assert data["graph"]["rows"] == 3
        assert data["out"] == "results"
        assert "_sources" not in data
        yaml.safe_dump(data)


class TestSources:
    """Tests for the priority order of configuration sources"""

    def test_config_file(self, tmp_path):
        """Should read nested sections from YAML"""
        path = tmp_path / "exp.yaml"
        path.write_text("graph:\n  kind: chain\n  size: 4\nepsilon: 0.1\n")
        config = load_config(path)
        assert config.graph.kind == "chain"
        assert config.graph.size == 4
        assert config.epsilon == 0.1
        assert config._sources["graph.size"] == "exp.yaml"

    def test_json_file(self, tmp_path):
        """Should accept JSON as YAML"""
        path = tmp_path / "exp.json"
        path.write_text('{"trials": 7, "model": {"seed": 3}}')
        config = load_config(path)
        assert config.trials == 7
        assert config.model.seed == 3

    def test_global_config(self, tmp_path):
        """Should read ~/.wienernet/config.yaml below the config file"""
        home = tmp_path / "elsewhere"
        (home / ".wienernet").mkdir(parents=True)
        (home / ".wienernet" / "config.yaml").write_text("seed: 11\ntrials: 5\n")
        path = tmp_path / "exp.yaml"
        path.write_text("trials: 9\n")
        config = load_config(path, home=home)
        assert config.seed == 11
        assert config.trials == 9
        assert config._sources["seed"] == "global"

    def test_env_overrides_file(self, tmp_path, monkeypatch):
        """Should let WIENERNET_SEED beat the config file"""
        path = tmp_path / "exp.yaml"
        path.write_text("seed: 1\n")
        monkeypatch.setenv("WIENERNET_SEED", "42")
        config = load_config(path)
        assert config.seed == 42
        assert config._sources["seed"] == "env:WIENERNET_SEED"

    def test_cli_overrides_env(self, monkeypatch):
        """Should let command-line values beat the environment"""
        monkeypatch.setenv("WIENERNET_TRIALS", "4")
        config = load_config(overrides={"trials": 6, "seed": None})
        assert config.trials == 6
        assert config._sources["trials"] == "cli"
        assert "seed" not in config._sources

    def test_dotted_override(self):
        """Should apply 'graph.rows' style keys"""
        config = load_config(overrides={"graph.rows": 5})
        assert config.graph.rows == 5

    def test_out_is_path(self, monkeypatch):
        """Should coerce WIENERNET_OUT to a Path"""
        monkeypatch.setenv("WIENERNET_OUT", "runs/a")
        assert load_config().out == Path("runs/a")

    def test_missing_file(self, tmp_path):
        """Should raise ConfigurationError naming the init command"""
        with pytest.raises(ConfigurationError) as exc_info:
            load_config(tmp_path / "missing.yaml")
        assert "wienernet init" in exc_info.value.suggestion


class TestValidation:
    """Tests for schema validation"""

    def test_fixed_lambda_rule(self):
        """Should split 'fixed:0.02' into rule and value"""
        config = load_config(overrides={"lambda_rule": "fixed:0.02"})
        assert config.lambda_rule == "fixed"
        assert config.lambda_value == pytest.approx(0.02)

    def test_parse_lambda_rule(self):
        """Should leave named rules without a value"""
        assert parse_lambda_rule("calibrated") == ("calibrated", None)
        with pytest.raises(ConfigurationError):
            parse_lambda_rule("fixed:abc")

    @pytest.mark.parametrize("epsilon", [0.0, 0.5, 0.7, -0.1])
    def test_invalid_epsilon(self, epsilon):
        """Should reject epsilon outside (0, 0.5)"""
        with pytest.raises(ConfigurationError) as exc_info:
            load_config(overrides={"epsilon": epsilon})
        assert "epsilon" in exc_info.value.suggestion

    def test_collects_every_issue(self):
        """Should report all problems in one error"""
        with pytest.raises(ConfigurationError) as exc_info:
            load_config(overrides={"trials": 0, "graph.kind": "torus", "regime": "bursty"})
        assert "3 issue(s)" in exc_info.value.message

    def test_bad_type(self, tmp_path):
        """Should report a value that cannot be coerced"""
        path = tmp_path / "exp.yaml"
        path.write_text("trials: many\n")
        with pytest.raises(ConfigurationError, match="issue"):
            load_config(path)

    def test_unknown_key_goes_to_extra(self, tmp_path, capsys):
        """Should keep unknown settings and warn"""
        path = tmp_path / "exp.yaml"
        path.write_text("colour: blue\ngraph:\n  shape: round\n")
        config = load_config(path)
        assert config.extra == {"colour": "blue", "graph.shape": "round"}
        assert "colour" in capsys.readouterr().out

    def test_non_mapping_file(self, tmp_path):
        """Should reject a YAML list at the top level"""
        path = tmp_path / "exp.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigurationError, match="mapping"):
            load_config(path)

    def test_file_graph_needs_edges(self):
        """Should require edges_file for kind 'file'"""
        with pytest.raises(ConfigurationError):
            load_config(overrides={"graph.kind": "file"})


class TestTemplate:
    """Tests for create_config_template"""

    @pytest.mark.parametrize("comments", [True, False])
    def test_template_loads(self, tmp_path, comments):
        """Should produce a file that loads without issues"""
        path = tmp_path / "exp.yaml"
        path.write_text(create_config_template(include_comments=comments))
        config = load_config(path)
        assert config.extra == {}
        assert config.regime == "restart_record"
        assert config.lambda_rule == "calibrated"
