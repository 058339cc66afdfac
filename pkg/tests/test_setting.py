import orjson
import pytest

from helper_script.json_helper import read_json
from modules_script.m_errors import ConfigError
from setting import (
    CONFIG_STRUCTURE,
    DEFAULT_CONFIG_FILE,
    OUTPUT_DIR_ENV_VAR,
    check_and_get_config,
    derive_seed,
    resolve_output_dir,
    resolve_path,
    validate_against_schema,
)


class TestConfigFile:
    def test_default_structure_is_valid(self):
        assert validate_against_schema(orjson.loads(CONFIG_STRUCTURE)) == []

    def test_shipped_config_matches_structure(self):
        assert read_json(str(DEFAULT_CONFIG_FILE)) == orjson.loads(CONFIG_STRUCTURE)

    def test_valid_file(self, small_config_file):
        assert check_and_get_config(small_config_file)["fl"]["n_clients"] == 2

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            check_and_get_config(str(tmp_path / "absent.json"))

    def test_not_json(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("{ not json")
        with pytest.raises(ConfigError):
            check_and_get_config(str(path))

    def test_unknown_key(self, small_config_dict, write_config):
        small_config_dict["fl"]["momentum"] = 0.9
        with pytest.raises(ConfigError, match="fl.momentum"):
            check_and_get_config(write_config(small_config_dict))

    def test_missing_key(self, small_config_dict, write_config):
        del small_config_dict["auxiliary"]["member_test"]
        with pytest.raises(ConfigError, match="auxiliary.member_test"):
            check_and_get_config(write_config(small_config_dict))

    def test_wrong_type(self, small_config_dict, write_config):
        small_config_dict["fl"]["rounds"] = "six"
        with pytest.raises(ConfigError, match="fl.rounds"):
            check_and_get_config(write_config(small_config_dict))

    def test_bool_is_not_int(self):
        config = orjson.loads(CONFIG_STRUCTURE)
        config["seed"] = True
        assert validate_against_schema(config) == ["'seed' must be of type int, got bool"]


class TestDeriveSeed:
    def test_deterministic(self):
        assert derive_seed(0, "fl") == derive_seed(0, "fl")

    def test_depends_on_master_and_label(self):
        seeds = {derive_seed(0, "fl"), derive_seed(1, "fl"), derive_seed(0, "attack"), derive_seed(0, "data/holdout")}
        assert len(seeds) == 4

    def test_range(self):
        for master in range(20):
            assert 0 <= derive_seed(master, "init") < 2 ** 63


class TestOutputDir:
    def test_config_value(self):
        config = {"path": {"output_dir": "results"}}
        assert resolve_output_dir(config) == resolve_path("results")

    def test_environment_overrides_config(self, monkeypatch, tmp_path):
        monkeypatch.setenv(OUTPUT_DIR_ENV_VAR, str(tmp_path / "env"))
        assert resolve_output_dir({"path": {"output_dir": "results"}}) == tmp_path / "env"

    def test_cli_overrides_environment(self, monkeypatch, tmp_path):
        monkeypatch.setenv(OUTPUT_DIR_ENV_VAR, str(tmp_path / "env"))
        assert resolve_output_dir({"path": {"output_dir": "results"}}, str(tmp_path / "cli")) == (tmp_path / "cli").resolve()

    def test_relative_paths_from_repository_root(self):
        assert resolve_path("output").is_absolute()
        assert resolve_path("output") == DEFAULT_CONFIG_FILE.parent / "output"
