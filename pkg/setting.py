# Configuration file handling, directory paths and seed derivation used throughout the project
import hashlib
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from helper_script.json_helper import read_json
from modules_script.m_errors import ConfigError


CONFIG_STRUCTURE = """{
    "path": {
        "output_dir": "output"
    },
    "dataset": {
        "source": "synthetic",
        "holdout_fraction": 0.25,
        "synthetic": {"classes": 20, "dim": 50, "per_class": 200, "cluster_spread": 2.8, "center_scale": 1.0},
        "purchase": {"path": "dataset/purchase100.csv", "feature_dim": 600, "class_count": 100}
    },
    "fl": {
        "n_clients": 4,
        "weights": [0.25, 0.25, 0.25, 0.25],
        "rounds": 100,
        "local_epochs": 2,
        "batch_size": 100,
        "optimizer": "adam",
        "lr_schedule": [[1, 0.005]],
        "observed_epochs": [40, 60, 80, 90, 100],
        "target_client": 0,
        "hidden_layers": [64],
        "capture_all": true,
        "max_workers": 1
    },
    "auxiliary": {
        "member_train": 200, "nonmember_train": 200, "member_test": 500, "nonmember_test": 500,
        "labels_available": true
    },
    "attack": {
        "kinds": ["true_label", "entropy", "max_score", "baseline"],
        "all_clients": false,
        "fcn": {"batch_size": 100, "learning_rate": 0.001, "epochs": 100},
        "baseline": {"batch_size": 16, "learning_rate": 0.001, "epochs": 30, "conv_channels": [8, 4], "kernels": [5, 3]}
    },
    "report": {
        "sweep_epoch_sets": [[2, 4, 6, 8, 10], [20, 25, 30, 35, 40], [50, 55, 60, 65, 70], [80, 85, 90, 95, 100]],
        "sliding_window": 10,
        "sliding_stride": 5,
        "sliding_attack_epochs": 20
    },
    "options": {
        "stop_on_error": true,
        "show_progress": true
    },
    "seed": 0
}"""


INT = "int"
NUMBER = "number"
BOOL = "bool"
STRING = "string"
LIST = "list"

# Leaf entries name the expected JSON type; nested dicts are sub-sections
CONFIG_SCHEMA: Dict[str, Any] = {
    "path": {"output_dir": STRING},
    "dataset": {
        "source": STRING,
        "holdout_fraction": NUMBER,
        "synthetic": {"classes": INT, "dim": INT, "per_class": INT, "cluster_spread": NUMBER, "center_scale": NUMBER},
        "purchase": {"path": STRING, "feature_dim": INT, "class_count": INT},
    },
    "fl": {
        "n_clients": INT,
        "weights": LIST,
        "rounds": INT,
        "local_epochs": INT,
        "batch_size": INT,
        "optimizer": STRING,
        "lr_schedule": LIST,
        "observed_epochs": LIST,
        "target_client": INT,
        "hidden_layers": LIST,
        "capture_all": BOOL,
        "max_workers": INT,
    },
    "auxiliary": {
        "member_train": INT,
        "nonmember_train": INT,
        "member_test": INT,
        "nonmember_test": INT,
        "labels_available": BOOL,
    },
    "attack": {
        "kinds": LIST,
        "all_clients": BOOL,
        "fcn": {"batch_size": INT, "learning_rate": NUMBER, "epochs": INT},
        "baseline": {"batch_size": INT, "learning_rate": NUMBER, "epochs": INT, "conv_channels": LIST, "kernels": LIST},
    },
    "report": {"sweep_epoch_sets": LIST, "sliding_window": INT, "sliding_stride": INT, "sliding_attack_epochs": INT},
    "options": {"stop_on_error": BOOL, "show_progress": BOOL},
    "seed": INT,
}


def _type_matches(value: Any, expected: str) -> bool:
    if expected == INT:
        return isinstance(value, int) and not isinstance(value, bool)
    if expected == NUMBER:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if expected == BOOL:
        return isinstance(value, bool)
    if expected == STRING:
        return isinstance(value, str)
    return isinstance(value, list)


def validate_against_schema(config: Dict[str, Any], schema: Dict[str, Any] = CONFIG_SCHEMA, prefix: str = "") -> List[str]:
    """Return a list of problems (missing keys, unknown keys, wrong types) as dotted key paths."""
    problems = []
    for key in config:
        if key not in schema:
            problems.append(f"unknown key '{prefix}{key}'")
    for key, expected in schema.items():
        name = f"{prefix}{key}"
        if key not in config:
            problems.append(f"missing key '{name}'")
            continue
        value = config[key]
        if isinstance(expected, dict):
            if not isinstance(value, dict):
                problems.append(f"'{name}' must be an object")
            else:
                problems.extend(validate_against_schema(value, expected, f"{name}."))
        elif not _type_matches(value, expected):
            problems.append(f"'{name}' must be of type {expected}, got {type(value).__name__}")
    return problems


def check_and_get_config(file_path: Union[str, Path]) -> dict:
    if not os.path.exists(file_path):
        raise ConfigError(f"{file_path} not found")

    try:
        config = read_json(file_path)
    except Exception as e:
        raise ConfigError(f"{file_path} is not valid JSON: {e}") from e
    if not isinstance(config, dict):
        raise ConfigError(f"{file_path} must contain a JSON object")

    problems = validate_against_schema(config)
    if len(problems) > 0:
        message = f"Invalid config {file_path}: " + "; ".join(problems)
        print(f"{message}\n\nDefault config.json structure:\n{CONFIG_STRUCTURE}\n")
        raise ConfigError(message)

    return config


def derive_seed(master: int, label: str) -> int:
    """Deterministic 63-bit sub-seed of ``master`` for the named purpose."""
    digest = hashlib.blake2b(f"{master}:{label}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") & ((1 << 63) - 1)


def correct_path(path: str) -> Path:
    return Path(*Path(path.replace("\\", "/")).parts)


def resolve_path(path: str) -> Path:
    """Relative paths are taken from the repository root."""
    path = correct_path(path)
    return path if path.is_absolute() else BASED_DIR / path


def resolve_output_dir(config: dict, cli_out: Optional[str] = None) -> Path:
    """--out wins over the FLMIA_OUTPUT_DIR environment variable, which wins over path.output_dir."""
    if cli_out:
        return Path(cli_out).resolve()
    if os.environ.get(OUTPUT_DIR_ENV_VAR):
        return resolve_path(os.environ[OUTPUT_DIR_ENV_VAR])
    return resolve_path(config["path"]["output_dir"])


BASED_DIR: Path = Path(__file__).resolve().parent
DEFAULT_CONFIG_FILE: Path = BASED_DIR / "config.json"
OUTPUT_DIR_ENV_VAR: str = "FLMIA_OUTPUT_DIR"
