import copy

import numpy as np
import orjson
import pytest

from helper_script.progress_helper import set_progress_enabled
from modules_script.m_fl_sim import CheckpointTrace
from modules_script.m_layers import Dense, Softmax
from modules_script.m_network import Network, NetworkSpec, mlp_spec
from setting import CONFIG_STRUCTURE


set_progress_enabled(False)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_trace(spec: NetworkSpec, epochs, seed: int = 0) -> CheckpointTrace:
    """Trace of independently initialized snapshots, one per epoch."""
    return CheckpointTrace(0, spec, {t: Network(spec, seed=seed + t) for t in epochs})


def constant_score_trace(scores, epochs=(1, 2, 3)) -> CheckpointTrace:
    """
    Snapshots whose softmax output is ``scores`` for every input: zero weights and
    log-score biases.
    """
    scores = np.asarray(scores, dtype=np.float64)
    m = scores.size
    spec = NetworkSpec([Dense(2, m), Softmax()], (2,), class_count=m)
    with np.errstate(divide="ignore"):
        bias = np.where(scores > 0, np.log(np.where(scores > 0, scores, 1.0)), -800.0)
    params = [{"weight": np.zeros((m, 2)), "bias": bias}, {}]
    return CheckpointTrace(0, spec, {t: Network(spec, params=params) for t in epochs})


@pytest.fixture
def small_mlp_spec():
    return mlp_spec(4, [5], 3)


def small_config() -> dict:
    """Desk config shrunk to a few seconds of work: 2 clients, 6 rounds, 2 attack epochs."""
    config = orjson.loads(CONFIG_STRUCTURE)
    config["dataset"]["synthetic"] = {"classes": 4, "dim": 8, "per_class": 60, "cluster_spread": 1.5, "center_scale": 1.0}
    config["fl"].update({
        "n_clients": 2,
        "weights": [0.5, 0.5],
        "rounds": 6,
        "local_epochs": 1,
        "batch_size": 16,
        "observed_epochs": [2, 4, 6],
        "hidden_layers": [8],
        "lr_schedule": [[1, 0.01]],
    })
    config["auxiliary"].update({"member_train": 20, "nonmember_train": 20, "member_test": 20, "nonmember_test": 20})
    config["attack"]["fcn"] = {"batch_size": 20, "learning_rate": 0.001, "epochs": 2}
    config["attack"]["baseline"].update({"batch_size": 8, "epochs": 2})
    config["report"] = {
        "sweep_epoch_sets": [[1, 2], [5, 6]],
        "sliding_window": 2,
        "sliding_stride": 2,
        "sliding_attack_epochs": 1,
    }
    config["options"]["show_progress"] = False
    return config


@pytest.fixture
def small_config_dict():
    return small_config()


@pytest.fixture
def write_config(tmp_path):
    """Write a config dict to a file and return its path."""
    def _write(config, name="config.json"):
        path = tmp_path / name
        path.write_bytes(orjson.dumps(config, option=orjson.OPT_INDENT_2))
        return str(path)
    return _write


@pytest.fixture
def small_config_file(small_config_dict, write_config):
    return write_config(copy.deepcopy(small_config_dict))


@pytest.fixture(autouse=True)
def no_output_dir_override(monkeypatch):
    monkeypatch.delenv("FLMIA_OUTPUT_DIR", raising=False)
    yield
