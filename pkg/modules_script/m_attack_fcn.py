"""
Membership classifier over score trajectories, and the accuracy evaluation
shared with the baseline attack.

The network is a fully-convolutional time-series classifier: three
Conv1D/BatchNorm1D/ReLU blocks with "same" padding, global average pooling over
time and a Dense head with a softmax over {non-member, member}. Because of the
pooling, its size does not depend on the trajectory length.
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from modules_script.m_errors import ConfigError, DataError, ShapeError
from modules_script.m_feature_extraction import FeatureMatrix
from modules_script.m_layers import BatchNorm1D, Conv1D, Dense, GlobalAvgPool1D, Layer, ReLU, Softmax
from modules_script.m_network import Network, NetworkSpec
from modules_script.m_optimizer import make_optimizer
from modules_script.m_training import fit, predict
from setting import derive_seed


NON_MEMBER = 0
MEMBER = 1
DECISION_THRESHOLD = 0.5


@dataclass(frozen=True)
class AttackFCNSpec:
    input_len: int
    channels: Tuple[int, int, int] = (128, 256, 128)
    kernels: Tuple[int, int, int] = (8, 5, 3)

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        object.__setattr__(self, "kernels", tuple(int(k) for k in self.kernels))
        if self.input_len < 1:
            raise ConfigError(f"Attack input length must be positive, got {self.input_len}")
        if len(self.channels) != 3 or len(self.kernels) != 3:
            raise ConfigError("The attack FCN has exactly three convolution blocks")
        if min(self.channels) < 1 or min(self.kernels) < 1:
            raise ConfigError(f"Invalid attack FCN channels {self.channels} / kernels {self.kernels}")

    def to_network_spec(self) -> NetworkSpec:
        layers: List[Layer] = []
        in_channels = 1
        for out_channels, kernel in zip(self.channels, self.kernels):
            layers += [Conv1D(in_channels, out_channels, kernel, padding="same"), BatchNorm1D(out_channels), ReLU()]
            in_channels = out_channels
        layers += [GlobalAvgPool1D(), Dense(in_channels, 2), Softmax()]
        return NetworkSpec(layers, (1, self.input_len), class_count=2)


@dataclass(frozen=True)
class AttackHyperparams:
    optimizer: str = "adam"
    batch_size: int = 100
    learning_rate: float = 0.001
    epochs: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1 or self.learning_rate <= 0:
            raise ConfigError(f"Attack hyperparameters must be positive, got {self}")
        make_optimizer(self.optimizer, self.learning_rate)


@dataclass(frozen=True)
class AttackEvaluation:
    accuracy: float
    true_positive: int
    false_positive: int
    true_negative: int
    false_negative: int

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "confusion": {
                "true_positive": self.true_positive,
                "false_positive": self.false_positive,
                "true_negative": self.true_negative,
                "false_negative": self.false_negative,
            },
        }


def build_attack_fcn(
    input_len: int,
    channels: Optional[Sequence[int]] = None,
    kernels: Optional[Sequence[int]] = None,
    seed: int = 0,
) -> Network:
    spec = AttackFCNSpec(
        input_len,
        tuple(channels) if channels is not None else AttackFCNSpec.channels,
        tuple(kernels) if kernels is not None else AttackFCNSpec.kernels,
    )
    return Network(spec.to_network_spec(), seed=seed)


# MARK: Training

def as_series(rows: np.ndarray) -> np.ndarray:
    """(n, k) feature rows as a batch of 1-channel series (n, 1, k)."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim == 1:
        rows = rows[None, :]
    return rows[:, None, :]


def check_both_classes(members: np.ndarray) -> None:
    if members.size == 0:
        raise DataError("Attack training set is empty")
    if members.all() or not members.any():
        raise DataError("Attack training set needs both members and non-members")


def train_model(net: Network, features: FeatureMatrix, loss_kind: str, hp: AttackHyperparams, desc: str) -> Tuple[Network, List[float]]:
    """Fit ``net`` to the feature rows and return it frozen with its per-epoch losses."""
    check_both_classes(features.members)
    if (1, features.width) != net.spec.input_shape:
        raise ShapeError(f"Feature rows of width {features.width} do not fit input shape {net.spec.input_shape}")

    targets = features.members.astype(np.int64)
    if loss_kind == "mse":
        targets = targets.astype(np.float64).reshape(-1, 1)
    optimizer = make_optimizer(hp.optimizer, hp.learning_rate)
    history = fit(
        net, as_series(features.rows), targets, loss_kind, optimizer,
        epochs=hp.epochs, batch_size=hp.batch_size, seed=derive_seed(hp.seed, "shuffle"), desc=desc,
    )
    return net.freeze(), history


def train_attack(
    features: FeatureMatrix,
    hp: AttackHyperparams = AttackHyperparams(),
    channels: Optional[Sequence[int]] = None,
    kernels: Optional[Sequence[int]] = None,
) -> Tuple[Network, List[float]]:
    """
    Train the FCN on attack_train trajectories with cross-entropy.

    Returns
    -------
    Tuple[Network, List[float]]
        The frozen attack model and the mean training loss of each epoch.
    """
    net = build_attack_fcn(features.width, channels, kernels, seed=derive_seed(hp.seed, "init"))
    return train_model(net, features, "cross_entropy", hp, desc=f"Attack FCN ({features.kind})")


# MARK: Prediction & evaluation

def member_probabilities(model: Network, rows: np.ndarray) -> np.ndarray:
    """
    Member probability per row. Two-class softmax heads give the member score;
    single-output regressors (the MSE baseline) are clipped to [0, 1].
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim == 1:
        rows = rows[None, :]
    if (1, rows.shape[1]) != model.spec.input_shape:
        raise ShapeError(f"Rows of length {rows.shape[1]} do not fit attack input shape {model.spec.input_shape}")

    scores = predict(model, rows[:, None, :])
    if scores.shape[1] == 2:
        return scores[:, MEMBER]
    return np.clip(scores[:, 0], 0.0, 1.0)


def predict_membership(model: Network, row: np.ndarray) -> float:
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1:
        raise ShapeError(f"Expected one feature row, got shape {row.shape}")
    return float(member_probabilities(model, row)[0])


def score_decisions(decisions: np.ndarray, members: np.ndarray) -> AttackEvaluation:
    decisions = np.asarray(decisions, dtype=bool).reshape(-1)
    members = np.asarray(members, dtype=bool).reshape(-1)
    if decisions.shape != members.shape:
        raise ShapeError(f"{decisions.size} decisions for {members.size} labels")
    if members.size == 0:
        raise DataError("Cannot evaluate on an empty test set")

    tp = int(np.sum(decisions & members))
    fp = int(np.sum(decisions & ~members))
    tn = int(np.sum(~decisions & ~members))
    fn = int(np.sum(~decisions & members))
    return AttackEvaluation((tp + tn) / members.size, tp, fp, tn, fn)


def evaluate_accuracy(model: Network, features: FeatureMatrix) -> AttackEvaluation:
    decisions = member_probabilities(model, features.rows) >= DECISION_THRESHOLD
    return score_decisions(decisions, features.members)
