from typing import Sequence

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt # type: ignore
import numpy as np

from modules_script.m_errors import DataError
from modules_script.m_feature_extraction import FeatureMatrix


# Fixed salt and no date metadata: identical inputs give identical SVG bytes
matplotlib.rcParams["svg.hashsalt"] = "flmia"
matplotlib.rcParams["svg.fonttype"] = "none"
SVG_METADATA = {"Date": None}


def _save(path: str) -> None:
    plt.tight_layout()
    plt.savefig(path, format="svg", metadata=SVG_METADATA)
    plt.close()


def plot_accuracy_over_time(
    path: str,
    rounds: Sequence[int],
    train_acc: Sequence[float],
    test_acc: Sequence[float],
    window_ends: Sequence[int],
    attack_acc: Sequence[float],
    window: int,
) -> None:
    """Attack accuracy over sliding windows next to the target model's train/test accuracy."""
    if len(rounds) == 0 or len(window_ends) == 0:
        raise DataError("Nothing to plot: empty accuracy log or no sliding-window results")
    if len(rounds) != len(train_acc) or len(rounds) != len(test_acc) or len(window_ends) != len(attack_acc):
        raise DataError("Plot series lengths differ")

    plt.figure(figsize=(8, 4))
    plt.plot(window_ends, attack_acc, marker="o", label=f"attack accuracy (window of {window} epochs)")
    plt.plot(rounds, train_acc, label="client train accuracy")
    plt.plot(rounds, test_acc, label="client test accuracy")
    plt.ylim(0.0, 1.05)
    plt.xlabel("epoch t")
    plt.ylabel("accuracy")
    plt.grid(linestyle="--", alpha=0.35)
    plt.legend(loc="lower right")
    _save(path)


def plot_member_gap(path: str, features: FeatureMatrix) -> None:
    """Mean trajectory of members and of non-members."""
    if len(features) == 0 or features.width == 0:
        raise DataError("Nothing to plot: empty feature matrix")
    if features.members.all() or not features.members.any():
        raise DataError("Member gap plot needs both members and non-members")

    epochs = features.epochs if len(features.epochs) == features.width else list(range(1, features.width + 1))
    member_mean = features.rows[features.members].mean(axis=0)
    nonmember_mean = features.rows[~features.members].mean(axis=0)

    plt.figure(figsize=(8, 4))
    plt.plot(epochs, member_mean, marker="o", label="members")
    plt.plot(epochs, nonmember_mean, marker="s", label="non-members")
    plt.xlabel("epoch t")
    plt.ylabel(f"mean {features.kind.replace('_', ' ')} value")
    plt.xticks(epochs)
    plt.grid(linestyle="--", alpha=0.35)
    plt.legend()
    _save(path)


def member_gap(features: FeatureMatrix) -> np.ndarray:
    """Per-epoch difference between the member and non-member mean feature value."""
    return features.rows[features.members].mean(axis=0) - features.rows[~features.members].mean(axis=0)
