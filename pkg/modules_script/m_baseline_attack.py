"""
White-box baseline attack at desk scale.

The attack input of a labeled sample (x, y) concatenates, for every target model
in ascending epoch order, the loss gradient with respect to all trainable
parameters (layer order, then parameter order), the loss, and every layer's
output; the one-hot label e_y closes the vector. Its length is

    (d + 1 + sum(s(l))) * n_targets + m

with d trainable parameters, s(l) the output size of layer l and m classes.
A small convolutional regressor trained with MSE against membership in {0, 1}
classifies these vectors.
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from helper_script.progress_helper import progress
from modules_script.m_attack_fcn import AttackHyperparams, train_model
from modules_script.m_data_pipeline import AuxiliaryDataset, AuxiliarySplit
from modules_script.m_errors import CapabilityError, ConfigError, DataError
from modules_script.m_feature_extraction import BASELINE_KIND, FeatureMatrix
from modules_script.m_fl_sim import CheckpointTrace
from modules_script.m_layers import BatchNorm1D, Conv1D, Dense, Flatten, Layer, ReLU
from modules_script.m_losses import get_loss
from modules_script.m_network import Network, NetworkSpec
from setting import derive_seed


DEFAULT_BASELINE_HYPERPARAMS = AttackHyperparams(batch_size=16, learning_rate=0.001, epochs=30)


def baseline_input_size(d: int, layer_sizes: Sequence[int], n_targets: int, m: int) -> int:
    if d < 0 or m < 0 or any(s < 0 for s in layer_sizes):
        raise ConfigError("Baseline input sizes must be non-negative")
    if n_targets < 1:
        raise ConfigError("At least one target model is required")
    return (d + 1 + sum(layer_sizes)) * n_targets + m


@dataclass(frozen=True)
class BaselineInput:
    values: np.ndarray
    d: int
    layer_sizes: Tuple[int, ...]
    n_targets: int
    class_count: int

    @property
    def block_size(self) -> int:
        return self.d + 1 + sum(self.layer_sizes)

    @property
    def one_hot(self) -> np.ndarray:
        return self.values[self.values.size - self.class_count:]

    def epoch_block(self, k: int) -> Tuple[np.ndarray, float, np.ndarray]:
        """(gradients, loss, layer outputs) of the k-th target model."""
        block = self.values[k * self.block_size:(k + 1) * self.block_size]
        return block[:self.d], float(block[self.d]), block[self.d + 1:]


# MARK: Input construction

def _sample_blocks(work: Network, inputs: np.ndarray, labels: np.ndarray, out: np.ndarray) -> None:
    """Fill ``out[i]`` with the (gradients, loss, outputs) block of sample i for one snapshot."""
    loss_fn = get_loss("cross_entropy")
    taps = range(1, work.spec.depth + 1)
    for i in range(inputs.shape[0]):
        scores, tapped = work.forward(inputs[i:i + 1], taps=taps, record=True)
        loss, dscores = loss_fn(scores, labels[i:i + 1])
        grads = work.backward(dscores)

        pieces = [grads[layer - 1][name].reshape(-1) for layer, name, _ in work.named_parameters()]
        pieces.append(np.array([loss]))
        pieces += [tapped[layer].reshape(-1) for layer in taps]
        out[i] = np.concatenate(pieces)


def baseline_rows(trace: CheckpointTrace, inputs: np.ndarray, labels: np.ndarray, desc: Optional[str] = None) -> np.ndarray:
    """
    Attack vectors of a batch of labeled samples, as 32-bit rows.

    Gradients are taken per sample in eval mode on a private copy of each
    snapshot, so the trace itself is never touched.
    """
    if len(trace) == 0:
        raise DataError("Trace has no snapshots")
    spec = trace.spec
    m = spec.class_count
    labels = np.asarray(labels, dtype=np.int64)
    if m is None or labels.size and (labels.min() < 0 or labels.max() >= m):
        raise DataError(f"Labels must lie in [0, {m})")

    n = inputs.shape[0]
    block = spec.trainable_count() + 1 + sum(spec.layer_output_sizes())
    rows = np.zeros((n, block * len(trace) + m), dtype=np.float32)
    scratch = np.zeros((n, block))
    for k, snapshot in enumerate(progress(trace.models(), desc=desc, total=len(trace))):
        work = snapshot.copy().eval()
        _sample_blocks(work, np.asarray(inputs, dtype=np.float64), labels, scratch)
        rows[:, k * block:(k + 1) * block] = scratch
    rows[np.arange(n), block * len(trace) + labels] = 1.0
    return rows


def build_baseline_input(trace: CheckpointTrace, x: np.ndarray, y: Optional[int]) -> BaselineInput:
    if y is None:
        raise CapabilityError("The baseline input needs the sample's label")
    spec = trace.spec
    row = baseline_rows(trace, np.asarray(x, dtype=np.float64)[None, ...], np.array([y]))[0]
    return BaselineInput(row, spec.trainable_count(), tuple(spec.layer_output_sizes()), len(trace), spec.class_count)


def build_baseline_split(trace: CheckpointTrace, split: AuxiliarySplit, class_count: Optional[int] = None) -> FeatureMatrix:
    if split.labels is None:
        raise CapabilityError("baseline features need labels, the auxiliary dataset has none")
    rows = baseline_rows(trace, split.inputs, split.labels, desc=f"Baseline inputs ({split.name})")
    return FeatureMatrix(BASELINE_KIND, split.sample_ids, split.members, rows, trace.epochs, split.name, class_count)


def build_baseline_features(trace: CheckpointTrace, auxiliary: AuxiliaryDataset, split: str = "attack_train") -> FeatureMatrix:
    if not auxiliary.labels_available:
        raise CapabilityError("baseline features need labels, the auxiliary dataset has none")
    return build_baseline_split(trace, auxiliary.split(split), auxiliary.class_count)


# MARK: Attack network

def baseline_network_spec(input_len: int, conv_channels: Sequence[int] = (8, 4), kernels: Sequence[int] = (5, 3)) -> NetworkSpec:
    """Two Conv1D/BatchNorm1D/ReLU blocks over the 1-channel input, then a normalized Dense regressor."""
    if len(conv_channels) != 2 or len(kernels) != 2:
        raise ConfigError("The baseline network has exactly two convolution blocks")
    layers: List[Layer] = []
    in_channels = 1
    for out_channels, kernel in zip(conv_channels, kernels):
        layers += [Conv1D(in_channels, int(out_channels), int(kernel), padding="same"), BatchNorm1D(int(out_channels)), ReLU()]
        in_channels = int(out_channels)
    flat = in_channels * input_len
    layers += [Flatten(), BatchNorm1D(flat), Dense(flat, 1)]
    return NetworkSpec(layers, (1, input_len))


def build_baseline_network(input_len: int, conv_channels: Sequence[int] = (8, 4), kernels: Sequence[int] = (5, 3), seed: int = 0) -> Network:
    return Network(baseline_network_spec(input_len, conv_channels, kernels), seed=seed)


def train_baseline_attack(
    features: FeatureMatrix,
    hp: AttackHyperparams = DEFAULT_BASELINE_HYPERPARAMS,
    conv_channels: Sequence[int] = (8, 4),
    kernels: Sequence[int] = (5, 3),
) -> Tuple[Network, List[float]]:
    """MSE regression onto membership; evaluate with m_attack_fcn.evaluate_accuracy."""
    net = build_baseline_network(features.width, conv_channels, kernels, seed=derive_seed(hp.seed, "init"))
    return train_model(net, features, "mse", hp, desc="Baseline attack")
