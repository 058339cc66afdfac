"""
Mini-batch training loop shared by the FL clients and both attack models.
"""
from typing import Callable, List, Optional

import numpy as np

from helper_script.progress_helper import progress
from modules_script.m_errors import DataError
from modules_script.m_layers import Conv1D
from modules_script.m_network import Network, NetworkSpec, compute_gradients
from modules_script.m_optimizer import OptimizerState, optimizer_step


def run_epoch(
    net: Network,
    inputs: np.ndarray,
    targets: np.ndarray,
    loss_kind: str,
    optimizer: OptimizerState,
    batch_size: int,
    rng: np.random.Generator,
) -> float:
    """One shuffled pass over the data; returns the sample-weighted mean loss."""
    n = inputs.shape[0]
    if n == 0:
        raise DataError("Cannot train on an empty dataset")

    net.train()
    order = rng.permutation(n)
    total = 0.0
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        loss, grads = compute_gradients(net, inputs[idx], targets[idx], loss_kind)
        optimizer_step(optimizer, net, grads)
        total += loss * idx.size
    return total / n


def fit(
    net: Network,
    inputs: np.ndarray,
    targets: np.ndarray,
    loss_kind: str,
    optimizer: OptimizerState,
    epochs: int,
    batch_size: int,
    seed: int,
    learning_rate_for_epoch: Optional[Callable[[int], float]] = None,
    desc: Optional[str] = None,
) -> List[float]:
    """Train for ``epochs`` passes and return the mean loss of each epoch."""
    rng = np.random.default_rng(seed)
    history = []
    bar = progress(range(1, epochs + 1), desc=desc, total=epochs)
    for epoch in bar:
        if learning_rate_for_epoch is not None:
            optimizer.learning_rate = learning_rate_for_epoch(epoch)
        loss = run_epoch(net, inputs, targets, loss_kind, optimizer, batch_size, rng)
        history.append(loss)
        bar.set_postfix(loss=f"{loss:.4f}")
    net.eval()
    return history


# Largest layer buffer, in float64 values, one prediction chunk may allocate
PREDICT_CHUNK_VALUES = 1 << 22
MAX_PREDICT_ROWS = 1024


def rows_per_chunk(spec: NetworkSpec, budget: int = PREDICT_CHUNK_VALUES) -> int:
    """Rows per forward chunk such that the widest layer buffer, Conv1D im2col included, fits ``budget``."""
    shape = spec.input_shape
    widest = int(np.prod(shape))
    for layer in spec.layers:
        out = layer.output_shape(shape)
        widest = max(widest, int(np.prod(out)))
        if isinstance(layer, Conv1D):
            widest = max(widest, layer.in_channels * layer.kernel * out[1])
        shape = out
    return int(min(MAX_PREDICT_ROWS, max(1, budget // widest)))


def predict(net: Network, inputs: np.ndarray, batch_size: Optional[int] = None) -> np.ndarray:
    """Eval-mode scores for every row, computed in chunks of ``rows_per_chunk`` rows unless given."""
    if inputs.shape[0] == 0:
        raise DataError("Nothing to predict")
    batch_size = batch_size or rows_per_chunk(net.spec)
    net.eval()
    chunks = [net.forward(inputs[i:i + batch_size])[0] for i in range(0, inputs.shape[0], batch_size)]
    return np.concatenate(chunks, axis=0)


def classification_accuracy(net: Network, inputs: np.ndarray, labels: np.ndarray) -> float:
    scores = predict(net, inputs)
    return float(np.mean(np.argmax(scores, axis=1) == labels))
