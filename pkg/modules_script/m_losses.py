from typing import Callable, Dict, Tuple

import numpy as np

from modules_script.m_errors import DataError, ShapeError


# Probability floor applied before the log of the true-class score
PROB_FLOOR = 1e-12


def _check_labels(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if scores.ndim != 2 or scores.shape[0] != labels.shape[0]:
        raise ShapeError(f"Scores of shape {scores.shape} do not align with {labels.shape[0]} labels")
    if labels.size and (labels.min() < 0 or labels.max() >= scores.shape[1]):
        raise DataError(f"Labels must lie in [0, {scores.shape[1]})")
    return labels


def cross_entropy_with_grad(scores: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Mean of -log(score of the true class) over post-softmax scores, and its
    gradient with respect to the scores. Scores under PROB_FLOOR are clamped,
    and the clamp has zero derivative.
    """
    labels = _check_labels(scores, labels)
    n = scores.shape[0]
    rows = np.arange(n)
    true_scores = scores[rows, labels]
    clamped = np.maximum(true_scores, PROB_FLOOR)
    loss = float(-np.log(clamped).mean())

    grad = np.zeros_like(scores)
    grad[rows, labels] = np.where(true_scores > PROB_FLOOR, -1.0 / (n * clamped), 0.0)
    return loss, grad


def mse_with_grad(predictions: np.ndarray, targets: np.ndarray) -> Tuple[float, np.ndarray]:
    targets = np.asarray(targets, dtype=np.float64)
    if predictions.shape != targets.shape:
        raise ShapeError(f"MSE shapes differ: {predictions.shape} vs {targets.shape}")
    diff = predictions - targets
    return float(np.mean(diff ** 2)), 2.0 * diff / diff.size


def loss_cross_entropy(scores: np.ndarray, labels: np.ndarray) -> float:
    return cross_entropy_with_grad(np.asarray(scores, dtype=np.float64), labels)[0]


def loss_mse(predictions: np.ndarray, targets: np.ndarray) -> float:
    return mse_with_grad(np.asarray(predictions, dtype=np.float64), targets)[0]


LOSSES: Dict[str, Callable[[np.ndarray, np.ndarray], Tuple[float, np.ndarray]]] = {
    "cross_entropy": cross_entropy_with_grad,
    "mse": mse_with_grad,
}


def get_loss(loss_kind: str) -> Callable[[np.ndarray, np.ndarray], Tuple[float, np.ndarray]]:
    if loss_kind not in LOSSES:
        raise ValueError(f"Unknown loss {loss_kind!r}; expected one of {sorted(LOSSES)}")
    return LOSSES[loss_kind]
