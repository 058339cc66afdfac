from dataclasses import dataclass, field
from typing import List

import numpy as np

from modules_script.m_errors import ConfigError, NumericError, ShapeError, StateError
from modules_script.m_layers import Arrays
from modules_script.m_network import Network


OPTIMIZER_KINDS = ("sgd", "adam")


@dataclass
class OptimizerState:
    kind: str
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.kind = self.kind.lower()
        if self.kind not in OPTIMIZER_KINDS:
            raise ConfigError(f"Unknown optimizer {self.kind!r}; expected one of {OPTIMIZER_KINDS}")
        if self.learning_rate < 0:
            raise ConfigError(f"Learning rate must be non-negative, got {self.learning_rate}")


def make_optimizer(kind: str, learning_rate: float) -> OptimizerState:
    return OptimizerState(kind=kind, learning_rate=learning_rate)


def _flatten_grads(net: Network, gradients: List[Arrays]) -> List[np.ndarray]:
    if len(gradients) != net.spec.depth:
        raise ShapeError(f"Expected gradients for {net.spec.depth} layers, got {len(gradients)}")

    flat = []
    for i, name, tensor in net.named_parameters():
        grad = gradients[i - 1].get(name)
        if grad is None or grad.shape != tensor.shape:
            raise ShapeError(f"Gradient for layer {i} {name} missing or mis-shaped")
        if not np.all(np.isfinite(grad)):
            raise NumericError(f"non-finite gradient for {name}", layer_index=i)
        flat.append(grad)
    return flat


def optimizer_step(opt: OptimizerState, net: Network, gradients: List[Arrays]) -> Network:
    """
    Apply one in-place update to the trainable parameters of ``net``.

    SGD: theta <- theta - lr * g.
    Adam: bias-corrected first/second moments, theta <- theta - lr * m_hat / (sqrt(v_hat) + eps).
    Batch-norm running statistics are not touched.
    """
    if net.frozen:
        raise StateError("Cannot update a frozen network")
    grads = _flatten_grads(net, gradients)
    params = net.parameters()
    opt.step_count += 1

    if opt.kind == "sgd":
        for tensor, grad in zip(params, grads):
            tensor.data -= opt.learning_rate * grad
        return net

    if not opt.m:
        opt.m = [np.zeros_like(g) for g in grads]
        opt.v = [np.zeros_like(g) for g in grads]

    bias1 = 1 - opt.beta1 ** opt.step_count
    bias2 = 1 - opt.beta2 ** opt.step_count
    for tensor, grad, m, v in zip(params, grads, opt.m, opt.v):
        m *= opt.beta1
        m += (1 - opt.beta1) * grad
        v *= opt.beta2
        v += (1 - opt.beta2) * grad * grad
        tensor.data -= opt.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + opt.eps)
    return net
