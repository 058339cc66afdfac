"""
Feed-forward networks built from m_layers descriptors.

``NetworkSpec`` is the architecture (shared by every snapshot of a trace) and
``Network`` owns one set of parameters and batch-norm running statistics.
Layer indices exposed to callers are 1-based, so ``taps`` and error messages
refer to layers 1..L.
"""
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from modules_script.m_errors import ConfigError, NumericError, ShapeError, StateError
from modules_script.m_layers import (
    Arrays,
    Dense,
    Layer,
    ReLU,
    Shape,
    Softmax,
    Tensor,
    layer_from_descriptor,
)
from modules_script.m_losses import get_loss


TRAIN = "train"
EVAL = "eval"


@dataclass(frozen=True)
class NetworkSpec:
    layers: Tuple[Layer, ...]
    input_shape: Shape
    class_count: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        if len(self.layers) == 0:
            raise ConfigError("A network needs at least one layer")

        shapes = self.layer_shapes()
        if self.class_count is not None:
            width = shapes[-1]
            if len(width) != 1 or width[0] != self.class_count:
                raise ConfigError(f"Final layer width {width} does not match class count {self.class_count}")

    @property
    def depth(self) -> int:
        return len(self.layers)

    def layer_shapes(self, input_shape: Optional[Shape] = None) -> List[Shape]:
        shape = tuple(input_shape) if input_shape is not None else self.input_shape
        shapes = []
        for i, layer in enumerate(self.layers, start=1):
            try:
                shape = layer.output_shape(shape)
            except ShapeError as e:
                raise ConfigError(f"Layer {i} ({layer.kind}) does not compose: {e}") from e
            shapes.append(shape)
        return shapes

    def layer_output_sizes(self) -> List[int]:
        """s(l): number of output values of each layer for one sample."""
        return [int(np.prod(shape)) for shape in self.layer_shapes()]

    def trainable_count(self) -> int:
        return sum(layer.trainable_count() for layer in self.layers)

    def param_count(self) -> int:
        return sum(layer.param_count() for layer in self.layers)

    def with_input_shape(self, input_shape: Shape) -> "NetworkSpec":
        return NetworkSpec(self.layers, input_shape, self.class_count)

    def to_descriptor(self) -> Dict[str, Any]:
        return {
            "layers": [layer.to_descriptor() for layer in self.layers],
            "input_shape": list(self.input_shape),
            "class_count": self.class_count,
        }

    @staticmethod
    def from_descriptor(descriptor: Dict[str, Any]) -> "NetworkSpec":
        try:
            layers = [layer_from_descriptor(d) for d in descriptor["layers"]]
            return NetworkSpec(layers, tuple(descriptor["input_shape"]), descriptor.get("class_count"))
        except (KeyError, TypeError) as e:
            raise ConfigError(f"Invalid network descriptor: {e}") from e


def mlp_spec(input_dim: int, hidden: Sequence[int], class_count: int) -> NetworkSpec:
    """Dense/ReLU stack ending in a softmax over ``class_count`` classes."""
    layers: List[Layer] = []
    width = input_dim
    for h in hidden:
        layers += [Dense(width, h), ReLU()]
        width = h
    layers += [Dense(width, class_count), Softmax()]
    return NetworkSpec(layers, (input_dim,), class_count)


class Network:
    def __init__(
        self,
        spec: NetworkSpec,
        seed: int = 0,
        params: Optional[List[Arrays]] = None,
        state: Optional[List[Arrays]] = None,
    ):
        self.spec = spec
        self.mode = TRAIN
        self.frozen = False
        self._tape: Optional[List[Any]] = None

        rng = np.random.default_rng(seed)
        if params is None:
            params = [layer.init_params(rng) for layer in spec.layers]
        if state is None:
            state = [layer.init_state() for layer in spec.layers]

        self.params: List[Dict[str, Tensor]] = []
        self.state: List[Arrays] = []
        for i, layer in enumerate(spec.layers):
            layer_params = {}
            for name, shape in layer.param_shapes().items():
                value = np.array(params[i][name], dtype=np.float64)
                if value.shape != shape:
                    raise ShapeError(f"Layer {i + 1} {name}: expected shape {shape}, got {value.shape}")
                layer_params[name] = Tensor(value)
            self.params.append(layer_params)
            self.state.append({name: np.array(state[i][name], dtype=np.float64) for name in layer.state_shapes()})

    # MARK: Modes
    def train(self) -> "Network":
        if self.frozen:
            raise StateError("A frozen network cannot enter train mode")
        self.mode = TRAIN
        return self

    def eval(self) -> "Network":
        self.mode = EVAL
        return self

    def freeze(self) -> "Network":
        """Eval mode with read-only arrays; used for trace snapshots and trained attack models."""
        self.eval()
        for array in self.stored_arrays():
            array.flags.writeable = False
        self.frozen = True
        return self

    def copy(self) -> "Network":
        """Independent, writable copy in the same mode (train if the source was frozen)."""
        clone = Network(
            self.spec,
            params=[{k: t.data for k, t in layer.items()} for layer in self.params],
            state=self.state,
        )
        clone.mode = TRAIN if self.frozen else self.mode
        return clone

    # MARK: Parameter access
    def parameters(self) -> List[Tensor]:
        return [tensor for layer in self.params for tensor in layer.values()]

    def named_parameters(self) -> Iterable[Tuple[int, str, Tensor]]:
        for i, layer in enumerate(self.params, start=1):
            for name, tensor in layer.items():
                yield i, name, tensor

    def stored_arrays(self) -> List[np.ndarray]:
        """Every stored value, per layer: trainable parameters then running statistics."""
        arrays = []
        for layer_params, layer_state in zip(self.params, self.state):
            arrays += [t.data for t in layer_params.values()]
            arrays += list(layer_state.values())
        return arrays

    def param_count(self) -> int:
        return sum(a.size for a in self.stored_arrays())

    def flat_parameters(self) -> np.ndarray:
        return np.concatenate([a.reshape(-1) for a in self.stored_arrays()])

    # MARK: Computation
    def _check_input(self, batch: np.ndarray) -> np.ndarray:
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim != len(self.spec.input_shape) + 1 or batch.shape[1:] != self.spec.input_shape:
            raise ShapeError(f"Expected batch of shape (n, {', '.join(map(str, self.spec.input_shape))}), got {batch.shape}")
        if batch.shape[0] == 0:
            raise ShapeError("Empty batch")
        return batch

    def forward(self, batch: np.ndarray, taps: Iterable[int] = (), record: bool = False) -> Tuple[np.ndarray, Dict[int, np.ndarray]]:
        """
        Run the batch through every layer.

        Parameters
        ----------
        batch : np.ndarray
            Shape (n, *spec.input_shape).
        taps : Iterable[int]
            1-based layer indices whose outputs are returned.
        record : bool
            Keep the per-layer caches for a following ``backward``.

        Returns
        -------
        Tuple[np.ndarray, Dict[int, np.ndarray]]
            Final-layer output and the tapped layer outputs.
        """
        x = self._check_input(batch)
        taps = set(taps)
        if not taps <= set(range(1, self.spec.depth + 1)):
            raise ShapeError(f"Taps {sorted(taps)} outside layers 1..{self.spec.depth}")

        train = self.mode == TRAIN
        tapped: Dict[int, np.ndarray] = {}
        tape = []
        for i, layer in enumerate(self.spec.layers, start=1):
            arrays = {k: t.data for k, t in self.params[i - 1].items()}
            x, cache = layer.forward(x, arrays, self.state[i - 1], train)
            if not np.all(np.isfinite(x)):
                raise NumericError(f"non-finite output of {layer.kind}", layer_index=i)
            if record:
                tape.append(cache)
            if i in taps:
                tapped[i] = x

        if record:
            self._tape = tape
        return x, tapped

    def backward(self, dscores: np.ndarray) -> List[Arrays]:
        """Back-propagate d(loss)/d(scores); fills ``Tensor.grad`` and returns the gradients per layer."""
        if self._tape is None:
            raise StateError("backward called without a recorded forward pass")
        tape, self._tape = self._tape, None

        grads: List[Arrays] = [dict() for _ in self.spec.layers]
        dout = dscores
        for i in range(self.spec.depth - 1, -1, -1):
            layer = self.spec.layers[i]
            arrays = {k: t.data for k, t in self.params[i].items()}
            dout, grads[i] = layer.backward(dout, tape[i], arrays)
            for name, tensor in self.params[i].items():
                tensor.grad = grads[i][name]
        return grads

    def __repr__(self) -> str:
        kinds = ", ".join(layer.kind for layer in self.spec.layers)
        return f"Network([{kinds}], values={self.param_count()}, mode={self.mode})"


def compute_gradients(net: Network, batch: np.ndarray, targets: np.ndarray, loss_kind: str = "cross_entropy") -> Tuple[float, List[Arrays]]:
    """Forward (recorded), loss and backward in the network's current mode."""
    loss_fn = get_loss(loss_kind)
    scores, _ = net.forward(batch, record=True)
    loss, dscores = loss_fn(scores, targets)
    return loss, net.backward(dscores)

