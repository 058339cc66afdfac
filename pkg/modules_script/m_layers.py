"""
Layer descriptors of the feed-forward engine.

A layer is a frozen description (sizes, kernel, eps, ...) plus pure functions:
``forward(x, params, state, train) -> (out, cache)`` and
``backward(dout, cache, params) -> (dx, grads)``. Parameters and running
statistics live in the owning Network, never in the layer, so one spec can be
shared by every snapshot of a trace.

Shapes exclude the batch axis: dense data is ``(features,)`` and series data is
``(channels, length)``.
"""
from dataclasses import asdict, dataclass
from typing import Any, ClassVar, Dict, Optional, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import softmax as scipy_softmax

from modules_script.m_errors import ConfigError, ShapeError


Shape = Tuple[int, ...]
Arrays = Dict[str, np.ndarray]


@dataclass
class Tensor:
    """Row-major 64-bit array with an optional gradient of the same size."""
    data: np.ndarray
    grad: Optional[np.ndarray] = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.grad is not None and self.grad.size != self.data.size:
            raise ShapeError(f"Gradient size {self.grad.size} does not match data size {self.data.size}")

    @property
    def shape(self) -> Shape:
        return tuple(self.data.shape)

    @property
    def size(self) -> int:
        return int(self.data.size)


def glorot_uniform(rng: np.random.Generator, shape: Shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    kind: ClassVar[str] = "Layer"

    def output_shape(self, in_shape: Shape) -> Shape:
        return in_shape

    def param_shapes(self) -> Dict[str, Shape]:
        return {}

    def state_shapes(self) -> Dict[str, Shape]:
        return {}

    def init_params(self, rng: np.random.Generator) -> Arrays:
        return {}

    def init_state(self) -> Arrays:
        return {}

    def forward(self, x: np.ndarray, params: Arrays, state: Arrays, train: bool) -> Tuple[np.ndarray, Any]:
        raise NotImplementedError

    def backward(self, dout: np.ndarray, cache: Any, params: Arrays) -> Tuple[np.ndarray, Arrays]:
        raise NotImplementedError

    def trainable_count(self) -> int:
        return sum(int(np.prod(s)) for s in self.param_shapes().values())

    def param_count(self) -> int:
        """Trainable values plus stored running statistics."""
        return self.trainable_count() + sum(int(np.prod(s)) for s in self.state_shapes().values())

    def macs(self, in_shape: Shape) -> int:
        return 0

    def to_descriptor(self) -> Dict[str, Any]:
        return {"type": self.kind, **asdict(self)}

    def _expect_ndim(self, x: np.ndarray, ndims: Tuple[int, ...]) -> None:
        if x.ndim not in ndims:
            raise ShapeError(f"{self.kind} expects a {' or '.join(str(n) for n in ndims)}-d batch, got shape {x.shape}")


# MARK: Parametric layers

@dataclass(frozen=True)
class Dense(Layer):
    kind: ClassVar[str] = "Dense"
    in_features: int
    out_features: int

    def __post_init__(self):
        if self.in_features < 1 or self.out_features < 1:
            raise ConfigError(f"Dense sizes must be positive, got {self.in_features}->{self.out_features}")

    def output_shape(self, in_shape: Shape) -> Shape:
        if in_shape != (self.in_features,):
            raise ShapeError(f"Dense({self.in_features}->{self.out_features}) cannot take input shape {in_shape}")
        return (self.out_features,)

    def param_shapes(self) -> Dict[str, Shape]:
        return {"weight": (self.out_features, self.in_features), "bias": (self.out_features,)}

    def init_params(self, rng: np.random.Generator) -> Arrays:
        return {
            "weight": glorot_uniform(rng, (self.out_features, self.in_features), self.in_features, self.out_features),
            "bias": np.zeros(self.out_features),
        }

    def forward(self, x, params, state, train):
        self._expect_ndim(x, (2,))
        return x @ params["weight"].T + params["bias"], x

    def backward(self, dout, cache, params):
        x = cache
        grads = {"weight": dout.T @ x, "bias": dout.sum(axis=0)}
        return dout @ params["weight"], grads

    def macs(self, in_shape: Shape) -> int:
        return self.in_features * self.out_features


@dataclass(frozen=True)
class Conv1D(Layer):
    """Stride-1 cross-correlation; ``padding`` is "same" (zeros) or an int per side."""
    kind: ClassVar[str] = "Conv1D"
    in_channels: int
    out_channels: int
    kernel: int
    padding: Union[str, int] = "same"

    def __post_init__(self):
        if min(self.in_channels, self.out_channels, self.kernel) < 1:
            raise ConfigError(f"Conv1D channels and kernel must be positive, got {self}")
        if self.padding != "same" and (not isinstance(self.padding, int) or self.padding < 0):
            raise ConfigError(f"Conv1D padding must be 'same' or a non-negative int, got {self.padding!r}")

    def pads(self) -> Tuple[int, int]:
        if self.padding == "same":
            left = (self.kernel - 1) // 2
            return left, self.kernel - 1 - left
        return self.padding, self.padding

    def output_shape(self, in_shape: Shape) -> Shape:
        if len(in_shape) != 2 or in_shape[0] != self.in_channels:
            raise ShapeError(f"Conv1D expects ({self.in_channels}, length) input, got {in_shape}")
        padded = in_shape[1] + sum(self.pads())
        if self.kernel > padded:
            raise ShapeError(f"Conv1D kernel {self.kernel} larger than padded input length {padded}")
        return (self.out_channels, padded - self.kernel + 1)

    def param_shapes(self) -> Dict[str, Shape]:
        return {"weight": (self.out_channels, self.in_channels, self.kernel), "bias": (self.out_channels,)}

    def init_params(self, rng: np.random.Generator) -> Arrays:
        shape = (self.out_channels, self.in_channels, self.kernel)
        return {
            "weight": glorot_uniform(rng, shape, self.in_channels * self.kernel, self.out_channels * self.kernel),
            "bias": np.zeros(self.out_channels),
        }

    def forward(self, x, params, state, train):
        self._expect_ndim(x, (3,))
        n, _, length = x.shape
        out_len = self.output_shape(x.shape[1:])[1]
        left, right = self.pads()
        xp = np.pad(x, ((0, 0), (0, 0), (left, right)))

        # (n, c, out_len, k) -> rows of receptive fields
        windows = sliding_window_view(xp, self.kernel, axis=2)
        cols = windows.transpose(0, 2, 1, 3).reshape(n * out_len, self.in_channels * self.kernel)
        w_mat = params["weight"].reshape(self.out_channels, -1)
        out = cols @ w_mat.T + params["bias"]
        out = out.reshape(n, out_len, self.out_channels).transpose(0, 2, 1)
        return np.ascontiguousarray(out), (cols, length, out_len)

    def backward(self, dout, cache, params):
        cols, length, out_len = cache
        n = dout.shape[0]
        left, right = self.pads()
        d2 = dout.transpose(0, 2, 1).reshape(n * out_len, self.out_channels)
        w_mat = params["weight"].reshape(self.out_channels, -1)
        grads = {
            "weight": (d2.T @ cols).reshape(self.out_channels, self.in_channels, self.kernel),
            "bias": d2.sum(axis=0),
        }

        dcols = (d2 @ w_mat).reshape(n, out_len, self.in_channels, self.kernel)
        dxp = np.zeros((n, self.in_channels, length + left + right))
        for j in range(self.kernel):
            dxp[:, :, j:j + out_len] += dcols[:, :, :, j].transpose(0, 2, 1)
        return dxp[:, :, left:left + length], grads

    def macs(self, in_shape: Shape) -> int:
        out_len = self.output_shape(in_shape)[1]
        return out_len * self.out_channels * self.in_channels * self.kernel


@dataclass(frozen=True)
class BatchNorm1D(Layer):
    """Normalizes per channel over the batch (and length axis for series input)."""
    kind: ClassVar[str] = "BatchNorm1D"
    channels: int
    eps: float = 1e-5
    momentum: float = 0.1

    def __post_init__(self):
        if self.channels < 1 or self.eps <= 0 or not 0 < self.momentum <= 1:
            raise ConfigError(f"Invalid BatchNorm1D settings: {self}")

    def output_shape(self, in_shape: Shape) -> Shape:
        if len(in_shape) not in (1, 2) or in_shape[0] != self.channels:
            raise ShapeError(f"BatchNorm1D({self.channels}) cannot take input shape {in_shape}")
        return in_shape

    def param_shapes(self) -> Dict[str, Shape]:
        return {"gamma": (self.channels,), "beta": (self.channels,)}

    def state_shapes(self) -> Dict[str, Shape]:
        return {"running_mean": (self.channels,), "running_var": (self.channels,)}

    def init_params(self, rng: np.random.Generator) -> Arrays:
        return {"gamma": np.ones(self.channels), "beta": np.zeros(self.channels)}

    def init_state(self) -> Arrays:
        return {"running_mean": np.zeros(self.channels), "running_var": np.ones(self.channels)}

    @staticmethod
    def _axes(x: np.ndarray) -> Tuple[int, ...]:
        return (0,) if x.ndim == 2 else (0, 2)

    @staticmethod
    def _channel_view(values: np.ndarray, ndim: int) -> np.ndarray:
        return values.reshape((1, -1) if ndim == 2 else (1, -1, 1))

    def forward(self, x, params, state, train):
        self._expect_ndim(x, (2, 3))
        axes = self._axes(x)
        if train:
            count = int(np.prod([x.shape[a] for a in axes]))
            mean = x.mean(axis=axes, keepdims=True)
            var = x.var(axis=axes, keepdims=True)
            unbiased = var * count / (count - 1) if count > 1 else var
            state["running_mean"] *= 1 - self.momentum
            state["running_mean"] += self.momentum * mean.reshape(-1)
            state["running_var"] *= 1 - self.momentum
            state["running_var"] += self.momentum * unbiased.reshape(-1)
        else:
            mean = self._channel_view(state["running_mean"], x.ndim)
            var = self._channel_view(state["running_var"], x.ndim)

        inv_std = 1.0 / np.sqrt(var + self.eps)
        x_hat = (x - mean) * inv_std
        gamma = self._channel_view(params["gamma"], x.ndim)
        beta = self._channel_view(params["beta"], x.ndim)
        return gamma * x_hat + beta, (x_hat, inv_std, axes, train)

    def backward(self, dout, cache, params):
        x_hat, inv_std, axes, train = cache
        gamma = self._channel_view(params["gamma"], dout.ndim)
        grads = {"gamma": (dout * x_hat).sum(axis=axes), "beta": dout.sum(axis=axes)}
        dx_hat = dout * gamma
        if not train:
            return dx_hat * inv_std, grads

        count = int(np.prod([dout.shape[a] for a in axes]))
        dx = (inv_std / count) * (
            count * dx_hat
            - dx_hat.sum(axis=axes, keepdims=True)
            - x_hat * (dx_hat * x_hat).sum(axis=axes, keepdims=True)
        )
        return dx, grads


# MARK: Parameter-free layers

@dataclass(frozen=True)
class ReLU(Layer):
    kind: ClassVar[str] = "ReLU"

    def forward(self, x, params, state, train):
        mask = x > 0
        return np.where(mask, x, 0.0), mask

    def backward(self, dout, cache, params):
        return dout * cache, {}


@dataclass(frozen=True)
class GlobalAvgPool1D(Layer):
    kind: ClassVar[str] = "GlobalAvgPool1D"

    def output_shape(self, in_shape: Shape) -> Shape:
        if len(in_shape) != 2:
            raise ShapeError(f"GlobalAvgPool1D expects (channels, length) input, got {in_shape}")
        return (in_shape[0],)

    def forward(self, x, params, state, train):
        self._expect_ndim(x, (3,))
        return x.mean(axis=2), x.shape[2]

    def backward(self, dout, cache, params):
        length = cache
        return np.repeat(dout[:, :, None] / length, length, axis=2), {}


@dataclass(frozen=True)
class Flatten(Layer):
    kind: ClassVar[str] = "Flatten"

    def output_shape(self, in_shape: Shape) -> Shape:
        return (int(np.prod(in_shape)),)

    def forward(self, x, params, state, train):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dout, cache, params):
        return dout.reshape(cache), {}


@dataclass(frozen=True)
class Softmax(Layer):
    kind: ClassVar[str] = "Softmax"

    def output_shape(self, in_shape: Shape) -> Shape:
        if len(in_shape) != 1:
            raise ShapeError(f"Softmax expects flat input, got {in_shape}")
        return in_shape

    def forward(self, x, params, state, train):
        self._expect_ndim(x, (2,))
        probs = scipy_softmax(x, axis=1)
        return probs, probs

    def backward(self, dout, cache, params):
        probs = cache
        return probs * (dout - (dout * probs).sum(axis=1, keepdims=True)), {}


LAYER_TYPES: Dict[str, type] = {
    cls.kind: cls for cls in (Dense, Conv1D, BatchNorm1D, ReLU, GlobalAvgPool1D, Flatten, Softmax)
}


def layer_from_descriptor(descriptor: Dict[str, Any]) -> Layer:
    descriptor = dict(descriptor)
    kind = descriptor.pop("type", None)
    if kind not in LAYER_TYPES:
        raise ConfigError(f"Unknown layer type {kind!r}; expected one of {sorted(LAYER_TYPES)}")
    try:
        return LAYER_TYPES[kind](**descriptor)
    except TypeError as e:
        raise ConfigError(f"Invalid {kind} descriptor {descriptor}: {e}") from e
