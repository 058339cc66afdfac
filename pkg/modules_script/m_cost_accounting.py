"""
Parameter, memory and MAC accounting.

Counting rules, per layer:
    Dense r->c        params r*c + c        MACs r*c
    Conv1D            params co*ci*k + co   MACs out_len*co*ci*k
    BatchNorm1D       params 4*ch (affine pair and running pair), 0 MACs
    everything else   0 params, 0 MACs
Memory is every stored value at 4 bytes.
"""
from dataclasses import dataclass
from typing import Dict, Optional, Tuple, Union

from modules_script.m_errors import ConfigError
from modules_script.m_feature_extraction import BASELINE_KIND, TRAJECTORY_KINDS
from modules_script.m_network import Network, NetworkSpec


BYTES_PER_VALUE = 4
# A forward plus a backward pass counted as three forward passes
BACKWARD_FORWARD_RATIO = 3

NetLike = Union[Network, NetworkSpec]


def _spec(net: NetLike) -> NetworkSpec:
    return net.spec if isinstance(net, Network) else net


def count_params(net: NetLike) -> int:
    return _spec(net).param_count()


def memory_bytes(net: NetLike) -> int:
    return BYTES_PER_VALUE * count_params(net)


def count_macs(net: NetLike, input_len: Optional[int] = None) -> int:
    """
    MACs of one forward pass for one sample. ``input_len`` replaces the series
    length of (channels, length) inputs; flat inputs keep their width.
    """
    spec = _spec(net)
    shape = spec.input_shape
    if input_len is not None:
        if len(shape) == 2:
            shape = (shape[0], int(input_len))
        elif shape != (int(input_len),):
            raise ConfigError(f"Network with flat input {shape} cannot take input length {input_len}")

    total = 0
    for layer in spec.layers:
        total += layer.macs(shape)
        shape = layer.output_shape(shape)
    return total


@dataclass(frozen=True)
class CostReport:
    name: str
    input_len: int
    param_count: int
    memory_bytes: int
    macs: int

    def to_dict(self) -> Dict[str, Union[str, int]]:
        return {
            "name": self.name,
            "input_len": self.input_len,
            "param_count": self.param_count,
            "memory_bytes": self.memory_bytes,
            "macs": self.macs,
        }


def cost_report(net: NetLike, input_len: Optional[int] = None, name: str = "model") -> CostReport:
    spec = _spec(net)
    length = input_len if input_len is not None else spec.input_shape[-1]
    return CostReport(name, int(length), count_params(spec), memory_bytes(spec), count_macs(spec, input_len))


@dataclass(frozen=True)
class CostComparison:
    """``b`` relative to ``a``: each ratio is b / a."""
    a: CostReport
    b: CostReport

    @staticmethod
    def _ratio(b: int, a: int) -> float:
        return float(b) / a if a else float("inf")

    @property
    def param_ratio(self) -> float:
        return self._ratio(self.b.param_count, self.a.param_count)

    @property
    def memory_ratio(self) -> float:
        return self._ratio(self.b.memory_bytes, self.a.memory_bytes)

    @property
    def mac_ratio(self) -> float:
        return self._ratio(self.b.macs, self.a.macs)

    @property
    def input_ratio(self) -> float:
        return self._ratio(self.b.input_len, self.a.input_len)

    def to_dict(self) -> dict:
        return {
            "a": self.a.to_dict(),
            "b": self.b.to_dict(),
            "ratios": {
                "param": self.param_ratio,
                "memory": self.memory_ratio,
                "macs": self.mac_ratio,
                "input": self.input_ratio,
            },
        }


def compare_costs(
    model_a: NetLike,
    model_b: NetLike,
    input_lens: Tuple[Optional[int], Optional[int]] = (None, None),
    names: Tuple[str, str] = ("a", "b"),
) -> CostComparison:
    return CostComparison(
        cost_report(model_a, input_lens[0], names[0]),
        cost_report(model_b, input_lens[1], names[1]),
    )


def feature_construction_macs(target: NetLike, n_targets: int, kind: str) -> int:
    """MACs the adversary spends per auxiliary sample to build its attack input."""
    forward = count_macs(target)
    if kind in TRAJECTORY_KINDS:
        return n_targets * forward
    if kind == BASELINE_KIND:
        return n_targets * BACKWARD_FORWARD_RATIO * forward
    raise ConfigError(f"Unknown feature kind {kind!r}")
