"""
FLTR container for checkpoint traces and trained models.

Layout (all little-endian):
    magic        4 bytes  b"FLTR"
    version      u16
    spec_len     u32      followed by spec_len bytes of JSON network descriptor
    target       u32      client id
    n_epochs     u32      followed by n_epochs u32 epoch numbers (ascending)
    n_values     u64      stored values per snapshot
    payload      n_epochs * n_values f32, per snapshot per layer in layer order,
                 trainable parameters before running statistics
"""
import struct
from typing import List, Tuple

import numpy as np
import orjson

from helper_script.file_reader_helper import read_from_file, write_to_file
from modules_script.m_errors import ConfigError, TraceFormatError
from modules_script.m_fl_sim import CheckpointTrace
from modules_script.m_network import Network, NetworkSpec


MAGIC = b"FLTR"
FORMAT_VERSION = 1
FLOAT_DTYPE = np.dtype("<f4")


def trace_to_bytes(trace: CheckpointTrace) -> bytes:
    spec_bytes = orjson.dumps(trace.spec.to_descriptor(), option=orjson.OPT_SORT_KEYS)
    epochs = trace.epochs
    n_values = trace.spec.param_count()

    parts = [
        MAGIC,
        struct.pack("<H", FORMAT_VERSION),
        struct.pack("<I", len(spec_bytes)),
        spec_bytes,
        struct.pack("<II", trace.target_client, len(epochs)),
        struct.pack(f"<{len(epochs)}I", *epochs),
        struct.pack("<Q", n_values),
    ]
    for epoch in epochs:
        snapshot = trace.snapshots[epoch]
        values = np.concatenate([a.reshape(-1) for a in snapshot.stored_arrays()])
        parts.append(values.astype(FLOAT_DTYPE).tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > len(self.data):
            raise TraceFormatError(f"truncated file while reading {what}", self.offset)
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str, what: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def _read_header(reader: _Reader) -> Tuple[NetworkSpec, int, List[int], int]:
    if reader.take(4, "magic") != MAGIC:
        raise TraceFormatError("bad magic, not an FLTR file", 0)
    (version,) = reader.unpack("<H", "version")
    if version != FORMAT_VERSION:
        raise TraceFormatError(f"unsupported format version {version}", reader.offset - 2)

    (spec_len,) = reader.unpack("<I", "spec length")
    spec_offset = reader.offset
    try:
        spec = NetworkSpec.from_descriptor(orjson.loads(reader.take(spec_len, "spec descriptor")))
    except (orjson.JSONDecodeError, ConfigError) as e:
        raise TraceFormatError(f"invalid spec descriptor: {e}", spec_offset) from e

    target, n_epochs = reader.unpack("<II", "epoch header")
    epochs = list(reader.unpack(f"<{n_epochs}I", "epoch list"))
    (n_values,) = reader.unpack("<Q", "value count")
    if n_values != spec.param_count():
        raise TraceFormatError(f"value count {n_values} does not match spec ({spec.param_count()})", reader.offset - 8)
    return spec, target, epochs, n_values


def trace_from_bytes(data: bytes) -> CheckpointTrace:
    reader = _Reader(data)
    spec, target, epochs, n_values = _read_header(reader)

    snapshots = {}
    template = Network(spec)
    for epoch in epochs:
        values = np.frombuffer(reader.take(n_values * FLOAT_DTYPE.itemsize, f"snapshot {epoch}"), dtype=FLOAT_DTYPE)
        snapshots[epoch] = _network_from_values(spec, template, values.astype(np.float64)).freeze()

    if reader.offset != len(data):
        raise TraceFormatError("trailing bytes after last snapshot", reader.offset)
    return CheckpointTrace(target, spec, snapshots)


def _network_from_values(spec: NetworkSpec, template: Network, values: np.ndarray) -> Network:
    params, state = [], []
    position = 0
    for layer_params, layer_state in zip(template.params, template.state):
        p, s = {}, {}
        for name, tensor in layer_params.items():
            p[name] = values[position:position + tensor.size].reshape(tensor.shape)
            position += tensor.size
        for name, array in layer_state.items():
            s[name] = values[position:position + array.size].reshape(array.shape)
            position += array.size
        params.append(p)
        state.append(s)
    return Network(spec, params=params, state=state)


def save_trace(trace: CheckpointTrace, path: str) -> None:
    write_to_file(path, trace_to_bytes(trace), overwrite=True)


def load_trace(path: str) -> CheckpointTrace:
    data = read_from_file(path, binary=True)
    if data is None:
        raise FileNotFoundError(f"{path} not found")
    return trace_from_bytes(data)


def read_trace_epochs(path: str) -> List[int]:
    data = read_from_file(path, binary=True)
    if data is None:
        raise FileNotFoundError(f"{path} not found")
    return _read_header(_Reader(data))[2]


def save_model(model: Network, path: str, epoch: int = 0) -> None:
    """A trained model is stored as a single-snapshot trace."""
    snapshot = model.copy().freeze()
    save_trace(CheckpointTrace(0, model.spec, {epoch: snapshot}), path)


def load_model(path: str) -> Network:
    trace = load_trace(path)
    if len(trace) != 1:
        raise TraceFormatError(f"{path} holds {len(trace)} snapshots, expected one model")
    return trace.models()[0]
