"""
FedAvg simulation with a passive eavesdropper on one client's uplink.

At every communication round each client receives the global model, runs
``local_epochs`` passes of mini-batch training on its partition and uploads the
result; the server averages the uploads with weights p_c. The eavesdropper
copies the target client's upload at each observed epoch into a
CheckpointTrace.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from helper_script.file_reader_helper import read_lines, write_to_file
from helper_script.progress_helper import progress
from modules_script.m_data_pipeline import LabeledDataset, Partition
from modules_script.m_errors import ConfigError, DataError, ShapeError
from modules_script.m_losses import loss_cross_entropy
from modules_script.m_network import Network, NetworkSpec
from modules_script.m_optimizer import OptimizerState, make_optimizer
from modules_script.m_training import predict, run_epoch
from setting import derive_seed


WEIGHT_TOLERANCE = 1e-12


@dataclass(frozen=True)
class FLConfig:
    """
    ``lr_schedule`` holds (first_epoch, learning_rate) stages: each rate applies
    from its first epoch until the next stage starts.
    """
    n_clients: int
    weights: Tuple[float, ...]
    rounds: int
    observed_epochs: Tuple[int, ...]
    lr_schedule: Tuple[Tuple[int, float], ...] = ((1, 0.001),)
    optimizer: str = "adam"
    batch_size: int = 100
    local_epochs: int = 1
    target_client: int = 0
    seed: int = 0
    capture_all: bool = False
    max_workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "observed_epochs", tuple(int(t) for t in self.observed_epochs))
        object.__setattr__(self, "lr_schedule", tuple((int(s), float(lr)) for s, lr in self.lr_schedule))

        if self.n_clients < 1 or self.rounds < 1 or self.batch_size < 1 or self.local_epochs < 1 or self.max_workers < 1:
            raise ConfigError("fl: clients, rounds, batch_size, local_epochs and max_workers must be positive")
        check_weights(self.weights, self.n_clients)
        check_observed_epochs(self.observed_epochs, self.rounds)
        if not 0 <= self.target_client < self.n_clients:
            raise ConfigError(f"fl.target_client {self.target_client} outside [0, {self.n_clients})")

        starts = [s for s, _ in self.lr_schedule]
        if not starts or starts[0] != 1 or any(b <= a for a, b in zip(starts, starts[1:])):
            raise ConfigError(f"fl.lr_schedule must start at epoch 1 and increase strictly, got {starts}")
        if any(lr < 0 for _, lr in self.lr_schedule):
            raise ConfigError("fl.lr_schedule learning rates must be non-negative")
        make_optimizer(self.optimizer, 0.0)

    def learning_rate(self, epoch: int) -> float:
        rate = self.lr_schedule[0][1]
        for start, lr in self.lr_schedule:
            if epoch >= start:
                rate = lr
        return rate

    @property
    def capture_epochs(self) -> Tuple[int, ...]:
        if self.capture_all:
            return tuple(range(1, self.rounds + 1))
        return self.observed_epochs


def check_weights(weights: Sequence[float], n_clients: int) -> None:
    if len(weights) != n_clients:
        raise ConfigError(f"Expected {n_clients} client weights, got {len(weights)}")
    if any(w <= 0 for w in weights):
        raise ConfigError("Client weights must be positive")
    if abs(sum(weights) - 1.0) > WEIGHT_TOLERANCE:
        raise ConfigError(f"Client weights must sum to 1 (got {sum(weights)!r})")


def check_observed_epochs(epochs: Sequence[int], rounds: int) -> None:
    if len(epochs) == 0:
        raise ConfigError("At least one observed epoch is required")
    if any(b <= a for a, b in zip(epochs, epochs[1:])):
        raise ConfigError(f"Observed epochs must increase strictly, got {list(epochs)}")
    if epochs[0] < 1 or epochs[-1] > rounds:
        raise ConfigError(f"Observed epochs {list(epochs)} must lie in [1, {rounds}]")


@dataclass
class CheckpointTrace:
    """The target models: one frozen snapshot of the target client's upload per observed epoch."""
    target_client: int
    spec: NetworkSpec
    snapshots: Dict[int, Network] = field(default_factory=dict)

    def __post_init__(self):
        self.snapshots = {int(t): self.snapshots[t] for t in sorted(self.snapshots)}
        for epoch, snapshot in self.snapshots.items():
            if snapshot.spec != self.spec:
                raise ShapeError(f"Snapshot at epoch {epoch} does not share the trace's network spec")
            if not snapshot.frozen:
                snapshot.freeze()

    @property
    def epochs(self) -> List[int]:
        return list(self.snapshots.keys())

    def __len__(self) -> int:
        return len(self.snapshots)

    def models(self) -> List[Network]:
        return list(self.snapshots.values())

    def restrict(self, epochs: Iterable[int]) -> "CheckpointTrace":
        epochs = sorted(int(t) for t in epochs)
        missing = [t for t in epochs if t not in self.snapshots]
        if missing:
            raise DataError(f"Trace has no snapshots for epochs {missing} (available: {self.epochs[0]}..{self.epochs[-1]})")
        return CheckpointTrace(self.target_client, self.spec, {t: self.snapshots[t] for t in epochs})


@dataclass(frozen=True)
class RoundRecord:
    round: int
    train_acc: float
    test_acc: float
    train_loss: float


@dataclass
class FedAvgResult:
    global_model: Network
    trace: CheckpointTrace
    accuracy_log: List[RoundRecord]
    # Every captured client's trace, the target included
    client_traces: Dict[int, CheckpointTrace] = field(default_factory=dict)


# MARK: Client and server steps

def local_update(
    client_data: Tuple[np.ndarray, np.ndarray],
    global_model: Network,
    config: FLConfig,
    round_seed: int,
    epoch: int = 1,
    optimizer: Optional[OptimizerState] = None,
) -> Network:
    """
    Return a trained copy of ``global_model``; the input model is not modified.
    ``optimizer`` is the client's own state and carries over between rounds.
    """
    inputs, labels = client_data
    if inputs.shape[0] == 0:
        raise DataError("Client has no data")

    model = global_model.copy().train()
    if optimizer is None:
        optimizer = make_optimizer(config.optimizer, config.learning_rate(epoch))
    optimizer.learning_rate = config.learning_rate(epoch)

    rng = np.random.default_rng(round_seed)
    for _ in range(config.local_epochs):
        run_epoch(model, inputs, labels, "cross_entropy", optimizer, config.batch_size, rng)
    return model.eval()


def aggregate(models: Sequence[Network], weights: Sequence[float]) -> Network:
    """Parameter-wise weighted average (running statistics included), summed in list order."""
    if len(models) == 0 or len(models) != len(weights):
        raise ConfigError(f"Got {len(models)} models for {len(weights)} weights")
    check_weights(weights, len(models))

    spec = models[0].spec
    if any(m.spec != spec for m in models[1:]):
        raise ShapeError("Cannot aggregate models with different network specs")

    params = []
    state = []
    for i in range(spec.depth):
        layer_params = {}
        for name in models[0].params[i]:
            total = weights[0] * models[0].params[i][name].data
            for model, weight in zip(models[1:], weights[1:]):
                total = total + weight * model.params[i][name].data
            layer_params[name] = total
        layer_state = {}
        for name in models[0].state[i]:
            total = weights[0] * models[0].state[i][name]
            for model, weight in zip(models[1:], weights[1:]):
                total = total + weight * model.state[i][name]
            layer_state[name] = total
        params.append(layer_params)
        state.append(layer_state)

    return Network(spec, params=params, state=state).eval()


def round_seed_for(fl_seed: int, epoch: int, client_id: int) -> int:
    return derive_seed(fl_seed, f"round/{epoch}/client/{client_id}")


def run_fedavg(
    config: FLConfig,
    dataset: LabeledDataset,
    partitions: Sequence[Partition],
    model_spec: NetworkSpec,
    test_indices: Optional[np.ndarray] = None,
    capture_clients: Optional[Sequence[int]] = None,
) -> FedAvgResult:
    """
    Simulate ``config.rounds`` FedAvg rounds and capture the target client's
    uploads at ``config.capture_epochs``.

    Parameters
    ----------
    capture_clients : Sequence[int], optional
        Further clients whose uploads are captured at the same epochs. Training
        does not depend on which clients are observed.

    Returns
    -------
    FedAvgResult
        Final global model, the CheckpointTrace and one RoundRecord per round
        (target client's train accuracy/loss on its partition and its accuracy
        on ``test_indices``).
    """
    if len(partitions) != config.n_clients:
        raise ConfigError(f"Expected {config.n_clients} partitions, got {len(partitions)}")
    if any(len(p) == 0 for p in partitions):
        raise DataError("Every client needs at least one sample")
    observed = sorted({config.target_client, *(int(c) for c in (capture_clients or ()))})
    if observed[0] < 0 or observed[-1] >= config.n_clients:
        raise ConfigError(f"Captured clients {observed} outside [0, {config.n_clients})")

    client_data = [dataset.subset(p.indices) for p in partitions]
    test_data = dataset.subset(test_indices) if test_indices is not None and len(test_indices) else None
    optimizers = [make_optimizer(config.optimizer, config.learning_rate(1)) for _ in partitions]
    capture = set(config.capture_epochs)

    global_model = Network(model_spec, seed=derive_seed(config.seed, "init")).eval()
    snapshots: Dict[int, Dict[int, Network]] = {c: {} for c in observed}
    log: List[RoundRecord] = []

    def client_step(client_id: int, epoch: int, model: Network) -> Network:
        return local_update(
            client_data[client_id], model, config,
            round_seed_for(config.seed, epoch, client_id), epoch, optimizers[client_id],
        )

    executor = ThreadPoolExecutor(max_workers=config.max_workers) if config.max_workers > 1 else None
    try:
        bar = progress(range(1, config.rounds + 1), desc="FedAvg rounds", total=config.rounds)
        for epoch in bar:
            if executor is None:
                uploads = [client_step(c, epoch, global_model) for c in range(config.n_clients)]
            else:
                uploads = list(executor.map(lambda c: client_step(c, epoch, global_model), range(config.n_clients)))

            target = uploads[config.target_client]
            if epoch in capture:
                for c in observed:
                    snapshots[c][epoch] = uploads[c].copy().freeze()

            record = evaluate_round(epoch, target, client_data[config.target_client], test_data)
            log.append(record)
            bar.set_postfix(train=f"{record.train_acc:.3f}", test=f"{record.test_acc:.3f}")

            global_model = aggregate(uploads, config.weights)
    finally:
        if executor is not None:
            executor.shutdown()

    traces = {c: CheckpointTrace(c, model_spec, snapshots[c]) for c in observed}
    return FedAvgResult(global_model, traces[config.target_client], log, traces)


def evaluate_round(epoch: int, model: Network, train_data: Tuple[np.ndarray, np.ndarray], test_data: Optional[Tuple[np.ndarray, np.ndarray]]) -> RoundRecord:
    train_scores = predict(model, train_data[0])
    train_acc = float(np.mean(np.argmax(train_scores, axis=1) == train_data[1]))
    train_loss = loss_cross_entropy(train_scores, train_data[1])
    test_acc = float("nan")
    if test_data is not None:
        test_scores = predict(model, test_data[0])
        test_acc = float(np.mean(np.argmax(test_scores, axis=1) == test_data[1]))
    return RoundRecord(epoch, train_acc, test_acc, train_loss)


# MARK: Accuracy log

def accuracy_log_to_csv(log: Sequence[RoundRecord]) -> str:
    lines = ["round,train_acc,test_acc"]
    lines += [f"{r.round},{r.train_acc:.17g},{r.test_acc:.17g}" for r in log]
    return "\n".join(lines) + "\n"


def write_accuracy_log(path: str, log: Sequence[RoundRecord]) -> None:
    write_to_file(path, accuracy_log_to_csv(log), overwrite=True)


def read_accuracy_log(path: str) -> List[Tuple[int, float, float]]:
    lines = read_lines(path)
    if lines is None:
        raise FileNotFoundError(f"{path} not found")
    if not lines or lines[0] != "round,train_acc,test_acc":
        raise DataError(f"{path}: unexpected accuracy log header")
    rows = []
    for line in lines[1:]:
        if line:
            r, train, test = line.split(",")
            rows.append((int(r), float(train), float(test)))
    return rows
