"""
Config-driven experiment stages behind the CLI.

Every stage reads its inputs from the output directory (plus the dataset named
by the config) and writes its results there, so each one can be rerun on its
own:

    fl-train          trace.fltr, trace_full.fltr, fl_accuracy.csv, auxiliary_split.json
    extract-features  features_<kind>_<split>.csv (+ .meta.json)
    attack-train      attack_<kind>.fltr, attack_<kind>_loss.json
    attack-eval       report.json
    report            sweep_observed_epochs.csv, sliding_accuracy.csv
    plot              accuracy_over_time.svg, member_gap.svg

Files of non-target clients (``attack.all_clients``) carry a ``_client<c>`` suffix.
"""
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from helper_script.file_reader_helper import read_lines, require_file, write_to_file
from helper_script.func_timer import MultipleTimer
from helper_script.json_helper import read_json, write_json
from modules_script.m_attack_fcn import AttackFCNSpec, AttackHyperparams, evaluate_accuracy, train_attack
from modules_script.m_baseline_attack import (
    baseline_input_size,
    baseline_network_spec,
    build_baseline_split,
    train_baseline_attack,
)
from modules_script.m_cost_accounting import compare_costs, cost_report, feature_construction_macs
from modules_script.m_data_pipeline import (
    AuxiliaryCounts,
    AuxiliaryDataset,
    AuxiliarySplit,
    LabeledDataset,
    Partition,
    SyntheticSpec,
    build_auxiliary,
    generate_synthetic,
    load_purchase_style,
    partition_uniform,
    split_holdout,
)
from modules_script.m_errors import CapabilityError, ConfigError, DataError
from modules_script.m_feature_extraction import (
    BASELINE_KIND,
    LABEL_KINDS,
    TRAJECTORY_KINDS,
    FeatureMatrix,
    extract_split,
    load_features,
    save_features,
)
from modules_script.m_fl_sim import (
    CheckpointTrace,
    FedAvgResult,
    FLConfig,
    check_observed_epochs,
    read_accuracy_log,
    run_fedavg,
    write_accuracy_log,
)
from modules_script.m_network import mlp_spec
from modules_script.m_plot import member_gap, plot_accuracy_over_time, plot_member_gap
from modules_script.m_trace_io import load_model, load_trace, save_model, save_trace
from setting import derive_seed, resolve_output_dir, resolve_path


ATTACK_KINDS = TRAJECTORY_KINDS + (BASELINE_KIND,)
SPLITS = ("attack_train", "attack_test")
DATASET_SOURCES = ("synthetic", "purchase")
REPORT_SCHEMA_VERSION = 1
REPORT_FIELDS = (
    "schema_version",
    "config",
    "observed_epochs",
    "target_client",
    "target_model",
    "attacks",
    "all_clients",
    "member_gap",
    "costs",
    "fl_accuracy",
    "run_info",
)


# MARK: Configuration

@dataclass(frozen=True)
class DatasetSection:
    source: str
    holdout_fraction: float
    synthetic: SyntheticSpec
    purchase_path: Path
    purchase_feature_dim: int
    purchase_class_count: int


@dataclass(frozen=True)
class AttackSection:
    kinds: Tuple[str, ...]
    all_clients: bool
    fcn: AttackHyperparams
    baseline: AttackHyperparams
    baseline_channels: Tuple[int, ...]
    baseline_kernels: Tuple[int, ...]
    seed: int

    def hyperparams(self, kind: str, label: str) -> AttackHyperparams:
        """Kind-specific hyperparameters with a seed derived from ``label``."""
        base = self.baseline if kind == BASELINE_KIND else self.fcn
        return AttackHyperparams(base.optimizer, base.batch_size, base.learning_rate, base.epochs, derive_seed(self.seed, label))


@dataclass(frozen=True)
class ReportSection:
    sweep_epoch_sets: Tuple[Tuple[int, ...], ...]
    sliding_window: int
    sliding_stride: int
    sliding_attack_epochs: int


@dataclass(frozen=True)
class ExperimentConfig:
    raw: Dict[str, Any]
    seed: int
    output_dir: Path
    dataset: DatasetSection
    fl: FLConfig
    hidden_layers: Tuple[int, ...]
    auxiliary: AuxiliaryCounts
    labels_available: bool
    attack: AttackSection
    report: ReportSection
    stop_on_error: bool
    show_progress: bool

    @staticmethod
    def from_dict(raw: Dict[str, Any], seed: Optional[int] = None, out: Optional[str] = None) -> "ExperimentConfig":
        """
        Build the typed configuration from a schema-checked config dict.
        ``seed`` and ``out`` are the CLI overrides of the master seed and output directory.
        """
        raw = dict(raw)
        if seed is not None:
            raw["seed"] = int(seed)
        master = raw["seed"]
        if master < 0:
            raise ConfigError(f"seed must be non-negative, got {master}")

        try:
            return ExperimentConfig(
                raw=raw,
                seed=master,
                output_dir=resolve_output_dir(raw, out),
                dataset=_dataset_section(raw["dataset"], master),
                fl=_fl_config(raw["fl"], master),
                hidden_layers=tuple(_positive_ints(raw["fl"]["hidden_layers"], "fl.hidden_layers", allow_empty=True)),
                auxiliary=_auxiliary_counts(raw["auxiliary"]),
                labels_available=raw["auxiliary"]["labels_available"],
                attack=_attack_section(raw["attack"], master),
                report=_report_section(raw["report"]),
                stop_on_error=raw["options"]["stop_on_error"],
                show_progress=raw["options"]["show_progress"],
            )
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid config value: {e}") from e


def _positive_ints(values: Sequence[Any], key: str, allow_empty: bool = False) -> List[int]:
    if (not values and not allow_empty) or any(not isinstance(v, int) or isinstance(v, bool) or v < 1 for v in values):
        raise ConfigError(f"'{key}' must be a list of positive integers, got {values}")
    return [int(v) for v in values]


def _dataset_section(section: Dict[str, Any], master: int) -> DatasetSection:
    if section["source"] not in DATASET_SOURCES:
        raise ConfigError(f"'dataset.source' must be one of {DATASET_SOURCES}, got {section['source']!r}")
    if not 0 < section["holdout_fraction"] < 1:
        raise ConfigError(f"'dataset.holdout_fraction' must lie in (0, 1), got {section['holdout_fraction']}")
    synthetic = section["synthetic"]
    purchase = section["purchase"]
    return DatasetSection(
        source=section["source"],
        holdout_fraction=float(section["holdout_fraction"]),
        synthetic=SyntheticSpec(
            classes=synthetic["classes"],
            dim=synthetic["dim"],
            per_class=synthetic["per_class"],
            cluster_spread=float(synthetic["cluster_spread"]),
            seed=derive_seed(master, "data/synthetic"),
            center_scale=float(synthetic["center_scale"]),
        ),
        purchase_path=resolve_path(purchase["path"]),
        purchase_feature_dim=purchase["feature_dim"],
        purchase_class_count=purchase["class_count"],
    )


def _fl_config(section: Dict[str, Any], master: int) -> FLConfig:
    schedule = section["lr_schedule"]
    if any(not isinstance(stage, list) or len(stage) != 2 for stage in schedule):
        raise ConfigError(f"'fl.lr_schedule' must be a list of [first_epoch, learning_rate] pairs, got {schedule}")
    return FLConfig(
        n_clients=section["n_clients"],
        weights=tuple(section["weights"]),
        rounds=section["rounds"],
        observed_epochs=tuple(_positive_ints(section["observed_epochs"], "fl.observed_epochs")),
        lr_schedule=tuple((stage[0], stage[1]) for stage in schedule),
        optimizer=section["optimizer"],
        batch_size=section["batch_size"],
        local_epochs=section["local_epochs"],
        target_client=section["target_client"],
        seed=derive_seed(master, "fl"),
        capture_all=section["capture_all"],
        max_workers=section["max_workers"],
    )


def _auxiliary_counts(section: Dict[str, Any]) -> AuxiliaryCounts:
    counts = AuxiliaryCounts(section["member_train"], section["nonmember_train"], section["member_test"], section["nonmember_test"])
    if min(counts.member_train, counts.nonmember_train, counts.member_test, counts.nonmember_test) < 1:
        raise ConfigError(f"Every auxiliary count must be positive, got {counts}")
    return counts


def _attack_section(section: Dict[str, Any], master: int) -> AttackSection:
    kinds = section["kinds"]
    unknown = [k for k in kinds if k not in ATTACK_KINDS]
    if not kinds or unknown:
        raise ConfigError(f"'attack.kinds' must be a non-empty subset of {ATTACK_KINDS}, got {kinds}")
    fcn, baseline = section["fcn"], section["baseline"]
    return AttackSection(
        kinds=tuple(dict.fromkeys(kinds)),
        all_clients=section["all_clients"],
        fcn=AttackHyperparams(batch_size=fcn["batch_size"], learning_rate=float(fcn["learning_rate"]), epochs=fcn["epochs"]),
        baseline=AttackHyperparams(batch_size=baseline["batch_size"], learning_rate=float(baseline["learning_rate"]), epochs=baseline["epochs"]),
        baseline_channels=tuple(_positive_ints(baseline["conv_channels"], "attack.baseline.conv_channels")),
        baseline_kernels=tuple(_positive_ints(baseline["kernels"], "attack.baseline.kernels")),
        seed=derive_seed(master, "attack"),
    )


def _report_section(section: Dict[str, Any]) -> ReportSection:
    sets = tuple(tuple(_positive_ints(s, "report.sweep_epoch_sets")) for s in section["sweep_epoch_sets"])
    if min(section["sliding_window"], section["sliding_stride"], section["sliding_attack_epochs"]) < 1:
        raise ConfigError("'report.sliding_*' values must be positive")
    return ReportSection(sets, section["sliding_window"], section["sliding_stride"], section["sliding_attack_epochs"])


# MARK: Output layout

class OutputLayout:
    def __init__(self, root: Path, target_client: int):
        self.root = Path(root)
        self.target_client = target_client

    def _suffix(self, client: Optional[int]) -> str:
        return "" if client is None or client == self.target_client else f"_client{client}"

    def path(self, name: str) -> str:
        return str(self.root / name)

    def trace(self, client: Optional[int] = None) -> str:
        return self.path(f"trace{self._suffix(client)}.fltr")

    def full_trace(self) -> str:
        return self.path("trace_full.fltr")

    def accuracy_log(self) -> str:
        return self.path("fl_accuracy.csv")

    def auxiliary(self) -> str:
        return self.path("auxiliary_split.json")

    def features(self, kind: str, split: str, client: Optional[int] = None) -> str:
        return self.path(f"features_{kind}_{split}{self._suffix(client)}.csv")

    def attack_model(self, kind: str, client: Optional[int] = None) -> str:
        return self.path(f"attack_{kind}{self._suffix(client)}.fltr")

    def attack_loss(self, kind: str, client: Optional[int] = None) -> str:
        return self.path(f"attack_{kind}{self._suffix(client)}_loss.json")

    def report(self) -> str:
        return self.path("report.json")

    def sweep(self) -> str:
        return self.path("sweep_observed_epochs.csv")

    def sliding(self) -> str:
        return self.path("sliding_accuracy.csv")

    def accuracy_plot(self) -> str:
        return self.path("accuracy_over_time.svg")

    def gap_plot(self) -> str:
        return self.path("member_gap.svg")


def layout_for(cfg: ExperimentConfig) -> OutputLayout:
    return OutputLayout(cfg.output_dir, cfg.fl.target_client)


def _step(message: str) -> None:
    print(f"* {message}")


# MARK: Dataset & federation

def load_dataset(cfg: ExperimentConfig) -> LabeledDataset:
    section = cfg.dataset
    if section.source == "synthetic":
        return generate_synthetic(section.synthetic)
    return load_purchase_style(str(section.purchase_path), section.purchase_feature_dim, section.purchase_class_count)


def prepare_federation(cfg: ExperimentConfig, dataset: LabeledDataset) -> Tuple[np.ndarray, np.ndarray, List[Partition]]:
    """Hold-out split, then a uniform partition of the remaining indices over the clients."""
    fl_pool, holdout = split_holdout(dataset, cfg.dataset.holdout_fraction, derive_seed(cfg.seed, "data/holdout"))
    partitions = partition_uniform(dataset, cfg.fl.n_clients, derive_seed(cfg.seed, "data/partition"), pool=fl_pool)
    return fl_pool, holdout, partitions


def attacked_clients(cfg: ExperimentConfig) -> List[int]:
    """The target client first, then every other client when ``attack.all_clients`` is set."""
    others = [c for c in range(cfg.fl.n_clients) if c != cfg.fl.target_client] if cfg.attack.all_clients else []
    return [cfg.fl.target_client] + others


def _split_to_json(split: AuxiliarySplit) -> Dict[str, Any]:
    return {"sample_ids": split.sample_ids, "members": split.members.astype(np.int64)}


def _split_from_json(name: str, data: Dict[str, Any], dataset: LabeledDataset, labels_available: bool) -> AuxiliarySplit:
    ids = np.asarray(data["sample_ids"], dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= len(dataset)):
        raise DataError(f"Auxiliary sample ids exceed the dataset size {len(dataset)}; was fl-train run with this dataset?")
    inputs, labels = dataset.subset(ids)
    return AuxiliarySplit(name, ids, inputs, labels if labels_available else None, np.asarray(data["members"]) > 0)


def save_auxiliary(path: str, auxiliaries: Dict[int, AuxiliaryDataset]) -> None:
    first = next(iter(auxiliaries.values()))
    write_json(path, {
        "labels_available": first.labels_available,
        "class_count": first.class_count,
        "clients": {str(c): {name: _split_to_json(aux.split(name)) for name in SPLITS} for c, aux in auxiliaries.items()},
    })


def load_auxiliary(path: str, dataset: LabeledDataset) -> Tuple[bool, Dict[int, AuxiliaryDataset]]:
    data = read_json(require_file(path, "fl-train"))
    labels_available = bool(data["labels_available"])
    auxiliaries = {}
    for client, splits in data["clients"].items():
        auxiliaries[int(client)] = AuxiliaryDataset(
            attack_train=_split_from_json("attack_train", splits["attack_train"], dataset, labels_available),
            attack_test=_split_from_json("attack_test", splits["attack_test"], dataset, labels_available),
            class_count=int(data["class_count"]),
            labels_available=labels_available,
        )
    return labels_available, auxiliaries


def auxiliary_labels_available(cfg: ExperimentConfig) -> bool:
    return bool(read_json(require_file(layout_for(cfg).auxiliary(), "fl-train"))["labels_available"])


def check_capability(kind: str, labels_available: bool) -> None:
    if kind in LABEL_KINDS and not labels_available:
        raise CapabilityError(f"{kind} attack needs labels, but the auxiliary dataset was built without them")


# MARK: Stages

def stage_fl_train(cfg: ExperimentConfig) -> FedAvgResult:
    layout = layout_for(cfg)

    _step("Loading dataset")
    dataset = load_dataset(cfg)
    _, holdout, partitions = prepare_federation(cfg, dataset)
    print(f"  {len(dataset)} samples, {dataset.class_count} classes, dim {dataset.feature_dim}")
    print(f"  client sizes: {[len(p) for p in partitions]}, hold-out: {len(holdout)}")

    clients = attacked_clients(cfg)
    _step("Building auxiliary datasets")
    auxiliaries = {
        c: build_auxiliary(
            partitions[c], dataset, cfg.auxiliary, derive_seed(cfg.seed, f"auxiliary/client/{c}"),
            nonmember_indices=holdout, labels_available=cfg.labels_available,
        )
        for c in clients
    }

    _step(f"Running FedAvg ({cfg.fl.rounds} rounds, {cfg.fl.n_clients} clients)")
    model_spec = mlp_spec(dataset.feature_dim, cfg.hidden_layers, dataset.class_count)
    result = run_fedavg(cfg.fl, dataset, partitions, model_spec, test_indices=holdout, capture_clients=clients)
    last = result.accuracy_log[-1]
    print(f"  final target client accuracy: train {last.train_acc:.3f}, test {last.test_acc:.3f}")

    _step(f"Writing outputs to {layout.root}")
    for c in clients:
        save_trace(result.client_traces[c].restrict(cfg.fl.observed_epochs), layout.trace(c))
    if cfg.fl.capture_all:
        save_trace(result.trace, layout.full_trace())
    write_accuracy_log(layout.accuracy_log(), result.accuracy_log)
    save_auxiliary(layout.auxiliary(), auxiliaries)
    return result


def _features_for(kind: str, trace: CheckpointTrace, split: AuxiliarySplit, class_count: int) -> FeatureMatrix:
    if kind == BASELINE_KIND:
        return build_baseline_split(trace, split, class_count)
    return extract_split(trace, split, kind, class_count)


def stage_extract_features(cfg: ExperimentConfig, kinds: Optional[Sequence[str]] = None) -> List[str]:
    layout = layout_for(cfg)
    kinds = tuple(kinds or cfg.attack.kinds)

    labels_available, auxiliaries = load_auxiliary(layout.auxiliary(), load_dataset(cfg))
    for kind in kinds:
        check_capability(kind, labels_available)

    written = []
    for client in attacked_clients(cfg):
        trace = load_trace(require_file(layout.trace(client), "fl-train"))
        auxiliary = auxiliaries[client]
        for kind in kinds:
            if kind == BASELINE_KIND and client != cfg.fl.target_client:
                continue
            _step(f"Extracting {kind} features of client {client}")
            for split in SPLITS:
                features = _features_for(kind, trace, auxiliary.split(split), auxiliary.class_count)
                save_features(features, layout.features(kind, split, client))
                written.append(layout.features(kind, split, client))
    return written


def train_attack_for(kind: str, features: FeatureMatrix, cfg: ExperimentConfig, label: str, epochs: Optional[int] = None):
    hp = cfg.attack.hyperparams(kind, label)
    if epochs is not None:
        hp = AttackHyperparams(hp.optimizer, hp.batch_size, hp.learning_rate, epochs, hp.seed)
    if kind == BASELINE_KIND:
        return train_baseline_attack(features, hp, cfg.attack.baseline_channels, cfg.attack.baseline_kernels)
    return train_attack(features, hp)


def stage_attack_train(cfg: ExperimentConfig, kinds: Optional[Sequence[str]] = None) -> Dict[str, List[float]]:
    layout = layout_for(cfg)
    kinds = tuple(kinds or cfg.attack.kinds)
    labels_available = auxiliary_labels_available(cfg)

    histories = {}
    for kind in kinds:
        check_capability(kind, labels_available)
        for client in attacked_clients(cfg):
            if kind == BASELINE_KIND and client != cfg.fl.target_client:
                continue
            _step(f"Training {kind} attack on client {client}")
            features = load_features(layout.features(kind, "attack_train", client))
            if features.kind != kind:
                raise DataError(f"{layout.features(kind, 'attack_train', client)} holds {features.kind} features")
            model, history = train_attack_for(kind, features, cfg, f"{kind}/client/{client}")
            print(f"  final training loss: {history[-1]:.4f}")
            save_model(model, layout.attack_model(kind, client))
            write_json(layout.attack_loss(kind, client), history)
            if client == cfg.fl.target_client:
                histories[kind] = history
    return histories


def cost_section(cfg: ExperimentConfig, trace: CheckpointTrace) -> Dict[str, Any]:
    n_epochs = len(trace)
    spec = trace.spec
    fcn = AttackFCNSpec(n_epochs).to_network_spec()
    baseline_len = baseline_input_size(spec.trainable_count(), spec.layer_output_sizes(), n_epochs, spec.class_count)
    baseline = baseline_network_spec(baseline_len, cfg.attack.baseline_channels, cfg.attack.baseline_kernels)
    comparison = compare_costs(fcn, baseline, names=("trajectory_fcn", "baseline"))
    return {
        "comparison": comparison.to_dict(),
        "target_model": cost_report(spec, name="target_model").to_dict(),
        "feature_construction_macs": {kind: feature_construction_macs(spec, n_epochs, kind) for kind in ATTACK_KINDS},
    }


def stage_attack_eval(cfg: ExperimentConfig, kinds: Optional[Sequence[str]] = None) -> Dict[str, Any]:
    layout = layout_for(cfg)
    kinds = tuple(kinds or cfg.attack.kinds)
    timer = MultipleTimer(["evaluate", "costs"])

    trace = load_trace(require_file(layout.trace(), "fl-train"))
    spec = trace.spec

    _step("Evaluating attacks")
    attacks: Dict[str, Any] = {}
    gaps: Dict[str, Any] = {}
    all_clients: Optional[Dict[str, Any]] = {} if cfg.attack.all_clients else None
    for kind in kinds:
        model = load_model(require_file(layout.attack_model(kind), "attack-train"))
        test = load_features(layout.features(kind, "attack_test"))
        history = read_json(require_file(layout.attack_loss(kind), "attack-train"))
        evaluation = evaluate_accuracy(model, test)
        attacks[kind] = {**evaluation.to_dict(), "input_len": test.width, "final_train_loss": history[-1]}
        print(f"  {kind:<12}: accuracy {evaluation.accuracy:.4f}")

        if kind in TRAJECTORY_KINDS:
            gaps[kind] = float(member_gap(test)[-1])
            if all_clients is not None:
                per_client = {str(cfg.fl.target_client): evaluation.accuracy}
                for client in attacked_clients(cfg)[1:]:
                    client_model = load_model(require_file(layout.attack_model(kind, client), "attack-train"))
                    per_client[str(client)] = evaluate_accuracy(client_model, load_features(layout.features(kind, "attack_test", client))).accuracy
                all_clients[kind] = {"per_client": per_client, "mean": float(np.mean(list(per_client.values())))}
    timer.timer["evaluate"].stop()

    _step("Accounting costs")
    timer.timer["costs"].start()
    costs = cost_section(cfg, trace)
    timer.timer["costs"].stop()

    d = spec.trainable_count()
    baseline_len = baseline_input_size(d, spec.layer_output_sizes(), len(trace), spec.class_count)
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "config": cfg.raw,
        "observed_epochs": trace.epochs,
        "target_client": trace.target_client,
        "target_model": {
            "trainable_count": d,
            "layer_output_sizes": spec.layer_output_sizes(),
            "class_count": spec.class_count,
            "baseline_input_len": baseline_len,
            "trajectory_input_len": len(trace),
            "input_size_ratio": baseline_len / len(trace),
        },
        "attacks": attacks,
        "all_clients": all_clients,
        "member_gap": gaps,
        "costs": costs,
        "fl_accuracy": [
            {"round": r, "train_acc": train, "test_acc": test}
            for r, train, test in read_accuracy_log(require_file(layout.accuracy_log(), "fl-train"))
        ],
        "run_info": {
            "generated_at": datetime.now(timezone.utc).isoformat(),
            "stage_runtimes_ms": timer.stopped_times(),
        },
    }
    write_json(layout.report(), report)
    return report


def read_report(path: str) -> Dict[str, Any]:
    """Load report.json; unknown or missing fields and other schema versions are rejected."""
    report = read_json(require_file(path, "attack-eval"))
    if not isinstance(report, dict):
        raise DataError(f"{path} is not a report object")
    unknown = sorted(set(report) - set(REPORT_FIELDS))
    missing = sorted(set(REPORT_FIELDS) - set(report))
    if unknown or missing:
        raise DataError(f"{path}: unknown report fields {unknown}, missing fields {missing}")
    if report["schema_version"] != REPORT_SCHEMA_VERSION:
        raise DataError(f"{path}: report schema version {report['schema_version']} is not {REPORT_SCHEMA_VERSION}")
    return report


# MARK: Sweeps

def primary_trajectory_kind(cfg: ExperimentConfig, labels_available: bool) -> str:
    for kind in cfg.attack.kinds:
        if kind in TRAJECTORY_KINDS and (labels_available or kind not in LABEL_KINDS):
            return kind
    return "true_label" if labels_available else "entropy"


def _attack_on_subtrace(
    cfg: ExperimentConfig,
    kind: str,
    trace: CheckpointTrace,
    auxiliary: AuxiliaryDataset,
    label: str,
    epochs: Optional[int] = None,
) -> float:
    train = _features_for(kind, trace, auxiliary.attack_train, auxiliary.class_count)
    test = _features_for(kind, trace, auxiliary.attack_test, auxiliary.class_count)
    model, _ = train_attack_for(kind, train, cfg, label, epochs)
    return evaluate_accuracy(model, test).accuracy


def _load_full_trace(cfg: ExperimentConfig) -> CheckpointTrace:
    return load_trace(require_file(layout_for(cfg).full_trace(), "fl-train with fl.capture_all = true"))


def stage_sweep_observed_epochs(
    cfg: ExperimentConfig,
    epoch_sets: Optional[Sequence[Sequence[int]]] = None,
    include_baseline: bool = False,
) -> List[Dict[str, Any]]:
    """Retrain and evaluate the attack once per observed-epoch set."""
    layout = layout_for(cfg)
    epoch_sets = [tuple(int(t) for t in s) for s in (epoch_sets or cfg.report.sweep_epoch_sets)]
    if len(epoch_sets) < 2:
        raise ConfigError(f"An observed-epoch sweep needs at least two epoch sets, got {len(epoch_sets)}")
    for epochs in epoch_sets:
        check_observed_epochs(epochs, cfg.fl.rounds)

    labels_available, auxiliaries = load_auxiliary(layout.auxiliary(), load_dataset(cfg))
    if include_baseline:
        check_capability(BASELINE_KIND, labels_available)
    kind = primary_trajectory_kind(cfg, labels_available)
    full = _load_full_trace(cfg)
    auxiliary = auxiliaries[cfg.fl.target_client]

    rows = []
    for i, epochs in enumerate(epoch_sets, start=1):
        _step(f"Epoch set {i}/{len(epoch_sets)}: {list(epochs)}")
        trace = full.restrict(epochs)
        row: Dict[str, Any] = {"set": i, "epochs": list(epochs), "kind": kind}
        row["accuracy"] = _attack_on_subtrace(cfg, kind, trace, auxiliary, f"sweep/{i}/{kind}")
        if include_baseline:
            row["baseline_accuracy"] = _attack_on_subtrace(cfg, BASELINE_KIND, trace, auxiliary, f"sweep/{i}/{BASELINE_KIND}")
        print(f"  accuracy {row['accuracy']:.4f}")
        rows.append(row)

    header = "set,epochs,kind,accuracy" + (",baseline_accuracy" if include_baseline else "")
    lines = [header]
    for row in rows:
        line = f"{row['set']},{' '.join(map(str, row['epochs']))},{row['kind']},{row['accuracy']:.17g}"
        if include_baseline:
            line += f",{row['baseline_accuracy']:.17g}"
        lines.append(line)
    write_to_file(layout.sweep(), "\n".join(lines) + "\n", overwrite=True)
    return rows


def sliding_windows(window: int, stride: int, rounds: int) -> List[Tuple[int, ...]]:
    """Windows {t-W+1..t} for t = W, W+stride, ... up to ``rounds``."""
    if window < 1 or stride < 1:
        raise ConfigError("Sliding window and stride must be positive")
    if window > rounds:
        raise ConfigError(f"Sliding window {window} longer than the {rounds} training rounds")
    return [tuple(range(t - window + 1, t + 1)) for t in range(window, rounds + 1, stride)]


def stage_sliding_window(cfg: ExperimentConfig, window: Optional[int] = None) -> List[Tuple[int, float]]:
    """Attack accuracy as training progresses, one retrained attack per window."""
    layout = layout_for(cfg)
    window = window or cfg.report.sliding_window
    windows = sliding_windows(window, cfg.report.sliding_stride, cfg.fl.rounds)

    labels_available, auxiliaries = load_auxiliary(layout.auxiliary(), load_dataset(cfg))
    kind = primary_trajectory_kind(cfg, labels_available)
    full = _load_full_trace(cfg)
    auxiliary = auxiliaries[cfg.fl.target_client]

    results = []
    for epochs in windows:
        end = epochs[-1]
        _step(f"Window ending at epoch {end}")
        accuracy = _attack_on_subtrace(
            cfg, kind, full.restrict(epochs), auxiliary, f"sliding/{end}", epochs=cfg.report.sliding_attack_epochs,
        )
        results.append((end, accuracy))

    lines = ["window_end,window,accuracy"] + [f"{end},{window},{acc:.17g}" for end, acc in results]
    write_to_file(layout.sliding(), "\n".join(lines) + "\n", overwrite=True)
    return results


def read_sliding_accuracy(path: str) -> Tuple[int, List[int], List[float]]:
    lines = read_lines(require_file(path, "report --sliding-window"))
    if not lines or lines[0] != "window_end,window,accuracy":
        raise DataError(f"{path}: unexpected sliding accuracy header")
    ends, accuracies, window = [], [], 0
    for line in lines[1:]:
        if line:
            end, window, acc = line.split(",")
            ends.append(int(end))
            accuracies.append(float(acc))
    return int(window), ends, accuracies


# MARK: Plots

def stage_plot(cfg: ExperimentConfig) -> List[str]:
    layout = layout_for(cfg)

    _step("Plotting accuracy over time")
    log = read_accuracy_log(require_file(layout.accuracy_log(), "fl-train"))
    window, ends, accuracies = read_sliding_accuracy(layout.sliding())
    plot_accuracy_over_time(
        layout.accuracy_plot(),
        [r for r, _, _ in log], [train for _, train, _ in log], [test for _, _, test in log],
        ends, accuracies, window,
    )

    _step("Plotting member / non-member mean trajectories")
    kind = primary_trajectory_kind(cfg, auxiliary_labels_available(cfg))
    plot_member_gap(layout.gap_plot(), load_features(layout.features(kind, "attack_test")))
    return [layout.accuracy_plot(), layout.gap_plot()]
