"""
Attack inputs computed from a CheckpointTrace.

For every auxiliary sample the trace's snapshots are queried in ascending epoch
order, giving one value per observed epoch:

* ``true_label``: softmax score of the sample's own label
* ``entropy``:    entropy (nats) of the softmax score vector
* ``max_score``:  largest softmax score

The last two need no label and model an adversary whose auxiliary records are
unlabeled.
"""
import os
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.stats import entropy as scipy_entropy

from helper_script.file_reader_helper import require_file, write_to_file
from helper_script.json_helper import read_json, write_json
from modules_script.m_data_pipeline import AuxiliaryDataset, AuxiliarySplit
from modules_script.m_errors import CapabilityError, DataError
from modules_script.m_fl_sim import CheckpointTrace
from modules_script.m_training import predict


TRAJECTORY_KINDS = ("true_label", "entropy", "max_score")
BASELINE_KIND = "baseline"
LABEL_KINDS = ("true_label", BASELINE_KIND)

# Significant digits written per value; baseline inputs are rounded to 32-bit first
CSV_DIGITS = {kind: 17 for kind in TRAJECTORY_KINDS}
CSV_DIGITS[BASELINE_KIND] = 9


@dataclass
class FeatureMatrix:
    kind: str
    sample_ids: np.ndarray
    members: np.ndarray
    rows: np.ndarray
    epochs: List[int] = field(default_factory=list)
    split: str = "attack_train"
    class_count: Optional[int] = None

    def __post_init__(self):
        if self.kind not in TRAJECTORY_KINDS + (BASELINE_KIND,):
            raise DataError(f"Unknown feature kind {self.kind!r}")
        self.sample_ids = np.asarray(self.sample_ids, dtype=np.int64)
        self.members = np.asarray(self.members, dtype=bool)
        self.rows = np.asarray(self.rows, dtype=np.float32 if self.kind == BASELINE_KIND else np.float64)
        self.epochs = [int(t) for t in self.epochs]
        if self.rows.ndim != 2 or self.rows.shape[0] != self.sample_ids.shape[0] or self.members.shape != self.sample_ids.shape:
            raise DataError("Feature rows, sample ids and membership labels must align")
        if self.kind in TRAJECTORY_KINDS and self.rows.shape[1] != len(self.epochs):
            raise DataError(f"Trajectory rows have length {self.rows.shape[1]} but {len(self.epochs)} epochs")

    def __len__(self) -> int:
        return int(self.rows.shape[0])

    @property
    def width(self) -> int:
        return int(self.rows.shape[1])


# MARK: Per-sample trajectories

def score_vectors(trace: CheckpointTrace, inputs: np.ndarray) -> np.ndarray:
    """Softmax scores of every snapshot: shape (n_epochs, n_samples, m)."""
    if len(trace) == 0:
        raise DataError("Trace has no snapshots")
    inputs = np.asarray(inputs, dtype=np.float64)
    return np.stack([predict(snapshot, inputs) for snapshot in trace.models()])


def _check_label(trace: CheckpointTrace, y: int) -> None:
    m = trace.spec.class_count
    if m is None or not 0 <= y < m:
        raise DataError(f"Label {y} outside [0, {m})")


def true_label_trajectory(trace: CheckpointTrace, x: np.ndarray, y: int) -> np.ndarray:
    _check_label(trace, y)
    return score_vectors(trace, np.asarray(x)[None, ...])[:, 0, y]


def entropy_trajectory(trace: CheckpointTrace, x: np.ndarray) -> np.ndarray:
    return entropy_of_scores(score_vectors(trace, np.asarray(x)[None, ...])[:, 0, :])


def max_score_trajectory(trace: CheckpointTrace, x: np.ndarray) -> np.ndarray:
    return score_vectors(trace, np.asarray(x)[None, ...])[:, 0, :].max(axis=-1)


def entropy_of_scores(scores: np.ndarray) -> np.ndarray:
    """Natural-log entropy along the last axis, with 0 * ln 0 taken as 0."""
    m = scores.shape[-1]
    return np.clip(scipy_entropy(scores, axis=-1), 0.0, np.log(m))


# MARK: Whole auxiliary splits

def trajectories_from_scores(scores: np.ndarray, kind: str, labels: Optional[np.ndarray]) -> np.ndarray:
    """Rows (n_samples, n_epochs) of the requested kind from (n_epochs, n_samples, m) scores."""
    if kind == "true_label":
        if labels is None:
            raise CapabilityError("true_label features need labels, the auxiliary dataset has none")
        return scores[:, np.arange(scores.shape[1]), labels].T
    if kind == "entropy":
        return entropy_of_scores(scores).T
    if kind == "max_score":
        return scores.max(axis=2).T
    raise DataError(f"Unknown trajectory kind {kind!r}; expected one of {TRAJECTORY_KINDS}")


def extract_split(trace: CheckpointTrace, split: AuxiliarySplit, kind: str, class_count: Optional[int] = None) -> FeatureMatrix:
    if kind in LABEL_KINDS and split.labels is None:
        raise CapabilityError(f"{kind} features need labels, the auxiliary dataset has none")
    scores = score_vectors(trace, split.inputs)
    rows = trajectories_from_scores(scores, kind, split.labels)
    return FeatureMatrix(kind, split.sample_ids, split.members, rows, trace.epochs, split.name, class_count)


def extract_features(trace: CheckpointTrace, auxiliary: AuxiliaryDataset, kind: str, split: str = "attack_train") -> FeatureMatrix:
    if kind in LABEL_KINDS and not auxiliary.labels_available:
        raise CapabilityError(f"{kind} features need labels, the auxiliary dataset has none")
    return extract_split(trace, auxiliary.split(split), kind, auxiliary.class_count)


# MARK: CSV persistence

def features_to_csv(features: FeatureMatrix) -> str:
    digits = CSV_DIGITS[features.kind]
    header = ["sample_id", "member"] + [f"f_{i}" for i in range(1, features.width + 1)]
    lines = [",".join(header)]
    for sample_id, member, row in zip(features.sample_ids, features.members, features.rows):
        values = ",".join(f"{v:.{digits}g}" for v in row)
        lines.append(f"{sample_id},{int(member)},{values}")
    return "\n".join(lines) + "\n"


def metadata_path(csv_path: str) -> str:
    return os.path.splitext(str(csv_path))[0] + ".meta.json"


def save_features(features: FeatureMatrix, path: str) -> None:
    write_to_file(path, features_to_csv(features), overwrite=True)
    write_json(metadata_path(path), {
        "kind": features.kind,
        "epochs": features.epochs,
        "split": features.split,
        "class_count": features.class_count,
        "rows": len(features),
        "width": features.width,
    })


def load_features(path: str, produced_by: str = "extract-features") -> FeatureMatrix:
    require_file(str(path), produced_by)
    require_file(metadata_path(path), produced_by)
    meta = read_json(metadata_path(path))

    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2, dtype=np.float64)
    if table.shape[0] != meta["rows"] or table.shape[1] != meta["width"] + 2:
        raise DataError(f"{path}: table shape {table.shape} does not match its metadata")
    return FeatureMatrix(
        kind=meta["kind"],
        sample_ids=table[:, 0].astype(np.int64),
        members=table[:, 1] > 0.5,
        rows=table[:, 2:],
        epochs=meta["epochs"],
        split=meta["split"],
        class_count=meta["class_count"],
    )
