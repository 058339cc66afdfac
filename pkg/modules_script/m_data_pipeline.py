"""
Datasets, client partitions and the adversary's auxiliary dataset.

Membership is tracked by sample index in the parent dataset: a member is an
index of the target client's partition, a non-member is any index outside it.
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from helper_script.file_reader_helper import read_lines
from modules_script.m_errors import CapacityError, ConfigError, DataError, ParseError


@dataclass(frozen=True)
class LabeledDataset:
    inputs: np.ndarray
    labels: np.ndarray
    class_count: int
    name: str = "dataset"

    def __post_init__(self):
        inputs = np.array(self.inputs, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64).reshape(-1)
        if inputs.ndim != 2:
            raise DataError(f"{self.name}: inputs must be a 2-d array of feature vectors, got shape {inputs.shape}")
        if inputs.shape[0] != labels.shape[0]:
            raise DataError(f"{self.name}: {inputs.shape[0]} inputs but {labels.shape[0]} labels")
        if labels.size and (labels.min() < 0 or labels.max() >= self.class_count):
            raise DataError(f"{self.name}: labels must lie in [0, {self.class_count})")
        inputs.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.inputs.shape[1])

    def subset(self, indices: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return self.inputs[indices], self.labels[indices]


@dataclass(frozen=True)
class SyntheticSpec:
    classes: int
    dim: int
    per_class: int
    cluster_spread: float
    seed: int
    center_scale: float = 1.0


@dataclass(frozen=True)
class Partition:
    client_id: int
    indices: np.ndarray

    def __len__(self) -> int:
        return int(self.indices.shape[0])


@dataclass(frozen=True)
class AuxiliaryCounts:
    member_train: int
    nonmember_train: int
    member_test: int
    nonmember_test: int


@dataclass(frozen=True)
class AuxiliarySplit:
    """One side of the auxiliary dataset, rows sorted by ``sample_ids``."""
    name: str
    sample_ids: np.ndarray
    inputs: np.ndarray
    labels: Optional[np.ndarray]
    members: np.ndarray

    def __len__(self) -> int:
        return int(self.sample_ids.shape[0])


@dataclass(frozen=True)
class AuxiliaryDataset:
    attack_train: AuxiliarySplit
    attack_test: AuxiliarySplit
    class_count: int
    labels_available: bool = True

    def split(self, name: str) -> AuxiliarySplit:
        if name == "attack_train":
            return self.attack_train
        if name == "attack_test":
            return self.attack_test
        raise ValueError(f"Unknown auxiliary split {name!r}")


# MARK: Loading & generation

def load_purchase_style(path: str, feature_dim: int, class_count: int, name: Optional[str] = None) -> LabeledDataset:
    """
    Read a Purchase100-style CSV: one record per line, integer class label first,
    then ``feature_dim`` binary (0/1) features. Record order is preserved.
    """
    lines = read_lines(path)
    if lines is None:
        raise FileNotFoundError(f"{path} not found")

    labels: List[int] = []
    rows: List[np.ndarray] = []
    for line_number, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        fields = line.split(",")
        if len(fields) != feature_dim + 1:
            raise ParseError(f"expected {feature_dim + 1} columns, found {len(fields)}", line_number)
        try:
            values = np.array([int(v) for v in fields], dtype=np.int64)
        except ValueError as e:
            raise ParseError(f"non-integer value ({e})", line_number) from e

        features = values[1:]
        if np.any((features != 0) & (features != 1)):
            raise ParseError("features must be 0 or 1", line_number)
        if not 0 <= values[0] < class_count:
            raise DataError(f"line {line_number}: label {values[0]} outside [0, {class_count})")
        labels.append(int(values[0]))
        rows.append(features.astype(np.float64))

    if not rows:
        raise DataError(f"{path} contains no records")
    return LabeledDataset(np.vstack(rows), np.array(labels), class_count, name or str(path))


def generate_synthetic(spec: SyntheticSpec) -> LabeledDataset:
    """Balanced Gaussian clusters, one seeded center per class; class-major order."""
    if min(spec.classes, spec.dim, spec.per_class) < 1 or spec.cluster_spread < 0:
        raise ConfigError(f"Invalid synthetic dataset spec: {spec}")

    rng = np.random.default_rng(spec.seed)
    centers = rng.normal(0.0, spec.center_scale, size=(spec.classes, spec.dim))
    noise = rng.normal(0.0, 1.0, size=(spec.classes, spec.per_class, spec.dim))
    inputs = centers[:, None, :] + spec.cluster_spread * noise
    labels = np.repeat(np.arange(spec.classes), spec.per_class)
    return LabeledDataset(inputs.reshape(-1, spec.dim), labels, spec.classes, name="synthetic")


# MARK: Splitting

def split_holdout(dataset: LabeledDataset, fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Reserve ``fraction`` of the indices as a held-out set no client trains on."""
    if not 0 <= fraction < 1:
        raise ConfigError(f"Hold-out fraction must lie in [0, 1), got {fraction}")
    order = np.random.default_rng(seed).permutation(len(dataset))
    n_holdout = int(round(fraction * len(dataset)))
    return np.sort(order[n_holdout:]), np.sort(order[:n_holdout])


def partition_uniform(dataset: LabeledDataset, n_clients: int, seed: int, pool: Optional[np.ndarray] = None) -> List[Partition]:
    """Seeded uniform split of ``pool`` (default: every index) into near-equal parts."""
    pool = np.arange(len(dataset)) if pool is None else np.asarray(pool, dtype=np.int64)
    if n_clients < 1:
        raise ConfigError("Need at least one client")
    if n_clients > pool.shape[0]:
        raise CapacityError("partition", n_clients, pool.shape[0])

    shuffled = np.random.default_rng(seed).permutation(pool)
    return [Partition(client_id, np.sort(part)) for client_id, part in enumerate(np.array_split(shuffled, n_clients))]


def build_auxiliary(
    target: Partition,
    pool: LabeledDataset,
    counts: AuxiliaryCounts,
    seed: int,
    nonmember_indices: Optional[Sequence[int]] = None,
    labels_available: bool = True,
) -> AuxiliaryDataset:
    """
    Draw members from the target partition and non-members from outside it,
    without replacement, into disjoint attack_train / attack_test splits.

    Parameters
    ----------
    target : Partition
        The attacked client's data.
    pool : LabeledDataset
        Parent dataset the partition indexes into.
    counts : AuxiliaryCounts
        Requested sizes of each side of each split.
    seed : int
        Sampling seed.
    nonmember_indices : Sequence[int], optional
        Candidate non-members; defaults to every index outside the target.
    labels_available : bool
        False models an adversary whose auxiliary records have no labels.
    """
    if min(counts.member_train, counts.nonmember_train, counts.member_test, counts.nonmember_test) < 1:
        raise ConfigError(f"Every auxiliary count must be positive, got {counts}")

    member_pool = np.asarray(target.indices, dtype=np.int64)
    if nonmember_indices is None:
        nonmember_pool = np.setdiff1d(np.arange(len(pool)), member_pool)
    else:
        nonmember_pool = np.setdiff1d(np.asarray(nonmember_indices, dtype=np.int64), member_pool)

    members_needed = counts.member_train + counts.member_test
    nonmembers_needed = counts.nonmember_train + counts.nonmember_test
    if member_pool.shape[0] < members_needed:
        raise CapacityError("member", members_needed, member_pool.shape[0])
    if nonmember_pool.shape[0] < nonmembers_needed:
        raise CapacityError("non-member", nonmembers_needed, nonmember_pool.shape[0])

    rng = np.random.default_rng(seed)
    members = rng.choice(member_pool, size=members_needed, replace=False)
    nonmembers = rng.choice(nonmember_pool, size=nonmembers_needed, replace=False)

    def make_split(name: str, member_ids: np.ndarray, nonmember_ids: np.ndarray) -> AuxiliarySplit:
        ids = np.concatenate([member_ids, nonmember_ids])
        is_member = np.concatenate([np.ones(member_ids.size, bool), np.zeros(nonmember_ids.size, bool)])
        order = np.argsort(ids, kind="stable")
        ids, is_member = ids[order], is_member[order]
        inputs, labels = pool.subset(ids)
        return AuxiliarySplit(name, ids, inputs, labels if labels_available else None, is_member)

    return AuxiliaryDataset(
        attack_train=make_split("attack_train", members[:counts.member_train], nonmembers[:counts.nonmember_train]),
        attack_test=make_split("attack_test", members[counts.member_train:], nonmembers[counts.nonmember_train:]),
        class_count=pool.class_count,
        labels_available=labels_available,
    )
