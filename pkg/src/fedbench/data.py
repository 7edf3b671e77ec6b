"""Synthetic data generation and deterministic client partitioning.

The Swiss-roll generator places class ``c`` on spiral arm ``c``: for
``t`` uniform in [0, 1], angle = 2*pi*turns*t + c*(2*pi/3) and radius
0.25 + t, plus isotropic Gaussian noise. Features are standardized with
train-set statistics.

All partitioners are pure functions of (data, spec): equal seeds give
bitwise-equal outputs, examples are never duplicated, and anything a
partitioner drops is logged.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import CapacityError, ShapeError
from .rng import derive

log = logging.getLogger(__name__)


@dataclass
class LabeledDataset:
    features: np.ndarray  # N x d float64
    labels: np.ndarray    # N int64 in [0, class_count)
    class_count: int

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.labels.ndim != 1:
            raise ShapeError("features must be 2-D and labels 1-D")
        if len(self.features) != len(self.labels):
            raise ShapeError(
                f"{len(self.features)} feature rows but {len(self.labels)} labels"
            )
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ShapeError(f"labels must lie in [0, {self.class_count})")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, idx: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(self.features[idx], self.labels[idx], self.class_count)


@dataclass
class UnlabeledDataset:
    features: np.ndarray

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or len(self.features) < 1:
            raise ShapeError("unlabeled features must be a nonempty 2-D matrix")

    def __len__(self) -> int:
        return len(self.features)


class PartitionKind(str, Enum):
    IID = "iid"
    STEP = "step"
    DIRICHLET = "dirichlet"


@dataclass(frozen=True)
class PartitionSpec:
    kind: PartitionKind
    client_count: int
    step_major_classes: int = 1
    step_major_count: int = 0
    step_minor_count: int = 0
    dirichlet_alpha: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.client_count < 1:
            raise ShapeError(f"client_count must be >= 1, got {self.client_count}")
        if self.kind is PartitionKind.DIRICHLET and self.dirichlet_alpha <= 0:
            raise ShapeError("dirichlet_alpha must be positive")


@dataclass(frozen=True)
class SwissRollSpec:
    train_per_class: int = 400
    test_per_class: int = 200
    noise_sigma: float = 0.05
    turns: float = 1.5
    seed: int = 0
    class_count: int = 3

    def __post_init__(self) -> None:
        if self.train_per_class < 1 or self.test_per_class < 1:
            raise ShapeError("per-class counts must be positive")
        if self.noise_sigma < 0 or self.turns <= 0:
            raise ShapeError("noise_sigma must be >= 0 and turns > 0")


def _arm_points(spec: SwissRollSpec, per_class: int, split_tag: int) -> LabeledDataset:
    n = per_class * spec.class_count
    features = np.empty((n, 2))
    labels = np.empty(n, dtype=np.int64)
    row = 0
    for c in range(spec.class_count):
        rng = derive(spec.seed, "swiss-roll", split_tag, c)
        offset = c * 2.0 * math.pi / spec.class_count
        for _ in range(per_class):
            t = rng.uniform()
            theta = 2.0 * math.pi * spec.turns * t + offset
            r = 0.25 + t
            nx = rng.normal()
            ny = rng.normal()
            features[row, 0] = r * math.cos(theta) + spec.noise_sigma * nx
            features[row, 1] = r * math.sin(theta) + spec.noise_sigma * ny
            labels[row] = c
            row += 1
    return LabeledDataset(features, labels, spec.class_count)


def generate_swiss_roll(
    spec: SwissRollSpec, standardize: bool = True
) -> tuple[LabeledDataset, LabeledDataset]:
    """Balanced train/test spirals; test reuses the train standardization."""
    train = _arm_points(spec, spec.train_per_class, 0)
    test = _arm_points(spec, spec.test_per_class, 1)
    if standardize:
        mean = train.features.mean(axis=0)
        std = train.features.std(axis=0)
        train.features = (train.features - mean) / std
        test.features = (test.features - mean) / std
    return train, test


def _class_indices_shuffled(data: LabeledDataset, spec: PartitionSpec, tag: str) -> list[np.ndarray]:
    per_class = []
    for c in range(data.class_count):
        idx = np.flatnonzero(data.labels == c)
        order = derive(spec.seed, tag, c).permutation(len(idx))
        per_class.append(idx[order])
    return per_class


def partition_iid(data: LabeledDataset, spec: PartitionSpec) -> list[LabeledDataset]:
    """Seeded shuffle dealt round-robin into near-equal shards."""
    order = derive(spec.seed, "partition-iid").permutation(len(data))
    return [data.subset(order[i :: spec.client_count]) for i in range(spec.client_count)]


def partition_step(data: LabeledDataset, spec: PartitionSpec) -> list[LabeledDataset]:
    """Major/minor class split: client i's major classes are (i*m + k) mod C.

    Each client receives step_major_count examples from each major class and
    step_minor_count from each minor class, sampled without replacement from
    a per-class seeded shuffle. Leftover examples are discarded (logged).
    """
    c_total = data.class_count
    m = spec.step_major_classes
    per_class = _class_indices_shuffled(data, spec, "partition-step")
    cursor = [0] * c_total
    client_indices: list[list[np.ndarray]] = [[] for _ in range(spec.client_count)]
    for i in range(spec.client_count):
        majors = {(i * m + k) % c_total for k in range(m)}
        for c in range(c_total):
            want = spec.step_major_count if c in majors else spec.step_minor_count
            available = len(per_class[c]) - cursor[c]
            if want > available:
                raise CapacityError(
                    f"class {c}: client {i} needs {want} examples but only "
                    f"{available} remain"
                )
            client_indices[i].append(per_class[c][cursor[c] : cursor[c] + want])
            cursor[c] += want
    discarded = sum(len(per_class[c]) - cursor[c] for c in range(c_total))
    if discarded:
        log.info("step partition discarded %d unassigned examples", discarded)
    return [data.subset(np.concatenate(parts)) for parts in client_indices]


def _largest_remainder(proportions: np.ndarray, total: int) -> np.ndarray:
    """Integer counts summing to `total`, proportional to `proportions`."""
    raw = proportions * total
    base = np.floor(raw).astype(np.int64)
    short = total - int(base.sum())
    if short:
        # Ties broken toward the lower client index for determinism.
        order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - base[i]), i))
        for i in order[:short]:
            base[i] += 1
    return base


def partition_dirichlet(data: LabeledDataset, spec: PartitionSpec) -> list[LabeledDataset]:
    """Per class c, q_c ~ Dir(alpha * 1_N); assign by largest-remainder rounding."""
    if len(data) == 0:
        raise CapacityError("cannot partition an empty dataset")
    per_class = _class_indices_shuffled(data, spec, "partition-dirichlet")
    alphas = np.full(spec.client_count, spec.dirichlet_alpha)
    client_indices: list[list[np.ndarray]] = [[] for _ in range(spec.client_count)]
    for c in range(data.class_count):
        q = derive(spec.seed, "partition-dirichlet-q", c).dirichlet(alphas)
        counts = _largest_remainder(q, len(per_class[c]))
        pos = 0
        for i in range(spec.client_count):
            client_indices[i].append(per_class[c][pos : pos + counts[i]])
            pos += counts[i]
    shards = []
    for i, parts in enumerate(client_indices):
        idx = np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)
        if len(idx) == 0:
            log.warning("dirichlet partition left client %d with zero examples", i)
        shards.append(data.subset(idx))
    return shards


def partition(data: LabeledDataset, spec: PartitionSpec) -> list[LabeledDataset]:
    if spec.kind is PartitionKind.IID:
        return partition_iid(data, spec)
    if spec.kind is PartitionKind.STEP:
        return partition_step(data, spec)
    return partition_dirichlet(data, spec)


def split_pool_indices(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Shuffled (client_indices, server_indices) with ceil(fraction*n) to the server."""
    if not 0.0 < fraction < 1.0:
        raise ShapeError(f"pool fraction must be in (0, 1), got {fraction}")
    order = derive(seed, "server-pool").permutation(n)
    j = math.ceil(fraction * n)
    return order[j:], order[:j]


def split_server_pool(
    data: LabeledDataset, fraction: float, seed: int
) -> tuple[LabeledDataset, UnlabeledDataset]:
    """Disjoint, exhaustive split; the server side has its labels stripped."""
    client_idx, server_idx = split_pool_indices(len(data), fraction, seed)
    return data.subset(client_idx), UnlabeledDataset(data.features[server_idx])


def write_csv(path: str | Path, features: np.ndarray, labels: np.ndarray | None = None) -> None:
    """`x0,...,xd-1,label` rows; label -1 marks unlabeled data."""
    features = np.asarray(features, dtype=np.float64)
    d = features.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i}" for i in range(d)] + ["label"])
        for row_idx in range(len(features)):
            label = -1 if labels is None else int(labels[row_idx])
            writer.writerow([repr(float(v)) for v in features[row_idx]] + [label])


def read_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Features and labels from the CSV interchange format (label -1 = unlabeled)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[-1] != "label" or not header[0].startswith("x"):
            raise ShapeError(f"unexpected CSV header {header}")
        feats, labels = [], []
        for row in reader:
            feats.append([float(v) for v in row[:-1]])
            labels.append(int(row[-1]))
    return np.asarray(feats, dtype=np.float64), np.asarray(labels, dtype=np.int64)


def read_labeled_csv(path: str | Path, class_count: int | None = None) -> LabeledDataset:
    feats, labels = read_csv(path)
    if np.any(labels < 0):
        raise ShapeError(f"{path} contains unlabeled rows")
    c = class_count if class_count is not None else int(labels.max()) + 1
    return LabeledDataset(feats, labels, c)
