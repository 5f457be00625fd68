"""Synthetic datasets, client partitioning, and pair sampling.

Gaussian blob classification is the default workload. Partitioning
supports an IID shuffle, a Dirichlet-proportioned non-IID split, and a
label-sorted shard deal. Pair batches draw two samples at a time with a
configurable same-class fraction for the pairwise objective.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .autodiff import Tensor
from .errors import ConfigError, ContractError

PARTITION_MODES = ("iid", "dirichlet", "shards")
MASK_GRID = 8


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with integer class labels and optional per-sample masks."""

    features: Tensor
    labels: np.ndarray
    n_classes: int
    masks: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.features.data.ndim != 2 or self.features.data.shape[0] == 0:
            raise ContractError(f"features must be a nonempty (n, d) matrix, got {self.features.shape}")
        n = self.features.data.shape[0]
        if self.labels.shape != (n,):
            raise ContractError(f"labels shape {self.labels.shape} does not match {n} rows")
        if not np.issubdtype(self.labels.dtype, np.integer):
            raise ContractError("labels must be integers")
        if self.n_classes < 1 or self.labels.min() < 0 or self.labels.max() >= self.n_classes:
            raise ContractError(f"labels must lie in [0, {self.n_classes})")
        if self.masks is not None and self.masks.shape[0] != n:
            raise ContractError("one mask per sample required")

    @property
    def n(self) -> int:
        return int(self.features.data.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.data.shape[1])

    def subset(self, indices: np.ndarray) -> "Dataset":
        indices = np.asarray(indices)
        return Dataset(
            features=Tensor(self.features.data[indices]),
            labels=self.labels[indices],
            n_classes=self.n_classes,
            masks=None if self.masks is None else self.masks[indices],
        )


@dataclass(frozen=True)
class PartitionSpec:
    """How to divide a dataset across clients."""

    mode: str
    n_clients: int
    seed: int
    alpha: float = 0.3
    shards_per_client: int = 2

    def __post_init__(self):
        errors = []
        if self.mode not in PARTITION_MODES:
            errors.append(f"mode: unknown partition mode {self.mode!r}")
        if self.n_clients < 1:
            errors.append(f"n_clients: must be >= 1, got {self.n_clients}")
        if self.alpha <= 0:
            errors.append(f"alpha: must be positive, got {self.alpha}")
        if self.shards_per_client < 1:
            errors.append(f"shards_per_client: must be >= 1, got {self.shards_per_client}")
        if errors:
            raise ConfigError(errors)


@dataclass(frozen=True)
class PairBatch:
    """Two row-aligned sample batches plus pair labels.

    ``y_ij[k]`` is 0 when rows k of the two batches share a class and 1
    otherwise. ``single_class_warning`` is set when the source held only
    one class, which forces every pair to be same-class.
    """

    x1: Tensor
    x2: Tensor
    y1: np.ndarray
    y2: np.ndarray
    y_ij: np.ndarray
    single_class_warning: bool = False

    def __post_init__(self):
        expected = (self.y1 != self.y2).astype(np.int64)
        if not np.array_equal(expected, self.y_ij):
            raise ContractError("y_ij inconsistent with the per-sample labels")


def make_blobs(n_classes: int, per_class: int, dim: int, spread: float, seed: int) -> Dataset:
    """Isotropic Gaussian clusters with seeded random centers."""
    if n_classes < 2:
        raise ContractError(f"need >= 2 classes, got {n_classes}")
    if per_class < 1 or dim < 1:
        raise ContractError("per_class and dim must be positive")
    if spread < 0:
        raise ContractError(f"spread must be non-negative, got {spread}")
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, 1.0, (n_classes, dim))
    features = np.repeat(centers, per_class, axis=0)
    features = features + spread * rng.normal(0.0, 1.0, features.shape)
    labels = np.repeat(np.arange(n_classes), per_class)
    return Dataset(features=Tensor(features), labels=labels, n_classes=n_classes)


def toy_masks(labels: np.ndarray, n_classes: int, grid: int = MASK_GRID) -> np.ndarray:
    """Centered square masks whose side grows with the class id."""
    masks = np.zeros((len(labels), grid, grid), dtype=bool)
    for c in range(n_classes):
        side = max(1, ((c + 1) * grid) // (n_classes + 1))
        lo = (grid - side) // 2
        template = np.zeros((grid, grid), dtype=bool)
        template[lo:lo + side, lo:lo + side] = True
        masks[labels == c] = template
    return masks


def class_mask(class_id: int, n_classes: int, grid: int = MASK_GRID) -> np.ndarray:
    """Mask template for one class (used to score mask predictions)."""
    return toy_masks(np.asarray([class_id]), n_classes, grid)[0]


def _largest_remainder(props: np.ndarray, total: int) -> np.ndarray:
    """Integer counts summing to ``total`` with proportions ``props``."""
    raw = props * total
    counts = np.floor(raw).astype(np.int64)
    short = total - int(counts.sum())
    if short > 0:
        # Ties broken toward lower index for determinism.
        order = np.lexsort((np.arange(len(props)), -(raw - counts)))
        counts[order[:short]] += 1
    return counts


def partition(ds: Dataset, spec: PartitionSpec) -> list[np.ndarray]:
    """Index sets per client: disjoint, exhaustive, each nonempty."""
    n = ds.n
    k = spec.n_clients
    if n < k:
        raise ContractError(f"cannot give {k} clients at least one of {n} samples")
    rng = np.random.default_rng(spec.seed)
    if spec.mode == "iid":
        perm = rng.permutation(n)
        base, extra = divmod(n, k)
        sizes = [base + 1 if i < extra else base for i in range(k)]
        shards, start = [], 0
        for size in sizes:
            shards.append(np.sort(perm[start:start + size]))
            start += size
        return shards
    if spec.mode == "dirichlet":
        assigned: list[list[int]] = [[] for _ in range(k)]
        for c in range(ds.n_classes):
            idx = np.flatnonzero(ds.labels == c)
            if idx.size == 0:
                continue
            idx = rng.permutation(idx)
            counts = _largest_remainder(rng.dirichlet(np.full(k, spec.alpha)), idx.size)
            start = 0
            for client, count in enumerate(counts):
                assigned[client].extend(idx[start:start + count].tolist())
                start += count
        # Repair: every client must end up with at least one sample.
        sizes = np.array([len(a) for a in assigned])
        for client in range(k):
            while sizes[client] == 0:
                donor = int(np.argmax(sizes))
                assigned[client].append(assigned[donor].pop())
                sizes[donor] -= 1
                sizes[client] += 1
        return [np.sort(np.asarray(a, dtype=np.int64)) for a in assigned]
    # shards
    n_shards = k * spec.shards_per_client
    if n < n_shards:
        raise ContractError(f"{n} samples cannot fill {n_shards} shards")
    order = np.argsort(ds.labels, kind="stable")
    shards = np.array_split(order, n_shards)
    deal = rng.permutation(n_shards)
    out = []
    for client in range(k):
        picks = deal[client * spec.shards_per_client:(client + 1) * spec.shards_per_client]
        out.append(np.sort(np.concatenate([shards[p] for p in picks])))
    return out


def make_pairs(local: Dataset, b: int, pos_fraction: float, seed: int) -> PairBatch:
    """Sample ``b`` pairs with replacement from one client's data.

    Each pair draws an anchor, then a partner from the same class with
    probability ``pos_fraction`` (or from a different class otherwise).
    A single-class client can only produce same-class pairs (down to a
    one-sample client pairing its point with itself, so heavily skewed
    partitions still run); that case sets ``single_class_warning``.
    """
    if b < 1:
        raise ContractError(f"need at least one pair, got b={b}")
    if not (0.0 <= pos_fraction <= 1.0):
        raise ContractError(f"pos_fraction must lie in [0, 1], got {pos_fraction}")
    if local.n < 1:
        raise ContractError("pair sampling needs at least one sample")
    rng = np.random.default_rng(seed)
    labels = local.labels
    by_class = {int(c): np.flatnonzero(labels == c) for c in np.unique(labels)}
    single_class = len(by_class) == 1
    want_same = rng.random(b) < pos_fraction
    anchors = rng.integers(0, local.n, b)
    partners = np.empty(b, dtype=np.int64)
    for row in range(b):
        anchor_class = int(labels[anchors[row]])
        if want_same[row] or single_class:
            pool = by_class[anchor_class]
        else:
            pool = np.flatnonzero(labels != anchor_class)
        partners[row] = pool[rng.integers(0, pool.size)]
    y1 = labels[anchors]
    y2 = labels[partners]
    return PairBatch(
        x1=Tensor(local.features.data[anchors]),
        x2=Tensor(local.features.data[partners]),
        y1=y1,
        y2=y2,
        y_ij=(y1 != y2).astype(np.int64),
        single_class_warning=single_class,
    )


def load_csv(path: str) -> Dataset:
    """Read a dataset from CSV: d feature columns then a ``label`` column."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ContractError(f"{path}: empty file") from None
        if len(header) < 2 or header[-1] != "label":
            raise ContractError(f"{path}: header must end with a 'label' column")
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ContractError(f"{path}:{lineno}: expected {len(header)} columns")
            try:
                rows.append([float(v) for v in row[:-1]])
                labels.append(int(row[-1]))
            except ValueError as exc:
                raise ContractError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ContractError(f"{path}: no data rows")
    labels_arr = np.asarray(labels, dtype=np.int64)
    if labels_arr.min() < 0:
        raise ContractError(f"{path}: labels must be non-negative")
    return Dataset(
        features=Tensor(np.asarray(rows, dtype=np.float64)),
        labels=labels_arr,
        n_classes=int(labels_arr.max()) + 1,
    )


def with_masks(ds: Dataset, grid: int = MASK_GRID) -> Dataset:
    """Attach toy segmentation masks derived from the labels."""
    return replace(ds, masks=toy_masks(ds.labels, ds.n_classes, grid))
