"""Labeled datasets: synthetic generation, CSV I/O, splitting and partitioning.

Class labels double as the fairness attributes, so "filter by attribute" is
"filter by class". Every dataset keeps ``row_ids`` pointing back into the pool
it was cut from, which is how disjointness and provenance are checked.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from fairfl.seeding import make_rng


class DataError(ValueError):
    pass


class EmptyDatasetError(DataError):
    pass


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    row_ids: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if X.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise DataError(f"{X.shape[0]} feature rows but labels have shape {y.shape}")
        if len(y) and (y.min() < 0 or y.max() >= self.num_classes):
            raise DataError(f"labels must lie in [0, {self.num_classes})")
        ids = np.arange(len(y)) if self.row_ids is None else np.asarray(self.row_ids, dtype=np.int64)
        if ids.shape != y.shape:
            raise DataError("row_ids must match the number of rows")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "row_ids", ids)

    def __len__(self):
        return len(self.labels)

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> LabeledDataset:
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.features[idx], self.labels[idx], self.num_classes, self.row_ids[idx])

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


@dataclass(frozen=True)
class PartitionPlan:
    num_clients: int
    samples_per_client: int
    unfair_set_size: int
    target_classes: frozenset
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "target_classes", frozenset(int(c) for c in self.target_classes))
        for name in ("num_clients", "samples_per_client", "unfair_set_size"):
            if getattr(self, name) < 1:
                raise DataError(f"{name} must be positive")
        if not self.target_classes:
            raise DataError("target_classes must be non-empty")


@dataclass(frozen=True)
class Partition:
    clean_sets: list
    unfair_set: LabeledDataset
    representative_set: LabeledDataset


def generate_synthetic(num_classes: int, input_dim: int, samples_per_class: int, seed: int,
                       separation: float = 5.5) -> LabeledDataset:
    """Unit-variance Gaussian cluster per class, rows shuffled.

    When ``input_dim >= num_classes`` the class means sit on seeded orthogonal
    directions, so every pair of means is exactly ``separation`` apart.
    Otherwise means are drawn at random and redrawn until all pairs are at
    least ``separation`` apart.
    """
    if min(num_classes, input_dim, samples_per_class) < 1:
        raise DataError("num_classes, input_dim and samples_per_class must be positive")
    if separation < 3.0:
        raise DataError("separation must be at least 3 within-class standard deviations")
    rng = make_rng(seed, "synthetic")
    if input_dim >= num_classes:
        q, _ = np.linalg.qr(rng.standard_normal((input_dim, num_classes)))
        means = q.T * (separation / math.sqrt(2.0))
    else:
        scale = separation
        for attempt in range(10_000):
            means = rng.standard_normal((num_classes, input_dim)) * scale
            gaps = np.linalg.norm(means[:, None] - means[None], axis=-1)
            if num_classes == 1 or gaps[~np.eye(num_classes, dtype=bool)].min() >= separation:
                break
            if attempt % 100 == 99:
                scale *= 1.5
    labels = np.repeat(np.arange(num_classes), samples_per_class)
    features = means[labels] + rng.standard_normal((len(labels), input_dim))
    order = rng.permutation(len(labels))
    return LabeledDataset(features[order], labels[order], num_classes)


def write_csv(ds: LabeledDataset, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{k}" for k in range(ds.input_dim)] + ["label"])
        for x, y in zip(ds.features, ds.labels):
            w.writerow([repr(float(v)) for v in x] + [int(y)])


def load_csv(path, num_classes: int | None = None) -> LabeledDataset:
    """Read ``f0,...,f{k-1},label`` rows. ``num_classes`` defaults to max label + 1."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such dataset file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[-1].strip() != "label":
            raise DataError(f"{path}:1: header must be f0,...,f{{k-1}},label")
        k = len(header) - 1
        if k < 1 or [h.strip() for h in header[:-1]] != [f"f{i}" for i in range(k)]:
            raise DataError(f"{path}:1: feature columns must be named f0..f{k - 1}")
        rows, labels = [], []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != k + 1:
                raise DataError(f"{path}:{line_no}: expected {k + 1} fields, got {len(row)}")
            try:
                x = [float(v) for v in row[:-1]]
            except ValueError as exc:
                raise DataError(f"{path}:{line_no}: non-numeric feature ({exc})") from None
            if not all(math.isfinite(v) for v in x):
                raise DataError(f"{path}:{line_no}: non-finite feature")
            try:
                label = int(row[-1])
            except ValueError:
                raise DataError(f"{path}:{line_no}: label {row[-1]!r} is not an integer") from None
            if label < 0 or (num_classes is not None and label >= num_classes):
                raise DataError(f"{path}:{line_no}: label {label} out of range")
            rows.append(x)
            labels.append(label)
    if not rows:
        raise EmptyDatasetError(f"{path}: no data rows")
    if num_classes is None:
        num_classes = max(labels) + 1
    return LabeledDataset(np.array(rows, dtype=np.float64), np.array(labels, dtype=np.int64), num_classes)


def filter_by_classes(ds: LabeledDataset, classes) -> LabeledDataset:
    keep = np.isin(ds.labels, np.fromiter((int(c) for c in classes), dtype=np.int64))
    if not keep.any():
        raise EmptyDatasetError(f"no rows with labels in {sorted(classes)}")
    return ds.subset(np.flatnonzero(keep))


def stratified_split(ds: LabeledDataset, test_fraction: float, seed: int) -> tuple[LabeledDataset, LabeledDataset]:
    """(train, test) with ``round(test_fraction * count_c)`` test rows taken from each class."""
    if not 0.0 < test_fraction < 1.0:
        raise DataError("test_fraction must be in (0, 1)")
    rng = make_rng(seed, "test-split")
    test_idx = []
    for c in range(ds.num_classes):
        rows = np.flatnonzero(ds.labels == c)
        take = int(round(test_fraction * len(rows)))
        if len(rows) and take == 0:
            take = 1
        test_idx.append(rng.permutation(rows)[:take])
    test_idx = np.sort(np.concatenate(test_idx))
    train_mask = np.ones(len(ds), dtype=bool)
    train_mask[test_idx] = False
    return ds.subset(np.flatnonzero(train_mask)), ds.subset(test_idx)


def partition(pool: LabeledDataset, plan: PartitionPlan) -> Partition:
    """Disjoint i.i.d. client sets, an attacker unfair set, and a representative set.

    The unfair set holds only target-class rows and is sampled from the union
    of the clean sets. The representative set is sampled from the whole pool
    and has one clean set's size. Each draw has its own RNG stream, so the
    clean sets do not depend on the unfair/representative parameters.
    """
    if not plan.target_classes < set(range(pool.num_classes)):
        raise DataError("target_classes must be a proper subset of the pool's classes")
    needed = plan.num_clients * plan.samples_per_client
    if needed > len(pool):
        raise DataError(f"pool has {len(pool)} rows but {plan.num_clients} clients x "
                        f"{plan.samples_per_client} samples need {needed}")
    order = make_rng(plan.seed, "clean").permutation(len(pool))
    s = plan.samples_per_client
    clean_idx = [order[i * s:(i + 1) * s] for i in range(plan.num_clients)]
    clean_sets = [pool.subset(idx) for idx in clean_idx]

    union = np.concatenate(clean_idx)
    eligible = np.sort(union[np.isin(pool.labels[union], sorted(plan.target_classes))])
    if len(eligible) < plan.unfair_set_size:
        raise DataError(f"only {len(eligible)} target-class rows available for an unfair set of "
                        f"{plan.unfair_set_size}")
    unfair_idx = make_rng(plan.seed, "unfair").choice(eligible, size=plan.unfair_set_size, replace=False)
    rep_idx = make_rng(plan.seed, "representative").choice(len(pool), size=s, replace=False)
    return Partition(clean_sets, pool.subset(unfair_idx), pool.subset(rep_idx))
