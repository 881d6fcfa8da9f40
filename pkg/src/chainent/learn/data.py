"""Stratified train/test partition of a labeled feature matrix."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ..features.matrix import FeatureMatrix
from ..txmodel import CATEGORY_ORDER, Category


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    columns: tuple[str, ...]
    classes: tuple[Category, ...]
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    ids_train: np.ndarray
    ids_test: np.ndarray
    seed: int

    @property
    def n_features(self) -> int:
        return len(self.columns)

    def select(self, idx) -> "Dataset":
        """Same rows, restricted to the feature columns ``idx`` (in the given order)."""
        idx = list(idx)
        return Dataset(
            tuple(self.columns[i] for i in idx),
            self.classes,
            np.ascontiguousarray(self.X_train[:, idx]),
            self.y_train,
            np.ascontiguousarray(self.X_test[:, idx]),
            self.y_test,
            self.ids_train,
            self.ids_test,
            self.seed,
        )


def stratified_counts(sizes: list[int], train_frac: float = 0.7) -> list[int]:
    """Per-class training counts: largest remainder so the total is round(frac * N).

    Every class keeps at least one row on each side.
    """
    frac = Fraction(train_frac).limit_denominator(10_000)
    total = sum(sizes)
    target = int(frac * total + Fraction(1, 2))
    base = [int(frac * n) for n in sizes]
    rest = [frac * n - b for n, b in zip(sizes, base)]
    for k in sorted(range(len(sizes)), key=lambda k: (-rest[k], k))[: max(target - sum(base), 0)]:
        base[k] += 1
    return [min(max(b, 1), n - 1) for b, n in zip(base, sizes)]


def split_indices(labels, seed: int, train_frac: float = 0.7) -> tuple[np.ndarray, np.ndarray]:
    """Row indices of the stratified train and test parts, each in ascending order."""
    labels = np.asarray(labels)
    classes = sorted(set(labels.tolist()))
    sizes = [int((labels == c).sum()) for c in classes]
    small = [c for c, n in zip(classes, sizes) if n < 2]
    if small:
        raise SplitError(f"classes with fewer than 2 rows cannot be split: {small}")
    rng = np.random.default_rng(seed)
    train = []
    for c, k in zip(classes, stratified_counts(sizes, train_frac)):
        rows = np.flatnonzero(labels == c)
        train.extend(rows[rng.permutation(len(rows))[:k]].tolist())
    mask = np.zeros(len(labels), dtype=bool)
    mask[train] = True
    return np.flatnonzero(mask), np.flatnonzero(~mask)


def class_list(labels) -> tuple[Category, ...]:
    present = set(labels)
    return tuple(c for c in CATEGORY_ORDER if c in present)


def split(matrix: FeatureMatrix, seed: int, train_frac: float = 0.7) -> Dataset:
    classes = class_list(matrix.labels)
    y = np.array([classes.index(c) for c in matrix.labels], dtype=np.int64)
    tr, te = split_indices(y, seed, train_frac)
    X = np.ascontiguousarray(matrix.X, dtype=np.float64)
    return Dataset(matrix.columns, classes, X[tr], y[tr], X[te], y[te], matrix.entity_ids[tr], matrix.entity_ids[te], seed)
