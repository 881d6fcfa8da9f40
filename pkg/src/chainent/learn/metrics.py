"""Classification metrics from a confusion matrix."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Metrics:
    classes: tuple[str, ...]
    confusion: np.ndarray  # rows: true class, columns: predicted class

    @property
    def support(self) -> np.ndarray:
        return self.confusion.sum(axis=1)

    @property
    def accuracy(self) -> float:
        total = self.confusion.sum()
        return float(np.trace(self.confusion) / total) if total else 0.0

    @property
    def recall(self) -> np.ndarray:
        return _ratio(np.diag(self.confusion), self.support)

    @property
    def precision(self) -> np.ndarray:
        return _ratio(np.diag(self.confusion), self.confusion.sum(axis=0))

    @property
    def f1(self) -> np.ndarray:
        p, r = self.precision, self.recall
        return _ratio(2 * p * r, p + r)

    @property
    def macro_f1(self) -> float:
        return float(self.f1.mean())

    @property
    def macro_precision(self) -> float:
        return float(self.precision.mean())

    def summary(self) -> dict:
        return {"accuracy": self.accuracy, "f1": self.macro_f1, "precision": self.macro_precision}

    def to_csv(self) -> str:
        """Overall row first, then one row per class; per-class accuracy is recall."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "support", "accuracy", "f1", "precision"])
        w.writerow(["all", int(self.support.sum()), f"{self.accuracy:.6f}", f"{self.macro_f1:.6f}", f"{self.macro_precision:.6f}"])
        for k, c in enumerate(self.classes):
            w.writerow([c, int(self.support[k]), f"{self.recall[k]:.6f}", f"{self.f1[k]:.6f}", f"{self.precision[k]:.6f}"])
        return buf.getvalue()

    def confusion_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true\\predicted", *self.classes])
        for c, row in zip(self.classes, self.confusion.tolist()):
            w.writerow([c, *row])
        return buf.getvalue()


def _ratio(num, den) -> np.ndarray:
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return cm


def evaluate_predictions(y_true, y_pred, classes) -> Metrics:
    names = tuple(getattr(c, "value", str(c)) for c in classes)
    return Metrics(names, confusion_matrix(y_true, y_pred, len(names)))


def log_loss(P: np.ndarray, y: np.ndarray) -> float:
    """Mean negative log-likelihood of the true classes."""
    p = P[np.arange(len(y)), y]
    return float(-np.mean(np.log(np.clip(p, 1e-300, None)))) if len(y) else 0.0
