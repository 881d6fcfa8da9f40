"""Feature matrix assembly and CSV round-trip."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from ..txmodel import Category, parse_category
from . import schema as S
from .extract import FeatureExtractor


@dataclass
class FeatureMatrix:
    columns: tuple[str, ...]
    entity_ids: np.ndarray
    X: np.ndarray
    labels: list[Category]
    truncated: list[tuple[bool, bool, bool]] = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64).reshape(len(self.entity_ids), len(self.columns))
        if len(self.labels) != len(self.entity_ids):
            raise S.SchemaError(f"{len(self.labels)} labels for {len(self.entity_ids)} rows")
        if not np.isfinite(self.X).all():
            raise S.SchemaError("feature matrix contains non-finite values")

    @property
    def shape(self) -> tuple[int, int]:
        return self.X.shape

    def subset(self, groups) -> "FeatureMatrix":
        """Columns of the requested groups, in schema order."""
        if self.columns != S.COLUMNS:
            raise S.SchemaError("group subsetting needs the full schema width")
        idx = S.group_indices(groups)
        return FeatureMatrix(tuple(S.COLUMNS[i] for i in idx), self.entity_ids.copy(), self.X[:, idx], list(self.labels), list(self.truncated))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["entity_id", "label", *self.columns])
        for e, lab, row in zip(self.entity_ids.tolist(), self.labels, self.X):
            w.writerow([e, lab.value, *(repr(float(v)) for v in row)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "FeatureMatrix":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0][:2] != ["entity_id", "label"]:
            raise S.SchemaError("feature CSV must start with entity_id,label")
        columns = tuple(rows[0][2:])
        body = rows[1:]
        for k, r in enumerate(body, start=2):
            if len(r) != len(columns) + 2:
                raise S.SchemaError(f"line {k}: expected {len(columns) + 2} fields, got {len(r)}")
        ids = np.array([int(r[0]) for r in body], dtype=np.int64)
        labels = [parse_category(r[1]) for r in body]
        X = np.array([[float(v) for v in r[2:]] for r in body], dtype=np.float64)
        return cls(columns, ids, X.reshape(len(body), len(columns)), labels)


def assemble_matrix(
    extractor: FeatureExtractor,
    labels: dict[int, Category],
    groups=S.GROUPS,
) -> FeatureMatrix:
    """One row per labeled entity (ascending id); columns in schema order."""
    unknown = set(groups) - set(S.GROUPS)
    if unknown:
        raise S.SchemaError(f"unknown feature group(s): {sorted(unknown)}")
    entities = sorted(labels)
    X = extractor.vectors(entities, groups)
    columns = tuple(S.COLUMNS[i] for i in S.group_indices(groups))
    if X.shape[1] != len(columns):
        raise S.SchemaError(f"matrix width {X.shape[1]} does not match schema width {len(columns)}")
    return FeatureMatrix(
        columns,
        np.asarray(entities, dtype=np.int64),
        X,
        [labels[e] for e in entities],
        [extractor.truncated(e) for e in entities],
    )
