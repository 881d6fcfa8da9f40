"""Gain importance, incremental feature groups and top-k selection curves."""

from __future__ import annotations

import csv
import io

import numpy as np

from ..features import schema as S
from ..seeding import derive_seed
from .data import Dataset
from .gbdt import BoostedEnsemble, GBDTParams, train_gbdt
from .models import ALGORITHMS, evaluate, fit
from .metrics import log_loss

GROUP_ORDER = ("Address", "Entity", "Motif1", "Temporal", "Centrality", "Motif2", "Motif3")
SELECTION_KS = (1, 5, 10, 15, 20, 50, 100, 315)
BOOTSTRAP_ROUNDS = 20


def gain_by_feature(model: BoostedEnsemble) -> np.ndarray:
    gains = np.zeros(model.n_features)
    for trees in model.stages:
        for tree in trees:
            for f, g in zip(tree.feature, tree.gain):
                if f >= 0:
                    gains[f] += g
    return gains


def feature_importance(model: BoostedEnsemble, columns) -> list[tuple[str, float]]:
    """Features by total split gain, largest first; ties keep column order."""
    gains = gain_by_feature(model)
    order = sorted(range(len(gains)), key=lambda j: (-gains[j], j))
    return [(columns[j], float(gains[j])) for j in order]


def bootstrap_importance(ds: Dataset, params: GBDTParams = GBDTParams(), rounds: int = BOOTSTRAP_ROUNDS, top: int = 20):
    """Gain and rank spread over bootstrap resamples of the training rows.

    Returns rows ``(feature, mean_gain, std_gain, mean_rank, top_share)``
    sorted by mean gain, where ``top_share`` is how often the feature ranked
    within the first ``top``.
    """
    rng = np.random.default_rng(derive_seed(ds.seed, "bootstrap"))
    d = ds.n_features
    gains = np.zeros((rounds, d))
    ranks = np.zeros((rounds, d))
    for b in range(rounds):
        rows = np.sort(rng.integers(0, len(ds.y_train), len(ds.y_train)))
        model = train_gbdt(ds.X_train[rows], ds.y_train[rows], ds.classes, params)
        gains[b] = gain_by_feature(model)
        order = sorted(range(d), key=lambda j: (-gains[b, j], j))
        ranks[b, order] = np.arange(1, d + 1)
    mean = gains.mean(axis=0)
    out = [
        (ds.columns[j], float(mean[j]), float(gains[:, j].std()), float(ranks[:, j].mean()), float((ranks[:, j] <= top).mean()))
        for j in range(d)
    ]
    return sorted(out, key=lambda r: (-r[1], ds.columns.index(r[0])))


def group_columns(columns, groups) -> list[int]:
    """Indices of the columns belonging to ``groups``, grouped in the given order."""
    idx = []
    for g in groups:
        idx.extend(j for j, c in enumerate(columns) if c.split(".", 1)[0] == g)
    return idx


def incremental_groups_study(ds: Dataset, order=GROUP_ORDER, algorithms=ALGORITHMS) -> list[dict]:
    """Default-parameter models on growing prefixes of the group order."""
    rows = []
    for k in range(1, len(order) + 1):
        sub = ds.select(group_columns(ds.columns, order[:k]))
        for alg in algorithms:
            m = evaluate(fit(sub, alg), sub.X_test, sub.y_test, sub.classes)
            rows.append({"groups": "+".join(order[:k]), "n_features": sub.n_features, "alg": alg, **m.summary()})
    return rows


def selection_curve(ds: Dataset, ranking, ks=SELECTION_KS, algorithms=ALGORITHMS, thetas=None) -> list[dict]:
    """Metrics using the ``k`` best-ranked columns, kept in their original order.

    ``ranking`` lists column names best first. ``thetas`` optionally maps an
    algorithm to its tuned scalar.
    """
    thetas = thetas or {}
    pos = {c: j for j, c in enumerate(ds.columns)}
    rows = []
    for k in ks:
        if k > len(ranking):
            raise ValueError(f"k={k} exceeds the {len(ranking)} ranked features")
        sub = ds.select(sorted(pos[c] for c in ranking[:k]))
        for alg in algorithms:
            model = fit(sub, alg, thetas.get(alg))
            m = evaluate(model, sub.X_test, sub.y_test, sub.classes)
            train_loss = log_loss(model.predict_proba(sub.X_train), sub.y_train)
            rows.append({"k": k, "alg": alg, **m.summary(), "train_log_loss": train_loss})
    return rows


def rows_to_csv(rows: list[dict], float_fmt: str = ".6f") -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(rows[0]))
    for r in rows:
        w.writerow([format(v, float_fmt) if isinstance(v, float) else v for v in r.values()])
    return buf.getvalue()


def full_group_order_sizes(order=GROUP_ORDER) -> list[int]:
    sizes, total = [], 0
    for g in order:
        total += S.GROUP_SIZES[g]
        sizes.append(total)
    return sizes
