"""Fitting, tuning and (de)serialising the two classifiers."""

from __future__ import annotations

import json
from dataclasses import asdict

import numpy as np

from ..features.schema import schema_hash
from ..seeding import derive_seed
from .data import Dataset, split_indices
from .gbdt import BoostedEnsemble, GBDTParams, Tree, train_gbdt
from .gp import GPResult, gp_optimize
from .logreg import LogisticModel, train_logreg
from .metrics import Metrics, evaluate_predictions, log_loss

ALGORITHMS = ("lr", "gbdt")
TUNING_BOXES = {"lr": (0.01, 3.0), "gbdt": (0.01, 0.5)}
VALID_FRACTION = 0.2
MODEL_FORMAT = 1


def inner_split(ds: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Training rows kept for fitting and rows held out for validation."""
    return split_indices(ds.y_train, derive_seed(ds.seed, "valid"), 1.0 - VALID_FRACTION)


def fit(ds: Dataset, alg: str, theta: float | None = None, gbdt_params: GBDTParams = GBDTParams()):
    """Train ``alg`` on the training part; ``theta`` is the tuned scalar.

    For LR ``theta`` is the inverse L2 strength; for GBDT the learning rate,
    with early stopping on a validation slice carved from the training rows.
    """
    if alg == "lr":
        return train_logreg(ds.X_train, ds.y_train, ds.classes, 1.0 if theta is None else theta)
    if alg == "gbdt":
        params = gbdt_params if theta is None else GBDTParams(**{**asdict(gbdt_params), "learning_rate": theta})
        fit_rows, valid_rows = inner_split(ds)
        return train_gbdt(
            ds.X_train[fit_rows],
            ds.y_train[fit_rows],
            ds.classes,
            params,
            valid=(ds.X_train[valid_rows], ds.y_train[valid_rows]),
        )
    raise ValueError(f"unknown algorithm {alg!r}; expected one of {ALGORITHMS}")


def evaluate(model, X, y, classes) -> Metrics:
    if len(y) == 0:
        raise ValueError("cannot evaluate on an empty set")
    return evaluate_predictions(y, model.predict(X), classes)


def validation_loss(ds: Dataset, alg: str, theta: float) -> float:
    """Objective for tuning: log-loss on the validation slice of the training rows."""
    fit_rows, valid_rows = inner_split(ds)
    inner = Dataset(ds.columns, ds.classes, ds.X_train[fit_rows], ds.y_train[fit_rows], ds.X_train[valid_rows],
                    ds.y_train[valid_rows], ds.ids_train[fit_rows], ds.ids_train[valid_rows], ds.seed)
    if alg == "lr":
        model = train_logreg(inner.X_train, inner.y_train, ds.classes, theta)
        return log_loss(model.predict_proba(inner.X_test), inner.y_test)
    model = fit(ds, "gbdt", theta)
    return min(model.valid_loss)


def tune(ds: Dataset, alg: str, n_iters: int = 50, n_init: int = 5) -> GPResult:
    return gp_optimize(
        lambda theta: validation_loss(ds, alg, theta),
        TUNING_BOXES[alg],
        n_iters=n_iters,
        n_init=n_init,
        seed=derive_seed(ds.seed, f"tune-{alg}"),
    )


# -- serialisation ----------------------------------------------------------


def model_to_dict(model, columns) -> dict:
    doc = {
        "format": MODEL_FORMAT,
        "schema_hash": schema_hash(),
        "columns": list(columns),
        "classes": [getattr(c, "value", c) for c in model.classes],
    }
    if isinstance(model, LogisticModel):
        doc.update(kind="lr", inverse_l2=model.inverse_l2, coef=model.coef.tolist(), intercept=model.intercept.tolist())
    else:
        doc.update(
            kind="gbdt",
            learning_rate=model.learning_rate,
            init_scores=model.init_scores.tolist(),
            gammas=list(model.gammas),
            stages=[[t.to_dict() for t in trees] for trees in model.stages],
            train_loss=model.train_loss,
            valid_loss=model.valid_loss,
            best_iteration=model.best_iteration,
        )
    return doc


def model_to_json(model, columns) -> str:
    return json.dumps(model_to_dict(model, columns), indent=1) + "\n"


def model_from_json(text: str):
    """Returns ``(model, columns)``."""
    from ..txmodel import parse_category

    doc = json.loads(text)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"unsupported model format {doc.get('format')!r}")
    classes = tuple(parse_category(c) for c in doc["classes"])
    columns = tuple(doc["columns"])
    if doc["kind"] == "lr":
        model = LogisticModel(classes, np.asarray(doc["coef"], dtype=np.float64).reshape(len(classes), len(columns)),
                              np.asarray(doc["intercept"], dtype=np.float64), float(doc["inverse_l2"]))
    elif doc["kind"] == "gbdt":
        model = BoostedEnsemble(
            classes,
            len(columns),
            np.asarray(doc["init_scores"], dtype=np.float64),
            float(doc["learning_rate"]),
            [[Tree.from_dict(t) for t in trees] for trees in doc["stages"]],
            [float(g) for g in doc["gammas"]],
            list(doc.get("train_loss", [])),
            list(doc.get("valid_loss", [])),
            int(doc.get("best_iteration", 0)),
        )
    else:
        raise ValueError(f"unknown model kind {doc['kind']!r}")
    return model, columns
