"""One-vs-rest L2-regularised logistic regression."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

GTOL = 1e-6


def logreg_objective(params: np.ndarray, X: np.ndarray, s: np.ndarray, inverse_l2: float) -> tuple[float, np.ndarray]:
    """Penalised binary log-loss and its gradient.

    ``params`` is ``[w, b]``; ``s`` holds targets in {-1, +1}. The intercept
    is not penalised: ``0.5 |w|^2 + C * sum log(1 + exp(-s (Xw + b)))``.
    """
    w, b = params[:-1], params[-1]
    margin = s * (X @ w + b)
    loss = 0.5 * float(w @ w) + inverse_l2 * float(np.logaddexp(0.0, -margin).sum())
    coef = -inverse_l2 * s * expit(-margin)
    grad = np.empty_like(params)
    grad[:-1] = w + X.T @ coef
    grad[-1] = coef.sum()
    return loss, grad


@dataclass(frozen=True)
class LogisticModel:
    classes: tuple
    coef: np.ndarray  # (n_classes, n_features)
    intercept: np.ndarray
    inverse_l2: float
    converged: tuple[bool, ...] = ()

    @property
    def n_features(self) -> int:
        return self.coef.shape[1]

    def scores(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} feature columns, got {X.shape[-1]}")
        return X @ self.coef.T + self.intercept

    def predict_proba(self, X) -> np.ndarray:
        """Per-class sigmoids renormalised onto the simplex."""
        p = expit(self.scores(X))
        return p / p.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)


def check_finite(X: np.ndarray) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if not np.isfinite(X).all():
        raise ValueError("feature matrix contains non-finite values")
    return X


def train_logreg(X, y, classes, inverse_l2: float = 1.0, max_iter: int = 1000) -> LogisticModel:
    if not inverse_l2 > 0:
        raise ValueError("inverse_l2 must be positive")
    X = check_finite(X)
    y = np.asarray(y)
    d = X.shape[1]
    coef = np.zeros((len(classes), d))
    intercept = np.zeros(len(classes))
    converged = []
    for k in range(len(classes)):
        s = np.where(y == k, 1.0, -1.0)
        res = minimize(
            logreg_objective,
            np.zeros(d + 1),
            args=(X, s, inverse_l2),
            jac=True,
            method="L-BFGS-B",
            options={"gtol": GTOL, "maxiter": max_iter},
        )
        coef[k], intercept[k] = res.x[:-1], res.x[-1]
        converged.append(bool(res.success))
    return LogisticModel(tuple(classes), coef, intercept, float(inverse_l2), tuple(converged))
