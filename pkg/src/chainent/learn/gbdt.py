"""Multiclass gradient-boosted regression trees on the softmax log-loss.

Each stage fits one leaf-wise tree per class to the loss gradients with
Newton leaf values, then scales the whole stage by a line-searched multiplier
and the learning rate. Because the loss is convex in that multiplier and the
learning rate is at most 1, the training loss never increases.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_softmax, softmax

from .. import kernels
from .logreg import check_finite
from .metrics import log_loss

PRIOR_FLOOR = 1e-12
EARLY_STOP_ROUNDS = 10


@dataclass(frozen=True)
class GBDTParams:
    learning_rate: float = 0.1
    max_leaves: int = 31
    min_samples_leaf: int = 20
    max_iters: int = 500
    reg_lambda: float = 1.0
    min_hess: float = 1e-3
    early_stopping_rounds: int = EARLY_STOP_ROUNDS

    def __post_init__(self):
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must be in (0, 1]")
        if self.max_leaves < 1 or self.min_samples_leaf < 1 or self.max_iters < 0:
            raise ValueError("max_leaves and min_samples_leaf must be >= 1, max_iters >= 0")
        if self.reg_lambda < 0 or self.min_hess < 0:
            raise ValueError("reg_lambda and min_hess must be >= 0")


@dataclass
class Tree:
    """Flat binary tree; ``feature[j] == -1`` marks a leaf."""

    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[float] = field(default_factory=list)
    gain: list[float] = field(default_factory=list)
    grad_sum: list[float] = field(default_factory=list)
    hess_sum: list[float] = field(default_factory=list)

    def add_node(self, g: float, h: float) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        self.gain.append(0.0)
        self.grad_sum.append(g)
        self.hess_sum.append(h)
        return len(self.feature) - 1

    @property
    def leaves(self) -> list[int]:
        return [j for j, f in enumerate(self.feature) if f < 0]

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        feature = np.asarray(self.feature)
        threshold = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            f = feature[node]
            inner = f >= 0
            if not inner.any():
                return node
            r, n, fi = rows[inner], node[inner], f[inner]
            go_left = X[r, fi] <= threshold[n]
            node[inner] = np.where(go_left, left[n], right[n])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(self.value)[self.apply(X)]

    def to_dict(self) -> dict:
        def node(j):
            if self.feature[j] < 0:
                return {"leaf": self.value[j]}
            return {
                "feature": self.feature[j],
                "threshold": self.threshold[j],
                "gain": self.gain[j],
                "left": node(self.left[j]),
                "right": node(self.right[j]),
            }

        return node(0)

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        t = cls()

        def build(nd):
            j = t.add_node(0.0, 0.0)
            if "leaf" in nd:
                t.value[j] = float(nd["leaf"])
                return j
            t.feature[j] = int(nd["feature"])
            t.threshold[j] = float(nd["threshold"])
            t.gain[j] = float(nd.get("gain", 0.0))
            t.left[j] = build(nd["left"])
            t.right[j] = build(nd["right"])
            return j

        build(d)
        return t


def grow_tree(X, order, grad, hess, params: GBDTParams) -> Tree:
    """Leaf-wise growth: always split the leaf with the largest gain."""
    tree = Tree()
    node_of = np.zeros(len(X), dtype=np.int64)
    lam = params.reg_lambda
    tree.add_node(float(grad.sum()), float(hess.sum()))
    heap = []

    def consider(j):
        f, thr, gain = kernels.best_split(X, order, node_of, j, grad, hess, params.min_samples_leaf, params.min_hess, lam)
        if f >= 0 and gain > 0:
            heapq.heappush(heap, (-gain, j, f, thr))

    consider(0)
    n_leaves = 1
    while heap and n_leaves < params.max_leaves:
        neg_gain, j, f, thr = heapq.heappop(heap)
        rows = np.flatnonzero(node_of == j)
        go_left = X[rows, f] <= thr
        lrows, rrows = rows[go_left], rows[~go_left]
        lj = tree.add_node(float(grad[lrows].sum()), float(hess[lrows].sum()))
        rj = tree.add_node(float(grad[rrows].sum()), float(hess[rrows].sum()))
        node_of[lrows] = lj
        node_of[rrows] = rj
        tree.feature[j], tree.threshold[j], tree.gain[j] = f, thr, -neg_gain
        tree.left[j], tree.right[j] = lj, rj
        n_leaves += 1
        consider(lj)
        consider(rj)
    for j in tree.leaves:
        tree.value[j] = -tree.grad_sum[j] / (tree.hess_sum[j] + lam)
    return tree


def softmax_loss(F: np.ndarray, y: np.ndarray) -> float:
    if len(y) == 0:
        return 0.0
    return float(-np.mean(log_softmax(F, axis=1)[np.arange(len(y)), y]))


def line_search(F: np.ndarray, H: np.ndarray, y: np.ndarray, iters: int = 30) -> float:
    """argmin over gamma >= 0 of the log-loss of ``F + gamma * H`` (safeguarded Newton)."""
    Y = np.zeros_like(F)
    Y[np.arange(len(y)), y] = 1.0
    base = softmax_loss(F, y)
    gamma = 1.0
    for _ in range(iters):
        P = softmax(F + gamma * H, axis=1)
        ph = (P * H).sum(axis=1)
        d1 = float(((P - Y) * H).sum())
        d2 = float(((P * H * H).sum(axis=1) - ph * ph).sum())
        if d2 <= 1e-300:
            break
        step = d1 / d2
        new = max(gamma - step, 0.0)
        if abs(new - gamma) <= 1e-10 * max(1.0, gamma):
            gamma = new
            break
        gamma = new
    if softmax_loss(F + gamma * H, y) > base:
        return 0.0
    return gamma


@dataclass
class BoostedEnsemble:
    classes: tuple
    n_features: int
    init_scores: np.ndarray
    learning_rate: float
    stages: list[list[Tree]] = field(default_factory=list)
    gammas: list[float] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    valid_loss: list[float] = field(default_factory=list)
    best_iteration: int = 0
    params: GBDTParams | None = None

    @property
    def n_stages(self) -> int:
        return len(self.stages)

    def decision_function(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} feature columns, got {X.shape[-1]}")
        F = np.tile(self.init_scores, (len(X), 1))
        for trees, gamma in zip(self.stages, self.gammas):
            for k, tree in enumerate(trees):
                F[:, k] += self.learning_rate * gamma * tree.predict(X)
        return F

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.decision_function(X), axis=1)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.decision_function(X), axis=1)


def train_gbdt(X, y, classes, params: GBDTParams = GBDTParams(), valid=None) -> BoostedEnsemble:
    """Fit the ensemble; ``valid=(X_valid, y_valid)`` enables early stopping.

    With early stopping the model is cut back to the stage with the best
    validation loss, while ``valid_loss`` keeps the full history.
    """
    classes = tuple(classes)
    if len(classes) < 2:
        raise ValueError("need at least two classes")
    X = check_finite(X)
    y = np.asarray(y, dtype=np.int64)
    n, K = len(y), len(classes)
    if n == 0:
        raise ValueError("empty training set")
    counts = np.bincount(y, minlength=K).astype(np.float64)
    init = np.log(np.maximum(counts / n, PRIOR_FLOOR))
    model = BoostedEnsemble(classes, X.shape[1], init, params.learning_rate, params=params)
    F = np.tile(init, (n, 1))
    model.train_loss.append(softmax_loss(F, y))
    Xv = yv = Fv = None
    if valid is not None:
        Xv = check_finite(valid[0])
        yv = np.asarray(valid[1], dtype=np.int64)
        Fv = np.tile(init, (len(yv), 1))
        model.valid_loss.append(softmax_loss(Fv, yv))
    if np.count_nonzero(counts) < 2:
        return model

    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T, dtype=np.int64)
    Y = np.zeros((n, K))
    Y[np.arange(n), y] = 1.0
    best, since = (model.valid_loss[0] if valid is not None else None), 0
    for _ in range(params.max_iters):
        P = softmax(F, axis=1)
        trees, H = [], np.zeros_like(F)
        for k in range(K):
            grad = P[:, k] - Y[:, k]
            hess = np.maximum(P[:, k] * (1 - P[:, k]), 1e-16)
            tree = grow_tree(X, order, grad, hess, params)
            trees.append(tree)
            H[:, k] = tree.predict(X)
        gamma = line_search(F, H, y)
        F = F + params.learning_rate * gamma * H
        model.stages.append(trees)
        model.gammas.append(gamma)
        model.train_loss.append(softmax_loss(F, y))
        if valid is None:
            continue
        for k, tree in enumerate(trees):
            Fv[:, k] += params.learning_rate * gamma * tree.predict(Xv)
        vl = softmax_loss(Fv, yv)
        model.valid_loss.append(vl)
        if vl < best:
            best, since = vl, 0
            model.best_iteration = model.n_stages
        else:
            since += 1
            if since >= params.early_stopping_rounds:
                break
    if valid is not None:
        cut = model.best_iteration
        model.stages = model.stages[:cut]
        model.gammas = model.gammas[:cut]
    else:
        model.best_iteration = model.n_stages
    return model


def train_loss_of(model: BoostedEnsemble, X, y) -> float:
    return log_loss(model.predict_proba(X), np.asarray(y))
