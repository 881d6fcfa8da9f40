"""One-dimensional Bayesian optimisation with a Gaussian-process surrogate."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, cholesky
from scipy.stats import norm

JITTER = 1e-8
GRID_SIZE = 2001
LENGTH_SCALES = np.geomspace(0.02, 2.0, 30)


@dataclass
class GPResult:
    best_theta: float
    best_value: float
    thetas: list[float] = field(default_factory=list)
    values: list[float] = field(default_factory=list)

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "theta", "loss"])
        for i, (t, v) in enumerate(zip(self.thetas, self.values), start=1):
            w.writerow([i, repr(t), repr(v)])
        return buf.getvalue()


def _kernel(a: np.ndarray, b: np.ndarray, length: float) -> np.ndarray:
    return np.exp(-0.5 * ((a[:, None] - b[None, :]) / length) ** 2)


def _factor(K: np.ndarray) -> np.ndarray:
    jitter = JITTER
    while True:
        try:
            return cholesky(K + jitter * np.eye(len(K)), lower=True)
        except np.linalg.LinAlgError:
            jitter *= 10
            if jitter > 1.0:
                raise


class SurrogateGP:
    """Zero-mean GP with unit signal variance on standardised targets."""

    def __init__(self, u: np.ndarray, y: np.ndarray):
        self.u = np.asarray(u, dtype=np.float64)
        self.mean = float(y.mean())
        scale = float(y.std())
        self.scale = scale if scale > 0 else 1.0
        self.z = (y - self.mean) / self.scale
        best = None
        for length in LENGTH_SCALES:
            L = _factor(_kernel(self.u, self.u, length))
            alpha = cho_solve((L, True), self.z)
            lml = -0.5 * float(self.z @ alpha) - float(np.log(np.diag(L)).sum())
            if best is None or lml > best[0]:
                best = (lml, length, L, alpha)
        _, self.length, self.L, self.alpha = best

    def predict(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and standard deviation in standardised units."""
        Ks = _kernel(u, self.u, self.length)
        mu = Ks @ self.alpha
        v = cho_solve((self.L, True), Ks.T)
        var = np.clip(1.0 - np.einsum("ij,ji->i", Ks, v), 0.0, None)
        return mu, np.sqrt(var)


def expected_improvement(mu: np.ndarray, sigma: np.ndarray, best: float) -> np.ndarray:
    """EI for minimisation; zero where the posterior is certain."""
    improve = best - mu
    out = np.maximum(improve, 0.0)
    pos = sigma > 1e-12
    z = improve[pos] / sigma[pos]
    out[pos] = improve[pos] * norm.cdf(z) + sigma[pos] * norm.pdf(z)
    return np.maximum(out, 0.0)


def gp_optimize(objective, box=(0.0, 1.0), n_iters: int = 50, n_init: int = 5, seed: int = 0) -> GPResult:
    """Minimise ``objective`` over ``box`` with ``n_iters`` evaluations in total.

    The first ``n_init`` points are uniform draws; later ones maximise expected
    improvement on a dense grid. Non-finite objective values are treated as the
    worst value seen so far when fitting the surrogate.
    """
    lo, hi = float(box[0]), float(box[1])
    if not hi > lo:
        raise ValueError("search box must have hi > lo")
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    rng = np.random.default_rng(seed)
    grid = np.linspace(0.0, 1.0, GRID_SIZE)
    us: list[float] = []
    raw: list[float] = []

    def fit_values() -> np.ndarray:
        vals = np.asarray(raw, dtype=np.float64)
        finite = np.isfinite(vals)
        worst = vals[finite].max() if finite.any() else 0.0
        return np.where(finite, vals, worst)

    for it in range(n_iters):
        if it < n_init:
            u = float(rng.uniform())
        else:
            y = fit_values()
            gp = SurrogateGP(np.asarray(us), y)
            mu, sigma = gp.predict(grid)
            ei = expected_improvement(mu, sigma, float(gp.z.min()))
            if ei.max() <= 1e-12:
                u = float(rng.uniform())
            else:
                u = float(grid[int(np.argmax(ei))])
        theta = lo + u * (hi - lo)
        value = float(objective(theta))
        us.append(u)
        raw.append(value)

    thetas = [lo + u * (hi - lo) for u in us]
    finite = [k for k, v in enumerate(raw) if math.isfinite(v)]
    if finite:
        k = min(finite, key=lambda k: (raw[k], k))
        best_theta, best_value = thetas[k], raw[k]
    else:
        best_theta, best_value = thetas[0], math.inf
    return GPResult(best_theta, best_value, thetas, raw)
