"""Compare the compiled and pure-Python kernel backends on desk-scale inputs.

    python benchmarks/bench_kernels.py [--repeat 3]

Prints one row per kernel with the best wall time of each backend, the
speedup and whether the outputs agree.
"""

import argparse
import time

import numpy as np

from chainent import _kernels_py
from chainent.cluster import cluster_common_spending
from chainent.graph import build_address_graph, project_entity_graph
from chainent.motifs import _Enumerator
from chainent.synth import generate

try:
    from chainent import _kernels as compiled
except ImportError:
    compiled = None


def union_find_case(rng):
    n = 200_000
    left = rng.integers(0, n, size=150_000).astype(np.int64)
    right = rng.integers(0, n, size=150_000).astype(np.int64)
    return "uf_components", (n, left, right)


def direct_paths_case(_rng):
    txs = generate().transactions
    ag = build_address_graph(txs)
    g = project_entity_graph(ag, cluster_common_spending(txs))
    enum = _Enumerator(g, ag)
    starts = np.flatnonzero(g.input_entity >= 0).astype(np.int64)
    return "direct_paths", (enum.succ_ptr, enum.succ_idx, enum.out_ptr, enum.out_ent, starts, 3, 10**6)


def best_split_case(rng):
    n, d = 2_000, 315
    X = np.ascontiguousarray(rng.normal(size=(n, d)))
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T, dtype=np.int64)
    node_of = np.zeros(n, dtype=np.int64)
    grad = rng.normal(size=n)
    hess = rng.uniform(0.05, 0.25, size=n)
    return "best_split", (X, order, node_of, 0, grad, hess, 20, 1e-3, 1.0)


def timed(fn, args, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t)
    return best, out


def same(a, b):
    if isinstance(a, tuple):
        return len(a) == len(b) and all(same(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return np.array_equal(a, b)
    return a == b


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if compiled is None:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation` first")
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<14} {'compiled_s':>11} {'python_s':>10} {'speedup':>8}  agree")
    for case in (union_find_case, direct_paths_case, best_split_case):
        name, kargs = case(rng)
        tc, oc = timed(getattr(compiled, name), kargs, args.repeat)
        tp, op = timed(getattr(_kernels_py, name), kargs, args.repeat)
        print(f"{name:<14} {tc:>11.4f} {tp:>10.4f} {tp / tc:>7.1f}x  {same(oc, op)}")


if __name__ == "__main__":
    main()
