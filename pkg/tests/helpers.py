"""Random instances and brute-force oracles shared by the test modules.

The oracles deliberately avoid the package's own graph/motif code paths.
"""

from collections import deque
from itertools import permutations

import numpy as np

from chainent.txmodel import TxIo, TxRecord


def random_txs(rng, n_tx, n_addr, coinbase_p=0.1, max_in=3, max_out=3, time_span=20, start=1_500_000_000):
    """Random valid transactions over a pool of ``n_addr`` addresses.

    Timestamps are drawn from a small range so equal times occur.
    """
    pool = [f"a{i:05d}" for i in range(n_addr)]
    txs = []
    for k in range(n_tx):
        ts = start + int(rng.integers(0, time_span)) * 600
        n_out = int(rng.integers(1, max_out + 1))
        if rng.random() < coinbase_p:
            inputs = ()
            outputs = tuple(TxIo(pool[int(rng.integers(n_addr))], int(rng.integers(1, 10**8))) for _ in range(n_out))
        else:
            n_in = int(rng.integers(1, max_in + 1))
            inputs = tuple(TxIo(pool[int(rng.integers(n_addr))], int(rng.integers(10**6, 10**8))) for _ in range(n_in))
            budget = sum(i.amount for i in inputs) - int(rng.integers(0, 10**5))
            cuts = np.sort(rng.integers(0, budget + 1, size=n_out - 1))
            amounts = np.diff(np.concatenate([[0], cuts, [budget]]))
            outputs = tuple(TxIo(pool[int(rng.integers(n_addr))], int(a)) for a in amounts)
        txs.append(
            TxRecord(
                txid=f"tx{k:05d}",
                block_height=(ts - start) // 600,
                timestamp=ts,
                inputs=inputs,
                outputs=outputs,
                coinbase=not inputs,
            )
        )
    return txs


def bfs_components(txs):
    """Connected components of the co-input graph, by breadth-first search."""
    adj = {}
    for tx in txs:
        for io in tx.inputs + tx.outputs:
            adj.setdefault(io.address, set())
        addrs = [i.address for i in tx.inputs]
        for a in addrs:
            for b in addrs:
                if a != b:
                    adj[a].add(b)
    seen = set()
    comps = set()
    for a in adj:
        if a in seen:
            continue
        comp = set()
        queue = deque([a])
        seen.add(a)
        while queue:
            x = queue.popleft()
            comp.add(x)
            for y in adj[x]:
                if y not in seen:
                    seen.add(y)
                    queue.append(y)
        comps.add(frozenset(comp))
    return comps


def brute_force_motifs(txs, entity_of, n):
    """Every Direct n-motif as ``(tx indices, entity path)``, by trying all ordered n-tuples."""
    key = [(tx.timestamp, tx.block_height, i) for i, tx in enumerate(txs)]
    in_addr = [{i.address for i in tx.inputs} for tx in txs]
    out_addr = [{o.address for o in tx.outputs} for tx in txs]
    found = set()
    for combo in permutations(range(len(txs)), n):
        if not in_addr[combo[0]]:
            continue
        ok = True
        for a, b in zip(combo, combo[1:]):
            if not key[a] < key[b] or not (out_addr[a] & in_addr[b]):
                ok = False
                break
        if not ok:
            continue
        path = [entity_of(next(iter(in_addr[t]))) for t in combo]
        for last in {entity_of(a) for a in out_addr[combo[-1]]}:
            found.add((combo, tuple(path + [last])))
    return found


def brute_force_motifs_fast(txs, entity_of, n):
    """Same set as :func:`brute_force_motifs`, pruning on the first failing hop.

    Still checks every ordered pair with plain nested loops; used where the
    full ``O(T^n)`` permutation scan would be too slow.
    """
    T = len(txs)
    key = [(tx.timestamp, tx.block_height, i) for i, tx in enumerate(txs)]
    in_addr = [{i.address for i in tx.inputs} for tx in txs]
    out_addr = [{o.address for o in tx.outputs} for tx in txs]
    link = [[b for b in range(T) if b != a and key[a] < key[b] and out_addr[a] & in_addr[b]] for a in range(T)]
    found = set()

    def extend(chain):
        if len(chain) == n:
            path = [entity_of(next(iter(in_addr[t]))) for t in chain]
            for last in {entity_of(a) for a in out_addr[chain[-1]]}:
                found.add((tuple(chain), tuple(path + [last])))
            return
        for b in link[chain[-1]]:
            extend(chain + [b])

    for a in range(T):
        if in_addr[a]:
            extend([a])
    return found
