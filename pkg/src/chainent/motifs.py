"""1-motifs and Direct N-motifs on the entity-transaction graph.

A Direct N-motif is a chain of transactions ``t1 .. tN`` in which some
output address of each ``t_k`` is an input address of ``t_{k+1}`` and the
transactions are strictly ordered in time (ties inside a block broken by
input order). Entities on the path are fixed by the chain: each interior
entity is the input entity of the next transaction. Only the final entity
is free, ranging over the distinct output entities of ``tN``; one motif is
counted per distinct entity path.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

import numpy as np

from . import kernels
from .graph import AddressTxGraph, EntityTxGraph
from .txmodel import CATEGORY_ORDER, Category

LOOP = "Loop"
DISTINCT = "Distinct"
DEFAULT_MAX_PATHS = 10**6


@dataclass(frozen=True)
class MotifLimits:
    max_paths: int = DEFAULT_MAX_PATHS  # per starting entity


@dataclass(frozen=True)
class MotifInstance:
    txs: tuple[int, ...]
    entities: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.txs)

    @property
    def kind(self) -> str:
        return LOOP if self.entities[0] == self.entities[-1] else DISTINCT

    def key(self) -> tuple:
        return (self.txs, self.entities[-1])


@dataclass
class MotifSet:
    """All motifs of one length, stored columnar.

    ``txs[k]`` holds the transaction indices of motif ``k`` and
    ``entities[k]`` its ``n + 1`` entities.
    """

    n: int
    txs: np.ndarray
    entities: np.ndarray
    truncated: frozenset[int] = field(default_factory=frozenset)

    def __len__(self) -> int:
        return int(self.txs.shape[0])

    def __iter__(self) -> Iterator[MotifInstance]:
        for t_row, e_row in zip(self.txs.tolist(), self.entities.tolist()):
            yield MotifInstance(tuple(t_row), tuple(e_row))

    @property
    def is_loop(self) -> np.ndarray:
        return self.entities[:, 0] == self.entities[:, -1]

    def keys(self) -> set[tuple]:
        return {m.key() for m in self}


def _csr(lists: list[list[int]]) -> tuple[np.ndarray, np.ndarray]:
    ptr = np.zeros(len(lists) + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([len(x) for x in lists])
    idx = np.fromiter((v for x in lists for v in x), dtype=np.int64, count=int(ptr[-1]))
    return ptr, idx


def direct_successors(addr_g: AddressTxGraph) -> list[list[int]]:
    """For each transaction, the later transactions spending one of its output addresses."""
    rank = addr_g.order_rank
    succ = []
    for t, tx in enumerate(addr_g.txs):
        nxt: set[int] = set()
        for o in tx.outputs:
            for t2 in addr_g.spent_in.get(o.address, ()):
                if rank[t2] > rank[t]:
                    nxt.add(t2)
        succ.append(sorted(nxt))
    return succ


class _Enumerator:
    def __init__(self, g: EntityTxGraph, addr_g: AddressTxGraph | None):
        self.g = g
        self.out_ptr, self.out_ent = _csr([list(g.output_entities(t)) for t in range(g.n_tx)])
        if addr_g is not None:
            self.succ_ptr, self.succ_idx = _csr(direct_successors(addr_g))
        else:
            self.succ_ptr = np.zeros(g.n_tx + 1, dtype=np.int64)
            self.succ_idx = np.zeros(0, dtype=np.int64)

    def for_entity(self, entity: int, depth: int, max_paths: int):
        starts = np.asarray(self.g.sending.get(entity, ()), dtype=np.int64)
        return kernels.direct_paths(
            self.succ_ptr, self.succ_idx, self.out_ptr, self.out_ent, starts, depth, max_paths
        )

    def run(self, depth: int, limits: MotifLimits, threads: int) -> MotifSet:
        sources = sorted(self.g.sending)
        if threads > 1 and len(sources) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                parts = list(pool.map(lambda e: self.for_entity(e, depth, limits.max_paths), sources))
        else:
            parts = [self.for_entity(e, depth, limits.max_paths) for e in sources]
        truncated = frozenset(e for e, (_, trunc) in zip(sources, parts) if trunc)
        rows = [p for p, _ in parts if len(p)]
        if rows:
            table = np.concatenate(rows, axis=0)
        else:
            table = np.zeros((0, depth + 1), dtype=np.int64)
        txs = table[:, :depth]
        ents = np.empty((len(table), depth + 1), dtype=np.int64)
        ents[:, :depth] = self.g.input_entity[txs]
        ents[:, depth] = table[:, depth]
        return MotifSet(n=depth, txs=np.ascontiguousarray(txs), entities=ents, truncated=truncated)


def enumerate_1motifs(g: EntityTxGraph, limits: MotifLimits = MotifLimits(), threads: int = 1) -> MotifSet:
    """One motif per (transaction, distinct output entity) for every non-coinbase transaction."""
    return _Enumerator(g, None).run(1, limits, threads)


def enumerate_direct_motifs(
    g: EntityTxGraph,
    addr_g: AddressTxGraph,
    n: int,
    limits: MotifLimits = MotifLimits(),
    threads: int = 1,
) -> MotifSet:
    if n not in (2, 3):
        raise ValueError("Direct motifs are enumerated for N in {2, 3}")
    return _Enumerator(g, addr_g).run(n, limits, threads)


def enumerate_all(
    g: EntityTxGraph, addr_g: AddressTxGraph, limits: MotifLimits = MotifLimits(), threads: int = 1
) -> dict[int, MotifSet]:
    enum = _Enumerator(g, addr_g)
    return {n: enum.run(n, limits, threads) for n in (1, 2, 3)}


# -- statistics -------------------------------------------------------------


def subtype_name(n: int, kind: str) -> str:
    return kind if n == 1 else f"Direct {kind}"


@dataclass
class MotifStats:
    # (n, kind) -> {category: count}
    counts: dict[tuple[int, str], dict[Category, int]]
    unlabeled: dict[tuple[int, str], int]
    truncated_entities: dict[int, int]

    def labeled_total(self, key: tuple[int, str]) -> int:
        return sum(self.counts[key].values())

    def shares(self, key: tuple[int, str]) -> dict[Category, float]:
        total = self.labeled_total(key)
        if total == 0:
            return {c: 0.0 for c in CATEGORY_ORDER}
        return {c: self.counts[key][c] / total for c in CATEGORY_ORDER}

    def rows(self) -> list[dict]:
        out = []
        for (n, kind) in sorted(self.counts, key=lambda k: (k[0], k[1] != LOOP)):
            shares = self.shares((n, kind))
            out.append(
                {
                    "type": f"{n}-motif",
                    "subtype": subtype_name(n, kind),
                    "quantity": self.labeled_total((n, kind)),
                    "unlabeled": self.unlabeled[(n, kind)],
                    **{c.value: shares[c] for c in CATEGORY_ORDER},
                }
            )
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["type", "subtype", "quantity"] + [c.value for c in CATEGORY_ORDER])
        for row in self.rows():
            w.writerow(
                [row["type"], row["subtype"], row["quantity"]] + [f"{row[c.value]:.6f}" for c in CATEGORY_ORDER]
            )
        return buf.getvalue()


def motif_stats(motif_sets: Iterable[MotifSet], labels: Mapping[int, Category]) -> MotifStats:
    """Tally motifs by (N, Loop/Distinct) and by the category of their first entity."""
    counts: dict[tuple[int, str], dict[Category, int]] = {}
    unlabeled: dict[tuple[int, str], int] = {}
    truncated: dict[int, int] = {}
    for ms in motif_sets:
        truncated[ms.n] = len(ms.truncated)
        loops = ms.is_loop
        firsts = ms.entities[:, 0].tolist() if len(ms) else []
        for kind in (LOOP, DISTINCT):
            counts[(ms.n, kind)] = {c: 0 for c in CATEGORY_ORDER}
            unlabeled[(ms.n, kind)] = 0
        for first, is_loop in zip(firsts, loops.tolist()):
            key = (ms.n, LOOP if is_loop else DISTINCT)
            cat = labels.get(first)
            if cat is None:
                unlabeled[key] += 1
            else:
                counts[key][cat] += 1
    return MotifStats(counts=counts, unlabeled=unlabeled, truncated_entities=truncated)
