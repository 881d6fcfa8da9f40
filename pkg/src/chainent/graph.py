"""Address-transaction graph, entity projection and time-window aggregation."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from typing import Iterable, Sequence

import numpy as np

from .cluster import EntityMap
from .txmodel import TxRecord

GRANULARITIES = ("day", "week", "month", "year")


class GraphError(ValueError):
    pass


class AddressTxGraph:
    """Directed bipartite multigraph of addresses and transactions.

    Transaction vertices are indexed by their position in the input; every
    input and output becomes one edge, so repeated addresses within a
    transaction give parallel edges.
    """

    def __init__(self, txs: Sequence[TxRecord]):
        self.txs: tuple[TxRecord, ...] = tuple(txs)
        self.tx_index: dict[str, int] = {}
        for t, tx in enumerate(self.txs):
            if tx.txid in self.tx_index:
                raise GraphError(f"duplicate txid {tx.txid!r}")
            self.tx_index[tx.txid] = t

        spends: dict[str, list[int]] = defaultdict(list)
        receives: dict[str, list[int]] = defaultdict(list)
        for t, tx in enumerate(self.txs):
            for i in tx.inputs:
                if not spends[i.address] or spends[i.address][-1] != t:
                    spends[i.address].append(t)
            for o in tx.outputs:
                if not receives[o.address] or receives[o.address][-1] != t:
                    receives[o.address].append(t)
        # address -> sorted distinct tx indices, by direction
        self.spent_in: dict[str, tuple[int, ...]] = {a: tuple(v) for a, v in spends.items()}
        self.received_in: dict[str, tuple[int, ...]] = {a: tuple(v) for a, v in receives.items()}
        self.addresses: tuple[str, ...] = tuple(sorted(set(spends) | set(receives)))

        n = len(self.txs)
        self.timestamps = np.fromiter((tx.timestamp for tx in self.txs), dtype=np.int64, count=n)
        heights = np.fromiter((tx.block_height for tx in self.txs), dtype=np.int64, count=n)
        # strict chronological order: time, then block, then position in input
        order = np.lexsort((np.arange(n), heights, self.timestamps))
        self.order_rank = np.empty(n, dtype=np.int64)
        self.order_rank[order] = np.arange(n)

    @property
    def n_tx(self) -> int:
        return len(self.txs)

    @property
    def n_edges(self) -> int:
        return sum(len(tx.inputs) + len(tx.outputs) for tx in self.txs)

    def precedes(self, a: int, b: int) -> bool:
        return bool(self.order_rank[a] < self.order_rank[b])

    def check_conservation(self) -> list[str]:
        """Return txids whose edge amounts do not balance with the fee."""
        bad = []
        for tx in self.txs:
            if tx.coinbase:
                continue
            if tx.input_sats != tx.output_sats + tx.fee or tx.fee < 0:
                bad.append(tx.txid)
        return bad


def build_address_graph(txs: Iterable[TxRecord]) -> AddressTxGraph:
    return AddressTxGraph(list(txs))


@dataclass(frozen=True)
class EntityEdge:
    entity: int
    sats: int
    n_edges: int  # address-graph edges subsumed


class EntityTxGraph:
    """Entity-transaction graph obtained by aggregating address edges.

    Each non-coinbase transaction has exactly one input entity; coinbase
    transactions have ``input_entity == -1``.
    """

    def __init__(self, addr_graph: AddressTxGraph, emap: EntityMap):
        self.addr_graph = addr_graph
        self.emap = emap
        n = addr_graph.n_tx
        self.input_entity = np.full(n, -1, dtype=np.int64)
        self.inputs: list[EntityEdge | None] = [None] * n
        self.outputs: list[tuple[EntityEdge, ...]] = [()] * n
        self.fees = np.zeros(n, dtype=np.int64)
        self.timestamps = addr_graph.timestamps
        sending: dict[int, list[int]] = defaultdict(list)
        receiving: dict[int, list[int]] = defaultdict(list)

        for t, tx in enumerate(addr_graph.txs):
            try:
                in_ents = {emap.entity_of(i.address) for i in tx.inputs}
                out_pairs = [(emap.entity_of(o.address), o.amount) for o in tx.outputs]
            except KeyError as exc:
                raise GraphError(f"{tx.txid}: {exc.args[0]} is not in the entity map") from None
            if len(in_ents) > 1:
                raise GraphError(f"{tx.txid}: inputs span {len(in_ents)} entities; map is not a common-spending closure")
            if in_ents:
                e_in = in_ents.pop()
                self.input_entity[t] = e_in
                self.inputs[t] = EntityEdge(e_in, tx.input_sats, len(tx.inputs))
                sending[e_in].append(t)
            agg: dict[int, list[int]] = {}
            for e, sats in out_pairs:
                slot = agg.setdefault(e, [0, 0])
                slot[0] += sats
                slot[1] += 1
            self.outputs[t] = tuple(EntityEdge(e, s, c) for e, (s, c) in sorted(agg.items()))
            for e in sorted(agg):
                receiving[e].append(t)
            self.fees[t] = tx.fee

        self.sending: dict[int, tuple[int, ...]] = {e: tuple(v) for e, v in sending.items()}
        self.receiving: dict[int, tuple[int, ...]] = {e: tuple(v) for e, v in receiving.items()}
        self.entities: tuple[int, ...] = tuple(sorted(set(sending) | set(receiving)))
        self._by_time = np.argsort(self.timestamps, kind="stable")
        self._sorted_ts = self.timestamps[self._by_time]

    @property
    def n_tx(self) -> int:
        return self.addr_graph.n_tx

    @property
    def n_edges(self) -> int:
        return sum(1 for x in self.inputs if x is not None) + sum(len(o) for o in self.outputs)

    def output_entities(self, t: int) -> tuple[int, ...]:
        return tuple(edge.entity for edge in self.outputs[t])

    def transactions_of(self, entity: int) -> tuple[int, ...]:
        return tuple(sorted(set(self.sending.get(entity, ())) | set(self.receiving.get(entity, ()))))

    def check_conservation(self) -> list[int]:
        bad = []
        for t in range(self.n_tx):
            out = sum(e.sats for e in self.outputs[t])
            inp = self.inputs[t]
            if inp is None:
                continue
            if inp.sats != out + int(self.fees[t]):
                bad.append(t)
        return bad


def project_entity_graph(addr_graph: AddressTxGraph, emap: EntityMap) -> EntityTxGraph:
    return EntityTxGraph(addr_graph, emap)


@dataclass
class DiscreteTimeGraph:
    start: int
    end: int
    entities: frozenset[int]
    # (source entity, target entity) -> [total sats, transaction count]
    edges: dict[tuple[int, int], tuple[int, int]]
    coinbase_credits: dict[int, int] = field(default_factory=dict)

    @property
    def is_empty(self) -> bool:
        return not self.entities


def _window_slice(g: EntityTxGraph, start: int, end: int) -> Sequence[int]:
    lo = int(np.searchsorted(g._sorted_ts, start, side="left"))
    hi = int(np.searchsorted(g._sorted_ts, end, side="right"))
    return sorted(g._by_time[lo:hi].tolist())


def aggregate_window(g: EntityTxGraph, start: int, end: int) -> DiscreteTimeGraph:
    """Restrict ``g`` to transactions with ``start <= time <= end``.

    Coinbase transactions make their recipients active and are recorded as
    source-less credits, not as entity-to-entity edges.
    """
    if start > end:
        raise ValueError("window start after end")
    active: set[int] = set()
    edges: dict[tuple[int, int], list[int]] = {}
    credits: dict[int, int] = defaultdict(int)
    for t in _window_slice(g, start, end):
        src = int(g.input_entity[t])
        for edge in g.outputs[t]:
            active.add(edge.entity)
            if src < 0:
                credits[edge.entity] += edge.sats
                continue
            slot = edges.setdefault((src, edge.entity), [0, 0])
            slot[0] += edge.sats
            slot[1] += 1
        if src >= 0:
            active.add(src)
    return DiscreteTimeGraph(
        start=start,
        end=end,
        entities=frozenset(active),
        edges={k: (v[0], v[1]) for k, v in sorted(edges.items())},
        coinbase_credits=dict(sorted(credits.items())),
    )


def _utc(ts: int) -> datetime:
    return datetime.fromtimestamp(ts, tz=timezone.utc)


def _epoch(d: date) -> int:
    return int(datetime(d.year, d.month, d.day, tzinfo=timezone.utc).timestamp())


def period_start(d: date, granularity: str) -> date:
    if granularity == "day":
        return d
    if granularity == "week":
        return d - timedelta(days=d.weekday())  # ISO weeks start Monday
    if granularity == "month":
        return d.replace(day=1)
    if granularity == "year":
        return d.replace(month=1, day=1)
    raise ValueError(f"granularity must be one of {GRANULARITIES}")


def next_period(d: date, granularity: str) -> date:
    if granularity == "day":
        return d + timedelta(days=1)
    if granularity == "week":
        return d + timedelta(days=7)
    if granularity == "month":
        return date(d.year + (d.month == 12), d.month % 12 + 1, 1)
    if granularity == "year":
        return date(d.year + 1, 1, 1)
    raise ValueError(f"granularity must be one of {GRANULARITIES}")


def period_key(ts: int, granularity: str) -> date:
    """Calendar period (identified by its first day) containing ``ts``."""
    return period_start(_utc(ts).date(), granularity)


def window_partition(start: int, end: int, granularity: str) -> list[tuple[int, int]]:
    """Calendar-aligned UTC windows ``[t1, t2]`` (inclusive seconds) covering ``[start, end]``."""
    if start > end:
        raise ValueError("empty span")
    if granularity not in GRANULARITIES:
        raise ValueError(f"granularity must be one of {GRANULARITIES}")
    windows = []
    d = period_start(_utc(start).date(), granularity)
    while _epoch(d) <= end:
        nxt = next_period(d, granularity)
        windows.append((_epoch(d), _epoch(nxt) - 1))
        d = nxt
    return windows


def graph_stats(addr_graph: AddressTxGraph, entity_graph: EntityTxGraph | None = None) -> dict:
    stats = {
        "address_graph": {
            "transactions": addr_graph.n_tx,
            "addresses": len(addr_graph.addresses),
            "edges": addr_graph.n_edges,
            "input_edges": sum(len(tx.inputs) for tx in addr_graph.txs),
            "output_edges": sum(len(tx.outputs) for tx in addr_graph.txs),
            "coinbase_transactions": sum(1 for tx in addr_graph.txs if tx.coinbase),
            "conservation_violations": len(addr_graph.check_conservation()),
        }
    }
    if entity_graph is not None:
        subsumed = sum(e.n_edges for e in entity_graph.inputs if e is not None)
        subsumed += sum(e.n_edges for out in entity_graph.outputs for e in out)
        stats["entity_graph"] = {
            "transactions": entity_graph.n_tx,
            "entities": len(entity_graph.entities),
            "edges": entity_graph.n_edges,
            "subsumed_address_edges": subsumed,
            "loop_transactions": sum(
                1
                for t in range(entity_graph.n_tx)
                if entity_graph.input_entity[t] >= 0
                and int(entity_graph.input_entity[t]) in entity_graph.output_entities(t)
            ),
            "conservation_violations": len(entity_graph.check_conservation()),
        }
    return stats
