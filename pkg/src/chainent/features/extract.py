"""Per-entity feature computation for the seven feature groups."""

from __future__ import annotations

from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor

import networkx as nx
import numpy as np

from ..graph import AddressTxGraph, DiscreteTimeGraph, EntityTxGraph, aggregate_window, period_key, window_partition
from ..motifs import MotifSet
from ..txmodel import SATS_PER_BTC, PriceTable
from . import schema as S

PAGERANK_ALPHA = 0.85
PAGERANK_TOL = 1e-9
SECONDS_PER_DAY = 86400


def _mean_std(values) -> tuple[float, float]:
    """Population mean and std; (0, 0) for an empty sample."""
    if len(values) == 0:
        return 0.0, 0.0
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    if len(arr) == 1:
        return mean, 0.0
    return mean, float(np.sqrt(np.mean((arr - mean) ** 2)))


def window_centrality(w: DiscreteTimeGraph) -> dict[int, tuple[float, ...]]:
    """The seven centrality scores of every active entity in one window.

    Self-loops are ignored. Betweenness and load are normalised by
    ``(n-1)(n-2)``; closeness uses out-distances with Wasserman-Faust
    scaling; PageRank is weighted by transferred value.
    """
    G = nx.DiGraph()
    G.add_nodes_from(sorted(w.entities))
    for (a, b), (sats, _count) in w.edges.items():
        if a != b:
            G.add_edge(a, b, weight=sats / SATS_PER_BTC)
    n = G.number_of_nodes()
    if n == 0:
        return {}
    scale = 1.0 / (n - 1) if n > 1 else 0.0
    betweenness = nx.betweenness_centrality(G, normalized=True)
    closeness = nx.closeness_centrality(G.reverse(copy=False), wf_improved=True)
    load = nx.load_centrality(G, normalized=True)
    if G.number_of_edges() and sum(d for _, _, d in G.edges(data="weight")) > 0:
        pagerank = nx.pagerank(G, alpha=PAGERANK_ALPHA, tol=PAGERANK_TOL, max_iter=10_000, weight="weight")
    else:
        pagerank = {v: 1.0 / n for v in G}
    out = {}
    for v in G:
        ind, outd = G.in_degree(v), G.out_degree(v)
        out[v] = (
            float(betweenness[v]),
            float(closeness[v]),
            (ind + outd) * scale,
            ind * scale,
            outd * scale,
            float(pagerank[v]),
            float(load[v]) if n > 2 else 0.0,
        )
    return out


class FeatureExtractor:
    """Holds the graphs, motifs and prices; computes feature groups per entity.

    Centrality and motif aggregates are computed once and reused across
    entities, so build one extractor per dataset.
    """

    def __init__(
        self,
        addr_g: AddressTxGraph,
        g: EntityTxGraph,
        motifs: dict[int, MotifSet],
        prices: PriceTable,
        threads: int = 1,
    ):
        self.addr_g = addr_g
        self.g = g
        self.emap = g.emap
        self.motifs = motifs
        self.prices = prices
        self.threads = threads

        txs = addr_g.txs
        n = len(txs)
        self.n_in = np.array([len(tx.inputs) for tx in txs], dtype=np.float64)
        self.n_out = np.array([len(tx.outputs) for tx in txs], dtype=np.float64)
        self.in_btc = np.array([tx.input_sats for tx in txs], dtype=np.float64) / SATS_PER_BTC
        self.out_btc = np.array([tx.output_sats for tx in txs], dtype=np.float64) / SATS_PER_BTC
        self.fee_btc = np.array([tx.fee for tx in txs], dtype=np.float64) / SATS_PER_BTC
        self.rate = np.array([prices.rate_at(tx.timestamp) for tx in txs], dtype=np.float64)
        self.day = addr_g.timestamps // SECONDS_PER_DAY
        self.coinbase = np.array([tx.coinbase for tx in txs], dtype=bool)

        received: dict[str, int] = defaultdict(int)
        spent: dict[str, int] = defaultdict(int)
        for tx in txs:
            for o in tx.outputs:
                received[o.address] += o.amount
            for i in tx.inputs:
                spent[i.address] += i.amount
        self._addr_received = received
        self._addr_spent = spent

        # (tx, entity) -> sats paid by tx to entity, as a sorted key table
        self._n_ent_key = max(len(self.emap), 1)
        keys, vals = [], []
        for t in range(n):
            for edge in g.outputs[t]:
                keys.append(t * self._n_ent_key + edge.entity)
                vals.append(edge.sats)
        order = np.argsort(np.asarray(keys, dtype=np.int64), kind="stable")
        self._pay_keys = np.asarray(keys, dtype=np.int64)[order]
        self._pay_vals = np.asarray(vals, dtype=np.float64)[order]

        if n:
            self.span = (int(addr_g.timestamps.min()), int(addr_g.timestamps.max()))
        else:
            self.span = None
        self._centrality: dict[str, dict[int, list[tuple[float, ...]]]] | None = None
        self._motif_rows: dict[int, dict[int, np.ndarray]] = {}

    # -- helpers ------------------------------------------------------------

    def paid(self, t: np.ndarray, e: np.ndarray) -> np.ndarray:
        """BTC paid by transactions ``t`` to entities ``e`` (element-wise)."""
        key = np.asarray(t, dtype=np.int64) * self._n_ent_key + np.asarray(e, dtype=np.int64)
        pos = np.searchsorted(self._pay_keys, key)
        return self._pay_vals[pos] / SATS_PER_BTC

    def entity_txs(self, e: int) -> list[int]:
        return list(self.g.transactions_of(e))

    def duration_days(self, e: int) -> int:
        txs = self.entity_txs(e)
        if not txs:
            return 0
        days = self.day[txs]
        return int(days.max() - days.min() + 1)

    # -- groups -------------------------------------------------------------

    def address_features(self, e: int) -> np.ndarray:
        if e not in self.g.sending and e not in self.g.receiving:
            return np.zeros(S.GROUP_SIZES["Address"])
        txs = self.addr_g.txs
        rows = []
        for a in sorted(self.emap.addresses_of(e)):
            recv = self.addr_g.received_in.get(a, ())
            sent = self.addr_g.spent_in.get(a, ())
            preds = [i.address for t in recv for i in txs[t].inputs]
            succs = [o.address for t in sent for o in txs[t].outputs]
            siblings = {o.address for t in recv for o in txs[t].outputs} - {a}
            rows.append(
                (
                    self._addr_received.get(a, 0) / SATS_PER_BTC,
                    (self._addr_received.get(a, 0) - self._addr_spent.get(a, 0)) / SATS_PER_BTC,
                    len(recv),
                    len(sent),
                    len(preds),
                    len(set(preds)),
                    len(succs),
                    len(set(succs)),
                    len(set(preds) & set(succs)),
                    len(siblings),
                )
            )
        return np.asarray(rows, dtype=np.float64).mean(axis=0)

    def counterparties(self, e: int, txs) -> set[int]:
        out = set()
        for t in txs:
            src = int(self.g.input_entity[t])
            if src == e:
                out.update(self.g.output_entities(t))
            elif src >= 0:
                out.add(src)
        out.discard(e)
        return out

    def entity_features(self, e: int) -> np.ndarray:
        receiving = self.g.receiving.get(e, ())
        sending = self.g.sending.get(e, ())
        if not receiving and not sending:
            return np.zeros(S.GROUP_SIZES["Entity"])
        received = sum(edge.sats for t in receiving for edge in self.g.outputs[t] if edge.entity == e)
        spent = sum(self.g.inputs[t].sats for t in sending)
        n_cb = int(self.coinbase[list(receiving)].sum()) if receiving else 0
        return np.array(
            [
                len(self.emap.addresses_of(e)),
                received / SATS_PER_BTC,
                (received - spent) / SATS_PER_BTC,
                len(receiving),
                len(sending),
                len(self.counterparties(e, self.entity_txs(e))),
                n_cb,
                n_cb / len(receiving) if receiving else 0.0,
            ],
            dtype=np.float64,
        )

    def temporal_features(self, e: int) -> np.ndarray:
        txs = self.entity_txs(e)
        if not txs:
            return np.zeros(S.GROUP_SIZES["Temporal"])
        ts = self.addr_g.timestamps
        out = []
        per_gran = {}
        for gran in S.GRANULARITIES:
            buckets: dict = defaultdict(list)
            for t in txs:
                buckets[period_key(int(ts[t]), gran)].append(t)
            per_gran[gran] = buckets
            out.append(len(buckets))
        for gran in S.GRANULARITIES:
            counts = [len(self.counterparties(e, b)) for _, b in sorted(per_gran[gran].items())]
            out.extend(_mean_std(counts))
        recv_days = {int(self.day[t]) for t in self.g.receiving.get(e, ())}
        send_days = {int(self.day[t]) for t in self.g.sending.get(e, ())}
        days = self.day[txs]
        duration = int(days.max() - days.min() + 1)
        active, per_day = np.unique(days, return_counts=True)
        out.extend([len(recv_days), len(send_days), duration, len(active) / duration, len(active)])
        out.extend(_mean_std(per_day))
        return np.asarray(out, dtype=np.float64)

    def _centrality_scores(self) -> dict[str, dict[int, list[tuple[float, ...]]]]:
        if self._centrality is None:
            scores: dict[str, dict[int, list]] = {}
            for gran in S.GRANULARITIES:
                per_entity: dict[int, list] = defaultdict(list)
                if self.span is not None:
                    for lo, hi in window_partition(self.span[0], self.span[1], gran):
                        for v, vec in window_centrality(aggregate_window(self.g, lo, hi)).items():
                            per_entity[v].append(vec)
                scores[gran] = per_entity
            self._centrality = scores
        return self._centrality

    def centrality_features(self, e: int) -> np.ndarray:
        scores = self._centrality_scores()
        out = []
        for gran in S.GRANULARITIES:
            rows = scores[gran].get(e)
            arr = np.asarray(rows, dtype=np.float64) if rows else np.zeros((0, len(S.CENTRALITY_MEASURES)))
            for m in range(len(S.CENTRALITY_MEASURES)):
                out.extend(_mean_std(arr[:, m]))
        return np.asarray(out, dtype=np.float64)

    # -- motifs -------------------------------------------------------------

    def _center_addresses(self, t_prev: np.ndarray, t_next: np.ndarray, center: np.ndarray) -> np.ndarray:
        """Distinct addresses of the center entity receiving in ``t_prev`` or spending in ``t_next``."""
        if len(t_prev) == 0:
            return np.zeros(0)
        txs = self.addr_g.txs
        emap = self.emap
        keys = np.stack([t_prev, t_next], axis=1)
        uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        first_row = np.zeros(len(uniq), dtype=np.int64)
        first_row[inverse[::-1]] = np.arange(len(inverse))[::-1]
        vals = np.empty(len(uniq))
        for u, (a, b) in enumerate(uniq.tolist()):
            c = int(center[first_row[u]])
            addrs = {i.address for i in txs[b].inputs}
            addrs.update(o.address for o in txs[a].outputs if emap.entity_of(o.address) == c)
            vals[u] = len(addrs)
        return vals[inverse]

    def _quantities(self, n: int) -> np.ndarray:
        """Per-motif quantity matrix in schema order for motif length ``n``."""
        ms = self.motifs[n]
        T, E = ms.txs, ms.entities
        if n == 1:
            t = T[:, 0]
            val = self.paid(t, E[:, 1])
            return np.stack(
                [val, val * self.rate[t], self.fee_btc[t], self.fee_btc[t] * self.rate[t]], axis=1
            ) if len(ms) else np.zeros((0, 4))
        if len(ms) == 0:
            return np.zeros((0, len(S.MOTIF_QUANTITIES[n])))
        t1, tn = T[:, 0], T[:, -1]
        cols = [
            self.n_in[t1],
            self.n_out[tn],
            self.in_btc[t1],
            self.in_btc[t1] * self.rate[t1],
            self.out_btc[tn],
            self.out_btc[tn] * self.rate[tn],
        ]
        for k in range(n - 1):
            mid = self.paid(T[:, k], E[:, k + 1])
            cols += [mid, mid * self.rate[T[:, k]]]
        for k in range(n):
            cols += [self.fee_btc[T[:, k]], self.fee_btc[T[:, k]] * self.rate[T[:, k]]]
        for k in range(n - 1):
            cols.append(self._center_addresses(T[:, k], T[:, k + 1], E[:, k + 1]))
        return np.stack(cols, axis=1)

    def _motif1_address_counts(self) -> tuple[np.ndarray, np.ndarray]:
        """Per 1-motif: distinct sender addresses and distinct receiving addresses of the target."""
        ms = self.motifs[1]
        txs = self.addr_g.txs
        senders = np.empty(len(ms))
        receivers = np.empty(len(ms))
        for k, (t, e2) in enumerate(zip(ms.txs[:, 0].tolist(), ms.entities[:, 1].tolist())):
            senders[k] = len({i.address for i in txs[t].inputs})
            receivers[k] = len({o.address for o in txs[t].outputs if self.emap.entity_of(o.address) == e2})
        return senders, receivers

    def _role_groups(self, n: int):
        """Row indices of motifs of length ``n`` per (role, entity)."""
        ms = self.motifs[n]
        first, last = ms.entities[:, 0], ms.entities[:, -1]
        loop = first == last
        roles = {
            "incoming": (last, ~loop),
            "outgoing": (first, ~loop),
            "loop": (first, loop),
        }
        groups = {}
        for role, (key, mask) in roles.items():
            rows = np.flatnonzero(mask)
            keys = key[rows]
            order = np.argsort(keys, kind="stable")
            rows, keys = rows[order], keys[order]
            uniq, starts = np.unique(keys, return_index=True)
            bounds = list(starts) + [len(keys)]
            groups[role] = {int(u): rows[bounds[i] : bounds[i + 1]] for i, u in enumerate(uniq.tolist())}
        return groups

    def _motif_table(self, n: int) -> dict[str, dict[int, np.ndarray]]:
        if n not in self._motif_rows:
            self._motif_rows[n] = self._role_groups(n)
        return self._motif_rows[n]

    def motif_features(self, e: int, n: int) -> np.ndarray:
        groups = self._motif_table(n)
        cache_name = f"_q{n}"
        if not hasattr(self, cache_name):
            q = self._quantities(n)
            if n == 1:
                senders, receivers = self._motif1_address_counts()
                q = (q, senders, receivers)
            setattr(self, cache_name, q)
        q = getattr(self, cache_name)
        ms = self.motifs[n]
        out: list[float] = []
        if n == 1:
            base, senders, receivers = q
            duration = self.duration_days(e)
            for role in S.ROLES:
                rows = groups[role].get(e, np.zeros(0, dtype=np.int64))
                addr_count = senders[rows] if role == "incoming" else receivers[rows]
                vals = np.column_stack([base[rows], addr_count]) if len(rows) else np.zeros((0, 5))
                out += [
                    len(rows),
                    len(rows) / duration if duration else 0.0,
                    float(vals[:, 0].sum()),
                    float(vals[:, 1].sum()),
                ]
                for j in range(vals.shape[1]):
                    out.extend(_mean_std(vals[:, j]))
            inc = groups["incoming"].get(e, np.zeros(0, dtype=np.int64))
            outg = groups["outgoing"].get(e, np.zeros(0, dtype=np.int64))
            out.append(len(set(ms.entities[inc, 0].tolist())))
            out.append(len(set(ms.entities[outg, -1].tolist())))
            return np.asarray(out, dtype=np.float64)

        for role in S.ROLES:
            rows = groups[role].get(e, np.zeros(0, dtype=np.int64))
            out.append(len(rows))
            vals = q[rows]
            for j in range(q.shape[1]):
                out.extend(_mean_std(vals[:, j]))
        if n == 3:
            inc = groups["incoming"].get(e, np.zeros(0, dtype=np.int64))
            outg = groups["outgoing"].get(e, np.zeros(0, dtype=np.int64))
            loop = groups["loop"].get(e, np.zeros(0, dtype=np.int64))
            out.append(len(set(ms.entities[inc, 0].tolist())))
            out.append(len(set(ms.entities[outg, -1].tolist())))
            every = np.concatenate([inc, outg, loop])
            centers = set(ms.entities[every, 1:-1].reshape(-1).tolist()) - {e}
            out.append(len(centers))
        return np.asarray(out, dtype=np.float64)

    def truncated(self, e: int) -> tuple[bool, bool, bool]:
        return tuple(e in self.motifs[n].truncated for n in (1, 2, 3))

    # -- assembly -----------------------------------------------------------

    def group_features(self, e: int, group: str) -> np.ndarray:
        if group == "Address":
            return self.address_features(e)
        if group == "Entity":
            return self.entity_features(e)
        if group == "Temporal":
            return self.temporal_features(e)
        if group == "Centrality":
            return self.centrality_features(e)
        if group.startswith("Motif"):
            return self.motif_features(e, int(group[-1]))
        raise S.SchemaError(f"unknown group {group!r}")

    def vector(self, e: int, groups=S.GROUPS) -> np.ndarray:
        parts = []
        for group in S.GROUPS:
            if group not in groups:
                continue
            v = self.group_features(e, group)
            if v.shape != (S.GROUP_SIZES[group],):
                raise S.SchemaError(f"group {group} produced {v.shape[0]} values, expected {S.GROUP_SIZES[group]}")
            parts.append(v)
        return np.concatenate(parts) if parts else np.zeros(0)

    def vectors(self, entities, groups=S.GROUPS) -> np.ndarray:
        entities = list(entities)
        # shared caches are filled up front so workers only read them
        if "Centrality" in groups:
            self._centrality_scores()
        for n in (1, 2, 3):
            if f"Motif{n}" in groups:
                self.motif_features(entities[0] if entities else -1, n)
        if self.threads > 1 and len(entities) > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                rows = list(pool.map(lambda e: self.vector(e, groups), entities))
        else:
            rows = [self.vector(e, groups) for e in entities]
        width = sum(S.GROUP_SIZES[g] for g in S.GROUPS if g in groups)
        return np.asarray(rows, dtype=np.float64).reshape(len(entities), width)
