from collections import defaultdict
from datetime import datetime, timezone

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chainent.cluster import EntityMap, cluster_common_spending
from chainent.graph import (
    GraphError,
    aggregate_window,
    build_address_graph,
    graph_stats,
    project_entity_graph,
    window_partition,
)
from chainent.txmodel import TxIo, TxRecord

from helpers import random_txs


def ts(y, m, d):
    return int(datetime(y, m, d, tzinfo=timezone.utc).timestamp())


def test_counts_for_single_transaction():
    tx = TxRecord("t", 1, 0, (TxIo("a", 5), TxIo("b", 5)), (TxIo("c", 3), TxIo("d", 3), TxIo("e", 3)), False)
    g = build_address_graph([tx])
    assert g.n_tx == 1
    assert len(g.addresses) <= 5
    assert g.n_edges == 5


def test_parallel_edges_kept():
    tx = TxRecord("t", 1, 0, (TxIo("a", 5),), (TxIo("c", 2), TxIo("c", 2)), False)
    g = build_address_graph([tx])
    assert g.n_edges == 3
    assert g.received_in["c"] == (0,)
    assert sum(1 for o in g.txs[0].outputs if o.address == "c") == 2


def test_empty_graph():
    g = build_address_graph([])
    assert g.n_tx == 0 and g.n_edges == 0 and g.addresses == ()


def test_duplicate_txid():
    tx = TxRecord("t", 1, 0, (), (TxIo("c", 2),), True)
    with pytest.raises(GraphError):
        build_address_graph([tx, tx])


def figure_instance():
    # three e1 addresses pay two e2 addresses twice each, one more e2 address,
    # one e3 address and a fourth e1 address
    inputs = (TxIo("e1a1", 40), TxIo("e1a2", 40), TxIo("e1a3", 40))
    outputs = (
        TxIo("e2a3", 10),
        TxIo("e2a2", 10),
        TxIo("e2a2", 10),
        TxIo("e2a1", 10),
        TxIo("e2a1", 10),
        TxIo("e3a1", 20),
        TxIo("e1a4", 30),
    )
    tx = TxRecord("t", 1, 0, inputs, outputs, False)
    m = EntityMap.from_groups([["e1a1", "e1a2", "e1a3", "e1a4"], ["e2a1", "e2a2", "e2a3"], ["e3a1"]])
    return tx, m


def test_projection_of_figure_instance():
    tx, m = figure_instance()
    g = project_entity_graph(build_address_graph([tx]), m)
    e1, e2, e3 = m.entity_of("e1a1"), m.entity_of("e2a1"), m.entity_of("e3a1")
    assert g.input_entity[0] == e1
    assert g.inputs[0].n_edges == 3 and g.inputs[0].sats == 120
    out = {edge.entity: (edge.sats, edge.n_edges) for edge in g.outputs[0]}
    assert out == {e1: (30, 1), e2: (50, 5), e3: (20, 1)}
    assert g.fees[0] == 120 - 100


def test_self_payment_loop():
    tx = TxRecord("t", 1, 0, (TxIo("a", 5),), (TxIo("a", 4),), False)
    g = project_entity_graph(build_address_graph([tx]), cluster_common_spending([tx]))
    assert g.output_entities(0) == (int(g.input_entity[0]),)


def test_unmapped_address_is_error():
    tx = TxRecord("t", 1, 0, (TxIo("a", 5),), (TxIo("b", 4),), False)
    with pytest.raises(GraphError):
        project_entity_graph(build_address_graph([tx]), EntityMap.from_groups([["a"]]))


def test_multi_entity_inputs_rejected():
    tx = TxRecord("t", 1, 0, (TxIo("a", 5), TxIo("b", 5)), (TxIo("c", 4),), False)
    with pytest.raises(GraphError):
        project_entity_graph(build_address_graph([tx]), EntityMap.from_groups([["a"], ["b"], ["c"]]))


@pytest.mark.parametrize("seed", range(8))
def test_projection_conserves_amounts_and_edges(seed):
    rng = np.random.default_rng(seed)
    txs = random_txs(rng, 120, 80)
    ag = build_address_graph(txs)
    m = cluster_common_spending(txs)
    g = project_entity_graph(ag, m)
    assert ag.check_conservation() == [] and g.check_conservation() == []
    subsumed = 0
    for t, tx in enumerate(txs):
        sums = defaultdict(int)
        counts = defaultdict(int)
        for o in tx.outputs:
            sums[m.entity_of(o.address)] += o.amount
            counts[m.entity_of(o.address)] += 1
        assert {e.entity: e.sats for e in g.outputs[t]} == dict(sums)
        assert {e.entity: e.n_edges for e in g.outputs[t]} == dict(counts)
        if not tx.coinbase:
            assert tx.input_sats == sum(e.sats for e in g.outputs[t]) + int(g.fees[t])
            assert len({m.entity_of(i.address) for i in tx.inputs}) == 1
        subsumed += sum(counts.values()) + (g.inputs[t].n_edges if g.inputs[t] else 0)
    assert subsumed == ag.n_edges
    stats = graph_stats(ag, g)
    assert stats["entity_graph"]["subsumed_address_edges"] == ag.n_edges


# -- discrete-time operator ---------------------------------------------------


def brute_window(txs, m, lo, hi):
    active = set()
    edges = defaultdict(lambda: [0, 0])
    for tx in txs:
        if not lo <= tx.timestamp <= hi:
            continue
        outs = defaultdict(int)
        for o in tx.outputs:
            outs[m.entity_of(o.address)] += o.amount
        active.update(outs)
        if tx.coinbase:
            continue
        src = m.entity_of(tx.inputs[0].address)
        active.add(src)
        for e, v in outs.items():
            edges[(src, e)][0] += v
            edges[(src, e)][1] += 1
    return active, {k: tuple(v) for k, v in edges.items()}


def test_window_without_transactions_is_empty():
    rng = np.random.default_rng(0)
    txs = random_txs(rng, 30, 40)
    g = project_entity_graph(build_address_graph(txs), cluster_common_spending(txs))
    w = aggregate_window(g, 0, 100)
    assert w.is_empty and w.edges == {}


def test_identity_window_keeps_all_entities():
    rng = np.random.default_rng(1)
    txs = random_txs(rng, 60, 50)
    g = project_entity_graph(build_address_graph(txs), cluster_common_spending(txs))
    w = aggregate_window(g, min(t.timestamp for t in txs), max(t.timestamp for t in txs))
    assert w.entities == set(g.entities)


@pytest.mark.parametrize("seed", range(5))
def test_weekly_windows_match_filter_and_sum(seed):
    rng = np.random.default_rng(seed)
    txs = random_txs(rng, 150, 60, time_span=60 * 24 * 30)  # about ten weeks
    m = cluster_common_spending(txs)
    g = project_entity_graph(build_address_graph(txs), m)
    lo, hi = min(t.timestamp for t in txs), max(t.timestamp for t in txs)
    for a, b in window_partition(lo, hi, "week"):
        w = aggregate_window(g, a, b)
        active, edges = brute_window(txs, m, a, b)
        assert w.entities == active
        assert w.edges == edges


def test_window_partition_examples():
    assert len(window_partition(ts(2018, 3, 1), ts(2018, 3, 10) + 3600, "day")) == 10
    months = window_partition(ts(2018, 1, 15), ts(2018, 3, 10), "month")
    assert [datetime.fromtimestamp(a, tz=timezone.utc).month for a, _ in months] == [1, 2, 3]
    weeks = window_partition(ts(2018, 1, 3), ts(2018, 1, 3), "week")
    assert datetime.fromtimestamp(weeks[0][0], tz=timezone.utc).weekday() == 0
    years = window_partition(ts(2017, 6, 1), ts(2018, 2, 1), "year")
    assert len(years) == 2


@given(
    st.integers(1_200_000_000, 1_700_000_000),
    st.integers(0, 400 * 86400),
    st.sampled_from(["day", "week", "month", "year"]),
)
def test_window_partition_covers_span(start, length, gran):
    end = start + length
    wins = window_partition(start, end, gran)
    assert wins[0][0] <= start and wins[-1][1] >= end
    for (a, b), (c, d) in zip(wins, wins[1:]):
        assert a <= b and c == b + 1
