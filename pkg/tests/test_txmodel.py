import io
import json
from datetime import date, datetime, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chainent.txmodel import (
    Category,
    ConfigError,
    ParseError,
    PriceTable,
    TxIo,
    TxRecord,
    ValidationError,
    load_labels,
    load_prices,
    parse_transactions,
    sats_to_btc,
    serialize_transactions,
    usd_value,
)


def line(**kw):
    base = {"txid": "t", "height": 1, "time": 1_600_000_000, "coinbase": False, "inputs": [], "outputs": []}
    base.update(kw)
    return json.dumps(base)


def ts(y, m, d, h=0):
    return int(datetime(y, m, d, h, tzinfo=timezone.utc).timestamp())


def test_fee_recomputed_from_edges():
    src = line(
        inputs=[{"address": "a", "sats": 60_000_000}, {"address": "b", "sats": 50_000_000}],
        outputs=[{"address": "c", "sats": 100_000_000}],
        fee=999,  # ignored
    )
    [tx] = parse_transactions(io.StringIO(src))
    assert tx.fee == 10_000_000
    assert sats_to_btc(tx.fee) == pytest.approx(0.1)


def test_coinbase_line():
    [tx] = parse_transactions([line(coinbase=True, outputs=[{"address": "m", "sats": 625_000_000}])])
    assert tx.coinbase and tx.fee == 0


def test_error_names_offending_line():
    good = line(txid="x", coinbase=True, outputs=[{"address": "m", "sats": 1}])
    bad = json.dumps({"txid": "y", "height": 1, "time": 1, "coinbase": True, "inputs": []})
    with pytest.raises(ParseError) as err:
        parse_transactions([good, bad, good])
    assert err.value.line == 2
    assert "outputs" in str(err.value)


@pytest.mark.parametrize(
    "payload",
    [
        line(inputs=[{"address": "a", "sats": -1}], outputs=[{"address": "b", "sats": 0}]),
        line(inputs=[{"address": "a", "sats": 5}], outputs=[{"address": "b", "sats": 6}]),
        line(coinbase=True, inputs=[{"address": "a", "sats": 5}], outputs=[{"address": "b", "sats": 5}]),
        line(inputs=[{"address": "a", "sats": 5}], outputs=[{"address": None, "sats": 1}]),
        line(inputs=[{"address": "a", "sats": 5}], outputs=[]),
        "{not json",
    ],
)
def test_invalid_lines_rejected(payload):
    with pytest.raises(ParseError):
        parse_transactions([payload])


def test_record_constructor_validates():
    with pytest.raises(ValidationError):
        TxIo("a", -3)
    with pytest.raises(ValidationError):
        TxRecord("t", 0, 0, (TxIo("a", 1),), (TxIo("b", 2),), False)


io_strategy = st.builds(TxIo, st.text("abcdef0123", min_size=1, max_size=6), st.integers(0, 21 * 10**14))


@st.composite
def records(draw):
    outputs = draw(st.lists(io_strategy, min_size=1, max_size=4))
    if draw(st.booleans()):
        inputs = []
    else:
        total = sum(o.amount for o in outputs) + draw(st.integers(0, 10**6))
        inputs = [TxIo(draw(st.text("xyz", min_size=1, max_size=4)), total)]
    return TxRecord(
        draw(st.text("0123456789abcdef", min_size=1, max_size=8)),
        draw(st.integers(0, 10**6)),
        draw(st.integers(0, 2**32)),
        tuple(inputs),
        tuple(outputs),
        not inputs,
    )


@given(st.lists(records(), max_size=5))
@settings(max_examples=60, deadline=None)
def test_roundtrip_and_conservation(recs):
    parsed = parse_transactions(io.StringIO(serialize_transactions(recs)))
    assert parsed == recs
    for r in parsed:
        if not r.coinbase:
            assert r.output_sats + r.fee == r.input_sats


# -- prices -----------------------------------------------------------------


def linear_scan_rate(table, when):
    day = datetime.fromtimestamp(when, tz=timezone.utc).date()
    rate = table.rates[0]
    for d, r in zip(table.dates, table.rates):
        if d <= day:
            rate = r
    return rate


def test_usd_value_single_rate_and_zero():
    table = PriceTable((date(2018, 1, 1),), (100.0,))
    assert usd_value(2.0, ts(2017, 5, 5), table) == 200.0
    assert usd_value(2.0, ts(2019, 5, 5), table) == 200.0
    assert usd_value(0.0, ts(2018, 3, 1), table) == 0.0


def test_usd_value_step_lookup_matches_linear_scan():
    table = PriceTable((date(2018, 1, 1), date(2018, 1, 10)), (10.0, 20.0))
    assert usd_value(1.0, ts(2018, 1, 5, 13), table) == 10.0
    for when in [ts(2017, 12, 31), ts(2018, 1, 1), ts(2018, 1, 9, 23), ts(2018, 1, 10), ts(2018, 2, 1)]:
        assert usd_value(1.0, when, table) == linear_scan_rate(table, when)


@given(st.floats(0, 1e4), st.floats(0, 1e4), st.integers(1_400_000_000, 1_700_000_000))
def test_usd_value_monotone_in_amount(a, b, when):
    table = PriceTable((date(2016, 1, 1), date(2020, 1, 1)), (400.0, 7000.0))
    lo, hi = sorted((a, b))
    assert usd_value(lo, when, table) <= usd_value(hi, when, table)


def test_empty_price_table_is_config_error():
    with pytest.raises(ConfigError):
        PriceTable((), ()).rate_at(0)
    with pytest.raises(ConfigError):
        load_prices(io.StringIO("date,usd_per_btc\n"))


def test_price_table_invariants():
    with pytest.raises(ValidationError):
        PriceTable((date(2018, 1, 2), date(2018, 1, 1)), (1.0, 2.0))
    with pytest.raises(ValidationError):
        PriceTable((date(2018, 1, 1),), (0.0,))


def test_load_prices():
    table = load_prices(io.StringIO("date,usd_per_btc\n2018-01-01,13000.5\n2018-01-02,14000\n"))
    assert table.dates == (date(2018, 1, 1), date(2018, 1, 2))
    assert table.rates == (13000.5, 14000.0)


# -- labels -----------------------------------------------------------------


def test_load_labels():
    assert load_labels(io.StringIO("addr1,Exchange\n")) == {"addr1": Category.EXCHANGE}
    assert load_labels(io.StringIO("address,category\naddr1,Exchange\naddr1,Exchange\n")) == {
        "addr1": Category.EXCHANGE
    }


def test_conflicting_labels_rejected():
    with pytest.raises(ParseError, match="addr1"):
        load_labels(io.StringIO("addr1,Exchange\naddr1,Mining\n"))


def test_unknown_category_lists_valid_names():
    with pytest.raises(ParseError) as err:
        load_labels(io.StringIO("addr1,Bank\n"))
    for name in ("Exchange", "Service", "Gambling", "Mining", "Darknet"):
        assert name in str(err.value)
