"""Transaction data model and input parsing.

Amounts are integer satoshis everywhere inside the package; BTC floats only
appear at feature boundaries via :func:`sats_to_btc`.
"""

from __future__ import annotations

import bisect
import csv
import io
import json
from dataclasses import dataclass
from datetime import date, datetime, timezone
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Iterator, Mapping, Union

SATS_PER_BTC = 100_000_000

PathOrFile = Union[str, Path, IO[str]]


class ParseError(ValueError):
    """Raised when an input line or row cannot be decoded."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(ValueError):
    """Raised when a decoded record violates a model invariant."""


class ConfigError(ValueError):
    pass


class Category(str, Enum):
    EXCHANGE = "Exchange"
    GAMBLING = "Gambling"
    MINING = "Mining"
    SERVICE = "Service"
    DARKNET = "Darknet"

    def __str__(self) -> str:
        return self.value


# column order used by every table keyed on category
CATEGORY_ORDER: tuple[Category, ...] = tuple(Category)


def sats_to_btc(sats: int | float) -> float:
    return sats / SATS_PER_BTC


@dataclass(frozen=True)
class TxIo:
    address: str
    amount: int

    def __post_init__(self):
        if not isinstance(self.address, str) or not self.address:
            raise ValidationError("address must be a non-empty string")
        if isinstance(self.amount, bool) or not isinstance(self.amount, int):
            raise ValidationError(f"amount for {self.address!r} must be integer satoshis")
        if self.amount < 0:
            raise ValidationError(f"negative amount {self.amount} for {self.address!r}")


@dataclass(frozen=True)
class TxRecord:
    txid: str
    block_height: int
    timestamp: int
    inputs: tuple[TxIo, ...]
    outputs: tuple[TxIo, ...]
    coinbase: bool

    def __post_init__(self):
        # normalise lists to tuples so records stay hashable
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        if not self.txid:
            raise ValidationError("txid must be non-empty")
        if self.block_height < 0:
            raise ValidationError(f"{self.txid}: negative block height")
        if not self.outputs:
            raise ValidationError(f"{self.txid}: transaction has no outputs")
        if self.coinbase != (len(self.inputs) == 0):
            raise ValidationError(f"{self.txid}: coinbase flag must hold exactly when inputs are empty")
        if not self.coinbase and self.fee < 0:
            raise ValidationError(f"{self.txid}: outputs exceed inputs (fee {self.fee} sats)")

    @property
    def input_sats(self) -> int:
        return sum(i.amount for i in self.inputs)

    @property
    def output_sats(self) -> int:
        return sum(o.amount for o in self.outputs)

    @property
    def fee(self) -> int:
        """Fee in satoshis, recomputed from the edges (0 for coinbase)."""
        if self.coinbase:
            return 0
        return self.input_sats - self.output_sats

    def to_json(self) -> dict:
        return {
            "txid": self.txid,
            "height": self.block_height,
            "time": self.timestamp,
            "coinbase": self.coinbase,
            "inputs": [{"address": i.address, "sats": i.amount} for i in self.inputs],
            "outputs": [{"address": o.address, "sats": o.amount} for o in self.outputs],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "TxRecord":
        if not isinstance(obj, Mapping):
            raise ValidationError("transaction must be a JSON object")
        missing = [k for k in ("txid", "height", "time", "coinbase", "inputs", "outputs") if k not in obj]
        if missing:
            raise ValidationError(f"missing field(s): {', '.join(missing)}")
        for key in ("height", "time"):
            if isinstance(obj[key], bool) or not isinstance(obj[key], int):
                raise ValidationError(f"field {key!r} must be an integer")
        if not isinstance(obj["coinbase"], bool):
            raise ValidationError("field 'coinbase' must be a boolean")
        return cls(
            txid=str(obj["txid"]),
            block_height=obj["height"],
            timestamp=obj["time"],
            inputs=tuple(_io_from_json(x) for x in _as_list(obj["inputs"], "inputs")),
            outputs=tuple(_io_from_json(x) for x in _as_list(obj["outputs"], "outputs")),
            coinbase=obj["coinbase"],
        )


def _as_list(value, name: str) -> list:
    if not isinstance(value, list):
        raise ValidationError(f"field {name!r} must be a list")
    return value


def _io_from_json(obj) -> TxIo:
    if not isinstance(obj, Mapping) or "address" not in obj or "sats" not in obj:
        raise ValidationError("each input/output needs 'address' and 'sats'")
    if obj["address"] is None:
        raise ValidationError("outputs without an address are not supported")
    return TxIo(address=str(obj["address"]), amount=obj["sats"])


def _open_text(source: PathOrFile) -> tuple[IO[str], bool]:
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8", newline=""), True
    return source, False


def iter_transactions(source: PathOrFile | Iterable[str]) -> Iterator[TxRecord]:
    """Yield records from JSONL text, validating each line as it is read."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            yield from iter_transactions(fh)
        return
    for lineno, line in enumerate(source, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON ({exc.msg})", lineno) from None
        try:
            yield TxRecord.from_json(obj)
        except ValidationError as exc:
            raise ParseError(str(exc), lineno) from None


def parse_transactions(source: PathOrFile | Iterable[str]) -> list[TxRecord]:
    return list(iter_transactions(source))


def serialize_transactions(records: Iterable[TxRecord]) -> str:
    return "".join(json.dumps(r.to_json(), separators=(",", ":")) + "\n" for r in records)


def write_transactions(records: Iterable[TxRecord], path: str | Path) -> None:
    Path(path).write_text(serialize_transactions(records), encoding="utf-8")


# -- prices -----------------------------------------------------------------


@dataclass(frozen=True)
class PriceTable:
    dates: tuple[date, ...]
    rates: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        if len(self.dates) != len(self.rates):
            raise ValidationError("dates and rates differ in length")
        for a, b in zip(self.dates, self.dates[1:]):
            if not a < b:
                raise ValidationError(f"price dates must be strictly increasing ({a} then {b})")
        for d, r in zip(self.dates, self.rates):
            if not r > 0:
                raise ValidationError(f"non-positive rate {r} on {d}")

    def __len__(self) -> int:
        return len(self.dates)

    def rate_at(self, timestamp: int) -> float:
        if not self.dates:
            raise ConfigError("price table is empty")
        day = utc_date(timestamp)
        pos = bisect.bisect_right(self.dates, day) - 1
        return self.rates[max(pos, 0)]

    @classmethod
    def constant(cls, rate: float = 1.0, day: date = date(1970, 1, 1)) -> "PriceTable":
        return cls((day,), (rate,))


def utc_date(timestamp: int) -> date:
    return datetime.fromtimestamp(timestamp, tz=timezone.utc).date()


def usd_value(amount_btc: float, timestamp: int, table: PriceTable) -> float:
    """Convert BTC to USD with the last known daily rate at ``timestamp``.

    Timestamps before the first table date use the first rate.
    """
    return amount_btc * table.rate_at(timestamp)


def load_prices(source: PathOrFile) -> PriceTable:
    fh, close = _open_text(source)
    try:
        dates, rates = [], []
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            if lineno == 1 and row[0].strip().lower() == "date":
                continue
            if len(row) != 2:
                raise ParseError("expected 'date,usd_per_btc'", lineno)
            try:
                d = date.fromisoformat(row[0].strip())
                r = float(row[1])
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
            dates.append(d)
            rates.append(r)
    finally:
        if close:
            fh.close()
    if not dates:
        raise ConfigError("price table is empty")
    return PriceTable(tuple(dates), tuple(rates))


def write_prices(table: PriceTable, path: str | Path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["date", "usd_per_btc"])
    for d, r in zip(table.dates, table.rates):
        w.writerow([d.isoformat(), repr(r)])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


# -- labels -----------------------------------------------------------------

LabelSet = dict  # address -> Category


def parse_category(name: str) -> Category:
    try:
        return Category(name.strip())
    except ValueError:
        valid = ", ".join(c.value for c in Category)
        raise ValidationError(f"unknown category {name.strip()!r}; expected one of: {valid}") from None


def load_labels(source: PathOrFile) -> dict[str, Category]:
    fh, close = _open_text(source)
    labels: dict[str, Category] = {}
    try:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            if lineno == 1 and [c.strip().lower() for c in row] == ["address", "category"]:
                continue
            if len(row) != 2:
                raise ParseError("expected 'address,category'", lineno)
            address = row[0].strip()
            if not address:
                raise ParseError("empty address", lineno)
            try:
                cat = parse_category(row[1])
            except ValidationError as exc:
                raise ParseError(str(exc), lineno) from None
            prev = labels.get(address)
            if prev is not None and prev != cat:
                raise ParseError(f"address {address!r} labelled both {prev} and {cat}", lineno)
            labels[address] = cat
    finally:
        if close:
            fh.close()
    return labels


def write_labels(labels: Mapping[str, Category], path: str | Path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["address", "category"])
    for a in sorted(labels):
        w.writerow([a, labels[a].value])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")

