"""Seeded synthetic transaction histories with labeled entity archetypes.

Every labeled entity spends all of its pending addresses together with its
current change address, so common-spending clustering recovers exactly the
generated ownership. Counterparties are single-address entities: a shared
pool of users plus one-shot forwarders downstream of service payouts.
"""

from __future__ import annotations

import csv
import heapq
import io
import math
from dataclasses import asdict, dataclass, field, replace
from datetime import date, datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .txmodel import (
    CATEGORY_ORDER,
    Category,
    ConfigError,
    PriceTable,
    TxIo,
    TxRecord,
    serialize_transactions,
)

DAY = 86400
BLOCK_SECONDS = 600
RESERVE = 20_000  # sats left on a change address for the following spend


@dataclass(frozen=True)
class Archetype:
    receive_rate: float = 1.0  # incoming payments per day
    spend_rate: float = 0.3  # payouts per day
    fan_out: float = 3.0  # mean payees per payout
    loop_propensity: float = 0.1  # chance a payout also funds fresh own addresses
    shuffle_rate: float = 0.0  # pure self-transfers per day
    coinbase_share: float = 0.0  # share of receipts that are block rewards
    address_reuse: float = 0.0  # chance a payment reuses a pending deposit address
    pays_back: bool = False  # payees are recent payers rather than random users
    change: bool = True  # payouts return change to a fresh own address
    forward_fee: tuple[float, float] = (0.0, 0.0)  # fee rate at the third hop downstream; (0, 0) disables forwarding

    def validate(self, name: str) -> None:
        for key in ("receive_rate", "spend_rate", "shuffle_rate"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{name}.{key} must be >= 0")
        if self.fan_out < 1:
            raise ConfigError(f"{name}.fan_out must be >= 1")
        for key in ("loop_propensity", "coinbase_share", "address_reuse"):
            if not 0.0 <= getattr(self, key) <= 1.0:
                raise ConfigError(f"{name}.{key} must be in [0, 1]")
        if not self.change and (self.loop_propensity > 0 or self.shuffle_rate > 0):
            raise ConfigError(f"{name}: moving funds to own addresses needs change outputs")
        lo, hi = self.forward_fee
        if not 0.0 <= lo <= hi < 1.0:
            raise ConfigError(f"{name}.forward_fee must satisfy 0 <= low <= high < 1")


DEFAULT_ARCHETYPES = {
    Category.EXCHANGE: Archetype(receive_rate=0.8, spend_rate=0.3, fan_out=5.0, loop_propensity=0.1, address_reuse=0.1),
    Category.GAMBLING: Archetype(
        receive_rate=0.8, spend_rate=0.3, fan_out=1.5, loop_propensity=0.6, shuffle_rate=0.25, pays_back=True
    ),
    Category.MINING: Archetype(receive_rate=0.6, spend_rate=0.2, fan_out=6.0, loop_propensity=0.0, coinbase_share=0.8, change=False),
    Category.SERVICE: Archetype(
        receive_rate=0.6, spend_rate=0.2, fan_out=1.5, loop_propensity=0.1, address_reuse=0.2, forward_fee=(0.0005, 0.004)
    ),
    Category.DARKNET: Archetype(
        receive_rate=0.6, spend_rate=0.2, fan_out=1.5, loop_propensity=0.1, address_reuse=0.2, forward_fee=(0.003, 0.02)
    ),
}


@dataclass(frozen=True)
class SynthConfig:
    counts: dict = field(default_factory=lambda: {c: 20 for c in CATEGORY_ORDER})
    archetypes: dict = field(default_factory=lambda: dict(DEFAULT_ARCHETYPES))
    days: int = 60
    n_users: int = 300
    label_fraction: float = 0.3  # share of an entity's addresses that carry a label (at least one)
    rate_spread: float = 0.35  # log-normal spread of per-entity rates around the archetype
    start: date = date(2018, 1, 1)
    start_height: int = 500_000
    start_price: float = 10_000.0
    price_volatility: float = 0.03
    seed: int = 0

    def validate(self) -> None:
        for c, n in self.counts.items():
            if not isinstance(c, Category):
                raise ConfigError(f"unknown category {c!r}")
            if n < 0:
                raise ConfigError(f"count for {c.value} must be >= 0")
        if sum(self.counts.values()) == 0:
            raise ConfigError("at least one labeled entity is required")
        if self.days < 1:
            raise ConfigError("days must be >= 1")
        if self.n_users < 1:
            raise ConfigError("n_users must be >= 1: payments and payouts need counterparties")
        if not 0.0 < self.label_fraction <= 1.0:
            raise ConfigError("label_fraction must be in (0, 1]")
        if self.rate_spread < 0 or self.price_volatility < 0 or self.start_price <= 0:
            raise ConfigError("rate_spread and price_volatility must be >= 0, start_price > 0")
        for c in self.counts:
            if c not in self.archetypes:
                raise ConfigError(f"no archetype parameters for {c.value}")
            self.archetypes[c].validate(c.value)


def config_from_dict(d: dict) -> SynthConfig:
    """Build a config from plain (e.g. TOML) data; unknown keys are errors."""
    base = SynthConfig()
    d = dict(d)
    counts = dict(base.counts)
    for name, n in d.pop("counts", {}).items():
        counts[_category(name)] = int(n)
    archetypes = dict(base.archetypes)
    for name, params in d.pop("archetypes", {}).items():
        cat = _category(name)
        params = dict(params)
        if "forward_fee" in params:
            params["forward_fee"] = tuple(float(x) for x in params["forward_fee"])
        try:
            archetypes[cat] = replace(archetypes.get(cat, Archetype()), **params)
        except TypeError as err:
            raise ConfigError(f"archetypes.{name}: {err}") from None
    if "start" in d and isinstance(d["start"], str):
        d["start"] = date.fromisoformat(d["start"])
    try:
        cfg = replace(base, counts=counts, archetypes=archetypes, **d)
    except TypeError as err:
        raise ConfigError(str(err)) from None
    cfg.validate()
    return cfg


def _category(name: str) -> Category:
    for c in Category:
        if c.value.lower() == str(name).lower():
            return c
    raise ConfigError(f"unknown category {name!r}; expected one of {[c.value for c in Category]}")


@dataclass
class SynthOutput:
    transactions: list[TxRecord]
    labels: dict[str, Category]
    prices: PriceTable
    owner: dict[str, str]  # address -> generated entity key
    categories: dict[str, Category]  # entity key -> category, labeled entities only

    def ground_truth_rows(self) -> list[tuple[str, int, str]]:
        """``(address, entity_id, category)`` with ids as the smallest sorted address index per entity."""
        addresses = sorted(self.owner)
        first: dict[str, int] = {}
        for k, a in enumerate(addresses):
            first.setdefault(self.owner[a], k)
        return [
            (a, first[self.owner[a]], self.categories[self.owner[a]].value if self.owner[a] in self.categories else "")
            for a in addresses
        ]

    def ground_truth_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["address", "entity_id", "category"])
        w.writerows(self.ground_truth_rows())
        return buf.getvalue()

    def labels_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["address", "category"])
        for a in sorted(self.labels):
            w.writerow([a, self.labels[a].value])
        return buf.getvalue()

    def prices_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["date", "usd_per_btc"])
        for d, r in zip(self.prices.dates, self.prices.rates):
            w.writerow([d.isoformat(), f"{r:.2f}"])
        return buf.getvalue()

    def files(self) -> dict[str, str]:
        return {
            "transactions.jsonl": serialize_transactions(self.transactions),
            "labels.csv": self.labels_csv(),
            "prices.csv": self.prices_csv(),
            "ground_truth_entities.csv": self.ground_truth_csv(),
        }


class _Entity:
    def __init__(self, key: str, cat: Category, params: Archetype, factor: float, fee_rate: float):
        self.key = key
        self.cat = cat
        self.params = params
        self.factor = factor
        self.fee_rate = fee_rate
        self.change_addr: str | None = None
        self.reserve_addr: str | None = None
        self.pending: list[str] = []
        self.payers: list[str] = []
        self.n_addr = 0


class _Generator:
    def __init__(self, cfg: SynthConfig):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.t0 = int(datetime(cfg.start.year, cfg.start.month, cfg.start.day, tzinfo=timezone.utc).timestamp())
        self.t_end = self.t0 + cfg.days * DAY
        self.balance: dict[str, int] = {}
        self.owner: dict[str, str] = {}
        self.txs: list[TxRecord] = []
        self.users = [f"u{k:05d}" for k in range(cfg.n_users)]
        for u in self.users:
            self.owner[u] = u
        self.n_forwarders = 0
        self.entities: list[_Entity] = []
        for cat in CATEGORY_ORDER:
            n = cfg.counts.get(cat, 0)
            params = cfg.archetypes[cat] if n else None
            for k in range(n):
                factor = float(np.exp(self.rng.normal(0.0, cfg.rate_spread)))
                lo, hi = params.forward_fee
                fee_rate = float(self.rng.uniform(lo, hi)) if hi > 0 else 0.0
                self.entities.append(_Entity(f"{cat.value.lower()}{k:03d}", cat, params, factor, fee_rate))

    # -- addresses and amounts ---------------------------------------------

    def new_address(self, ent: _Entity) -> str:
        addr = f"{ent.key}.{ent.n_addr:04d}"
        ent.n_addr += 1
        self.owner[addr] = ent.key
        return addr

    def amount(self, median_btc: float, sigma: float = 0.8) -> int:
        return max(int(median_btc * 1e8 * math.exp(self.rng.normal(0.0, sigma))), 10_000)

    def fee(self, n_io: int) -> int:
        return int(self.rng.integers(1_000, 10_000)) * max(n_io, 2) // 2

    def emit(self, ts: int, inputs, outputs) -> None:
        height = self.cfg.start_height + (ts - self.t0) // BLOCK_SECONDS
        tx = TxRecord(
            f"{len(self.txs):06d}-{ts:x}",
            height,
            ts,
            tuple(TxIo(a, int(v)) for a, v in inputs),
            tuple(TxIo(a, int(v)) for a, v in outputs),
            not inputs,
        )
        self.txs.append(tx)
        for o in tx.outputs:
            self.balance[o.address] = self.balance.get(o.address, 0) + o.amount
        for i in tx.inputs:
            self.balance[i.address] = self.balance.get(i.address, 0) - i.amount

    # -- event handlers -----------------------------------------------------

    def receive(self, ts: int, ent: _Entity) -> None:
        p = ent.params
        if self.rng.random() < p.coinbase_share:
            target = ent.change_addr or self._home(ent)
            self.emit(ts, (), [(target, int(self.rng.integers(10, 13)) * 10**8)])
            return
        user = self.users[int(self.rng.integers(len(self.users)))]
        if not p.change:
            target = ent.change_addr or self._home(ent)
        elif ent.pending and self.rng.random() < p.address_reuse:
            target = ent.pending[int(self.rng.integers(len(ent.pending)))]
        else:
            target = self.new_address(ent)
            ent.pending.append(target)
        value = self.amount(0.05)
        self.emit(ts, [(user, value + self.fee(2))], [(target, value)])
        ent.payers.append(user)

    def _home(self, ent: _Entity) -> str:
        ent.change_addr = self.new_address(ent)
        self.balance.setdefault(ent.change_addr, 0)
        return ent.change_addr

    def _inputs(self, ent: _Entity, final: bool = False) -> list[tuple[str, int]]:
        """Inputs of the next spend.

        Part of each change output stays behind and is spent together with the
        following change address, which keeps consecutive spends co-spent.
        """
        if ent.change_addr is None:
            # funds held before the observed period
            home = self._home(ent)
            self.balance[home] = self.amount(200.0, 0.5)
        out = []
        if ent.reserve_addr is not None and self.balance[ent.reserve_addr] > 0:
            out.append((ent.reserve_addr, self.balance[ent.reserve_addr]))
        current = self.balance[ent.change_addr]
        keep = 0 if final or not ent.params.change else min(RESERVE, current // 2)
        if current - keep > 0:
            out.append((ent.change_addr, current - keep))
        taken = {a for a, _ in out}
        out += [(a, self.balance[a]) for a in dict.fromkeys(ent.pending) if a not in taken and self.balance[a] > 0]
        return out

    def spend(self, ts: int, ent: _Entity, payees: list[str], internal: int, schedule, final: bool = False) -> None:
        inputs = self._inputs(ent, final)
        total = sum(v for _, v in inputs)
        if total <= 0:
            return
        n_out = len(payees) + internal + (1 if ent.params.change else 0)
        fee = self.fee(len(inputs) + n_out)
        budget = total - fee
        if budget <= 0:
            return
        values = [self.amount(0.08) for _ in payees] + [self.amount(0.3) for _ in range(internal)]
        if ent.params.change:
            scale = min(1.0, 0.6 * budget / max(sum(values), 1))
            values = [max(int(v * scale), 1) for v in values]
        else:
            # no change output: the whole budget is shared out
            weights = np.asarray(values, dtype=np.float64)
            values = [int(x) for x in np.floor(budget * weights / weights.sum())]
            values[0] += budget - sum(values)
        outputs = list(zip(payees, values[: len(payees)]))
        fresh = [self.new_address(ent) for _ in range(internal)]
        outputs += list(zip(fresh, values[len(payees) :]))
        if ent.params.change:
            # the closing sweep pays back to an address already tied to the entity
            change = ent.change_addr if final else self.new_address(ent)
            outputs.append((change, budget - sum(values)))
        self.emit(ts, inputs, outputs)
        ent.pending = fresh
        if ent.params.change:
            ent.reserve_addr = ent.change_addr
            ent.change_addr = change
        for addr in payees:
            if self.owner[addr].startswith("f"):
                schedule(ts, addr, 1, ent.fee_rate)

    def payout(self, ts: int, ent: _Entity, schedule) -> None:
        p = ent.params
        k = 1 + int(self.rng.poisson(p.fan_out - 1))
        if p.forward_fee[1] > 0:
            payees = [self._forwarder() for _ in range(k)]
        elif p.pays_back and ent.payers:
            recent = ent.payers[-20:]
            payees = [recent[int(self.rng.integers(len(recent)))] for _ in range(k)]
        else:
            payees = [self.users[int(self.rng.integers(len(self.users)))] for _ in range(k)]
        payees = list(dict.fromkeys(payees))
        internal = 1 + int(self.rng.integers(2)) if self.rng.random() < p.loop_propensity else 0
        self.spend(ts, ent, payees, internal, schedule)

    def shuffle(self, ts: int, ent: _Entity, schedule) -> None:
        self.spend(ts, ent, [], 1 + int(self.rng.integers(3)), schedule)

    def _forwarder(self) -> str:
        addr = f"f{self.n_forwarders:06d}"
        self.n_forwarders += 1
        self.owner[addr] = addr
        return addr

    def forward(self, ts: int, addr: str, hop: int, fee_rate: float, schedule) -> None:
        value = self.balance.get(addr, 0)
        fee = int(value * fee_rate) if hop == 2 else self.fee(2)
        if value - fee <= 0:
            return
        nxt = self._forwarder()
        self.emit(ts, [(addr, value)], [(nxt, value - fee)])
        if hop < 2:
            schedule(ts, nxt, hop + 1, fee_rate)

    # -- driver -------------------------------------------------------------

    def run(self) -> SynthOutput:
        cfg = self.cfg
        sweep_at = self.t_end - 1800
        events = []
        for idx, ent in enumerate(self.entities):
            p = ent.params
            for kind, rate in (("receive", p.receive_rate), ("payout", p.spend_rate), ("shuffle", p.shuffle_rate)):
                n = int(self.rng.poisson(rate * ent.factor * cfg.days))
                for ts in np.sort(self.rng.integers(self.t0, sweep_at - 3600, size=n)).tolist():
                    events.append((ts, idx, kind))
        events.sort()
        heap: list = []
        seq = [0]

        def schedule(ts, addr, hop, fee_rate):
            when = ts + int(self.rng.integers(DAY // 20, 3 * DAY // 2))
            if when < self.t_end:
                seq[0] += 1
                heapq.heappush(heap, (when, seq[0], addr, hop, fee_rate))

        def drain(until):
            while heap and heap[0][0] <= until:
                when, _, addr, hop, fee_rate = heapq.heappop(heap)
                self.forward(when, addr, hop, fee_rate, schedule)

        for ts, idx, kind in events:
            drain(ts)
            ent = self.entities[idx]
            if kind == "receive":
                self.receive(ts, ent)
            elif kind == "payout":
                self.payout(ts, ent, schedule)
            else:
                self.shuffle(ts, ent, schedule)
        drain(sweep_at)
        for ent in self.entities:
            if ent.params.change and (ent.pending or ent.reserve_addr):
                self.spend(sweep_at, ent, [], 0, schedule, final=True)
            elif ent.pending:
                raise AssertionError("entities without change never hold pending addresses")
        drain(self.t_end)

        self._prune_unused()
        return SynthOutput(self.txs, self._labels(), self._prices(), dict(self.owner), self._categories())

    def _prune_unused(self) -> None:
        used = {io.address for tx in self.txs for io in tx.inputs + tx.outputs}
        for a in list(self.owner):
            if a not in used:
                del self.owner[a]

    def _categories(self) -> dict[str, Category]:
        active = set(self.owner.values())
        return {e.key: e.cat for e in self.entities if e.key in active}

    def _labels(self) -> dict[str, Category]:
        by_entity: dict[str, list[str]] = {}
        for a, key in sorted(self.owner.items()):
            by_entity.setdefault(key, []).append(a)
        labels = {}
        for ent in self.entities:
            addrs = by_entity.get(ent.key)
            if not addrs:
                continue
            k = max(1, int(round(self.cfg.label_fraction * len(addrs))))
            for i in np.sort(self.rng.choice(len(addrs), size=k, replace=False)).tolist():
                labels[addrs[i]] = ent.cat
        return labels

    def _prices(self) -> PriceTable:
        n = self.cfg.days + 1
        steps = self.rng.normal(0.0, self.cfg.price_volatility, size=n - 1)
        log_p = np.log(self.cfg.start_price) + np.concatenate([[0.0], np.cumsum(steps)])
        rates = [round(float(x), 2) for x in np.exp(log_p)]
        dates = [self.cfg.start + timedelta(days=k) for k in range(n)]
        return PriceTable(tuple(dates), tuple(rates))


def generate(config: SynthConfig = SynthConfig()) -> SynthOutput:
    config.validate()
    return _Generator(config).run()


def write_dataset(out: SynthOutput, directory: str | Path) -> dict[str, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, text in out.files().items():
        path = directory / name
        path.write_text(text, encoding="utf-8")
        paths[name] = path
    return paths


def config_to_dict(cfg: SynthConfig) -> dict:
    return {
        "counts": {c.value: n for c, n in cfg.counts.items()},
        "archetypes": {c.value: {**asdict(a), "forward_fee": list(a.forward_fee)} for c, a in cfg.archetypes.items()},
        **{k: (v.isoformat() if isinstance(v, date) else v) for k, v in asdict(cfg).items() if k not in ("counts", "archetypes")},
    }
