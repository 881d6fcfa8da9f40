"""Address clustering by common spending and transitive closure."""

from __future__ import annotations

import logging
from collections import defaultdict
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import kernels
from .txmodel import Category, TxRecord

log = logging.getLogger(__name__)


class LabelConflict(ValueError):
    def __init__(self, conflicts: list[tuple[int, tuple[Category, ...]]]):
        self.conflicts = conflicts
        lines = [f"entity {e}: {', '.join(c.value for c in cats)}" for e, cats in conflicts]
        super().__init__("conflicting labels within entities:\n" + "\n".join(lines))


class EntityMap:
    """Immutable partition of addresses into entities.

    Addresses are indexed in sorted order, and an entity id is the smallest
    address index in its set, so ids do not depend on the order in which
    transactions were processed.
    """

    def __init__(self, addresses: Sequence[str], labels: np.ndarray):
        self._addresses = tuple(addresses)
        self._index = {a: i for i, a in enumerate(self._addresses)}
        self._label = np.asarray(labels, dtype=np.int64)
        self._label.setflags(write=False)
        members: dict[int, list[int]] = defaultdict(list)
        for i, e in enumerate(self._label.tolist()):
            members[e].append(i)
        self._members = {e: tuple(ix) for e, ix in members.items()}
        self._entities = tuple(sorted(self._members))

    @classmethod
    def from_groups(cls, groups: Iterable[Iterable[str]]) -> "EntityMap":
        """Build a map from explicit address groups (ground truth, tests)."""
        groups = [sorted(set(g)) for g in groups]
        addresses = sorted(a for g in groups for a in g)
        if len(addresses) != len(set(addresses)):
            raise ValueError("address groups overlap")
        index = {a: i for i, a in enumerate(addresses)}
        labels = np.empty(len(addresses), dtype=np.int64)
        for g in groups:
            root = min(index[a] for a in g)
            for a in g:
                labels[index[a]] = root
        return cls(addresses, labels)

    def __len__(self) -> int:
        return len(self._addresses)

    def __contains__(self, address: str) -> bool:
        return address in self._index

    @property
    def addresses(self) -> tuple[str, ...]:
        return self._addresses

    @property
    def entities(self) -> tuple[int, ...]:
        return self._entities

    @property
    def n_entities(self) -> int:
        return len(self._entities)

    def address_index(self, address: str) -> int:
        try:
            return self._index[address]
        except KeyError:
            raise KeyError(f"unknown address {address!r}") from None

    def find(self, index: int) -> int:
        return int(self._label[index])

    def entity_of(self, address: str) -> int:
        return int(self._label[self.address_index(address)])

    def addresses_of(self, entity: int) -> frozenset[str]:
        try:
            members = self._members[entity]
        except KeyError:
            raise KeyError(f"unknown entity id {entity!r}") from None
        return frozenset(self._addresses[i] for i in members)

    def partition(self) -> set[frozenset[str]]:
        return {self.addresses_of(e) for e in self._entities}

    def rows(self) -> list[tuple[str, int]]:
        return [(a, int(e)) for a, e in zip(self._addresses, self._label.tolist())]


def cluster_common_spending(txs: Iterable[TxRecord]) -> EntityMap:
    """Merge all input addresses of each transaction, closed transitively.

    Every address seen in an input or output is part of the map; addresses
    that never co-spend stay singletons.
    """
    txs = list(txs)
    seen = set()
    for tx in txs:
        seen.update(i.address for i in tx.inputs)
        seen.update(o.address for o in tx.outputs)
    addresses = sorted(seen)
    index = {a: i for i, a in enumerate(addresses)}

    left: list[int] = []
    right: list[int] = []
    for tx in txs:
        if len(tx.inputs) < 2:
            continue
        first = index[tx.inputs[0].address]
        for i in tx.inputs[1:]:
            left.append(first)
            right.append(index[i.address])
    labels = kernels.uf_components(
        len(addresses), np.asarray(left, dtype=np.int64), np.asarray(right, dtype=np.int64)
    )
    return EntityMap(addresses, labels)


def find_label_conflicts(
    emap: EntityMap, labels: Mapping[str, Category]
) -> tuple[dict[int, Category], list[tuple[int, tuple[Category, ...]]]]:
    found: dict[int, set[Category]] = defaultdict(set)
    for address, cat in labels.items():
        if address in emap:
            found[emap.entity_of(address)].add(cat)
    clean: dict[int, Category] = {}
    conflicts = []
    for e in sorted(found):
        cats = found[e]
        if len(cats) == 1:
            clean[e] = next(iter(cats))
        else:
            order = [c for c in Category if c in cats]
            conflicts.append((e, tuple(order)))
    return clean, conflicts


def label_entities(
    emap: EntityMap, labels: Mapping[str, Category], on_conflict: str = "drop"
) -> dict[int, Category]:
    """Propagate address labels to their entities.

    An entity whose labelled addresses disagree is dropped with a warning
    (``on_conflict="drop"``) or raises :class:`LabelConflict` (``"fail"``).
    """
    if on_conflict not in ("drop", "fail"):
        raise ValueError("on_conflict must be 'drop' or 'fail'")
    clean, conflicts = find_label_conflicts(emap, labels)
    if conflicts:
        if on_conflict == "fail":
            raise LabelConflict(conflicts)
        for e, cats in conflicts:
            log.warning("dropping entity %d with conflicting labels: %s", e, ", ".join(c.value for c in cats))
    return clean
