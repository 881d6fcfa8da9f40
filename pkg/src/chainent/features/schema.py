"""The 315-column feature schema.

Column families are crossed with motif roles (incoming, outgoing, loop) and
with mean/std summaries. ``schema_v1.json`` next to this file is the shipped
copy of :func:`build_schema`; ``python -m chainent.features.schema`` prints it.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from importlib import resources

SCHEMA_VERSION = 1

GROUPS = ("Address", "Entity", "Temporal", "Centrality", "Motif1", "Motif2", "Motif3")
GROUP_SIZES = {"Address": 10, "Entity": 8, "Temporal": 16, "Centrality": 42, "Motif1": 44, "Motif2": 81, "Motif3": 114}
ROLES = ("incoming", "outgoing", "loop")
STATS = ("mean", "std")
GRANULARITIES = ("week", "month", "year")
CENTRALITY_MEASURES = ("betweenness", "closeness", "degree", "in_degree", "out_degree", "pagerank", "load")

ADDRESS_FEATURES = (
    ("total_received_btc", "btc"),
    ("balance_btc", "btc"),
    ("nb_input_tx", "count"),
    ("nb_output_tx", "count"),
    ("nb_predecessors", "count"),
    ("nb_unique_predecessors", "count"),
    ("nb_successors", "count"),
    ("nb_unique_successors", "count"),
    ("nb_pred_also_succ", "count"),
    ("nb_unique_siblings", "count"),
)

ADDRESS_DOCS = {
    "nb_unique_siblings": "mean over addresses of distinct other output addresses in the transactions paying it",
}

ENTITY_FEATURES = (
    ("nb_addresses", "count"),
    ("total_received_btc", "btc"),
    ("balance_btc", "btc"),
    ("nb_receiving_tx", "count"),
    ("nb_sending_tx", "count"),
    ("nb_unique_counterparties", "count"),
    ("nb_coinbase", "count"),
    ("prop_coinbase", "ratio"),
)

TEMPORAL_FEATURES = (
    ("nb_active_weeks", "count"),
    ("nb_active_months", "count"),
    ("nb_active_years", "count"),
    ("mean_counterparties_week", "count"),
    ("std_counterparties_week", "count"),
    ("mean_counterparties_month", "count"),
    ("std_counterparties_month", "count"),
    ("mean_counterparties_year", "count"),
    ("std_counterparties_year", "count"),
    ("nb_receiving_days", "count"),
    ("nb_sending_days", "count"),
    ("activity_duration_days", "days"),
    ("active_day_ratio", "ratio"),
    ("nb_active_days", "count"),
    ("mean_tx_per_active_day", "count"),
    ("std_tx_per_active_day", "count"),
)

# per-motif quantities summarised by mean and std, per motif length
MOTIF_QUANTITIES = {
    1: (
        ("value_btc", "btc"),
        ("value_usd", "usd"),
        ("fee_btc", "btc"),
        ("fee_usd", "usd"),
        ("nb_address", "count"),
    ),
    2: (
        ("nb_inputs", "count"),
        ("nb_outputs", "count"),
        ("in_val_btc", "btc"),
        ("in_val_usd", "usd"),
        ("out_val_btc", "btc"),
        ("out_val_usd", "usd"),
        ("mid_val_btc", "btc"),
        ("mid_val_usd", "usd"),
        ("fee_1_btc", "btc"),
        ("fee_1_usd", "usd"),
        ("fee_2_btc", "btc"),
        ("fee_2_usd", "usd"),
        ("nb_address", "count"),
    ),
    3: (
        ("nb_inputs", "count"),
        ("nb_outputs", "count"),
        ("in_val_btc", "btc"),
        ("in_val_usd", "usd"),
        ("out_val_btc", "btc"),
        ("out_val_usd", "usd"),
        ("mid_val_1_btc", "btc"),
        ("mid_val_1_usd", "usd"),
        ("mid_val_2_btc", "btc"),
        ("mid_val_2_usd", "usd"),
        ("fee_1_btc", "btc"),
        ("fee_1_usd", "usd"),
        ("fee_2_btc", "btc"),
        ("fee_2_usd", "usd"),
        ("fee_3_btc", "btc"),
        ("fee_3_usd", "usd"),
        ("nb_address_1", "count"),
        ("nb_address_2", "count"),
    ),
}


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    group: str
    units: str
    doc: str = ""

    @property
    def column(self) -> str:
        return f"{self.group}.{self.name}"


class SchemaError(ValueError):
    pass


def _motif1():
    out = []
    for role in ROLES:
        out.append(FeatureSpec(f"{role}_count", "Motif1", "count"))
        out.append(FeatureSpec(f"{role}_per_day", "Motif1", "count/day", "motifs per day of activity"))
        out.append(FeatureSpec(f"{role}_total_btc", "Motif1", "btc"))
        out.append(FeatureSpec(f"{role}_total_usd", "Motif1", "usd"))
        for q, units in MOTIF_QUANTITIES[1]:
            for s in STATS:
                out.append(FeatureSpec(f"{role}_{s}_{q}", "Motif1", units))
    out.append(FeatureSpec("unique_entity_1_predecessor", "Motif1", "count"))
    out.append(FeatureSpec("unique_entity_1_successor", "Motif1", "count"))
    return out


def _motif_n(n: int):
    group = f"Motif{n}"
    out = []
    for role in ROLES:
        out.append(FeatureSpec(f"{role}_{n}_count", group, "count"))
        for q, units in MOTIF_QUANTITIES[n]:
            for s in STATS:
                out.append(FeatureSpec(f"{role}_{n}_{s}_{q}", group, units))
    if n == 3:
        out.append(FeatureSpec("unique_entity_3_predecessor", group, "count"))
        out.append(FeatureSpec("unique_entity_3_successor", group, "count"))
        out.append(FeatureSpec("unique_entity_3_center", group, "count", "distinct interior entities"))
    return out


def build_schema() -> tuple[FeatureSpec, ...]:
    specs = [FeatureSpec(n, "Address", u, ADDRESS_DOCS.get(n, "mean over the entity's addresses")) for n, u in ADDRESS_FEATURES]
    specs += [FeatureSpec(n, "Entity", u) for n, u in ENTITY_FEATURES]
    specs += [FeatureSpec(n, "Temporal", u) for n, u in TEMPORAL_FEATURES]
    for gran in GRANULARITIES:
        for measure in CENTRALITY_MEASURES:
            for s in STATS:
                specs.append(FeatureSpec(f"{measure}_{gran}_{s}", "Centrality", "score"))
    specs += _motif1() + _motif_n(2) + _motif_n(3)
    validate(specs)
    return tuple(specs)


def validate(specs) -> None:
    names = [s.column for s in specs]
    if len(set(names)) != len(names):
        raise SchemaError("duplicate feature names")
    for group in GROUPS:
        got = sum(1 for s in specs if s.group == group)
        if got != GROUP_SIZES[group]:
            raise SchemaError(f"group {group} has {got} features, expected {GROUP_SIZES[group]}")
    order = [s.group for s in specs]
    if order != sorted(order, key=GROUPS.index):
        raise SchemaError("features are not grouped in schema order")


SCHEMA: tuple[FeatureSpec, ...] = build_schema()
N_FEATURES = len(SCHEMA)
COLUMNS = tuple(s.column for s in SCHEMA)


def group_slice(group: str) -> slice:
    start = sum(GROUP_SIZES[g] for g in GROUPS[: GROUPS.index(group)])
    return slice(start, start + GROUP_SIZES[group])


def group_indices(groups) -> list[int]:
    idx = []
    for g in GROUPS:
        if g in groups:
            s = group_slice(g)
            idx.extend(range(s.start, s.stop))
    unknown = set(groups) - set(GROUPS)
    if unknown:
        raise SchemaError(f"unknown feature group(s): {sorted(unknown)}")
    return idx


def schema_document() -> dict:
    return {
        "version": SCHEMA_VERSION,
        "n_features": N_FEATURES,
        "group_sizes": dict(GROUP_SIZES),
        "features": [{"name": s.name, "group": s.group, "units": s.units, "doc": s.doc} for s in SCHEMA],
    }


def schema_json() -> str:
    return json.dumps(schema_document(), indent=1) + "\n"


def schema_hash() -> str:
    return hashlib.sha256(schema_json().encode()).hexdigest()[:16]


def shipped_schema_json() -> str:
    return resources.files("chainent.features").joinpath("schema_v1.json").read_text(encoding="utf-8")


if __name__ == "__main__":
    print(schema_json(), end="")
