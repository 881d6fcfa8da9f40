"""Command-line entry point: ``chainent <subcommand> ...``.

Settings resolve in this order: command-line flag, ``CHAINENT_<FLAG>``
environment variable, ``--config`` TOML file (a ``[<subcommand>]`` table, then
top-level keys), built-in default. Exit codes: 0 success, 1 invalid input or
flags, 2 failure while running.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import tempfile
import time
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .cluster import LabelConflict, cluster_common_spending, label_entities
from .features import FeatureExtractor, FeatureMatrix, SchemaError, assemble_matrix
from .features import schema as S
from .graph import GraphError, build_address_graph, graph_stats, project_entity_graph
from .learn import (
    GBDTParams,
    SplitError,
    evaluate,
    feature_importance,
    fit,
    incremental_groups_study,
    model_from_json,
    model_to_json,
    selection_curve,
    split,
    tune,
)
from .learn.models import model_to_dict
from .learn.studies import SELECTION_KS, bootstrap_importance, rows_to_csv
from .motifs import MotifLimits, enumerate_all, motif_stats
from .seeding import derive_seed
from .synth import config_from_dict, config_to_dict, generate
from .txmodel import ConfigError, ParseError, ValidationError, load_labels, load_prices, parse_transactions

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("chainent")

ENV_PREFIX = "CHAINENT_"
EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2
INPUT_ERRORS = (ConfigError, ParseError, ValidationError, SchemaError, SplitError, LabelConflict, GraphError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- settings ----------------------------------------------------------------

# flag dest -> (type, default); resolved after parsing so env and config can fill gaps
SETTINGS = {
    "seed": (int, 0),
    "threads": (int, 1),
    "format": (str, "csv"),
    "max_paths": (int, 10**6),
    "on_conflict": (str, "drop"),
    "model": (str, "gbdt"),
    "iters": (int, 50),
    "theta": (float, None),
    "max_leaves": (int, 31),
    "min_samples_leaf": (int, 20),
    "max_iters": (int, 500),
    "groups": (str, None),
    "bootstrap": (int, 0),
}


def resolve(args, config: dict) -> None:
    section = config.get(args.command.replace("-", "_"), config.get(args.command, {}))
    for dest, (kind, default) in SETTINGS.items():
        if not hasattr(args, dest) or getattr(args, dest) is not None:
            continue
        env = os.environ.get(ENV_PREFIX + dest.upper())
        if env is not None:
            raw, origin = env, f"environment variable {ENV_PREFIX + dest.upper()}"
        elif isinstance(section, dict) and dest in section:
            raw, origin = section[dest], f"config key {args.command}.{dest}"
        elif dest in config and not isinstance(config[dest], dict):
            raw, origin = config[dest], f"config key {dest}"
        else:
            setattr(args, dest, default)
            continue
        try:
            setattr(args, dest, kind(raw))
        except (TypeError, ValueError):
            raise UsageError(f"{origin}: cannot read {raw!r} as {kind.__name__}") from None
    if getattr(args, "threads", 1) < 1:
        raise UsageError("--threads must be >= 1")
    if getattr(args, "format", "csv") not in ("csv", "json"):
        raise UsageError("--format must be csv or json")
    if getattr(args, "on_conflict", "drop") not in ("drop", "fail"):
        raise UsageError("--on-conflict must be drop or fail")
    if getattr(args, "model", "gbdt") not in ("lr", "gbdt"):
        raise UsageError("--model must be lr or gbdt")


def load_config(path: str | None) -> dict:
    if path is None:
        path = os.environ.get(ENV_PREFIX + "CONFIG")
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"--config: file not found: {path}")
    try:
        return tomllib.loads(p.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as err:
        raise UsageError(f"--config: {err}") from None


# -- outputs and manifest ------------------------------------------------------


def digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class Run:
    """Collects inputs, parameters, timings and outputs for the run manifest."""

    def __init__(self, args):
        self.args = args
        self.inputs: dict[str, str] = {}
        self.outputs: dict[str, str] = {}
        self.timings: dict[str, float] = {}
        self.params: dict = {}

    def input(self, flag: str, path: str | None) -> Path:
        if path is None:
            raise UsageError(f"{flag} is required")
        p = Path(path)
        if not p.is_file():
            raise UsageError(f"{flag}: file not found: {path}")
        self.inputs[str(p)] = digest(p)
        return p

    def write(self, path: str | Path, text: str) -> Path:
        """Write via a temporary file in the same directory, then rename."""
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=p.parent, prefix=f".{p.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            os.replace(tmp, p)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
        self.outputs[str(p)] = hashlib.sha256(text.encode("utf-8")).hexdigest()
        return p

    def stage(self, name: str):
        run = self

        class _Timer:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                run.timings[name] = round(time.perf_counter() - self.t, 6)

        return _Timer()

    def manifest(self) -> dict:
        return {
            "tool": "chainent",
            "version": __version__,
            "command": self.args.command,
            "seed": self.args.seed,
            "threads": getattr(self.args, "threads", 1),
            "parameters": self.params,
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": dict(sorted(self.outputs.items())),
            "timings_s": self.timings,
        }


def manifest_path(args, default_dir: Path) -> Path:
    return Path(args.manifest) if args.manifest else default_dir / f"manifest.{args.command}.json"


# -- shared loaders ------------------------------------------------------------


def load_graphs(run: Run, args):
    with run.stage("parse"):
        txs = parse_transactions(run.input("--tx", args.tx))
    with run.stage("cluster"):
        emap = cluster_common_spending(txs)
    with run.stage("graph"):
        ag = build_address_graph(txs)
        g = project_entity_graph(ag, emap)
    return txs, emap, ag, g


def entity_labels(run: Run, args, emap):
    labels = load_labels(run.input("--labels", args.labels))
    return label_entities(emap, labels, on_conflict=args.on_conflict)


def load_matrix(run: Run, args) -> FeatureMatrix:
    return FeatureMatrix.from_csv(run.input("--features", args.features).read_text(encoding="utf-8"))


def gbdt_params(args) -> GBDTParams:
    kw = {"max_leaves": args.max_leaves, "min_samples_leaf": args.min_samples_leaf, "max_iters": args.max_iters}
    try:
        return GBDTParams(**kw)
    except ValueError as err:
        raise UsageError(str(err)) from None


def emit_stats(run: Run, args, table: dict | list, out: str | None) -> None:
    if args.format == "json":
        text = json.dumps(table, indent=1, sort_keys=True) + "\n"
    elif isinstance(table, dict):
        rows = [(f"{section}.{key}" if isinstance(values, dict) else section, value)
                for section, values in table.items()
                for key, value in (values.items() if isinstance(values, dict) else [(None, values)])]
        text = "metric,value\n" + "".join(f"{k},{v}\n" for k, v in rows)
    else:
        text = rows_to_csv(table)
    if out:
        run.write(out, text)
    else:
        sys.stdout.write(text)


# -- subcommands -----------------------------------------------------------------


def cmd_synth(run: Run, args, config) -> Path:
    raw = dict(config.get("synth", {}))
    if "seed" in raw:
        raise UsageError("config key synth.seed is not allowed; use --seed")
    raw["seed"] = derive_seed(args.seed, "synth")
    cfg = config_from_dict(raw)
    run.params["synth"] = config_to_dict(cfg)
    with run.stage("generate"):
        out = generate(cfg)
    directory = Path(args.out)
    for name, text in out.files().items():
        run.write(directory / name, text)
    log.info("wrote %d transactions and %d labels to %s", len(out.transactions), len(out.labels), directory)
    return directory


def cmd_cluster(run: Run, args, config) -> Path:
    txs, emap, _, _ = load_graphs(run, args)
    labels = entity_labels(run, args, emap) if args.labels else {}
    lines = ["address,entity_id,category"]
    for addr, ent in emap.rows():
        lines.append(f"{addr},{ent},{labels[ent].value if ent in labels else ''}")
    run.params["entities"] = emap.n_entities
    return run.write(args.out, "\n".join(lines) + "\n").parent


def cmd_graph_stats(run: Run, args, config) -> Path:
    _, emap, ag, g = load_graphs(run, args)
    stats = graph_stats(ag, g)
    emit_stats(run, args, stats, args.out)
    return Path(args.out).parent if args.out else Path(".")


def cmd_motifs(run: Run, args, config) -> Path:
    _, emap, ag, g = load_graphs(run, args)
    labels = entity_labels(run, args, emap)
    run.params["max_paths"] = args.max_paths
    with run.stage("motifs"):
        sets = enumerate_all(g, ag, MotifLimits(args.max_paths), threads=args.threads)
    stats = motif_stats(sets.values(), labels)
    if any(stats.truncated_entities.values()):
        log.warning("motif enumeration truncated: %s", stats.truncated_entities)
    if args.format == "json":
        emit_stats(run, args, {"rows": stats.rows(), "truncated_entities": {str(n): c for n, c in sorted(stats.truncated_entities.items())}}, args.out)
    elif args.out:
        run.write(args.out, stats.to_csv())
    else:
        sys.stdout.write(stats.to_csv())
    return Path(args.out).parent if args.out else Path(".")


def cmd_features(run: Run, args, config) -> Path:
    prices_path = run.input("--prices", args.prices)
    _, emap, ag, g = load_graphs(run, args)
    labels = entity_labels(run, args, emap)
    prices = load_prices(prices_path)
    groups = tuple(x.strip() for x in args.groups.split(",")) if args.groups else S.GROUPS
    run.params.update(groups=list(groups), max_paths=args.max_paths, schema_hash=S.schema_hash())
    with run.stage("motifs"):
        sets = enumerate_all(g, ag, MotifLimits(args.max_paths), threads=args.threads)
    with run.stage("features"):
        matrix = assemble_matrix(FeatureExtractor(ag, g, sets, prices, threads=args.threads), labels, groups)
    truncated = [int(e) for e, flags in zip(matrix.entity_ids, matrix.truncated) if any(flags)]
    if truncated:
        log.warning("motif features of %d entities use truncated motif sets", len(truncated))
    out = run.write(args.out, matrix.to_csv())
    schema_out = Path(args.schema_out) if args.schema_out else out.with_name("feature_schema.json")
    run.write(schema_out, S.schema_json())
    log.info("feature matrix %d x %d written to %s", *matrix.shape, out)
    return out.parent


def _dataset(run, args):
    matrix = load_matrix(run, args)
    return split(matrix, derive_seed(args.seed, "split"))


def cmd_train(run: Run, args, config) -> Path:
    ds = _dataset(run, args)
    params = gbdt_params(args)
    run.params.update(model=args.model, theta=args.theta, gbdt=asdict(params) if args.model == "gbdt" else None)
    with run.stage("train"):
        model = fit(ds, args.model, args.theta, params)
    doc = model_to_dict(model, ds.columns)
    doc["split_seed"] = ds.seed
    out = run.write(args.out, json.dumps(doc, indent=1) + "\n")
    if args.importance_out and args.model == "gbdt":
        ranked = feature_importance(model, ds.columns)
        run.write(args.importance_out, "rank,feature,gain\n" + "".join(f"{k},{n},{g!r}\n" for k, (n, g) in enumerate(ranked, 1)))
    return out.parent


def cmd_tune(run: Run, args, config) -> Path:
    ds = _dataset(run, args)
    run.params.update(model=args.model, iters=args.iters)
    with run.stage("tune"):
        result = tune(ds, args.model, n_iters=args.iters)
    out = run.write(args.out, result.trace_csv())
    if args.model_out:
        model = fit(ds, args.model, result.best_theta, gbdt_params(args))
        doc = model_to_dict(model, ds.columns)
        doc.update(split_seed=ds.seed, tuned_theta=result.best_theta)
        run.write(args.model_out, json.dumps(doc, indent=1) + "\n")
    log.info("best %s parameter %.6g (validation loss %.6g)", args.model, result.best_theta, result.best_value)
    return out.parent


def cmd_eval(run: Run, args, config) -> Path:
    matrix = load_matrix(run, args)
    text = run.input("--model-file", args.model_file).read_text(encoding="utf-8")
    model, columns = model_from_json(text)
    split_seed = json.loads(text).get("split_seed", derive_seed(args.seed, "split"))
    if columns != matrix.columns:
        missing = set(columns) - set(matrix.columns)
        if missing:
            raise SchemaError(f"feature matrix lacks {len(missing)} model columns, e.g. {sorted(missing)[0]}")
        idx = [matrix.columns.index(c) for c in columns]
        matrix = FeatureMatrix(columns, matrix.entity_ids, matrix.X[:, idx], matrix.labels)
    ds = split(matrix, split_seed)
    if tuple(ds.classes) != tuple(model.classes):
        raise SchemaError("model classes do not match the labels of the feature matrix")
    metrics = evaluate(model, ds.X_test, ds.y_test, ds.classes)
    out = run.write(args.out, metrics.to_csv())
    if args.confusion_out:
        run.write(args.confusion_out, metrics.confusion_csv())
    log.info("accuracy %.4f, macro F1 %.4f", metrics.accuracy, metrics.macro_f1)
    return out.parent


def cmd_study_groups(run: Run, args, config) -> Path:
    ds = _dataset(run, args)
    if ds.columns != S.COLUMNS:
        raise SchemaError("the group study needs the full feature matrix")
    with run.stage("study"):
        rows = incremental_groups_study(ds)
    return run.write(args.out, rows_to_csv(rows)).parent


def cmd_study_selection(run: Run, args, config) -> Path:
    ds = _dataset(run, args)
    params = gbdt_params(args)
    thetas = {}
    if args.model_file:
        text = run.input("--model-file", args.model_file).read_text(encoding="utf-8")
        model, columns = model_from_json(text)
        if columns != ds.columns:
            raise SchemaError("ranking model columns do not match the feature matrix")
        if "tuned_theta" in json.loads(text):
            thetas["gbdt"] = json.loads(text)["tuned_theta"]
    else:
        model = fit(ds, "gbdt", None, params)
    if args.lr_theta is not None:
        thetas["lr"] = args.lr_theta
    ranked = feature_importance(model, ds.columns)
    ks = [int(k) for k in args.ks.split(",")] if args.ks else [k for k in SELECTION_KS if k <= ds.n_features]
    run.params.update(ks=ks, thetas=thetas)
    with run.stage("curve"):
        rows = selection_curve(ds, [name for name, _ in ranked], ks, thetas=thetas)
    out = run.write(args.out, rows_to_csv(rows))
    if args.importance_out:
        if args.bootstrap:
            boot = bootstrap_importance(ds, params, rounds=args.bootstrap)
            text = "feature,mean_gain,std_gain,mean_rank,top20_share\n" + "".join(
                f"{f},{a!r},{b!r},{c!r},{d!r}\n" for f, a, b, c, d in boot
            )
        else:
            text = "rank,feature,gain\n" + "".join(f"{k},{n},{g!r}\n" for k, (n, g) in enumerate(ranked, 1))
        run.write(args.importance_out, text)
    return out.parent


COMMANDS = {
    "synth": cmd_synth,
    "cluster": cmd_cluster,
    "graph-stats": cmd_graph_stats,
    "motifs": cmd_motifs,
    "features": cmd_features,
    "train": cmd_train,
    "tune": cmd_tune,
    "eval": cmd_eval,
    "study-groups": cmd_study_groups,
    "study-selection": cmd_study_selection,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, help="run seed; every stage derives its own (default 0)")
    common.add_argument("--config", help="TOML file with defaults for any flag")
    common.add_argument("--manifest", help="where to write the run manifest")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    def io_flags(p, tx=True, labels=False, prices=False, threads=False):
        if tx:
            p.add_argument("--tx", help="transactions JSONL")
        if labels:
            p.add_argument("--labels", help="address labels CSV")
            p.add_argument("--on-conflict", help="drop or fail on entities with conflicting labels (default drop)")
        if prices:
            p.add_argument("--prices", help="daily USD price CSV")
        if threads:
            p.add_argument("--threads", type=int, help="worker threads (default 1)")
            p.add_argument("--max-paths", type=int, help="motif cap per starting entity (default 1e6)")

    def gbdt_flags(p):
        p.add_argument("--max-leaves", type=int)
        p.add_argument("--min-samples-leaf", type=int)
        p.add_argument("--max-iters", type=int)

    parser = _Parser(prog="chainent", description="Entity clustering, motif features and classification for Bitcoin-style ledgers.")
    parser.add_argument("--version", action="version", version=f"chainent {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="generate a labeled synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("cluster", parents=[common], help="common-spending clustering")
    io_flags(p, labels=True)
    p.add_argument("--out", required=True, help="entities CSV (address, entity_id, category)")

    p = sub.add_parser("graph-stats", parents=[common], help="address and entity graph statistics")
    io_flags(p)
    p.add_argument("--format", help="csv or json (default csv)")
    p.add_argument("--out", help="output file (default stdout)")

    p = sub.add_parser("motifs", parents=[common], help="motif counts per category")
    io_flags(p, labels=True, threads=True)
    p.add_argument("--format", help="csv or json (default csv)")
    p.add_argument("--out", help="output file (default stdout)")

    p = sub.add_parser("features", parents=[common], help="feature matrix of labeled entities")
    io_flags(p, labels=True, prices=True, threads=True)
    p.add_argument("--groups", help="comma-separated feature groups (default all)")
    p.add_argument("--out", required=True, help="feature matrix CSV")
    p.add_argument("--schema-out", help="schema JSON (default feature_schema.json next to --out)")

    for name, helptext in (("train", "fit a classifier on the training split"), ("tune", "calibrate one parameter by GP search")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--features", help="feature matrix CSV")
        p.add_argument("--model", help="lr or gbdt (default gbdt)")
        gbdt_flags(p)
        p.add_argument("--out", required=True, help="model JSON" if name == "train" else "trace CSV")
        if name == "train":
            p.add_argument("--theta", type=float, help="inverse L2 strength (lr) or learning rate (gbdt)")
            p.add_argument("--importance-out", help="gain importance CSV (gbdt)")
        else:
            p.add_argument("--iters", type=int, help="objective evaluations (default 50)")
            p.add_argument("--model-out", help="also fit and save the tuned model")

    p = sub.add_parser("eval", parents=[common], help="metrics of a saved model on the test split")
    p.add_argument("--features", help="feature matrix CSV")
    p.add_argument("--model-file", help="model JSON from train or tune")
    p.add_argument("--out", required=True, help="metrics CSV")
    p.add_argument("--confusion-out", help="confusion matrix CSV")

    p = sub.add_parser("study-groups", parents=[common], help="accuracy as feature groups are added")
    p.add_argument("--features", help="feature matrix CSV")
    p.add_argument("--out", required=True, help="study table CSV")

    p = sub.add_parser("study-selection", parents=[common], help="accuracy using the top-k ranked features")
    p.add_argument("--features", help="feature matrix CSV")
    p.add_argument("--model-file", help="GBDT model JSON providing the ranking (default: fit one)")
    p.add_argument("--ks", help="comma-separated k values")
    p.add_argument("--lr-theta", type=float, help="inverse L2 strength for the LR curve (default 1)")
    p.add_argument("--importance-out", help="importance CSV")
    p.add_argument("--bootstrap", type=int, help="bootstrap rounds for importance stability (0 disables)")
    gbdt_flags(p)
    p.add_argument("--out", required=True, help="selection curve CSV")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as err:
        print(f"chainent: error: {err}", file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    run = Run(args)
    try:
        config = load_config(args.config)
        resolve(args, config)
        started = time.perf_counter()
        out_dir = COMMANDS[args.command](run, args, config)
        run.timings["total"] = round(time.perf_counter() - started, 6)
        path = manifest_path(args, out_dir)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(run.manifest(), indent=1) + "\n", encoding="utf-8")
    except UsageError as err:
        print(f"chainent: error: {err}", file=sys.stderr)
        return EXIT_INVALID
    except INPUT_ERRORS as err:
        print(f"chainent: invalid input: {err}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as err:  # noqa: BLE001 - reported and mapped to the failure exit code
        log.debug("failure", exc_info=True)
        print(f"chainent: failed: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
