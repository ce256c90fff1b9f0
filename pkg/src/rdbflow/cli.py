"""Command line entry points.

Five composable subcommands, each driven by a YAML or JSON config file:
``transform`` rewrites a dataset, ``construct-graph`` extracts and exports
a heterogeneous graph, ``dfs`` materializes synthesized features into a
single-table dataset, ``sample`` exports leakage-checked subgraph batches
per split, and ``evaluate`` scores a predictions file against a task.

Every run writes a resolved_config.json snapshot into the output directory
so results stay reproducible from the artifacts alone. Exit codes: 0 on
success, 2 for configuration problems, 3 for schema or data problems, 4
for I/O failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import Any, Optional, Sequence

import yaml

from .columns import ConfigError, DataError, SchemaError
from .database import Database, load_database, serialize_database, validate_database
from .dfs import (
    DEFAULT_MAX_DEPTH,
    CutoffRef,
    compile_plan,
    emit_sql,
    enumerate_features,
    execute_plan,
)
from .graph import HeteroGraph, export_graph, load_graph, row2node, row2nve, star_expand
from .metrics import accuracy, auc, mrr, rmse
from .sampler import FanoutPlan, audit_export, export_batches
from .tasks import TaskSpec, build_splits, materialize_labels, task_spec_from_dict
from .transform import TransformConfig, apply_transforms

logger = logging.getLogger(__name__)

_SPLITS = ("train", "val", "test")


def _load_config(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be a mapping, got {type(raw).__name__}")
    return raw


def _check_keys(cfg: dict, allowed: set[str], context: str) -> None:
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigError(f"{context}: unknown keys {sorted(unknown)}")


def _require(cfg: dict, key: str, context: str) -> Any:
    if key not in cfg:
        raise ConfigError(f"{context}: missing required key {key!r}")
    return cfg[key]


def _write_json(path: str, payload: Any) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _snapshot(args: argparse.Namespace, cfg: dict, command: str) -> None:
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "resolved_config.json"), {
        "command": command,
        "config": cfg,
        "seed": args.seed,
        "threads": args.threads,
        "out": os.path.abspath(args.out),
    })


def cmd_transform(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    _check_keys(cfg, {"dataset", "steps", "format"}, "transform config")
    db = load_database(_require(cfg, "dataset", "transform config"))
    config = TransformConfig.from_dict({"steps": cfg.get("steps", [])})
    out_db = apply_transforms(db, config)
    _snapshot(args, cfg, "transform")
    serialize_database(out_db, args.out, fmt=cfg.get("format", "rdbc"))
    _write_json(os.path.join(args.out, "transform_fit.json"),
                out_db.metadata.get("fitted_transforms", []))
    return 0


def cmd_construct_graph(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    _check_keys(cfg, {"dataset", "extractor", "star_expand"}, "construct-graph config")
    extractor = cfg.get("extractor", "row2node")
    if extractor not in ("row2node", "row2nve"):
        raise ConfigError(f"unknown extractor {extractor!r}")
    db = load_database(_require(cfg, "dataset", "construct-graph config"))
    g = row2node(db) if extractor == "row2node" else row2nve(db)
    if cfg.get("star_expand", False):
        g = star_expand(g)
    _snapshot(args, cfg, "construct-graph")
    manifest_path = export_graph(g, args.out)
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    manifest["extractor"] = extractor
    _write_json(manifest_path, manifest)
    return 0


def cmd_dfs(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    _check_keys(cfg, {"dataset", "target_table", "depth", "aggregators",
                      "max_features", "max_depth", "cutoff_column", "emit_sql",
                      "format"}, "dfs config")
    db = load_database(_require(cfg, "dataset", "dfs config"))
    target = _require(cfg, "target_table", "dfs config")
    depth = int(_require(cfg, "depth", "dfs config"))
    specs = enumerate_features(
        db, target, depth,
        aggregators=cfg.get("aggregators"),
        max_features=cfg.get("max_features"),
        max_depth=int(cfg.get("max_depth", DEFAULT_MAX_DEPTH)))
    cutoff = None
    if cfg.get("cutoff_column") is not None:
        cutoff = CutoffRef(cfg["cutoff_column"])
    plan = compile_plan(db, target, specs, cutoff)
    table = execute_plan(db, plan, threads=args.threads)
    _snapshot(args, cfg, "dfs")
    out_db = Database(name=f"{db.name}_dfs", tables={target: table})
    serialize_database(out_db, args.out, fmt=cfg.get("format", "rdbc"))
    if cfg.get("emit_sql"):
        sql_path = cfg["emit_sql"]
        if not os.path.isabs(sql_path):
            sql_path = os.path.join(args.out, sql_path)
        with open(sql_path, "w", encoding="utf-8") as fh:
            fh.write(emit_sql(db, plan))
            fh.write("\n")
    return 0


def _build_graph_for_sampling(cfg: dict) -> tuple[HeteroGraph, Optional[Database]]:
    if cfg.get("graph") is not None:
        return load_graph(cfg["graph"]), None
    db = load_database(_require(cfg, "dataset", "sample config"))
    extractor = cfg.get("extractor", "row2node")
    if extractor not in ("row2node", "row2nve"):
        raise ConfigError(f"unknown extractor {extractor!r}")
    g = row2node(db) if extractor == "row2node" else row2nve(db)
    return g, db


def cmd_sample(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    _check_keys(cfg, {"dataset", "graph", "extractor", "task", "fanouts",
                      "neighbor_order", "replace", "max_hops", "batch_size",
                      "splits"}, "sample config")
    g, db = _build_graph_for_sampling(cfg)
    if args.audit:
        problems = []
        for split in _SPLITS:
            split_dir = os.path.join(args.out, split)
            if os.path.isdir(split_dir):
                problems.extend(audit_export(g, split_dir))
        if problems:
            for p in problems:
                print(p, file=sys.stderr)
            raise DataError(f"{len(problems)} leakage problems found")
        print("audit clean")
        return 0
    if db is None:
        db = load_database(_require(cfg, "dataset", "sample config"))
    task = task_spec_from_dict(_require(cfg, "task", "sample config"))
    splits = build_splits(db, task)
    seeds = materialize_labels(db, task, splits, rng_seed=args.seed)
    fanouts = tuple(f if isinstance(f, int) else dict(f)
                    for f in _require(cfg, "fanouts", "sample config"))
    plan_kwargs: dict[str, Any] = {"fanouts": fanouts}
    if "neighbor_order" in cfg:
        plan_kwargs["neighbor_order"] = cfg["neighbor_order"]
    if "replace" in cfg:
        plan_kwargs["replace"] = bool(cfg["replace"])
    if "max_hops" in cfg:
        plan_kwargs["max_hops"] = int(cfg["max_hops"])
    plan = FanoutPlan(**plan_kwargs)
    batch_size = int(_require(cfg, "batch_size", "sample config"))
    wanted = cfg.get("splits", list(_SPLITS))
    for split in wanted:
        if split not in _SPLITS:
            raise ConfigError(f"unknown split {split!r}")
    _snapshot(args, cfg, "sample")
    for split in wanted:
        export_batches(g, seeds[split], plan, batch_size,
                       os.path.join(args.out, split), rng_seed=args.seed,
                       split=split)
    return 0


def _read_predictions(path: str) -> dict[str, dict]:
    out: dict[str, dict] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{line_no}: bad JSON: {exc}") from exc
            if "seed_id" not in rec:
                raise DataError(f"{path}:{line_no}: record missing seed_id")
            sid = rec["seed_id"]
            if sid in out:
                raise DataError(f"{path}:{line_no}: duplicate seed_id {sid!r}")
            out[sid] = rec
    return out


def _score_of(rec: dict, sid: str) -> float:
    if "score" not in rec:
        raise DataError(f"prediction for {sid!r} has no score")
    return float(rec["score"])


def _evaluate_task(task: TaskSpec, seeds: list, preds: dict[str, dict]) -> float:
    wanted = {s.seed_id for s in seeds}
    got = set(preds)
    if wanted != got:
        missing = sorted(wanted - got)[:3]
        extra = sorted(got - wanted)[:3]
        raise DataError(
            f"prediction ids do not match split seeds "
            f"(missing {missing}, unexpected {extra})")
    if task.metric == "mrr":
        queries = []
        for s in seeds:
            rec = preds[s.seed_id]
            scores = rec.get("scores")
            if not isinstance(scores, list):
                raise DataError(f"prediction for {s.seed_id!r} has no scores list")
            negatives = s.negatives or ()
            if len(scores) != 1 + len(negatives):
                raise DataError(
                    f"prediction for {s.seed_id!r} has {len(scores)} scores, "
                    f"wants {1 + len(negatives)}")
            queries.append([(float(scores[0]), 1)]
                           + [(float(v), 0) for v in scores[1:]])
        return mrr(queries)
    labels = [s.label for s in seeds]
    scores = [_score_of(preds[s.seed_id], s.seed_id) for s in seeds]
    if task.metric == "auc":
        return auc(scores, [int(v) for v in labels])
    if task.metric == "rmse":
        return rmse(scores, [float(v) for v in labels])
    return accuracy([int(round(v)) for v in scores], [int(v) for v in labels])


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    _check_keys(cfg, {"dataset", "task", "split"}, "evaluate config")
    if args.predictions is None:
        raise ConfigError("evaluate needs --predictions")
    split = cfg.get("split", "test")
    if split not in _SPLITS:
        raise ConfigError(f"unknown split {split!r}")
    db = load_database(_require(cfg, "dataset", "evaluate config"))
    task = task_spec_from_dict(_require(cfg, "task", "evaluate config"))
    splits = build_splits(db, task)
    seeds = materialize_labels(db, task, splits, rng_seed=args.seed)[split]
    preds = _read_predictions(args.predictions)
    value = _evaluate_task(task, seeds, preds)
    report = {"metric": task.metric, "value": value, "n": len(seeds), "split": split}
    _snapshot(args, cfg, "evaluate")
    _write_json(os.path.join(args.out, "report.json"), report)
    print(json.dumps(report, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rdbflow",
        description="Relational databases to graphs, features, and batches.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="YAML or JSON config file")
        p.add_argument("--seed", type=int, default=0, help="root rng seed")
        p.add_argument("--threads", type=int, default=1, help="worker cap")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("transform", help="apply column transforms to a dataset")
    common(p)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("construct-graph", help="extract a graph from a dataset")
    common(p)
    p.set_defaults(func=cmd_construct_graph)

    p = sub.add_parser("dfs", help="synthesize features into one table")
    common(p)
    p.set_defaults(func=cmd_dfs)

    p = sub.add_parser("sample", help="export subgraph batches per split")
    common(p)
    p.add_argument("--audit", action="store_true",
                   help="check an existing export for leakage instead of sampling")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("evaluate", help="score a predictions file")
    common(p)
    p.add_argument("--predictions", help="JSON-lines predictions file")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SchemaError, DataError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
