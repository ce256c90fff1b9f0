"""End-to-end runs of the five subcommands against serialized datasets."""

import hashlib
import json
import math
import os

import yaml

from rdbflow.cli import main
from rdbflow.columns import DATETIME, FLOAT, FOREIGN_KEY, INT, PRIMARY_KEY
from rdbflow.database import Database, load_database, serialize_database

from conftest import make_table, shop_database


def write_yaml(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(payload, fh)
    return str(path)


def dir_digests(root, skip=("resolved_config.json",)):
    """Relative path -> sha256, ignoring the run snapshot (it embeds paths)."""
    out = {}
    for base, _dirs, files in os.walk(root):
        for name in files:
            if name in skip:
                continue
            path = os.path.join(base, name)
            with open(path, "rb") as fh:
                digest = hashlib.sha256(fh.read()).hexdigest()
            out[os.path.relpath(path, root)] = digest
    return out


def events_database():
    event = make_table(
        "event", [("id", PRIMARY_KEY), ("ts", DATETIME), ("flag", INT)],
        {"id": list(range(10)), "ts": list(range(1, 11)),
         "flag": [0, 1, 0, 1, 0, 1, 0, 1, 1, 0]},
        time_column="ts")
    return Database("events", {"event": event})


EVENT_TASK = {
    "target_table": "event", "target_column": "flag",
    "task_kind": "entity_attribute", "metric": "auc",
    "split_rule": {"kind": "temporal", "train_end": 7, "val_end": 8},
}


def dataset_dir(tmp_path, db, name="dataset"):
    path = tmp_path / name
    serialize_database(db, str(path))
    return str(path)


def write_predictions(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    return str(path)


# --- transform ----------------------------------------------------------------


def test_transform_writes_artifacts_and_is_deterministic(tmp_path, shop_db):
    data = dataset_dir(tmp_path, shop_db)
    cfg = write_yaml(tmp_path / "t.yaml", {
        "dataset": data,
        "steps": [{"kind": "normalize_numeric", "target": "order.total"}]})
    outs = []
    for name in ("out_a", "out_b"):
        out = str(tmp_path / name)
        assert main(["transform", "--config", cfg, "--out", out]) == 0
        assert os.path.exists(os.path.join(out, "resolved_config.json"))
        assert os.path.exists(os.path.join(out, "transform_fit.json"))
        outs.append(out)
    assert dir_digests(outs[0]) == dir_digests(outs[1])
    got = load_database(outs[0])
    totals = got.table("order").columns["total"].to_list()
    known = [v for v in totals if v is not None]
    assert abs(sum(known)) < 1e-9  # centered by the fit


def test_transform_unknown_step_kind_exits_2(tmp_path, shop_db, capsys):
    data = dataset_dir(tmp_path, shop_db)
    cfg = write_yaml(tmp_path / "t.yaml", {
        "dataset": data, "steps": [{"kind": "sparkle", "target": "*.*"}]})
    assert main(["transform", "--config", cfg,
                 "--out", str(tmp_path / "out")]) == 2
    assert "sparkle" in capsys.readouterr().err


def test_transform_dummy_table_promotes_pseudo_keys(tmp_path):
    ping = make_table(
        "ping", [("id", PRIMARY_KEY), ("user_id", INT), ("ms", FLOAT)],
        {"id": [1, 2, 3], "user_id": [7, 8, 7], "ms": [1.0, 2.0, 3.0]})
    crash = make_table(
        "crash", [("id", PRIMARY_KEY), ("user_id", INT)],
        {"id": [1, 2], "user_id": [9, None]})
    data = dataset_dir(tmp_path, Database("telemetry",
                                          {"ping": ping, "crash": crash}))
    cfg = write_yaml(tmp_path / "t.yaml", {
        "dataset": data,
        "steps": [{"kind": "make_dummy_table", "target": "*.user_id",
                   "params": {"new_table": "User"}}]})
    out = str(tmp_path / "out")
    assert main(["transform", "--config", cfg, "--out", out]) == 0
    got = load_database(out)
    assert "User" in got.tables
    assert got.table("User").columns["id"].to_list() == [7, 8, 9]
    for tname in ("ping", "crash"):
        spec = got.table(tname).schema.column("user_id")
        assert spec.dtype == FOREIGN_KEY
        assert spec.fk_target == ("User", "id")


# --- construct-graph ------------------------------------------------------------


def test_construct_graph_exports_manifest(tmp_path, shop_db):
    data = dataset_dir(tmp_path, shop_db)
    cfg = write_yaml(tmp_path / "g.yaml", {"dataset": data,
                                           "extractor": "row2node"})
    outs = []
    for name in ("out_a", "out_b"):
        out = str(tmp_path / name)
        assert main(["construct-graph", "--config", cfg, "--out", out]) == 0
        outs.append(out)
    with open(os.path.join(outs[0], "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    assert manifest["extractor"] == "row2node"
    assert len(manifest["node_types"]) == 4
    assert len(manifest["edge_types"]) == 6  # three FK edges plus reverses
    assert dir_digests(outs[0]) == dir_digests(outs[1])


def test_construct_graph_rejects_unknown_extractor(tmp_path, shop_db, capsys):
    data = dataset_dir(tmp_path, shop_db)
    cfg = write_yaml(tmp_path / "g.yaml", {"dataset": data,
                                           "extractor": "row2magic"})
    assert main(["construct-graph", "--config", cfg,
                 "--out", str(tmp_path / "out")]) == 2
    assert "row2magic" in capsys.readouterr().err


# --- dfs ------------------------------------------------------------------------


def test_dfs_depth0_matches_target_table(tmp_path, shop_db):
    data = dataset_dir(tmp_path, shop_db)
    cfg = write_yaml(tmp_path / "d.yaml", {
        "dataset": data, "target_table": "customer", "depth": 0})
    out = str(tmp_path / "out")
    assert main(["dfs", "--config", cfg, "--out", out]) == 0
    got = load_database(out)
    assert list(got.tables) == ["customer"]
    assert got.table("customer").equals(shop_db.table("customer"))


def test_dfs_depth1_adds_columns_and_sql(tmp_path, shop_db):
    data = dataset_dir(tmp_path, shop_db)
    cfg = write_yaml(tmp_path / "d.yaml", {
        "dataset": data, "target_table": "customer", "depth": 1,
        "emit_sql": "features.sql"})
    out = str(tmp_path / "out")
    assert main(["dfs", "--config", cfg, "--out", out]) == 0
    table = load_database(out).table("customer")
    assert len(table.schema.columns) == 8  # id/age/tier/bio + 3 totals + count
    assert "MEAN(order.total)" in table.columns
    assert "COUNT(order)" in table.columns
    sql_path = os.path.join(out, "features.sql")
    with open(sql_path, encoding="utf-8") as fh:
        sql = fh.read()
    assert sql.startswith("WITH")

    too_deep = write_yaml(tmp_path / "deep.yaml", {
        "dataset": data, "target_table": "customer", "depth": 9})
    assert main(["dfs", "--config", too_deep,
                 "--out", str(tmp_path / "out2")]) == 2


# --- sample ---------------------------------------------------------------------


def test_sample_exports_batches_per_split(tmp_path, capsys):
    data = dataset_dir(tmp_path, events_database())
    cfg = write_yaml(tmp_path / "s.yaml", {
        "dataset": data, "task": EVENT_TASK, "fanouts": [-1],
        "batch_size": 3})
    outs = []
    for name in ("out_a", "out_b"):
        out = str(tmp_path / name)
        assert main(["sample", "--config", cfg, "--seed", "5",
                     "--out", out]) == 0
        outs.append(out)
    sizes = {"train": 7, "val": 1, "test": 2}
    for split, n_seeds in sizes.items():
        files = sorted(os.listdir(os.path.join(outs[0], split)))
        batches = [f for f in files if f.startswith("batch_")]
        assert len(batches) == math.ceil(n_seeds / 3)
        assert "manifest.json" in files
    assert dir_digests(outs[0]) == dir_digests(outs[1])

    assert main(["sample", "--config", cfg, "--seed", "5", "--out", outs[0],
                 "--audit"]) == 0
    assert "audit clean" in capsys.readouterr().out

    bad = write_yaml(tmp_path / "bad.yaml", {
        "dataset": data, "task": EVENT_TASK, "fanouts": [-1],
        "batch_size": 0})
    assert main(["sample", "--config", bad,
                 "--out", str(tmp_path / "out_c")]) == 2


# --- evaluate -------------------------------------------------------------------


def run_evaluate(tmp_path, db, task, records, tag, split="test"):
    data = dataset_dir(tmp_path, db, name=f"data_{tag}")
    cfg = write_yaml(tmp_path / f"e_{tag}.yaml", {
        "dataset": data, "task": task, "split": split})
    preds = write_predictions(tmp_path / f"preds_{tag}.jsonl", records)
    out = str(tmp_path / f"out_{tag}")
    rc = main(["evaluate", "--config", cfg, "--predictions", preds,
               "--out", out])
    if rc != 0:
        return rc, None
    with open(os.path.join(out, "report.json"), encoding="utf-8") as fh:
        return rc, json.load(fh)


def test_evaluate_perfect_predictions_hit_extrema(tmp_path, capsys):
    db = events_database()
    # test split holds rows 8 (flag 1) and 9 (flag 0)
    rc, report = run_evaluate(tmp_path, db, EVENT_TASK, [
        {"seed_id": "event:8", "score": 0.9},
        {"seed_id": "event:9", "score": 0.1}], "auc")
    assert rc == 0
    assert report == {"metric": "auc", "value": 1.0, "n": 2, "split": "test"}
    shown = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert shown == report

    rmse_task = dict(EVENT_TASK, metric="rmse")
    rc, report = run_evaluate(tmp_path, db, rmse_task, [
        {"seed_id": "event:8", "score": 1.0},
        {"seed_id": "event:9", "score": 0.0}], "rmse")
    assert rc == 0
    assert report["value"] == 0.0 and report["n"] == 2

    song = make_table(
        "song", [("id", PRIMARY_KEY), ("ts", DATETIME)],
        {"id": [1, 2, 3, 4, 5, 6], "ts": [1, 2, 3, 4, 50, 60]},
        time_column="ts")
    play = make_table(
        "play", [("id", PRIMARY_KEY), ("song_id", FOREIGN_KEY, ("song", "id")),
                 ("ts", DATETIME)],
        {"id": [0, 1, 2, 3], "song_id": [1, 3, 2, 6], "ts": [10, 25, 35, 65]},
        time_column="ts")
    mrr_task = {
        "target_table": "play", "target_column": "song_id",
        "task_kind": "foreign_key", "metric": "mrr",
        "negatives_per_positive": 2,
        "split_rule": {"kind": "temporal", "train_end": 30, "val_end": 40},
    }
    rc, report = run_evaluate(
        tmp_path, Database("playlist", {"song": song, "play": play}),
        mrr_task, [{"seed_id": "play:3", "scores": [0.9, 0.1, 0.2]}], "mrr")
    assert rc == 0
    assert report == {"metric": "mrr", "value": 1.0, "n": 1, "split": "test"}


def test_evaluate_id_mismatch_exits_3(tmp_path, capsys):
    rc, _ = run_evaluate(tmp_path, events_database(), EVENT_TASK, [
        {"seed_id": "event:8", "score": 0.9},
        {"seed_id": "event:777", "score": 0.1}], "bad")
    assert rc == 3
    assert "data error" in capsys.readouterr().err


def test_exit_codes_cover_config_and_io_failures(tmp_path, shop_db):
    data = dataset_dir(tmp_path, shop_db)
    unknown_key = write_yaml(tmp_path / "u.yaml", {
        "dataset": data, "target_table": "customer", "depth": 0,
        "verbose": True})
    assert main(["dfs", "--config", unknown_key,
                 "--out", str(tmp_path / "o1")]) == 2

    eval_cfg = write_yaml(tmp_path / "e.yaml", {
        "dataset": data,
        "task": {"target_table": "order", "target_column": "total",
                 "task_kind": "entity_attribute", "metric": "rmse",
                 "split_rule": {"kind": "temporal",
                                "train_end": "2024-01-31T00:00:00",
                                "val_end": "2024-02-28T00:00:00"}},
        "split": "test"})
    assert main(["evaluate", "--config", eval_cfg,
                 "--out", str(tmp_path / "o2")]) == 2  # no --predictions

    assert main(["evaluate", "--config", eval_cfg,
                 "--predictions", str(tmp_path / "missing.jsonl"),
                 "--out", str(tmp_path / "o3")]) == 4

    gone = write_yaml(tmp_path / "gone.yaml", {
        "dataset": str(tmp_path / "no_such_dataset"),
        "target_table": "customer", "depth": 0})
    assert main(["dfs", "--config", gone,
                 "--out", str(tmp_path / "o4")]) == 4


# --- composition ------------------------------------------------------------------


def test_subcommands_compose(tmp_path, shop_db):
    data = dataset_dir(tmp_path, shop_db)
    t_cfg = write_yaml(tmp_path / "t.yaml", {
        "dataset": data,
        "steps": [{"kind": "normalize_numeric", "target": "order.total"}]})
    staged = str(tmp_path / "staged")
    assert main(["transform", "--config", t_cfg, "--out", staged]) == 0

    g_cfg = write_yaml(tmp_path / "g.yaml", {"dataset": staged})
    assert main(["construct-graph", "--config", g_cfg,
                 "--out", str(tmp_path / "graph")]) == 0

    s_cfg = write_yaml(tmp_path / "s.yaml", {
        "dataset": staged,
        "task": {"target_table": "order", "target_column": "total",
                 "task_kind": "entity_attribute", "metric": "rmse",
                 "split_rule": {"kind": "temporal",
                                "train_end": "2024-01-31T00:00:00",
                                "val_end": "2024-02-28T00:00:00"}},
        "fanouts": [-1, -1], "batch_size": 2})
    assert main(["sample", "--config", s_cfg,
                 "--out", str(tmp_path / "batches")]) == 0

    d_cfg = write_yaml(tmp_path / "d.yaml", {
        "dataset": staged, "target_table": "customer", "depth": 1})
    assert main(["dfs", "--config", d_cfg,
                 "--out", str(tmp_path / "feats")]) == 0
    feats = load_database(str(tmp_path / "feats")).table("customer")
    assert "MEAN(order.total)" in feats.columns
