"""Generate the trainer's test fixtures with the rdbflow exporters.

Three small databases cover the trainer's surface:

* payments: 30 merchants x 6 accounts. Each merchant has a hidden coin;
  account.flag is that coin with 10% label noise, so flag is predictable
  only from sibling accounts' flags (the label-as-feature path), while
  account.flag2 equals sign(account.amount) and is predictable from the
  account's own features. One export per task, plus a depth-1 aggregation
  feature table for the tabular baseline.
* web: four tables exercising every column dtype (nulls included) with
  binary, multiclass, and regression tasks, exported once at depth-2
  fanouts and once at exhaustive depth so depth-limited and whole-graph
  forwards can be compared, plus one export over the graph that turns the
  post_tag link table into typed edges carrying feature columns.
* gadget: a 20-row database for foreign-key ranking; accounts favor one
  of four merchants and the favorite is always the first merchant the
  account transacted with, so the transaction history is the evidence.
  Transactions predate every account timestamp, keeping the evidence
  inside each seed's cutoff.

Everything is deterministic; rerunning overwrites the same bytes.
"""

from __future__ import annotations

import os
import shutil
import sys

import numpy as np

from rdbflow.columns import (
    CATEGORICAL,
    DATETIME,
    FLOAT,
    FOREIGN_KEY,
    INT,
    PRIMARY_KEY,
    TEXT,
    VECTOR,
    ColumnSpec,
    TableSchema,
)
from rdbflow.database import Database, Table
from rdbflow.dfs import CutoffRef, compile_plan, enumerate_features, execute_plan
from rdbflow.graph import row2node, row2nve
from rdbflow.rdbc import write_table
from rdbflow.sampler import FanoutPlan, audit_export, export_batches
from rdbflow.tasks import build_splits, materialize_labels, task_spec_from_dict

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "test", "fixtures")


def make_table(name, cols, cells, time_column=None):
    specs = []
    for col in cols:
        cname, dtype = col[0], col[1]
        fk = col[2] if len(col) > 2 else None
        dim = col[3] if len(col) > 3 else None
        specs.append(ColumnSpec(cname, dtype, fk_target=fk,
                                is_time_column=(cname == time_column), dim=dim))
    return Table.from_cells(TableSchema(name, tuple(specs)), cells)


def payments_database() -> Database:
    rng = np.random.default_rng(7)
    n_merchants = 30
    per_merchant = 6
    merchant = make_table(
        "merchant",
        [("id", PRIMARY_KEY), ("name", TEXT)],
        {"id": list(range(1, n_merchants + 1)),
         "name": [f"m{i}" for i in range(1, n_merchants + 1)]})
    coin = rng.integers(0, 2, size=n_merchants)
    ids, merchant_ids, ts, noise, amount, flag, flag2 = [], [], [], [], [], [], []
    for m in range(n_merchants):
        for k in range(per_merchant):
            ids.append(1000 + m * per_merchant + k)
            merchant_ids.append(m + 1)
            # one account per month: months 1-4 train, 5 val, 6 test
            ts.append(f"2024-{k + 1:02d}-{(m % 27) + 1:02d}T12:00:00")
            noise.append(float(rng.normal()))
            f2 = int(rng.integers(0, 2))
            flag2.append(f2)
            amount.append(float(rng.uniform(0.5, 1.5) if f2 else rng.uniform(-1.5, -0.5)))
            noisy = int(rng.random() < 0.1)
            flag.append(int(coin[m]) ^ noisy)
    account = make_table(
        "account",
        [("id", PRIMARY_KEY), ("merchant_id", FOREIGN_KEY, ("merchant", "id")),
         ("ts", DATETIME), ("noise", FLOAT), ("amount", FLOAT),
         ("flag", INT), ("flag2", INT)],
        {"id": ids, "merchant_id": merchant_ids, "ts": ts, "noise": noise,
         "amount": amount, "flag": flag, "flag2": flag2},
        time_column="ts")
    return Database("payments", {"merchant": merchant, "account": account})


def web_database() -> Database:
    rng = np.random.default_rng(11)
    author = make_table(
        "author",
        [("id", PRIMARY_KEY), ("style", CATEGORICAL), ("karma", FLOAT),
         ("emb", VECTOR, None, 3), ("bio", TEXT)],
        {"id": [1, 2, 3, 4, 5, 6],
         "style": ["a", "b", None, "c", "a", "b"],
         "karma": [1.5, None, 0.25, -2.0, 3.5, 0.0],
         "emb": [list(map(float, rng.normal(size=3))) for _ in range(6)],
         "bio": ["hi", None, "likes tags", "", "x", "y"]})
    months = [1, 1, 2, 2, 3, 3, 4, 4, 4, 5, 5, 6, 6, 6]
    post = make_table(
        "post",
        [("id", PRIMARY_KEY), ("author_id", FOREIGN_KEY, ("author", "id")),
         ("ts", DATETIME), ("words", INT), ("tone", CATEGORICAL),
         ("hot", INT), ("cat", INT), ("score", FLOAT)],
        {"id": list(range(100, 114)),
         "author_id": [1, 2, 3, 4, 5, 6, 1, 2, None, 3, 4, 5, 6, 1],
         "ts": [f"2024-{m:02d}-{3 + i:02d}T09:00:00" for i, m in enumerate(months)],
         "words": [120, None, 80, 45, 300, 10, None, 95, 60, 210, 33, 150, 70, 88],
         "tone": ["calm", "sharp", "calm", None, "wry", "calm", "sharp",
                  "wry", "calm", "sharp", None, "calm", "wry", "sharp"],
         "hot": [1, 0, 1, 0, 0, 1, 0, 1, 0, 1, 0, 0, 1, 1],
         "cat": [0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1],
         "score": [2.5, -0.5, 1.0, 0.0, 4.5, None, 1.5, 2.0, -1.0,
                   3.0, 0.5, 1.25, 2.75, -0.25]},
        time_column="ts")
    tag = make_table(
        "tag",
        [("id", PRIMARY_KEY), ("weight", FLOAT)],
        {"id": [7, 8, 9, 10, 11], "weight": [0.1, 0.9, None, 0.5, 0.3]})
    post_ids = [100, 100, 101, 102, 103, 104, 105, 106, 107, 108,
                109, 110, 111, 112, 113, 113, 103, 106]
    tag_ids = [7, 8, 9, 7, 10, 11, 7, None, 8, 9, 10, 11, 7, 8, 9, 10, 11, 7]
    post_ts = {100: 1, 101: 1, 102: 2, 103: 2, 104: 3, 105: 3, 106: 4,
               107: 4, 108: 4, 109: 5, 110: 5, 111: 6, 112: 6, 113: 6}
    post_tag = make_table(
        "post_tag",
        [("post_id", FOREIGN_KEY, ("post", "id")),
         ("tag_id", FOREIGN_KEY, ("tag", "id")),
         ("ts", DATETIME), ("strength", FLOAT)],
        {"post_id": post_ids, "tag_id": tag_ids,
         "ts": [f"2024-{post_ts[p]:02d}-{10 + i}T10:00:00"
                for i, p in enumerate(post_ids)],
         "strength": [float(v) for v in rng.uniform(0, 1, size=len(post_ids))]},
        time_column="ts")
    return Database("web", {"author": author, "post": post, "tag": tag,
                            "post_tag": post_tag})


def gadget_database() -> Database:
    rng = np.random.default_rng(13)
    merchant = make_table(
        "merchant",
        [("id", PRIMARY_KEY), ("fee", FLOAT)],
        {"id": [1, 2, 3, 4], "fee": [0.1, 0.2, 0.3, 0.4]})
    account = make_table(
        "account",
        [("id", PRIMARY_KEY), ("fav_merchant_id", FOREIGN_KEY, ("merchant", "id")),
         ("ts", DATETIME), ("noise", FLOAT)],
        {"id": [10, 11, 12, 13, 14, 15],
         "fav_merchant_id": [1, 2, 3, 4, 1, 2],
         "ts": [f"2024-06-{d:02d}T00:00:00" for d in range(1, 7)],
         "noise": [float(v) for v in rng.normal(size=6)]},
        time_column="ts")
    accounts = [10, 10, 11, 11, 12, 13, 13, 14, 15, 15]
    merchants = [1, 2, 2, 3, 3, 4, 1, 1, 2, 4]
    txn = make_table(
        "txn",
        [("id", PRIMARY_KEY), ("account_id", FOREIGN_KEY, ("account", "id")),
         ("merchant_id", FOREIGN_KEY, ("merchant", "id")),
         ("ts", DATETIME), ("amt", FLOAT)],
        {"id": list(range(20, 30)),
         "account_id": accounts,
         "merchant_id": merchants,
         "ts": [f"2024-0{1 + i % 3}-{5 + i:02d}T08:00:00" for i in range(10)],
         "amt": [float(v) for v in rng.uniform(1, 9, size=10)]},
        time_column="ts")
    return Database("gadget", {"merchant": merchant, "account": account,
                               "txn": txn})


def export_task(db: Database, task_cfg: dict, fanouts, out_dir: str,
                batch_size: int, builder=row2node) -> None:
    g = builder(db)
    task = task_spec_from_dict(task_cfg)
    splits = build_splits(db, task)
    seeds = materialize_labels(db, task, splits, rng_seed=0)
    plan = FanoutPlan(fanouts=tuple(fanouts))
    for split in ("train", "val", "test"):
        split_dir = os.path.join(out_dir, split)
        export_batches(g, seeds[split], plan, batch_size, split_dir,
                       rng_seed=0, split=split)
        problems = audit_export(g, split_dir)
        if problems:
            raise SystemExit(f"{out_dir} {split}: " + "; ".join(problems))
    counts = {s: len(seeds[s]) for s in ("train", "val", "test")}
    print(f"  {out_dir}: seeds {counts}")


def main() -> None:
    if os.path.isdir(FIXTURES):
        shutil.rmtree(FIXTURES)
    os.makedirs(FIXTURES)

    print("payments")
    payments = payments_database()
    temporal = {"kind": "temporal", "train_end": "2024-04-30T00:00:00",
                "val_end": "2024-05-31T00:00:00"}
    export_task(payments,
                {"target_table": "account", "target_column": "flag",
                 "task_kind": "entity_attribute", "metric": "auc",
                 "split_rule": temporal},
                [-1, -1], os.path.join(FIXTURES, "payments", "flag"), 32)
    export_task(payments,
                {"target_table": "account", "target_column": "flag2",
                 "task_kind": "entity_attribute", "metric": "auc",
                 "split_rule": temporal},
                [-1, -1], os.path.join(FIXTURES, "payments", "sep"), 32)
    specs = enumerate_features(payments, "account", depth=1)
    plan = compile_plan(payments, "account", specs, CutoffRef("ts"))
    table = execute_plan(payments, plan)
    feat_path = os.path.join(FIXTURES, "payments", "features_account.rdbc")
    with open(feat_path, "wb") as fh:
        write_table(fh, [(spec.name, table.columns[spec.name])
                         for spec in table.schema.columns])
    print(f"  {feat_path}: {len(table.schema.columns)} columns")

    print("web")
    web = web_database()
    web_split = {"kind": "temporal", "train_end": "2024-04-30T00:00:00",
                 "val_end": "2024-05-31T00:00:00"}
    hot_task = {"target_table": "post", "target_column": "hot",
                "task_kind": "entity_attribute", "metric": "auc",
                "split_rule": web_split}
    export_task(web, hot_task, [-1, -1], os.path.join(FIXTURES, "web", "hot"), 4)
    export_task(web, hot_task, [-1] * 6,
                os.path.join(FIXTURES, "web", "hot_dense"), 4)
    # same task over the link-table-as-edges graph, so batches carry typed
    # edges with their own feature columns and timestamps
    export_task(web, hot_task, [-1, -1, -1],
                os.path.join(FIXTURES, "web", "hot_nve"), 4, builder=row2nve)
    export_task(web,
                {"target_table": "post", "target_column": "cat",
                 "task_kind": "entity_attribute", "metric": "accuracy",
                 "split_rule": web_split},
                [-1, -1], os.path.join(FIXTURES, "web", "cat"), 4)
    export_task(web,
                {"target_table": "post", "target_column": "score",
                 "task_kind": "entity_attribute", "metric": "rmse",
                 "split_rule": web_split},
                [-1, -1], os.path.join(FIXTURES, "web", "score"), 4)

    print("gadget")
    gadget = gadget_database()
    export_task(gadget,
                {"target_table": "account", "target_column": "fav_merchant_id",
                 "task_kind": "foreign_key", "metric": "mrr",
                 "negatives_per_positive": 2,
                 "split_rule": {"kind": "temporal",
                                "train_end": "2024-06-03T12:00:00",
                                "val_end": "2024-06-05T12:00:00"}},
                [-1, -1, -1], os.path.join(FIXTURES, "gadget", "rank"), 4)
    print("done")


if __name__ == "__main__":
    sys.exit(main())
