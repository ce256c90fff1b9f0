"""
The whole pipeline through the command line
============================================

The five subcommands chain through directories: transform rewrites a
dataset, construct-graph and dfs read a dataset and write artifacts, sample
writes minibatch files per split, and evaluate scores a predictions file
against the task's held-out labels. This script drives them exactly as a
shell would, just calling main() with argv lists instead of forking.
"""

import json
import os
import tempfile

import numpy as np
import yaml

from rdbflow.cli import main
from rdbflow.database import load_database, serialize_database
from rdbflow.tasks import build_splits, materialize_labels, task_spec_from_dict

from demo_data import DAY, JAN_1, build_shop

work = tempfile.mkdtemp(prefix="pipeline_")
dataset = os.path.join(work, "shop")
serialize_database(build_shop(), dataset)

TASK = {
    "target_table": "order", "target_column": "total",
    "task_kind": "entity_attribute", "metric": "rmse",
    "split_rule": {"kind": "temporal",
                   "train_end": JAN_1 + 120 * DAY,
                   "val_end": JAN_1 + 150 * DAY},
}


def config(name, payload):
    path = os.path.join(work, name)
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(payload, fh)
    return path


def run(argv):
    print("$ rdbflow", " ".join(argv))
    rc = main(argv)
    assert rc == 0, f"exit code {rc}"


# 1. transform: impute missing ages, writing a new dataset directory
cleaned = os.path.join(work, "cleaned")
run(["transform",
     "--config", config("transform.yaml", {
         "dataset": dataset,
         "steps": [{"kind": "impute", "target": "customer.age",
                    "params": {"strategy": "mean"}}]}),
     "--out", cleaned])

# 2. construct-graph: extract the typed graph and write its manifest
graph_dir = os.path.join(work, "graph")
run(["construct-graph",
     "--config", config("graph.yaml", {"dataset": cleaned,
                                       "extractor": "row2node"}),
     "--out", graph_dir])
with open(os.path.join(graph_dir, "manifest.json"), encoding="utf-8") as fh:
    m = json.load(fh)
print(f"   -> {len(m['node_types'])} node types, "
      f"{len(m['edge_types'])} edge types\n")

# 3. dfs: synthesize depth-1 aggregates onto customers, plus the SQL
features_dir = os.path.join(work, "features")
run(["dfs",
     "--config", config("dfs.yaml", {"dataset": cleaned,
                                     "target_table": "customer",
                                     "depth": 1,
                                     "emit_sql": "features.sql"}),
     "--out", features_dir])
wide = load_database(features_dir).table("customer")
print("   ->", [c.name for c in wide.schema.columns], "\n")

# 4. sample: minibatch files per split, two hops, fanout 4
batches_dir = os.path.join(work, "batches")
run(["sample",
     "--config", config("sample.yaml", {"dataset": cleaned, "task": TASK,
                                        "fanouts": [4, 4],
                                        "batch_size": 32}),
     "--seed", "0",
     "--out", batches_dir])
for split in ("train", "val", "test"):
    with open(os.path.join(batches_dir, split, "manifest.json"),
              encoding="utf-8") as fh:
        sm = json.load(fh)
    print(f"   -> {split}: {sm['num_seeds']} seeds "
          f"in {len(sm['files'])} batch files")
print()

# 5. evaluate: score a predictions file. Any model could have written it;
# here the library materializes the same splits and predicts the train mean.
db = load_database(cleaned)
spec = task_spec_from_dict(TASK)
seeds = materialize_labels(db, spec, build_splits(db, spec))
mean = float(np.mean([s.label for s in seeds["train"]]))
preds = os.path.join(work, "preds.jsonl")
with open(preds, "w", encoding="utf-8") as fh:
    for s in seeds["test"]:
        fh.write(json.dumps({"seed_id": s.seed_id, "score": mean}) + "\n")

run(["evaluate",
     "--config", config("eval.yaml", {"dataset": cleaned, "task": TASK,
                                      "split": "test"}),
     "--predictions", preds,
     "--out", os.path.join(work, "report")])

print(f"\nartifacts under {work}")
