"""
Declaring tasks, splitting by time, and scoring predictions
============================================================

A task names a target table and column, how to split rows into train,
validation, and test, and which metric judges the result. Splitting is
temporal: a row lands in a split by its timestamp, and its cutoff (the
moment predictions for it must be frozen) rides along on every seed so
the sampler and feature synthesis can honor it.
"""

import numpy as np

from rdbflow.metrics import accuracy, auc, mrr, rmse
from rdbflow.tasks import (
    build_splits,
    materialize_labels,
    split_rule_from_dict,
    task_spec_from_dict,
)

from demo_data import DAY, JAN_1, build_shop

db = build_shop()

# --- a regression task on order totals ---------------------------------------

task = task_spec_from_dict({
    "target_table": "order", "target_column": "total",
    "task_kind": "entity_attribute", "metric": "rmse",
    "split_rule": {"kind": "temporal",
                   "train_end": JAN_1 + 120 * DAY,
                   "val_end": JAN_1 + 150 * DAY},
})
splits = build_splits(db, task)
for name in ("train", "val", "test"):
    rows = getattr(splits, name)
    print(f"{name}: {len(rows)} orders")

# every row's cutoff is its own timestamp here; an offset in the rule would
# shift prediction time relative to the row
seeds = materialize_labels(db, task, splits)
probe = seeds["test"][0]
print(f"first test seed: {probe.seed_id}, label {probe.label}, "
      f"cutoff day {(probe.cutoff - JAN_1) // DAY}")

# score the simplest possible model: predict the train-split mean
train_labels = np.array([s.label for s in seeds["train"]])
test_labels = np.array([s.label for s in seeds["test"]])
constant = np.full(len(test_labels), train_labels.mean())
print(f"predict-the-mean rmse on test: "
      f"{rmse(constant.tolist(), test_labels.tolist()):.2f} "
      f"(test std {test_labels.std():.2f})")

# --- a link task with sampled negatives ---------------------------------------

# foreign_key tasks ask which parent row a child points at. Materializing
# them draws ranking candidates: the true target plus negatives sampled
# from rows visible at the seed's cutoff.
link = task_spec_from_dict({
    "target_table": "item", "target_column": "product_id",
    "task_kind": "foreign_key", "metric": "mrr",
    "negatives_per_positive": 5,
    "split_rule": {"kind": "temporal",
                   "train_end": JAN_1 + 120 * DAY,
                   "val_end": JAN_1 + 150 * DAY},
})
link_seeds = materialize_labels(db, link, build_splits(db, link), rng_seed=0)
probe = link_seeds["test"][0]
print(f"\nlink seed {probe.seed_id}: true product row {probe.label}, "
      f"negative rows {list(probe.negatives)}")

# each query scores the positive and its negatives; mrr averages the
# reciprocal rank of the positive. Rank it first everywhere and mrr is 1;
# always second gives 1/2.
queries = []
for s in link_seeds["test"]:
    queries.append([(1.0, 1)] + [(0.0, 0)] * len(s.negatives))
print("perfect ranking mrr:", mrr(queries))
one_off = [[(0.5, 1), (0.9, 0)] + [(0.0, 0)] * (len(q) - 2) for q in queries]
print("always second  mrr:", mrr(one_off))

# --- the metrics by themselves -------------------------------------------------

# auc is the probability a positive outscores a negative, ties at half;
# predictions come first in every metric signature
scores = [0.9, 0.8, 0.7, 0.1]
labels = [1, 0, 1, 0]
print(f"\nauc(scores={scores}, labels={labels}) = {auc(scores, labels)}")
print("accuracy with 0.5 threshold =",
      accuracy([1 if s >= 0.5 else 0 for s in scores], labels))
print("rmse([3, 4] vs [0, 0]) =", rmse([3.0, 4.0], [0.0, 0.0]))
