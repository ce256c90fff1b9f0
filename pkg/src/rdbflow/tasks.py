"""Task specifications, timestamp splits, and label materialization.

A task names a target table and column, how to split instances, and the
metric. Instances are (row index, cutoff) pairs; under a temporal rule the
cutoff is the row's own timestamp (plus an optional offset) and the split
boundaries partition instances by cutoff, so no training instance can see
past the validation boundary. Explicit index lists pass through verbatim
for the transductive setting.

``materialize_labels`` turns a split set into sampler seeds carrying label
values and a label_ref for downstream masking. Foreign-key tasks carry the
referenced row index as the label plus sampled negative candidates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from .columns import (
    CATEGORICAL,
    DATETIME,
    FLOAT,
    FOREIGN_KEY,
    INT,
    NULL_TS,
    ConfigError,
    DataError,
    parse_timestamp,
)
from .database import Database, fk_row_map
from .sampler import Seed

TASK_KINDS = ("entity_attribute", "relationship_attribute", "foreign_key")
LEARNING_KINDS = ("inductive", "transductive")
METRICS = ("auc", "accuracy", "rmse", "mrr")

_UNBOUNDED = np.iinfo(np.int64).max


@dataclass(frozen=True)
class SplitRule:
    """Either timestamp boundaries or explicit per-split index lists.

    Temporal: train gets cutoffs <= train_end, validation the window
    (train_end, val_end], test everything later. ``cutoff_offset`` is added
    to each row timestamp to form the instance cutoff (milliseconds), for
    tasks whose prediction time trails the row's event time.
    """

    kind: str
    train_end: Optional[int] = None
    val_end: Optional[int] = None
    cutoff_offset: int = 0
    train: tuple[int, ...] = ()
    val: tuple[int, ...] = ()
    test: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in ("temporal", "explicit"):
            raise ConfigError(f"unknown split rule kind {self.kind!r}")
        if self.kind == "temporal":
            if self.train_end is None or self.val_end is None:
                raise ConfigError("temporal split rule needs train_end and val_end")
            if self.train_end > self.val_end:
                raise ConfigError(
                    f"train_end {self.train_end} exceeds val_end {self.val_end}")


@dataclass(frozen=True)
class TaskSpec:
    target_table: str
    target_column: str
    task_kind: str
    metric: str
    split_rule: SplitRule
    learning_kind: str = "inductive"
    negatives_per_positive: Optional[int] = None

    def __post_init__(self) -> None:
        if self.task_kind not in TASK_KINDS:
            raise ConfigError(f"unknown task kind {self.task_kind!r}")
        if self.learning_kind not in LEARNING_KINDS:
            raise ConfigError(f"unknown learning kind {self.learning_kind!r}")
        if self.metric not in METRICS:
            raise ConfigError(f"unknown metric {self.metric!r}")
        if (self.metric == "mrr") != (self.task_kind == "foreign_key"):
            raise ConfigError("mrr and foreign_key tasks imply each other")
        if (self.negatives_per_positive is not None) != (self.task_kind == "foreign_key"):
            raise ConfigError(
                "negatives_per_positive is set exactly for foreign_key tasks")
        if self.negatives_per_positive is not None and self.negatives_per_positive < 1:
            raise ConfigError("negatives_per_positive must be positive")


@dataclass(frozen=True)
class SplitSet:
    """Instance lists per split, each entry a (row index, cutoff) pair."""

    train: tuple[tuple[int, int], ...]
    val: tuple[tuple[int, int], ...]
    test: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        seen: set[int] = set()
        for part in (self.train, self.val, self.test):
            for i, _ in part:
                if i in seen:
                    raise DataError(f"row {i} appears in more than one split")
                seen.add(i)

    @property
    def splits(self) -> dict[str, tuple[tuple[int, int], ...]]:
        return {"train": self.train, "val": self.val, "test": self.test}


def _boundary(value: Any) -> int:
    if isinstance(value, bool):
        raise ConfigError(f"bad timestamp boundary {value!r}")
    return parse_timestamp(value)


def split_rule_from_dict(d: dict) -> SplitRule:
    known = {"kind", "train_end", "val_end", "cutoff_offset", "train", "val", "test"}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown split rule keys {sorted(unknown)}")
    kind = d.get("kind")
    if kind == "temporal":
        return SplitRule(
            kind="temporal",
            train_end=_boundary(d["train_end"]) if "train_end" in d else None,
            val_end=_boundary(d["val_end"]) if "val_end" in d else None,
            cutoff_offset=int(d.get("cutoff_offset", 0)),
        )
    if kind == "explicit":
        return SplitRule(
            kind="explicit",
            train=tuple(int(i) for i in d.get("train", ())),
            val=tuple(int(i) for i in d.get("val", ())),
            test=tuple(int(i) for i in d.get("test", ())),
        )
    raise ConfigError(f"unknown split rule kind {kind!r}")


def task_spec_from_dict(d: dict) -> TaskSpec:
    known = {"target_table", "target_column", "task_kind", "learning_kind",
             "metric", "negatives_per_positive", "split_rule"}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown task keys {sorted(unknown)}")
    for key in ("target_table", "target_column", "task_kind", "metric", "split_rule"):
        if key not in d:
            raise ConfigError(f"task config missing {key!r}")
    return TaskSpec(
        target_table=d["target_table"],
        target_column=d["target_column"],
        task_kind=d["task_kind"],
        metric=d["metric"],
        learning_kind=d.get("learning_kind", "inductive"),
        negatives_per_positive=d.get("negatives_per_positive"),
        split_rule=split_rule_from_dict(d["split_rule"]),
    )


def build_splits(db: Database, spec: TaskSpec) -> SplitSet:
    """Assign labeled instances to train/val/test.

    Rows whose target value is null are not instances. Under a temporal
    rule every instance needs a row timestamp; its cutoff is that timestamp
    plus the configured offset, and the boundaries partition by cutoff.
    """
    table = db.table(spec.target_table)
    label_col = table.columns.get(spec.target_column)
    if label_col is None:
        raise DataError(f"no column {spec.target_column!r} on {spec.target_table!r}")
    labeled = ~label_col.null_mask()
    rule = spec.split_rule
    if rule.kind == "explicit":
        ts = table.timestamps()

        def pair(i: int) -> tuple[int, int]:
            if i < 0 or i >= table.row_count:
                raise DataError(f"split index {i} outside {spec.target_table!r}")
            if not labeled[i]:
                raise DataError(f"row {i} has a null target value")
            if ts is None or ts[i] == NULL_TS:
                return (i, _UNBOUNDED)
            return (i, int(ts[i]) + rule.cutoff_offset)

        return SplitSet(tuple(pair(i) for i in rule.train),
                        tuple(pair(i) for i in rule.val),
                        tuple(pair(i) for i in rule.test))

    ts = table.timestamps()
    if ts is None:
        raise DataError(
            f"temporal split rule needs a time column on {spec.target_table!r}")
    rows = np.flatnonzero(labeled)
    if np.any(ts[rows] == NULL_TS):
        missing = int(rows[ts[rows] == NULL_TS][0])
        raise DataError(f"row {missing} has no timestamp under a temporal split rule")
    cutoffs = ts[rows].astype(np.int64) + rule.cutoff_offset
    assert rule.train_end is not None and rule.val_end is not None
    train = [(int(i), int(c)) for i, c in zip(rows, cutoffs) if c <= rule.train_end]
    val = [(int(i), int(c)) for i, c in zip(rows, cutoffs)
           if rule.train_end < c <= rule.val_end]
    test = [(int(i), int(c)) for i, c in zip(rows, cutoffs) if c > rule.val_end]
    return SplitSet(tuple(train), tuple(val), tuple(test))


def _label_value(db: Database, table: str, column: str, row: int) -> Any:
    col = db.table(table).columns[column]
    if col.null_mask()[row]:
        return None
    if col.dtype == FLOAT:
        return float(col.values[row])
    if col.dtype in (INT, DATETIME):
        return int(col.values[row])
    if col.dtype == CATEGORICAL:
        return (col.dictionary or [])[int(col.values[row])]
    return col.values[row]


def _draw_negatives(n_candidates: int, eligible: Optional[np.ndarray],
                    positive: int, count: int, rng_seed: int,
                    position: int) -> tuple[int, ...]:
    pool = np.arange(n_candidates, dtype=np.int64)
    if eligible is not None:
        pool = pool[eligible]
    pool = pool[pool != positive]
    if len(pool) < count:
        raise DataError(
            f"cannot draw {count} negatives from {len(pool)} candidates")
    rng = np.random.default_rng(np.random.SeedSequence(rng_seed, spawn_key=(position,)))
    drawn = rng.choice(pool, size=count, replace=False)
    return tuple(int(v) for v in np.sort(drawn))


def materialize_labels(db: Database, spec: TaskSpec, splits: SplitSet,
                       rng_seed: int = 0) -> dict[str, list[Seed]]:
    """Turn split instances into sampler seeds with labels attached.

    Attribute tasks carry the target cell's value; foreign-key tasks carry
    the referenced row index plus ``negatives_per_positive`` sampled
    negative rows of the referenced table, never colliding with the
    positive, filtered to rows visible at the seed's cutoff when the
    referenced table is temporal. Negative draws are deterministic in
    (rng_seed, split, position).
    """
    table = db.table(spec.target_table)
    out: dict[str, list[Seed]] = {}
    if spec.task_kind == "foreign_key":
        cspec = table.schema.column(spec.target_column)
        if cspec.dtype != FOREIGN_KEY:
            raise DataError(f"{spec.target_column!r} is not a foreign key column")
        assert cspec.fk_target is not None
        ref_table, _ = cspec.fk_target
        targets = fk_row_map(db, spec.target_table, spec.target_column)
        ref_ts = db.table(ref_table).timestamps()
        n_ref = db.table(ref_table).row_count
        assert spec.negatives_per_positive is not None
        for split_index, (split, pairs) in enumerate(splits.splits.items()):
            seeds = []
            for pos_index, (i, cutoff) in enumerate(pairs):
                target_row = int(targets[i])
                if target_row < 0:
                    raise DataError(
                        f"row {i} has no resolvable {spec.target_column!r} target")
                eligible = None
                if ref_ts is not None and cutoff != _UNBOUNDED:
                    eligible = (ref_ts == NULL_TS) | (ref_ts <= cutoff)
                negatives = _draw_negatives(
                    n_ref, eligible, target_row, spec.negatives_per_positive,
                    rng_seed, split_index * 1_000_003 + pos_index)
                seeds.append(Seed(
                    node_type=spec.target_table, node_index=i, cutoff=cutoff,
                    seed_id=f"{spec.target_table}:{i}", label=target_row,
                    label_ref=spec.target_column, negatives=negatives))
            out[split] = seeds
        return out

    for split, pairs in splits.splits.items():
        seeds = []
        for i, cutoff in pairs:
            value = _label_value(db, spec.target_table, spec.target_column, i)
            if value is None:
                raise DataError(f"row {i} has a null target value")
            seeds.append(Seed(
                node_type=spec.target_table, node_index=i, cutoff=cutoff,
                seed_id=f"{spec.target_table}:{i}", label=value,
                label_ref=spec.target_column))
        out[split] = seeds
    return out
