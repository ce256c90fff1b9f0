"""Relational databases to ML-ready artifacts.

The pipeline has four stages, each usable on its own: load and validate a
multi-table dataset (:mod:`rdbflow.database`), optionally rewrite columns
(:mod:`rdbflow.transform`), then either extract a heterogeneous temporal
graph and sample leakage-free subgraph batches (:mod:`rdbflow.graph`,
:mod:`rdbflow.sampler`) or flatten the schema into per-instance features
with cutoff-time-correct deep feature synthesis (:mod:`rdbflow.dfs`).
Task definitions, temporal splits, and metrics live in
:mod:`rdbflow.tasks` and :mod:`rdbflow.metrics`.
"""

from .columns import (
    CATEGORICAL,
    DATETIME,
    DTYPES,
    FLOAT,
    FOREIGN_KEY,
    INT,
    NULL_TS,
    PRIMARY_KEY,
    TEXT,
    VECTOR,
    ColumnData,
    ColumnSpec,
    ConfigError,
    DataError,
    SchemaError,
    TableSchema,
    parse_timestamp,
)
from .database import (
    Database,
    Table,
    Violation,
    column_statistics,
    load_database,
    serialize_database,
    validate_database,
)
from .dfs import (
    AGGREGATORS,
    BruteForceDFS,
    CutoffRef,
    DFSPlan,
    FeatureSpec,
    Hop,
    brute_force_dfs,
    compile_plan,
    emit_sql,
    enumerate_features,
    execute_plan,
)
from .graph import (
    HeteroGraph,
    encode_graph_as_table,
    export_graph,
    graphs_equal,
    load_graph,
    normalize_2nf,
    row2node,
    row2nve,
    split_by_type_keys,
    star_expand,
)
from .metrics import accuracy, auc, mrr, rmse
from .sampler import (
    FULL_FANOUT,
    FanoutPlan,
    Seed,
    SubgraphBatch,
    audit_export,
    exclude_target,
    export_batches,
    iter_batches,
    read_batch_file,
    sample_negatives,
    temporal_sample,
    write_batch_file,
)
from .tasks import SplitRule, SplitSet, TaskSpec, build_splits, materialize_labels
from .transform import TransformConfig, TransformStep, apply_transforms, hash_text

__version__ = "0.1.0"

__all__ = [
    "AGGREGATORS", "CATEGORICAL", "ColumnData", "ColumnSpec", "ConfigError",
    "CutoffRef", "DATETIME", "DFSPlan", "DTYPES", "DataError", "Database",
    "FLOAT", "FOREIGN_KEY", "FULL_FANOUT", "FanoutPlan", "FeatureSpec",
    "HeteroGraph", "Hop", "INT", "NULL_TS", "PRIMARY_KEY", "SchemaError",
    "Seed", "SplitRule", "SplitSet", "SubgraphBatch", "TEXT", "Table",
    "TableSchema", "TaskSpec", "TransformConfig", "TransformStep", "VECTOR",
    "Violation", "accuracy", "apply_transforms", "auc", "audit_export",
    "brute_force_dfs", "BruteForceDFS", "build_splits", "column_statistics",
    "compile_plan", "emit_sql", "encode_graph_as_table", "enumerate_features",
    "exclude_target", "execute_plan", "export_batches", "export_graph",
    "graphs_equal", "hash_text", "iter_batches", "load_database", "load_graph",
    "materialize_labels", "mrr", "normalize_2nf", "parse_timestamp",
    "read_batch_file", "rmse", "row2node", "row2nve", "sample_negatives",
    "serialize_database", "split_by_type_keys", "star_expand",
    "temporal_sample", "validate_database", "write_batch_file",
]
