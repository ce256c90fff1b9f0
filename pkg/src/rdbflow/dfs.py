"""Cutoff-correct deep feature synthesis over relational schemas.

A feature is a path of hops away from a target table plus an aggregator for
every reverse hop. Forward hops follow a foreign key to its referenced row
(many to one, no aggregation needed); reverse hops fan out to the rows that
reference the current one (one to many) and need an aggregator each,
applied innermost first, so ``MEAN(review.MAX(token.len))`` takes the max
per review and then the mean per target row.

Correctness under time travel is the whole point: every instance carries a
cutoff timestamp, and any row of a temporal table whose event time exceeds
that instance's cutoff is invisible along the path, whether reached forward
or reverse. Execution evaluates per-instance cutoffs with a sort-merge over
(group key, timestamp): rows of each hop are pre-sorted so the eligible set
of any (instance, cutoff) pair is a contiguous prefix of its key group,
found by a vectorized merge instead of per-row filtering.

``brute_force_dfs`` is the reference oracle: per-row recursive traversal
with plain python values, no joins, no vectorized machinery shared with the
planner. The two implementations are kept deliberately independent so they
can check each other.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Optional, Sequence

import numpy as np

from .columns import (
    CATEGORICAL,
    DATETIME,
    FLOAT,
    FOREIGN_KEY,
    INT,
    KEY_DTYPES,
    NULL_TS,
    TEXT,
    VECTOR,
    ColumnData,
    ColumnSpec,
    ConfigError,
    DataError,
    TableSchema,
)
from .database import Database, Table, fk_row_map

logger = logging.getLogger(__name__)

MEAN = "MEAN"
MIN = "MIN"
MAX = "MAX"
MODE = "MODE"
COUNT = "COUNT"
AGGREGATORS = (MEAN, MIN, MAX, MODE, COUNT)

_NUMERIC_AGGS = (MEAN, MIN, MAX)

#: Cutoff value meaning "no restriction".
UNBOUNDED = np.iinfo(np.int64).max


@dataclass(frozen=True)
class Hop:
    """One step of a feature path.

    ``table`` is the table arrived at. For a forward hop ``fk_column`` lives
    on the previous table and references ``table``'s primary key; for a
    reverse hop it lives on ``table`` and references the previous table.
    ``qualified`` makes the hop render as ``table[fk_column]`` in feature
    names; enumeration sets it when two tables are related through more
    than one foreign key and the bare table name would be ambiguous.
    """

    direction: str
    table: str
    fk_column: str
    qualified: bool = False

    def __post_init__(self) -> None:
        if self.direction not in ("forward", "reverse"):
            raise ConfigError(f"bad hop direction {self.direction!r}")

    @property
    def label(self) -> str:
        return f"{self.table}[{self.fk_column}]" if self.qualified else self.table


@dataclass(frozen=True)
class FeatureSpec:
    """One synthesized column: a path, a base column, an aggregator chain.

    ``aggregators`` holds one entry per reverse hop, in path order, so the
    first entry belongs to the outermost aggregation. A trailing COUNT
    aggregator counts the rows of its hop and ignores ``base_column``.
    """

    target_table: str
    hops: tuple[Hop, ...]
    base_column: tuple[str, str]
    aggregators: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        n_rev = sum(1 for h in self.hops if h.direction == "reverse")
        if len(self.aggregators) != n_rev:
            raise ConfigError(
                f"{len(self.aggregators)} aggregators for {n_rev} reverse hops")
        for a in self.aggregators:
            if a not in AGGREGATORS:
                raise ConfigError(f"unknown aggregator {a!r}")
        if COUNT in self.aggregators:
            if self.aggregators[-1] != COUNT:
                raise ConfigError("COUNT only composes as the innermost aggregator")
            if not self.hops or self.hops[-1].direction != "reverse":
                raise ConfigError("COUNT counts the rows of a trailing reverse hop")

    @property
    def depth(self) -> int:
        return len(self.hops)

    @property
    def output_name(self) -> str:
        def walk(hops: tuple[Hop, ...], aggs: tuple[str, ...]) -> str:
            if not hops:
                return self.base_column[1]
            hop = hops[0]
            if hop.direction == "forward":
                return f"{hop.label}.{walk(hops[1:], aggs)}"
            if aggs[0] == COUNT and len(hops) == 1:
                return f"COUNT({hop.label})"
            return f"{aggs[0]}({hop.label}.{walk(hops[1:], aggs[1:])})"

        return walk(self.hops, self.aggregators)


@dataclass(frozen=True)
class CutoffRef:
    """Datetime column on the target table holding per-instance cutoffs."""

    column: str


@dataclass(frozen=True)
class PlanStage:
    """All specs sharing one hop path, with the temporal predicates it needs.

    ``cutoff_predicates`` lists one entry per temporal table on the path;
    executing the stage applies ``row.time_column <= instance cutoff`` for
    each. Non-temporal hops contribute no predicate.
    """

    path: tuple[Hop, ...]
    outputs: tuple[FeatureSpec, ...]
    cutoff_predicates: tuple[tuple[str, str], ...]  # (table, time column)


@dataclass(frozen=True)
class DFSPlan:
    target_table: str
    cutoff: Optional[CutoffRef]
    stages: tuple[PlanStage, ...]

    @property
    def specs(self) -> tuple[FeatureSpec, ...]:
        return tuple(s for stage in self.stages for s in stage.outputs)


def _reverse_candidates(db: Database, table: str) -> list[tuple[str, str]]:
    """Tables and FK columns referencing ``table``'s primary key."""
    pk = db.table(table).schema.primary_key
    if pk is None:
        return []
    out = []
    for other in sorted(db.tables):
        for spec in db.tables[other].schema.columns:
            if spec.dtype == FOREIGN_KEY and spec.fk_target == (table, pk):
                out.append((other, spec.name))
    return out


def _is_backtrack(prev: Optional[Hop], prev_table: str, hop: Hop) -> bool:
    """True when ``hop`` undoes ``prev`` through the same foreign key."""
    if prev is None:
        return False
    if prev.fk_column != hop.fk_column:
        return False
    if prev.direction == "forward" and hop.direction == "reverse":
        return hop.table == prev_table
    if prev.direction == "reverse" and hop.direction == "forward":
        return hop.table == prev_table
    return False


def _agg_chains(n: int, base_dtype: str, allowed: tuple[str, ...]) -> list[tuple[str, ...]]:
    """Aggregator chains for ``n`` reverse hops over a base dtype.

    Chains are built innermost out: the innermost aggregator must accept the
    base dtype and each outer one must accept its inner neighbor's result.
    Returned in path order (outermost first).
    """
    if base_dtype in (FLOAT, INT, VECTOR):
        inner_ok = [a for a in _NUMERIC_AGGS if a in allowed]
    elif base_dtype == CATEGORICAL:
        inner_ok = [MODE] if MODE in allowed else []
    else:
        inner_ok = []
    if n == 0 or not inner_ok:
        return []
    chains: list[tuple[str, ...]] = [(a,) for a in inner_ok]
    for _ in range(n - 1):
        grown = []
        for chain in chains:
            result_dtype = CATEGORICAL if chain[0] == MODE else FLOAT
            if result_dtype == CATEGORICAL:
                outer_ok = [MODE] if MODE in allowed else []
            else:
                outer_ok = [a for a in _NUMERIC_AGGS if a in allowed]
            for a in outer_ok:
                grown.append((a,) + chain)
        chains = grown
    return chains


#: Enumeration refuses deeper requests unless the caller raises the cap too.
DEFAULT_MAX_DEPTH = 4


def enumerate_features(db: Database, target_table: str, depth: int,
                       aggregators: Optional[Sequence[str]] = None,
                       max_features: Optional[int] = None,
                       max_depth: int = DEFAULT_MAX_DEPTH) -> list[FeatureSpec]:
    """Enumerate every feature spec up to ``depth`` hops, deterministically.

    Depth 0 yields the target's own non-key columns. Each deeper level adds
    one hop; paths that immediately backtrack through the foreign key they
    arrived by are pruned. The spec list at depth d is a prefix of the list
    at depth d+1, which keeps feature sets comparable across depths.
    """
    if depth < 0:
        raise ConfigError(f"depth {depth} is negative")
    if depth > max_depth:
        raise ConfigError(f"depth {depth} exceeds the configured max {max_depth}")
    db.table(target_table)
    allowed = tuple(aggregators) if aggregators is not None else AGGREGATORS
    for a in allowed:
        if a not in AGGREGATORS:
            raise ConfigError(f"unknown aggregator {a!r}")
    specs: list[FeatureSpec] = []
    # paths of the current level, each as (hops, last_hop, table_before_last)
    level: list[tuple[tuple[Hop, ...], Optional[Hop], str]] = [((), None, target_table)]

    def emit_for_path(hops: tuple[Hop, ...]) -> None:
        end_table = hops[-1].table if hops else target_table
        n_rev = sum(1 for h in hops if h.direction == "reverse")
        table = db.table(end_table)
        for cspec in table.schema.columns:
            if cspec.dtype in KEY_DTYPES:
                continue
            if n_rev == 0:
                specs.append(FeatureSpec(target_table, hops, (end_table, cspec.name)))
                continue
            for chain in _agg_chains(n_rev, cspec.dtype, allowed):
                specs.append(FeatureSpec(target_table, hops,
                                         (end_table, cspec.name), chain))
        if n_rev and hops[-1].direction == "reverse" and COUNT in allowed:
            outer = _agg_chains(n_rev - 1, INT, allowed) if n_rev > 1 else [()]
            for chain in outer:
                specs.append(FeatureSpec(
                    target_table, hops, (end_table, hops[-1].fk_column),
                    chain + (COUNT,)))

    emit_for_path(())
    for _ in range(depth):
        nxt: list[tuple[tuple[Hop, ...], Optional[Hop], str]] = []
        for hops, last, current in level:
            prev_table = hops[-2].table if len(hops) >= 2 else target_table
            schema = db.table(current).schema
            # Two FKs between the same pair of tables give two distinct
            # paths; qualify those hops so their feature names stay apart.
            fwd_targets = [c.fk_target[0] for c in schema.foreign_keys]  # type: ignore[index]
            rev_cands = _reverse_candidates(db, current)
            rev_children = [child for child, _ in rev_cands]
            for cspec in schema.foreign_keys:
                dest = cspec.fk_target[0]  # type: ignore[index]
                hop = Hop("forward", dest, cspec.name,
                          qualified=fwd_targets.count(dest) > 1)
                if _is_backtrack(last, prev_table, hop):
                    continue
                nxt.append((hops + (hop,), hop, hop.table))
            for child, fk_col in rev_cands:
                hop = Hop("reverse", child, fk_col,
                          qualified=rev_children.count(child) > 1)
                if _is_backtrack(last, prev_table, hop):
                    continue
                nxt.append((hops + (hop,), hop, child))
        for hops, _, _ in nxt:
            emit_for_path(hops)
        level = nxt
        if not level:
            break
    if max_features is not None and len(specs) > max_features:
        logger.warning("feature enumeration truncated from %d to %d specs",
                       len(specs), max_features)
        specs = specs[:max_features]
    return specs


def compile_plan(db: Database, target_table: str, specs: Sequence[FeatureSpec],
                 cutoff: Optional[CutoffRef] = None) -> DFSPlan:
    """Group specs into stages by shared hop path and attach time predicates.

    Specs sharing a path execute as one stage with one join pipeline and
    many aggregation outputs. Executing a plan never mutates input tables.
    """
    target = db.table(target_table)
    if cutoff is not None:
        cspec = target.schema.column(cutoff.column)
        if cspec.dtype != DATETIME:
            raise ConfigError(f"cutoff column {cutoff.column!r} must be datetime")
    by_path: dict[tuple[Hop, ...], list[FeatureSpec]] = {}
    for spec in specs:
        if spec.target_table != target_table:
            raise ConfigError(
                f"spec targets {spec.target_table!r}, plan targets {target_table!r}")
        by_path.setdefault(spec.hops, []).append(spec)
    stages = []
    for path, outs in by_path.items():
        predicates = []
        for hop in path:
            tc = db.table(hop.table).schema.time_column
            if tc is not None:
                predicates.append((hop.table, tc))
        stages.append(PlanStage(path, tuple(outs), tuple(predicates)))
    return DFSPlan(target_table, cutoff, tuple(stages))


# ---------------------------------------------------------------------------
# vectorized execution


@dataclass
class _Vals:
    """Typed value array for path elements, with an explicit null mask."""

    kind: str
    data: np.ndarray
    null: np.ndarray
    dictionary: Optional[list[str]] = None
    dim: Optional[int] = None


@dataclass
class _Level:
    """Rows visible at one path prefix, one entry per expansion element."""

    rows: np.ndarray      # row index into the prefix's table, -1 for null
    cutoffs: np.ndarray   # inherited instance cutoff per element
    offsets: Optional[np.ndarray]  # segment bounds into this level, per parent


class _Engine:
    """Shared expansion state for one plan execution."""

    def __init__(self, db: Database, plan: DFSPlan) -> None:
        self.db = db
        self.plan = plan
        self.target = db.table(plan.target_table)
        n = self.target.row_count
        if plan.cutoff is None:
            cutoffs = np.full(n, UNBOUNDED, dtype=np.int64)
        else:
            vals = self.target.columns[plan.cutoff.column].values
            cutoffs = np.where(vals == NULL_TS, UNBOUNDED, vals)
        self.root = _Level(np.arange(n, dtype=np.int64), cutoffs, None)
        self._fk_maps: dict[tuple[str, str], np.ndarray] = {}
        self._sorted: dict[tuple[str, str], tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        self._levels: dict[tuple[Hop, ...], _Level] = {(): self.root}

    def fk_map(self, table: str, fk_column: str) -> np.ndarray:
        key = (table, fk_column)
        if key not in self._fk_maps:
            self._fk_maps[key] = fk_row_map(self.db, table, fk_column)
        return self._fk_maps[key]

    def _table_ts(self, table: str) -> Optional[np.ndarray]:
        return self.db.table(table).timestamps()

    def sorted_children(self, child: str, fk_column: str
                        ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Child rows sorted by (parent row, event time, row), nulls dropped."""
        key = (child, fk_column)
        if key not in self._sorted:
            parents = self.fk_map(child, fk_column)
            keep = np.flatnonzero(parents >= 0).astype(np.int64)
            ts = self._table_ts(child)
            eff = np.full(len(keep), NULL_TS, dtype=np.int64) if ts is None else ts[keep]
            order = np.lexsort((keep, eff, parents[keep]))
            self._sorted[key] = (parents[keep][order], eff[order], keep[order])
        return self._sorted[key]

    def level(self, prefix: tuple[Hop, ...]) -> _Level:
        if prefix in self._levels:
            return self._levels[prefix]
        parent = self.level(prefix[:-1])
        hop = prefix[-1]
        if hop.direction == "forward":
            prev_table = prefix[-2].table if len(prefix) >= 2 else self.plan.target_table
            mapping = self.fk_map(prev_table, hop.fk_column)
            rows = np.where(parent.rows >= 0, mapping[np.clip(parent.rows, 0, None)], -1)
            ts = self._table_ts(hop.table)
            if ts is not None:
                visible = rows >= 0
                late = np.zeros(len(rows), dtype=bool)
                late[visible] = ts[rows[visible]] > parent.cutoffs[visible]
                rows = np.where(late, -1, rows)
            lvl = _Level(rows, parent.cutoffs, None)
        else:
            keys, ts, child_rows = self.sorted_children(hop.table, hop.fk_column)
            lvl = self._expand(keys, ts, child_rows, parent)
        self._levels[prefix] = lvl
        return lvl

    @staticmethod
    def _expand(keys: np.ndarray, ts: np.ndarray, child_rows: np.ndarray,
                parent: _Level) -> _Level:
        """Sort-merge expansion: eligible children per (parent row, cutoff)."""
        q = len(parent.rows)
        nk = len(keys)
        parent_keys = parent.rows
        lo = np.searchsorted(keys, np.clip(parent_keys, 0, None), side="left")
        merged_keys = np.concatenate([keys, np.clip(parent_keys, 0, None)])
        merged_ts = np.concatenate([ts, parent.cutoffs])
        is_query = np.concatenate([np.zeros(nk, dtype=np.int8), np.ones(q, dtype=np.int8)])
        order = np.lexsort((is_query, merged_ts, merged_keys))
        data_counts = np.cumsum(is_query[order] == 0)
        position = np.empty(nk + q, dtype=np.int64)
        position[order] = np.arange(nk + q)
        hi = data_counts[position[nk:]]
        counts = np.maximum(hi - lo, 0)
        counts[parent_keys < 0] = 0
        offsets = np.zeros(q + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        total = int(offsets[-1])
        flat = np.repeat(lo, counts) + (np.arange(total, dtype=np.int64)
                                        - np.repeat(offsets[:-1], counts))
        rows = child_rows[flat]
        cutoffs = np.repeat(parent.cutoffs, counts)
        return _Level(rows, cutoffs, offsets)


def _gather(col: ColumnData, spec: ColumnSpec, rows: np.ndarray) -> _Vals:
    taken = col.take(rows)
    null = taken.null_mask()
    if spec.dtype == FLOAT:
        return _Vals(FLOAT, taken.values, null)
    if spec.dtype == INT:
        return _Vals(INT, taken.values, null)
    if spec.dtype == CATEGORICAL:
        return _Vals(CATEGORICAL, taken.values, null, dictionary=taken.dictionary)
    if spec.dtype == DATETIME:
        return _Vals(DATETIME, taken.values, null)
    if spec.dtype == TEXT:
        return _Vals(TEXT, taken.values, null)
    if spec.dtype == VECTOR:
        return _Vals(VECTOR, taken.values, null, dim=taken.dim)
    raise DataError(f"cannot gather dtype {spec.dtype!r}")


def _seg_sum(x: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    # extended precision keeps the prefix-difference error independent of
    # the running total's magnitude, which matters on million-row inputs
    cs = np.concatenate([np.zeros((1,) + x.shape[1:], dtype=np.longdouble),
                         np.cumsum(x, axis=0, dtype=np.longdouble)])
    return (cs[offsets[1:]] - cs[offsets[:-1]]).astype(np.float64)


def _seg_extreme(x: np.ndarray, offsets: np.ndarray, ufunc: np.ufunc,
                 fill: float) -> np.ndarray:
    counts = np.diff(offsets)
    shape = (len(counts),) + x.shape[1:]
    out = np.full(shape, fill, dtype=np.float64)
    # reduceat over only the non-empty starts: an empty segment's start
    # equals its neighbor's and would silently shift that slice boundary
    nonempty = np.flatnonzero(counts > 0)
    if len(nonempty):
        out[nonempty] = ufunc.reduceat(x, offsets[:-1][nonempty], axis=0)
    return out


def _seg_mode(codes: np.ndarray, null: np.ndarray, offsets: np.ndarray
              ) -> tuple[np.ndarray, np.ndarray]:
    """Per-segment most frequent code; ties go to the smallest code."""
    nseg = len(offsets) - 1
    seg_of = np.repeat(np.arange(nseg, dtype=np.int64), np.diff(offsets))
    keep = ~null
    seg_of, codes = seg_of[keep], codes[keep]
    out = np.full(nseg, -1, dtype=np.int64)
    if len(codes) == 0:
        return out, np.ones(nseg, dtype=bool)
    order = np.lexsort((codes, seg_of))
    s, c = seg_of[order], codes[order]
    boundary = np.ones(len(s), dtype=bool)
    boundary[1:] = (s[1:] != s[:-1]) | (c[1:] != c[:-1])
    run_start = np.flatnonzero(boundary)
    run_len = np.diff(np.append(run_start, len(s)))
    run_seg, run_code = s[run_start], c[run_start]
    pick = np.lexsort((run_code, -run_len, run_seg))
    first = np.ones(len(pick), dtype=bool)
    first[1:] = run_seg[pick][1:] != run_seg[pick][:-1]
    winners = pick[first]
    out[run_seg[winners]] = run_code[winners]
    return out, out < 0


def _reduce(agg: str, vals: _Vals, offsets: np.ndarray) -> _Vals:
    counts = np.diff(offsets)
    if agg == COUNT:
        return _Vals(INT, counts.astype(np.int64), np.zeros(len(counts), dtype=bool))
    if agg == MODE:
        if vals.kind != CATEGORICAL:
            raise DataError(f"MODE over {vals.kind} values")
        codes, null = _seg_mode(vals.data, vals.null, offsets)
        return _Vals(CATEGORICAL, codes, null, dictionary=vals.dictionary)
    if vals.kind not in (FLOAT, INT, VECTOR):
        raise DataError(f"{agg} over {vals.kind} values")
    x = vals.data.astype(np.float64)
    null = vals.null
    if vals.kind == VECTOR:
        valid = (~null).astype(np.float64)
        xz = np.where(null[:, None], 0.0, x)
        nvalid = _seg_sum(valid, offsets)
        if agg == MEAN:
            sums = _seg_sum(xz, offsets)
            with np.errstate(invalid="ignore", divide="ignore"):
                out = sums / nvalid[:, None]
            bad = nvalid == 0
            out[bad] = np.nan
            return _Vals(VECTOR, out, bad, dim=vals.dim)
        fill = np.inf if agg == MIN else -np.inf
        xf = np.where(null[:, None], fill, x)
        ufunc = np.minimum if agg == MIN else np.maximum
        out = _seg_extreme(xf, offsets, ufunc, fill)
        bad = nvalid == 0
        out[bad] = np.nan
        return _Vals(VECTOR, out, bad, dim=vals.dim)
    valid = (~null).astype(np.float64)
    nvalid = _seg_sum(valid, offsets)
    bad = nvalid == 0
    if agg == MEAN:
        sums = _seg_sum(np.where(null, 0.0, x), offsets)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = sums / nvalid
        out[bad] = np.nan
        return _Vals(FLOAT, out, bad)
    fill = np.inf if agg == MIN else -np.inf
    xf = np.where(null, fill, x)
    ufunc = np.minimum if agg == MIN else np.maximum
    out = _seg_extreme(xf, offsets, ufunc, fill)
    out[bad] = np.nan
    return _Vals(FLOAT, out, bad)


def _vals_to_column(vals: _Vals) -> tuple[str, ColumnData]:
    if vals.kind == FLOAT:
        data = vals.data.astype(np.float64).copy()
        data[vals.null] = np.nan
        return FLOAT, ColumnData(FLOAT, data)
    if vals.kind == INT:
        return INT, ColumnData(INT, vals.data.astype(np.int64), mask=vals.null.copy())
    if vals.kind == CATEGORICAL:
        codes = vals.data.astype(np.int64).copy()
        codes[vals.null] = -1
        return CATEGORICAL, ColumnData(CATEGORICAL, codes,
                                       dictionary=list(vals.dictionary or []))
    if vals.kind == DATETIME:
        data = vals.data.astype(np.int64).copy()
        data[vals.null] = NULL_TS
        return DATETIME, ColumnData(DATETIME, data)
    if vals.kind == TEXT:
        data = vals.data.copy()
        data[vals.null] = None
        return TEXT, ColumnData(TEXT, data)
    if vals.kind == VECTOR:
        data = vals.data.astype(np.float64).copy()
        data[vals.null] = np.nan
        return VECTOR, ColumnData(VECTOR, data, mask=vals.null.copy(), dim=vals.dim)
    raise DataError(f"cannot emit dtype {vals.kind!r}")


def _evaluate_spec(engine: _Engine, spec: FeatureSpec) -> _Vals:
    rev_positions = [i for i, h in enumerate(spec.hops) if h.direction == "reverse"]
    agg_of = dict(zip(rev_positions, spec.aggregators))
    deepest = engine.level(spec.hops)
    if spec.aggregators and spec.aggregators[-1] == COUNT:
        # the innermost reverse hop is the path's last hop; counting needs no
        # base values, so start the chain from its segment sizes
        offsets = deepest.offsets
        assert offsets is not None
        vals = _Vals(INT, np.diff(offsets).astype(np.int64),
                     np.zeros(len(offsets) - 1, dtype=bool))
        remaining = rev_positions[:-1]
    else:
        table = engine.db.table(spec.base_column[0])
        vals = _gather(table.columns[spec.base_column[1]],
                       table.schema.column(spec.base_column[1]), deepest.rows)
        remaining = rev_positions
        if remaining:
            pos = remaining[-1]
            lvl = engine.level(spec.hops[:pos + 1])
            assert lvl.offsets is not None
            vals = _reduce(agg_of[pos], vals, lvl.offsets)
            remaining = remaining[:-1]
    for pos in reversed(remaining):
        lvl = engine.level(spec.hops[:pos + 1])
        assert lvl.offsets is not None
        vals = _reduce(agg_of[pos], vals, lvl.offsets)
    return vals


def execute_plan(db: Database, plan: DFSPlan, threads: int = 1) -> Table:
    """Materialize every planned feature as a column on the target table.

    Features whose output name matches an existing target column (the depth
    zero self-columns) are not duplicated, so a depth-0 plan returns a table
    with the target's own schema. Executing is read-only on the database and
    deterministic; ``threads`` parallelizes aggregation across specs once
    the shared expansions are built.
    """
    engine = _Engine(db, plan)
    target = engine.target
    for stage in plan.stages:  # expansions are shared, build them serially
        engine.level(stage.path)
    specs = [s for s in plan.specs]

    def run(spec: FeatureSpec) -> tuple[str, ColumnData]:
        vals = _evaluate_spec(engine, spec)
        return _vals_to_column(vals)

    if threads > 1 and len(specs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, specs))
    else:
        results = [run(s) for s in specs]

    out_specs = list(target.schema.columns)
    out_cols = {name: col.copy() for name, col in target.columns.items()}
    for spec, (dtype, col) in zip(specs, results):
        name = spec.output_name
        if target.schema.has_column(name):
            continue
        if name in out_cols:
            raise DataError(f"duplicate feature output {name!r}")
        cspec = ColumnSpec(name, dtype, dim=col.dim)
        out_specs.append(cspec)
        out_cols[name] = col
    return Table(TableSchema(target.name, tuple(out_specs)), out_cols, target.row_count)


# ---------------------------------------------------------------------------
# reference oracle


class BruteForceDFS:
    """Per-row recursive reference implementation.

    Values are plain python objects; children are found through per-key
    bucket lists built with dict lookups, never through the planner's
    sort-merge machinery. Useful only at fixture scale.
    """

    def __init__(self, db: Database, target_table: str,
                 cutoff: Optional[CutoffRef] = None) -> None:
        self.db = db
        self.target_table = target_table
        self.cutoff = cutoff
        self._pk_rows: dict[str, dict] = {}
        self._children: dict[tuple[str, str], dict] = {}
        self._nulls: dict[tuple[str, str], Any] = {}

    def _null_mask(self, table: str, column: str) -> np.ndarray:
        key = (table, column)
        if key not in self._nulls:
            self._nulls[key] = self.db.table(table).columns[column].null_mask()
        return self._nulls[key]

    def _cell(self, table: str, column: str, row: int) -> Any:
        col = self.db.table(table).columns[column]
        if self._null_mask(table, column)[row]:
            return None
        if col.dtype == CATEGORICAL:
            return (col.dictionary or [])[int(col.values[row])]
        if col.dtype == VECTOR:
            return tuple(float(v) for v in col.values[row])
        if col.dtype == FLOAT:
            return float(col.values[row])
        if col.dtype in (INT, DATETIME):
            return int(col.values[row])
        return col.values[row]

    def _pk_lookup(self, table: str) -> dict:
        if table not in self._pk_rows:
            pk = self.db.table(table).schema.primary_key
            lookup: dict = {}
            if pk is not None:
                for i in range(self.db.table(table).row_count):
                    v = self._cell(table, pk, i)
                    if v is not None:
                        lookup[v] = i
            self._pk_rows[table] = lookup
        return self._pk_rows[table]

    def _child_rows(self, child: str, fk_column: str) -> dict:
        key = (child, fk_column)
        if key not in self._children:
            target_table, _ = self.db.table(child).schema.column(fk_column).fk_target  # type: ignore[misc]
            pk_lookup = self._pk_lookup(target_table)
            buckets: dict = {}
            for i in range(self.db.table(child).row_count):
                v = self._cell(child, fk_column, i)
                if v is None:
                    continue
                parent = pk_lookup.get(v)
                if parent is None:
                    continue
                buckets.setdefault(parent, []).append(i)
            self._children[key] = buckets
        return self._children[key]

    def _row_ts(self, table: str, row: int) -> Optional[int]:
        tc = self.db.table(table).schema.time_column
        if tc is None:
            return None
        return self._cell(table, tc, row)

    def _visible(self, table: str, row: int, cutoff: Optional[int]) -> bool:
        if cutoff is None:
            return True
        ts = self._row_ts(table, row)
        return ts is None or ts <= cutoff

    def _eval(self, table: str, row: int, hops: tuple[Hop, ...],
              aggs: tuple[str, ...], base: tuple[str, str],
              cutoff: Optional[int]) -> Any:
        if not hops:
            return self._cell(table, base[1], row)
        hop = hops[0]
        if hop.direction == "forward":
            key = self._cell(table, hop.fk_column, row)
            if key is None:
                return None
            parent = self._pk_lookup(hop.table).get(key)
            if parent is None or not self._visible(hop.table, parent, cutoff):
                return None
            return self._eval(hop.table, parent, hops[1:], aggs, base, cutoff)
        pk = self.db.table(table).schema.primary_key
        children = []
        if pk is not None:
            for c in self._child_rows(hop.table, hop.fk_column).get(row, []):
                if self._visible(hop.table, c, cutoff):
                    children.append(c)
        agg = aggs[0]
        if agg == COUNT and len(hops) == 1:
            return len(children)
        values = [self._eval(hop.table, c, hops[1:], aggs[1:], base, cutoff)
                  for c in children]
        return self._aggregate(agg, values)

    @staticmethod
    def _aggregate(agg: str, values: list) -> Any:
        present = [v for v in values if v is not None]
        if agg == COUNT:
            return len(values)
        if not present:
            return None
        if isinstance(present[0], tuple):  # vector cells aggregate elementwise
            dims = len(present[0])
            if agg == MEAN:
                return tuple(sum(v[d] for v in present) / len(present) for d in range(dims))
            pick = min if agg == MIN else max
            return tuple(pick(v[d] for v in present) for d in range(dims))
        if agg == MEAN:
            return sum(float(v) for v in present) / len(present)
        if agg == MIN:
            return min(present)
        if agg == MAX:
            return max(present)
        if agg == MODE:
            counts: dict = {}
            for v in present:
                counts[v] = counts.get(v, 0) + 1
            best = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
            return best[0][0]
        raise ConfigError(f"unknown aggregator {agg!r}")

    def row(self, row_index: int, specs: Sequence[FeatureSpec]) -> list:
        cutoff: Optional[int] = None
        if self.cutoff is not None:
            cutoff = self._cell(self.target_table, self.cutoff.column, row_index)
        return [self._eval(self.target_table, row_index, spec.hops,
                           spec.aggregators, spec.base_column, cutoff)
                for spec in specs]


def brute_force_dfs(db: Database, target_table: str, specs: Sequence[FeatureSpec],
                    row: int, cutoff: Optional[CutoffRef] = None) -> list:
    """Oracle feature values for one target row. See :class:`BruteForceDFS`."""
    return BruteForceDFS(db, target_table, cutoff).row(row, specs)


# ---------------------------------------------------------------------------
# SQL emission


def _q(identifier: str) -> str:
    return '"' + identifier.replace('"', '""') + '"'


def _time_filter(db: Database, table: str, alias: str, target_alias: str,
                 cutoff: Optional[CutoffRef]) -> Optional[str]:
    tc = db.table(table).schema.time_column
    if tc is None or cutoff is None:
        return None
    c = f"{target_alias}.{_q(cutoff.column)}"
    t = f"{alias}.{_q(tc)}"
    return f"({c} IS NULL OR {t} IS NULL OR {t} <= {c})"


def _spine(db: Database, plan: DFSPlan, path: tuple[Hop, ...],
           upto: int) -> tuple[str, list[str]]:
    """FROM clause joining target through the first ``upto`` hops."""
    target = plan.target_table
    parts = [f"{_q(target)} t"]
    aliases = ["t"]
    prev_table = target
    for i, hop in enumerate(path[:upto]):
        alias = f"h{i}"
        conds = []
        if hop.direction == "forward":
            pk = db.table(hop.table).schema.primary_key
            if pk is None:
                raise DataError(f"forward hop into {hop.table!r} needs a primary key")
            conds.append(f"{aliases[-1]}.{_q(hop.fk_column)} = {alias}.{_q(pk)}")
        else:
            pk = db.table(prev_table).schema.primary_key
            if pk is None:
                raise DataError(f"reverse hop out of {prev_table!r} needs a primary key")
            conds.append(f"{alias}.{_q(hop.fk_column)} = {aliases[-1]}.{_q(pk)}")
        tf = _time_filter(db, hop.table, alias, "t", plan.cutoff)
        if tf is not None:
            conds.append(tf)
        parts.append(f"LEFT JOIN {_q(hop.table)} {alias} ON " + " AND ".join(conds))
        aliases.append(alias)
        prev_table = hop.table
    return "\n    ".join(parts), aliases


def _group_keys(db: Database, path: tuple[Hop, ...], aliases: list[str],
                rev_positions: list[int], n_levels: int) -> list[str]:
    """Row-identity expressions for the outer ``n_levels`` reverse hops."""
    keys = []
    for pos in rev_positions[:n_levels]:
        table = path[pos].table
        pk = db.table(table).schema.primary_key
        if pk is None:
            raise DataError(
                f"nested aggregation over {table!r} needs a primary key for SQL")
        keys.append(f"{aliases[pos + 1]}.{_q(pk)}")
    return keys


def emit_sql(db: Database, plan: DFSPlan, dialect: str = "ansi") -> str:
    """Render the plan as one ANSI SQL statement with a CTE per stage level.

    Vector-typed features have no portable SQL representation and are
    skipped with a warning. An empty plan selects the bare target table.
    MODE aggregations use a COUNT plus ROW_NUMBER window pair, breaking ties
    by the smaller value, which matches the in-memory tie rule because
    category dictionaries are sorted.
    """
    if dialect != "ansi":
        raise ConfigError(f"unknown sql dialect {dialect!r}")
    target = db.table(plan.target_table)
    pk = target.schema.primary_key
    emittable: list[tuple[int, FeatureSpec]] = []
    idx = 0
    for stage in plan.stages:
        for spec in stage.outputs:
            base_dtype = db.table(spec.base_column[0]).schema.column(spec.base_column[1]).dtype
            if base_dtype == VECTOR:
                logger.warning("emit_sql: skipping vector feature %s", spec.output_name)
                continue
            if target.schema.has_column(spec.output_name):
                continue
            emittable.append((idx, spec))
            idx += 1
    if not emittable:
        return f"SELECT * FROM {_q(plan.target_table)}"
    if pk is None:
        raise DataError("SQL emission needs a primary key on the target table")

    ctes: list[str] = []
    final_cols = [f"t.{_q(c.name)}" for c in target.schema.columns]
    final_joins: list[str] = []
    for k, spec in emittable:
        rev_positions = [i for i, h in enumerate(spec.hops) if h.direction == "reverse"]
        spine, aliases = _spine(db, plan, spec.hops, len(spec.hops))
        name = f"f{k}"
        if not rev_positions:
            base_alias = aliases[-1]
            ctes.append(
                f"{name} AS (\n  SELECT t.{_q(pk)} AS _iid, "
                f"{base_alias}.{_q(spec.base_column[1])} AS v\n  FROM {spine}\n)")
            final_cols.append(f"{name}.v AS {_q(spec.output_name)}")
            final_joins.append(f"LEFT JOIN {name} ON {name}._iid = t.{_q(pk)}")
            continue
        n_rev = len(rev_positions)
        innermost = spec.aggregators[-1]
        group_keys = _group_keys(db, spec.hops, aliases, rev_positions, n_rev - 1)
        if innermost == COUNT:
            inner_alias = aliases[rev_positions[-1] + 1]
            expr = f"COUNT({inner_alias}.{_q(spec.hops[rev_positions[-1]].fk_column)})"
        else:
            expr_src = f"{aliases[-1]}.{_q(spec.base_column[1])}"
            expr = {MEAN: f"AVG({expr_src})", MIN: f"MIN({expr_src})",
                    MAX: f"MAX({expr_src})", MODE: expr_src}[innermost]
        level_name = f"{name}_l{n_rev - 1}"
        key_sel = "".join(f", {g} AS g{j}" for j, g in enumerate(group_keys))
        group_by = "t." + _q(pk) + "".join(f", {g}" for g in group_keys)
        if innermost == MODE:
            counted = (f"{level_name}_c AS (\n  SELECT t.{_q(pk)} AS _iid{key_sel}, "
                       f"{expr} AS v, COUNT(*) AS n\n  FROM {spine}\n"
                       f"  WHERE {expr} IS NOT NULL\n"
                       f"  GROUP BY {group_by}, {expr}\n)")
            ranked_keys = "".join(f", g{j}" for j in range(len(group_keys)))
            picked = (f"{level_name} AS (\n  SELECT _iid{ranked_keys}, v FROM (\n"
                      f"    SELECT _iid{ranked_keys}, v, ROW_NUMBER() OVER ("
                      f"PARTITION BY _iid{ranked_keys} ORDER BY n DESC, v ASC) AS rn\n"
                      f"    FROM {level_name}_c\n  ) ranked WHERE rn = 1\n)")
            ctes.extend([counted, picked])
        else:
            ctes.append(
                f"{level_name} AS (\n  SELECT t.{_q(pk)} AS _iid{key_sel}, "
                f"{expr} AS v\n  FROM {spine}\n  GROUP BY {group_by}\n)")
        for lvl in range(n_rev - 2, -1, -1):
            agg = spec.aggregators[lvl]
            # a group key of NULL marks instances with no rows at this level;
            # their padding value must not leak into the outer aggregate
            guard = f"CASE WHEN g{lvl} IS NOT NULL THEN v END"
            prev = f"{name}_l{lvl + 1}"
            this = f"{name}_l{lvl}" if lvl > 0 else name
            keys = "".join(f", g{j}" for j in range(lvl))
            if agg == MODE:
                ctes.append(
                    f"{this}_c AS (\n  SELECT _iid{keys}, {guard} AS v, COUNT(*) AS n\n"
                    f"  FROM {prev}\n  WHERE {guard} IS NOT NULL\n"
                    f"  GROUP BY _iid{keys}, {guard}\n)")
                ctes.append(
                    f"{this} AS (\n  SELECT _iid{keys}, v FROM (\n"
                    f"    SELECT _iid{keys}, v, ROW_NUMBER() OVER (PARTITION BY _iid{keys} "
                    f"ORDER BY n DESC, v ASC) AS rn\n    FROM {this}_c\n  ) ranked "
                    f"WHERE rn = 1\n)")
            else:
                sql_agg = {MEAN: "AVG", MIN: "MIN", MAX: "MAX"}[agg]
                ctes.append(
                    f"{this} AS (\n  SELECT _iid{keys}, {sql_agg}({guard}) AS v\n"
                    f"  FROM {prev}\n  GROUP BY _iid{keys}\n)")
        if n_rev == 1:
            # single level: the level CTE is already per instance
            final_name = level_name
        else:
            final_name = name
        if spec.aggregators[-1] == COUNT and n_rev == 1:
            final_cols.append(f"COALESCE({final_name}.v, 0) AS {_q(spec.output_name)}")
        else:
            final_cols.append(f"{final_name}.v AS {_q(spec.output_name)}")
        final_joins.append(f"LEFT JOIN {final_name} ON {final_name}._iid = t.{_q(pk)}")

    sql = "WITH\n" + ",\n".join(ctes) + "\n"
    sql += "SELECT\n  " + ",\n  ".join(final_cols) + "\n"
    sql += f"FROM {_q(plan.target_table)} t\n"
    sql += "\n".join(final_joins)
    return sql
