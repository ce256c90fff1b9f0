"""Heterogeneous temporal graph extraction from relational databases.

Two extractors are provided. ``row2node`` maps every table row to a node, so
foreign keys become edges between node types. ``row2nve`` additionally maps
rows of pure link tables, those with exactly two foreign keys and no primary
key, to typed edges whose non-key columns become edge features. Link tables
with three or more foreign keys have no lossless edge form and fall back to
node conversion.

The module also carries the round-trip apparatus relating the two views:
``encode_graph_as_table`` flattens a graph into a single wide table,
``normalize_2nf`` factors that table into an edge table plus a node table,
and ``star_expand`` rewrites table-derived edges back into nodes. Composing
encode, normalize and row2nve reproduces the original graph up to canonical
relabeling by provenance, while row2node on the same pipeline yields one
extra node type per edge table.

Node numbering inside every node type follows source row order, which the
on-disk export format relies on.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field, replace
from typing import Any, Optional

import numpy as np

from . import rdbc
from .columns import (
    CATEGORICAL,
    DATETIME,
    FOREIGN_KEY,
    INT,
    KEY_DTYPES,
    NULL_TS,
    PRIMARY_KEY,
    TEXT,
    ColumnData,
    ColumnSpec,
    DataError,
    SchemaError,
    TableSchema,
)
from .database import Database, Table, fk_row_map, validate_database

logger = logging.getLogger(__name__)

EdgeType = tuple[str, str, str]

REVERSE_SUFFIX = "_rev"


@dataclass(frozen=True)
class NodeProvenance:
    """Where a node type came from: a table, or a star-expanded edge type."""

    table: str
    kind: str = "table"


@dataclass(frozen=True)
class EdgeProvenance:
    """Origin of an edge type.

    ``kind`` is "fk" for edges induced by a foreign key column and "table"
    for edges converted from a two-foreign-key link table. ``columns`` holds
    the foreign key column names involved, in schema order for link tables.
    """

    kind: str
    table: str
    columns: tuple[str, ...]
    reverse: bool = False
    dropped_rows: int = 0


@dataclass
class NodeSet:
    count: int
    features: dict[str, ColumnData]
    timestamps: Optional[np.ndarray] = None
    provenance: Optional[NodeProvenance] = None


@dataclass
class EdgeSet:
    src: np.ndarray
    dst: np.ndarray
    features: dict[str, ColumnData] = field(default_factory=dict)
    timestamps: Optional[np.ndarray] = None
    provenance: Optional[EdgeProvenance] = None

    def __len__(self) -> int:
        return len(self.src)


@dataclass
class HeteroGraph:
    nodes: dict[str, NodeSet]
    edges: dict[EdgeType, EdgeSet]

    @property
    def node_types(self) -> list[str]:
        return list(self.nodes)

    @property
    def edge_types(self) -> list[EdgeType]:
        return list(self.edges)

    def forward_edge_types(self) -> list[EdgeType]:
        """Edge types that are not materialized reverses."""
        return [et for et, es in self.edges.items()
                if not (es.provenance and es.provenance.reverse)]


def _require_valid(db: Database) -> None:
    violations = validate_database(db)
    if violations:
        head = ", ".join(f"{v.table}.{v.column}[{v.row_index}]:{v.kind}"
                         for v in violations[:5])
        raise DataError(f"database failed validation ({len(violations)} violations: {head})")


def _node_features(table: Table) -> dict[str, ColumnData]:
    return {c.name: table.columns[c.name]
            for c in table.schema.columns if c.dtype not in KEY_DTYPES}


def _add_reverse(edges: dict[EdgeType, EdgeSet], etype: EdgeType, es: EdgeSet) -> None:
    src_t, rel, dst_t = etype
    rev = EdgeSet(
        src=es.dst,
        dst=es.src,
        features=es.features,
        timestamps=es.timestamps,
        provenance=replace(es.provenance, reverse=True) if es.provenance else None,
    )
    edges[(dst_t, rel + REVERSE_SUFFIX, src_t)] = rev


def _fk_edges(db: Database, table: Table, edges: dict[EdgeType, EdgeSet]) -> None:
    for spec in table.schema.foreign_keys:
        target_table, _ = spec.fk_target  # type: ignore[misc]
        rows = fk_row_map(db, table.name, spec.name)
        keep = rows >= 0
        src = np.flatnonzero(keep).astype(np.int64)
        dst = rows[keep]
        etype = (table.name, f"{table.name}.{spec.name}", target_table)
        es = EdgeSet(src=src, dst=dst,
                     provenance=EdgeProvenance("fk", table.name, (spec.name,)))
        edges[etype] = es
        _add_reverse(edges, etype, es)


def row2node(db: Database) -> HeteroGraph:
    """Convert every table to a node type and every foreign key to edges.

    Requires a database that passes validation. Non-key columns become node
    features (the time column doubles as the node timestamp), and each
    foreign key column yields a forward edge type named ``table.column``
    plus its materialized reverse.
    """
    _require_valid(db)
    nodes: dict[str, NodeSet] = {}
    edges: dict[EdgeType, EdgeSet] = {}
    for tname in sorted(db.tables):
        table = db.tables[tname]
        ts = table.timestamps()
        nodes[tname] = NodeSet(
            count=table.row_count,
            features=_node_features(table),
            timestamps=None if ts is None else ts.copy(),
            provenance=NodeProvenance(tname),
        )
    for tname in sorted(db.tables):
        _fk_edges(db, db.tables[tname], edges)
    return HeteroGraph(nodes, edges)


def _is_link_table(table: Table) -> bool:
    return (table.schema.primary_key is None
            and len(table.schema.foreign_keys) == 2)


def row2nve(db: Database) -> HeteroGraph:
    """Convert link tables to typed edges and everything else to nodes.

    A link table has exactly two foreign keys and no primary key; its rows
    become edges from the first foreign key's target to the second's, with
    non-key columns as edge features and the time column as the edge
    timestamp. Rows with a null foreign key cannot form an edge and are
    dropped, with the count recorded on the edge type's provenance. Link
    tables with three or more foreign keys stay nodes since a single edge
    cannot represent them without loss.
    """
    _require_valid(db)
    nodes: dict[str, NodeSet] = {}
    edges: dict[EdgeType, EdgeSet] = {}
    link_tables = [t for t in sorted(db.tables) if _is_link_table(db.tables[t])]
    for tname in sorted(db.tables):
        if tname in link_tables:
            continue
        table = db.tables[tname]
        ts = table.timestamps()
        nodes[tname] = NodeSet(
            count=table.row_count,
            features=_node_features(table),
            timestamps=None if ts is None else ts.copy(),
            provenance=NodeProvenance(tname),
        )
    for tname in sorted(db.tables):
        table = db.tables[tname]
        if tname not in link_tables:
            _fk_edges(db, table, edges)
            continue
        fk_a, fk_b = table.schema.foreign_keys
        rows_a = fk_row_map(db, tname, fk_a.name)
        rows_b = fk_row_map(db, tname, fk_b.name)
        keep = (rows_a >= 0) & (rows_b >= 0)
        dropped = int((~keep).sum())
        if dropped:
            logger.warning("link table %s: dropped %d rows with null keys", tname, dropped)
        ts = table.timestamps()
        feats = {name: col.take(np.flatnonzero(keep))
                 for name, col in _node_features(table).items()}
        etype = (fk_a.fk_target[0], tname, fk_b.fk_target[0])  # type: ignore[index]
        es = EdgeSet(
            src=rows_a[keep],
            dst=rows_b[keep],
            features=feats,
            timestamps=None if ts is None else ts[keep].copy(),
            provenance=EdgeProvenance("table", tname, (fk_a.name, fk_b.name),
                                      dropped_rows=dropped),
        )
        edges[etype] = es
        _add_reverse(edges, etype, es)
    return HeteroGraph(nodes, edges)


def star_expand(g: HeteroGraph) -> HeteroGraph:
    """Replace each table-derived edge type with a node type per edge.

    Every forward edge type whose provenance is a converted link table turns
    into a node type (one node per edge, edge features and timestamps become
    node features and timestamps) linked to both endpoints by foreign-key
    style edges named after the link table's key columns. Graphs without
    table-derived edges come back unchanged.
    """
    nodes = dict(g.nodes)
    edges: dict[EdgeType, EdgeSet] = {}
    for etype, es in g.edges.items():
        prov = es.provenance
        if prov is None or prov.kind != "table":
            edges[etype] = es
            continue
        if prov.reverse:
            continue
        src_t, _, dst_t = etype
        star = prov.table
        if star in nodes:
            raise SchemaError(f"star expansion would collide with node type {star!r}")
        n = len(es)
        nodes[star] = NodeSet(
            count=n,
            features=dict(es.features),
            timestamps=None if es.timestamps is None else es.timestamps.copy(),
            provenance=NodeProvenance(star, kind="star"),
        )
        idx = np.arange(n, dtype=np.int64)
        col_a, col_b = prov.columns
        for col, dst_type, dst_idx in ((col_a, src_t, es.src), (col_b, dst_t, es.dst)):
            new_etype = (star, f"{star}.{col}", dst_type)
            new_es = EdgeSet(src=idx.copy(), dst=dst_idx.copy(),
                             provenance=EdgeProvenance("fk", star, (col,)))
            edges[new_etype] = new_es
            _add_reverse(edges, new_etype, new_es)
    return HeteroGraph(nodes, edges)


def _node_key(type_name: str, index: int) -> str:
    return f"{type_name}:{index}"


def _split_node_key(key: str) -> tuple[str, int]:
    type_name, _, idx = key.rpartition(":")
    return type_name, int(idx)


def encode_graph_as_table(g: HeteroGraph) -> Database:
    """Flatten a graph into a database holding one wide table, row per edge.

    Each edge row holds both endpoint keys, their type names, their feature
    cells and timestamps, plus the relation name and the edge's own features.
    Isolated nodes get a row with null edge fields so the encoding loses no
    information. ``(u, w, e)`` is a candidate key: duplicate triplets mean
    the input is not a simple heterogeneous graph and raise.

    Endpoint feature columns are namespaced ``x_u::<type>::<feature>`` (and
    ``x_w::...``) because different node types carry different schemas; a
    row only fills the columns of its endpoints' types. Edge features are
    namespaced ``z::<relation>::<feature>``.
    """
    fwd = [(et, g.edges[et]) for et in sorted(g.forward_edge_types())]
    rows_u: list[tuple[str, int]] = []  # (type, index) per row for the u side
    rows_w: list[tuple[str, int] | None] = []
    rows_rel: list[Optional[str]] = []
    rows_edge: list[tuple[EdgeType, int] | None] = []
    seen_triplets: set = set()
    covered: dict[str, np.ndarray] = {t: np.zeros(ns.count, dtype=bool)
                                      for t, ns in g.nodes.items()}
    for etype, es in fwd:
        src_t, rel, dst_t = etype
        for j in range(len(es)):
            u = (src_t, int(es.src[j]))
            w = (dst_t, int(es.dst[j]))
            triplet = (u, w, rel)
            if triplet in seen_triplets:
                raise DataError(f"duplicate edge {triplet}: input is not a simple graph")
            seen_triplets.add(triplet)
            rows_u.append(u)
            rows_w.append(w)
            rows_rel.append(rel)
            rows_edge.append((etype, j))
            covered[src_t][es.src[j]] = True
            covered[dst_t][es.dst[j]] = True
    for t in sorted(g.nodes):
        for i in np.flatnonzero(~covered[t]):
            rows_u.append((t, int(i)))
            rows_w.append(None)
            rows_rel.append(None)
            rows_edge.append(None)
    n = len(rows_u)

    type_names = sorted(g.nodes)
    rel_names = sorted({rel for (_, rel, _), _ in fwd})
    specs: list[ColumnSpec] = [
        ColumnSpec("u", TEXT), ColumnSpec("w", TEXT),
        ColumnSpec("v_u", CATEGORICAL), ColumnSpec("v_w", CATEGORICAL),
    ]
    cols: dict[str, ColumnData] = {}
    u_vals = np.empty(n, dtype=object)
    w_vals = np.empty(n, dtype=object)
    for i in range(n):
        u_vals[i] = _node_key(*rows_u[i])
        w_vals[i] = None if rows_w[i] is None else _node_key(*rows_w[i])
    cols["u"] = ColumnData(TEXT, u_vals)
    cols["w"] = ColumnData(TEXT, w_vals)
    type_lookup = {t: i for i, t in enumerate(type_names)}
    vu = np.array([type_lookup[rows_u[i][0]] for i in range(n)], dtype=np.int64)
    vw = np.array([-1 if rows_w[i] is None else type_lookup[rows_w[i][0]]
                   for i in range(n)], dtype=np.int64)
    cols["v_u"] = ColumnData(CATEGORICAL, vu, dictionary=type_names)
    cols["v_w"] = ColumnData(CATEGORICAL, vw, dictionary=type_names)

    any_node_ts = any(ns.timestamps is not None for ns in g.nodes.values())
    if any_node_ts:
        for name, side in (("u_ts", rows_u), ("w_ts", rows_w)):
            vals = np.full(n, NULL_TS, dtype=np.int64)
            for i in range(n):
                endpoint = side[i]
                if endpoint is None:
                    continue
                ts = g.nodes[endpoint[0]].timestamps
                if ts is not None:
                    vals[i] = ts[endpoint[1]]
            specs.append(ColumnSpec(name, DATETIME))
            cols[name] = ColumnData(DATETIME, vals)

    for prefix, side in (("x_u", rows_u), ("x_w", rows_w)):
        for t in type_names:
            idx = np.array([side[i][1] if (side[i] is not None and side[i][0] == t) else -1
                            for i in range(n)], dtype=np.int64)
            for fname, feat in g.nodes[t].features.items():
                cname = f"{prefix}::{t}::{fname}"
                specs.append(ColumnSpec(cname, feat.dtype, dim=feat.dim))
                cols[cname] = feat.take(idx)

    e_codes = np.array([-1 if r is None else rel_names.index(r) for r in rows_rel],
                       dtype=np.int64)
    specs.append(ColumnSpec("e", CATEGORICAL))
    cols["e"] = ColumnData(CATEGORICAL, e_codes, dictionary=rel_names)

    any_edge_ts = any(es.timestamps is not None for _, es in fwd)
    if any_edge_ts:
        vals = np.full(n, NULL_TS, dtype=np.int64)
        for i, ref in enumerate(rows_edge):
            if ref is None:
                continue
            es = g.edges[ref[0]]
            if es.timestamps is not None:
                vals[i] = es.timestamps[ref[1]]
        specs.append(ColumnSpec("e_ts", DATETIME, is_time_column=True))
        cols["e_ts"] = ColumnData(DATETIME, vals)

    for etype, es in fwd:
        _, rel, _ = etype
        idx = np.array([ref[1] if (ref is not None and ref[0] == etype) else -1
                        for ref in rows_edge], dtype=np.int64)
        for fname, feat in es.features.items():
            cname = f"z::{rel}::{fname}"
            specs.append(ColumnSpec(cname, feat.dtype, dim=feat.dim))
            cols[cname] = feat.take(idx)

    table = Table(TableSchema("graph", tuple(specs)), cols, n)
    return Database("graph", {"graph": table})


def normalize_2nf(db: Database) -> Database:
    """Factor an encoded graph table into an edge table plus a node table.

    The wide encoding repeats endpoint attributes on every incident edge
    row, a second normal form violation against the candidate key
    ``(u, w, e)``. This splits it into ``links`` ``[u, w, e, z...]`` with
    ``u``/``w`` as foreign keys and ``nodes`` ``[u, v_u, x_u...]`` keyed by
    ``u``, deduplicating endpoint rows in first-occurrence order.
    """
    if len(db.tables) != 1:
        raise DataError(
            f"normalize_2nf expects a single-table database, got {len(db.tables)}")
    (table,) = db.tables.values()
    for required in ("u", "w", "v_u", "v_w", "e"):
        if not table.schema.has_column(required):
            raise DataError(f"not an encoded graph table: missing column {required!r}")
    has_node_ts = table.schema.has_column("u_ts")
    has_edge_ts = table.schema.has_column("e_ts")
    x_cols = [c.name for c in table.schema.columns if c.name.startswith("x_u::")]
    z_cols = [c.name for c in table.schema.columns if c.name.startswith("z::")]

    n = table.row_count
    u_vals, w_vals = table.columns["u"].values, table.columns["w"].values
    order: dict[str, int] = {}
    node_src: list[tuple[str, int]] = []  # which encoded row and side to pull from
    for i in range(n):
        if u_vals[i] is not None and str(u_vals[i]) not in order:
            order[str(u_vals[i])] = len(node_src)
            node_src.append(("u", i))
        if w_vals[i] is not None and str(w_vals[i]) not in order:
            order[str(w_vals[i])] = len(node_src)
            node_src.append(("w", i))

    def side_name(base: str, side: str) -> str:
        if base == "u":
            return "u" if side == "u" else "w"
        if base == "v_u":
            return "v_u" if side == "u" else "v_w"
        if base == "u_ts":
            return "u_ts" if side == "u" else "w_ts"
        return base if side == "u" else "x_w::" + base[len("x_u::"):]

    node_specs: list[ColumnSpec] = [ColumnSpec("u", PRIMARY_KEY),
                                    ColumnSpec("v_u", CATEGORICAL)]
    pick_u = np.array([i if s == "u" else -1 for s, i in node_src], dtype=np.int64)
    pick_w = np.array([i if s == "w" else -1 for s, i in node_src], dtype=np.int64)

    def gather(base: str) -> ColumnData:
        cu = table.columns[side_name(base, "u")].take(pick_u)
        cw = table.columns[side_name(base, "w")].take(pick_w)
        vals = cu.values.copy()
        from_w = pick_w >= 0
        vals[from_w] = cw.values[from_w]
        mask = None
        if cu.mask is not None or cw.mask is not None:
            mask = cu.null_mask()
            mask[from_w] = cw.null_mask()[from_w]
        return ColumnData(cu.dtype, vals, mask=mask, dictionary=cu.dictionary, dim=cu.dim)

    node_cols: dict[str, ColumnData] = {}
    keys = np.empty(len(node_src), dtype=object)
    for j, (side, i) in enumerate(node_src):
        keys[j] = str(u_vals[i] if side == "u" else w_vals[i])
    node_cols["u"] = ColumnData(PRIMARY_KEY, keys,
                                mask=np.zeros(len(node_src), dtype=bool))
    node_cols["v_u"] = gather("v_u")
    if has_node_ts:
        node_specs.append(ColumnSpec("u_ts", DATETIME, is_time_column=True))
        node_cols["u_ts"] = gather("u_ts")
    for cname in x_cols:
        spec = table.schema.column(cname)
        node_specs.append(ColumnSpec(cname, spec.dtype, dim=spec.dim))
        node_cols[cname] = gather(cname)
    nodes_table = Table(TableSchema("nodes", tuple(node_specs)), node_cols, len(node_src))

    edge_rows = np.flatnonzero(~table.columns["e"].null_mask()).astype(np.int64)
    link_specs: list[ColumnSpec] = [
        ColumnSpec("u", FOREIGN_KEY, fk_target=("nodes", "u")),
        ColumnSpec("w", FOREIGN_KEY, fk_target=("nodes", "u")),
        ColumnSpec("e", CATEGORICAL),
    ]
    link_cols: dict[str, ColumnData] = {}
    for key_col in ("u", "w"):
        vals = np.empty(len(edge_rows), dtype=object)
        for j, i in enumerate(edge_rows):
            vals[j] = str(table.columns[key_col].values[i])
        link_cols[key_col] = ColumnData(FOREIGN_KEY, vals,
                                        mask=np.zeros(len(edge_rows), dtype=bool))
    link_cols["e"] = table.columns["e"].take(edge_rows)
    if has_edge_ts:
        link_specs.append(ColumnSpec("e_ts", DATETIME, is_time_column=True))
        link_cols["e_ts"] = table.columns["e_ts"].take(edge_rows)
    for cname in z_cols:
        spec = table.schema.column(cname)
        link_specs.append(ColumnSpec(cname, spec.dtype, dim=spec.dim))
        link_cols[cname] = table.columns[cname].take(edge_rows)
    links_table = Table(TableSchema("links", tuple(link_specs)), link_cols, len(edge_rows))

    return Database("graph_2nf", {"nodes": nodes_table, "links": links_table})


def split_by_type_keys(g: HeteroGraph, keys: list[str]) -> HeteroGraph:
    """Recover a typed graph from a single-node-type graph plus node keys.

    ``keys[i]`` is the ``type:index`` provenance key of node ``i`` of the
    graph's sole node type. Splits nodes by type, drops the bookkeeping
    ``v_u`` feature, strips the ``x_u::type::`` namespace from features, and
    regroups edges by relation using the ``e`` feature and ``z::rel::``
    columns. This is the canonical relabeling that makes the encode,
    normalize, row2nve cycle comparable with the original graph.
    """
    if len(g.nodes) != 1:
        raise DataError("split_by_type_keys expects a single node type")
    (src_type, ns), = g.nodes.items()
    parsed = [_split_node_key(k) for k in keys]
    by_type: dict[str, list[tuple[int, int]]] = {}
    for flat, (t, i) in enumerate(parsed):
        by_type.setdefault(t, []).append((i, flat))
    nodes: dict[str, NodeSet] = {}
    flat_to_local: dict[int, int] = {}
    for t in sorted(by_type):
        members = sorted(by_type[t])
        idx = np.array([flat for _, flat in members], dtype=np.int64)
        expected = list(range(len(members)))
        if [i for i, _ in members] != expected:
            raise DataError(f"node keys for type {t!r} are not contiguous from zero")
        for local, (_, flat) in enumerate(members):
            flat_to_local[flat] = local
        feats: dict[str, ColumnData] = {}
        prefix = f"x_u::{t}::"
        for fname, feat in ns.features.items():
            if fname.startswith(prefix):
                feats[fname[len(prefix):]] = feat.take(idx)
        ts = None
        if ns.timestamps is not None:
            sliced = ns.timestamps[idx]
            ts = None if bool((sliced == NULL_TS).all()) else sliced.copy()
        nodes[t] = NodeSet(count=len(members), features=feats, timestamps=ts,
                           provenance=NodeProvenance(t))

    edges: dict[EdgeType, EdgeSet] = {}
    for etype, es in g.edges.items():
        if es.provenance and es.provenance.reverse:
            continue
        rel_col = es.features.get("e")
        if rel_col is None:
            raise DataError("edge features miss the relation column 'e'")
        rel_dict = rel_col.dictionary or []
        for code, rel in enumerate(rel_dict):
            members = np.flatnonzero(rel_col.values == code).astype(np.int64)
            if len(members) == 0:
                continue
            src_flat = es.src[members]
            dst_flat = es.dst[members]
            src_t = parsed[int(src_flat[0])][0]
            dst_t = parsed[int(dst_flat[0])][0]
            src = np.array([flat_to_local[int(v)] for v in src_flat], dtype=np.int64)
            dst = np.array([flat_to_local[int(v)] for v in dst_flat], dtype=np.int64)
            feats = {}
            prefix = f"z::{rel}::"
            for fname, feat in es.features.items():
                if fname.startswith(prefix):
                    feats[fname[len(prefix):]] = feat.take(members)
            ts = None
            if es.timestamps is not None:
                sliced = es.timestamps[members]
                ts = None if bool((sliced == NULL_TS).all()) else sliced.copy()
            edges[(src_t, rel, dst_t)] = EdgeSet(
                src=src, dst=dst, features=feats, timestamps=ts,
                provenance=EdgeProvenance("table", rel, ()))
    return HeteroGraph(nodes, edges)


def _ts_or_nulls(ts: Optional[np.ndarray], n: int) -> np.ndarray:
    return np.full(n, NULL_TS, dtype=np.int64) if ts is None else ts


def graphs_equal(a: HeteroGraph, b: HeteroGraph) -> bool:
    """Structural equality of the forward parts of two graphs.

    Node types are matched by name and nodes by index (provenance order),
    edges as sets keyed by endpoint pair within each forward edge type.
    Feature columns must agree cell for cell, nulls included.
    """
    if set(a.nodes) != set(b.nodes):
        return False
    for t in a.nodes:
        na, nb = a.nodes[t], b.nodes[t]
        if na.count != nb.count or set(na.features) != set(nb.features):
            return False
        if not np.array_equal(_ts_or_nulls(na.timestamps, na.count),
                              _ts_or_nulls(nb.timestamps, nb.count)):
            return False
        for f in na.features:
            if not na.features[f].equals(nb.features[f]):
                return False
    fwd_a = {et: a.edges[et] for et in a.forward_edge_types()}
    fwd_b = {et: b.edges[et] for et in b.forward_edge_types()}
    if set(fwd_a) != set(fwd_b):
        return False
    for et in fwd_a:
        ea, eb = fwd_a[et], fwd_b[et]
        if len(ea) != len(eb) or set(ea.features) != set(eb.features):
            return False
        perm_a = np.lexsort((ea.dst, ea.src))
        perm_b = np.lexsort((eb.dst, eb.src))
        if not (np.array_equal(ea.src[perm_a], eb.src[perm_b])
                and np.array_equal(ea.dst[perm_a], eb.dst[perm_b])):
            return False
        if not np.array_equal(_ts_or_nulls(ea.timestamps, len(ea))[perm_a],
                              _ts_or_nulls(eb.timestamps, len(eb))[perm_b]):
            return False
        for f in ea.features:
            if not ea.features[f].take(perm_a).equals(eb.features[f].take(perm_b)):
                return False
    return True


def _edge_file_name(etype: EdgeType) -> str:
    return "__".join(etype)


def export_graph(g: HeteroGraph, out_dir: str) -> str:
    """Write a graph directory: a JSON manifest plus binary per-type arrays.

    Node numbering in the arrays equals source row order. Each node type
    file holds the feature columns plus an ``_ts`` datetime column when the
    type is temporal; edge type files add ``_src``/``_dst`` int columns in
    local indices.
    """
    os.makedirs(os.path.join(out_dir, "nodes"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "edges"), exist_ok=True)
    manifest: dict[str, Any] = {"node_types": [], "edge_types": [], "files": {}}
    for t in g.nodes:
        ns = g.nodes[t]
        entry = {"name": t, "count": ns.count,
                 "temporal": ns.timestamps is not None,
                 "provenance": None if ns.provenance is None else vars(ns.provenance)}
        manifest["node_types"].append(entry)
        path = os.path.join("nodes", f"{t}.rdbc")
        manifest["files"][t] = path
        cols: list[tuple[str, ColumnData]] = []
        if ns.timestamps is not None:
            cols.append(("_ts", ColumnData(DATETIME, ns.timestamps)))
        cols.extend(ns.features.items())
        with open(os.path.join(out_dir, path), "wb") as fh:
            rdbc.write_table(fh, cols)
    for etype in g.edges:
        es = g.edges[etype]
        prov = None
        if es.provenance is not None:
            prov = dict(vars(es.provenance))
            prov["columns"] = list(prov["columns"])
        entry = {"triple": list(etype), "count": len(es),
                 "temporal": es.timestamps is not None, "provenance": prov}
        manifest["edge_types"].append(entry)
        path = os.path.join("edges", f"{_edge_file_name(etype)}.rdbc")
        manifest["files"]["/".join(etype)] = path
        cols = [("_src", ColumnData(INT, es.src, mask=np.zeros(len(es), dtype=bool))),
                ("_dst", ColumnData(INT, es.dst, mask=np.zeros(len(es), dtype=bool)))]
        if es.timestamps is not None:
            cols.append(("_ts", ColumnData(DATETIME, es.timestamps)))
        cols.extend(es.features.items())
        with open(os.path.join(out_dir, path), "wb") as fh:
            rdbc.write_table(fh, cols)
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest_path


def load_graph(in_dir: str) -> HeteroGraph:
    """Inverse of :func:`export_graph`."""
    with open(os.path.join(in_dir, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    nodes: dict[str, NodeSet] = {}
    for entry in manifest["node_types"]:
        t = entry["name"]
        with open(os.path.join(in_dir, manifest["files"][t]), "rb") as fh:
            cols = dict(rdbc.read_table(fh))
        ts = cols.pop("_ts", None)
        prov = entry.get("provenance")
        nodes[t] = NodeSet(
            count=entry["count"], features=cols,
            timestamps=None if ts is None else ts.values,
            provenance=None if prov is None else NodeProvenance(**prov),
        )
    edges: dict[EdgeType, EdgeSet] = {}
    for entry in manifest["edge_types"]:
        etype = tuple(entry["triple"])
        with open(os.path.join(in_dir, manifest["files"]["/".join(etype)]), "rb") as fh:
            cols = dict(rdbc.read_table(fh))
        src = cols.pop("_src").values
        dst = cols.pop("_dst").values
        ts = cols.pop("_ts", None)
        prov = entry.get("provenance")
        if prov is not None:
            prov = dict(prov)
            prov["columns"] = tuple(prov["columns"])
        edges[etype] = EdgeSet(  # type: ignore[index]
            src=src, dst=dst, features=cols,
            timestamps=None if ts is None else ts.values,
            provenance=None if prov is None else EdgeProvenance(**prov),
        )
    return HeteroGraph(nodes, edges)
