"""Graph extraction, the single-table encoding, and cycle consistency."""

import tempfile

import numpy as np
import pytest

from rdbflow.columns import (
    FLOAT,
    FOREIGN_KEY,
    PRIMARY_KEY,
    ColumnData,
    DataError,
)
from rdbflow.database import Database, validate_database
from rdbflow.graph import (
    EdgeSet,
    HeteroGraph,
    NodeSet,
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

from conftest import link_database, make_table, random_graph


def test_row2node_shapes(shop_db):
    g = row2node(shop_db)
    assert sorted(g.nodes) == ["customer", "item", "order", "product"]
    assert {t: g.nodes[t].count for t in g.nodes} == {
        "customer": 4, "product": 3, "order": 5, "item": 6}
    forward = {et for et in g.edges if not et[1].endswith("_rev")}
    assert forward == {
        ("order", "order.customer_id", "customer"),
        ("item", "item.order_id", "order"),
        ("item", "item.product_id", "product")}
    # null FKs produce no edge: one null customer_id, one null product_id
    assert len(g.edges[("order", "order.customer_id", "customer")]) == 4
    assert len(g.edges[("item", "item.product_id", "product")]) == 5
    assert len(g.edges[("item", "item.order_id", "order")]) == 6


def test_row2node_reverse_edges_mirror(shop_db):
    g = row2node(shop_db)
    for (s, rel, d), es in g.edges.items():
        if rel.endswith("_rev"):
            continue
        rev = g.edges[(d, rel + "_rev", s)]
        assert np.array_equal(es.src, rev.dst)
        assert np.array_equal(es.dst, rev.src)


def test_row2node_time_column_is_feature_and_timestamp(shop_db):
    g = row2node(shop_db)
    order = g.nodes["order"]
    assert order.timestamps is not None
    assert "ts" in order.features
    assert np.array_equal(order.features["ts"].values, order.timestamps)


def test_row2node_conservation(shop_db):
    g = row2node(shop_db)
    assert sum(ns.count for ns in g.nodes.values()) == sum(
        t.row_count for t in shop_db.tables.values())


def test_row2node_rejects_invalid_database():
    child = make_table(
        "c", [("id", PRIMARY_KEY), ("p_id", FOREIGN_KEY, ("p", "id"))],
        {"id": [1], "p_id": [9]})
    parent = make_table("p", [("id", PRIMARY_KEY)], {"id": [1]})
    with pytest.raises(DataError):
        row2node(Database("bad", {"p": parent, "c": child}))


def test_row2nve_link_table_becomes_edges(link_db):
    g = row2nve(link_db)
    assert sorted(g.nodes) == ["page", "user"]
    et = ("user", "view", "page")
    assert et in g.edges
    es = g.edges[et]
    # the row with a null user_id is dropped and counted
    assert len(es) == 3
    assert es.provenance is not None and es.provenance.dropped_rows == 1
    assert es.provenance.kind == "table"
    assert "dwell" in es.features
    assert es.timestamps is not None
    assert ("page", "view_rev", "user") in g.edges


def test_row2nve_equals_row2node_without_link_tables(shop_db):
    # every shop table has a primary key, so the extractors agree
    assert graphs_equal(row2nve(shop_db), row2node(shop_db))


def test_row2nve_pk_link_table_stays_a_node():
    db = link_database()
    view = db.table("view")
    cols = [("id", PRIMARY_KEY)] + [
        (c.name, c.dtype, c.fk_target) for c in view.schema.columns]
    cells = {"id": [0, 1, 2, 3]}
    cells.update({c.name: view.columns[c.name].to_list() for c in view.schema.columns})
    db2 = Database("weblog", {
        "user": db.table("user"), "page": db.table("page"),
        "view": make_table("view", cols, cells, time_column="ts")})
    g = row2nve(db2)
    assert "view" in g.nodes


def test_row2nve_three_fk_table_falls_back_to_node():
    a = make_table("a", [("id", PRIMARY_KEY)], {"id": [1]})
    b = make_table("b", [("id", PRIMARY_KEY)], {"id": [2]})
    c = make_table("c", [("id", PRIMARY_KEY)], {"id": [3]})
    hyper = make_table(
        "h",
        [("a_id", FOREIGN_KEY, ("a", "id")), ("b_id", FOREIGN_KEY, ("b", "id")),
         ("c_id", FOREIGN_KEY, ("c", "id"))],
        {"a_id": [1], "b_id": [2], "c_id": [3]})
    g = row2nve(Database("hyper", {"a": a, "b": b, "c": c, "h": hyper}))
    assert "h" in g.nodes


def test_row2nve_conservation(link_db):
    g = row2nve(link_db)
    node_total = sum(ns.count for ns in g.nodes.values())
    table_edge_total = sum(
        len(es) for et, es in g.edges.items()
        if es.provenance and es.provenance.kind == "table" and not es.provenance.reverse)
    dropped = sum(
        es.provenance.dropped_rows for es in g.edges.values()
        if es.provenance and es.provenance.kind == "table" and not es.provenance.reverse)
    row_total = sum(t.row_count for t in link_db.tables.values())
    assert node_total + table_edge_total == row_total - dropped


def test_star_expand_recovers_row2node(link_db):
    # strip the null-FK row so no information is lost at the edge conversion
    view = link_db.table("view")
    keep = [0, 1, 2]
    cells = {c.name: [view.columns[c.name].to_list()[i] for i in keep]
             for c in view.schema.columns}
    cols = [(c.name, c.dtype, c.fk_target) for c in view.schema.columns]
    clean = Database("weblog", {
        "user": link_db.table("user"), "page": link_db.table("page"),
        "view": make_table("view", cols, cells, time_column="ts")})
    assert graphs_equal(star_expand(row2nve(clean)), row2node(clean))


def test_star_expand_without_table_edges_is_identity(shop_db):
    g = row2node(shop_db)
    assert graphs_equal(star_expand(g), g)


def test_encode_rejects_duplicate_triplets():
    nodes = {"t": NodeSet(count=2, features={})}
    src = np.array([0, 0], dtype=np.int64)
    dst = np.array([1, 1], dtype=np.int64)
    g = HeteroGraph(nodes=nodes, edges={("t", "r", "t"): EdgeSet(src=src, dst=dst)})
    with pytest.raises(DataError):
        encode_graph_as_table(g)


def test_encode_keeps_isolated_nodes():
    nodes = {"t": NodeSet(count=3, features={
        "x": ColumnData(FLOAT, np.array([1.0, 2.0, 3.0]))})}
    g = HeteroGraph(nodes=nodes, edges={("t", "r", "t"): EdgeSet(
        src=np.array([0], dtype=np.int64), dst=np.array([1], dtype=np.int64))})
    db = encode_graph_as_table(g)
    (table,) = db.tables.values()
    assert table.row_count == 2  # one edge row plus one isolated-node row
    norm = normalize_2nf(db)
    assert norm.table("nodes").row_count == 3
    assert norm.table("links").row_count == 1


def test_normalize_2nf_shapes():
    rng = np.random.default_rng(11)
    g = random_graph(rng, max_nodes=30)
    db = normalize_2nf(encode_graph_as_table(g))
    assert sorted(db.tables) == ["links", "nodes"]
    assert validate_database(db) == []
    links = db.table("links")
    assert links.schema.primary_key is None
    assert [c.name for c in links.schema.foreign_keys] == ["u", "w"]


def test_cycle_recovers_original_and_row2node_gains_one_type():
    rng = np.random.default_rng(2)
    for trial in range(6):
        g0 = random_graph(rng)
        db = normalize_2nf(encode_graph_as_table(g0))
        g1 = row2nve(db)
        keys = db.table("nodes").columns["u"].to_list()
        g2 = split_by_type_keys(g1, keys)
        assert graphs_equal(g0, g2), trial
        assert not graphs_equal(g0, g1)
        extra = row2node(db)
        assert len(extra.nodes) == 2  # nodes + the spurious edge-row type
        assert graphs_equal(star_expand(g1), extra), trial


def test_graphs_equal_detects_perturbations(shop_db):
    base = row2node(shop_db)
    assert graphs_equal(base, row2node(shop_db))

    dropped = row2node(shop_db)
    dropped.edges.pop(("item", "item.product_id", "product"))
    dropped.edges.pop(("product", "item.product_id_rev", "item"))
    assert not graphs_equal(base, dropped)

    shifted = row2node(shop_db)
    shifted.nodes["order"].timestamps[0] += 1
    assert not graphs_equal(base, shifted)

    renamed = row2node(shop_db)
    feats = renamed.nodes["customer"].features
    feats["years"] = feats.pop("age")
    assert not graphs_equal(base, renamed)


def test_export_load_roundtrip_random():
    rng = np.random.default_rng(4)
    for trial in range(4):
        g = random_graph(rng, max_nodes=40)
        with tempfile.TemporaryDirectory() as d:
            export_graph(g, d)
            g2 = load_graph(d)
            assert graphs_equal(g, g2), trial


def test_single_table_no_fk_graph(shop_db):
    db = Database("solo", {"customer": shop_db.table("customer")})
    g = row2node(db)
    assert list(g.nodes) == ["customer"]
    assert g.edges == {}
