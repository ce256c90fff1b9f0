"""Feature synthesis: enumeration, execution, the reference oracle, SQL."""

import sqlite3

import pytest

from rdbflow.columns import (
    CATEGORICAL,
    DATETIME,
    FLOAT,
    FOREIGN_KEY,
    INT,
    KEY_DTYPES,
    PRIMARY_KEY,
    TEXT,
    VECTOR,
    ConfigError,
    SchemaError,
)
from rdbflow.database import Database
from rdbflow.dfs import (
    COUNT,
    MAX,
    MEAN,
    MIN,
    MODE,
    BruteForceDFS,
    CutoffRef,
    FeatureSpec,
    Hop,
    brute_force_dfs,
    compile_plan,
    emit_sql,
    enumerate_features,
    execute_plan,
)

from conftest import make_table, random_database, shop_database


def rev(table, fk):
    return Hop("reverse", table, fk)


def fwd(table, fk):
    return Hop("forward", table, fk)


def cell_match(exp, got):
    if exp is None or got is None:
        return exp is None and got is None
    if isinstance(exp, (list, tuple)) or isinstance(got, (list, tuple)):
        return len(exp) == len(got) and all(cell_match(a, b) for a, b in zip(exp, got))
    if isinstance(exp, float) or isinstance(got, float):
        return got == pytest.approx(exp, rel=1e-9, abs=1e-12)
    return exp == got


def assert_matches_oracle(db, target, specs, out, cutoff=None):
    oracle = BruteForceDFS(db, target, cutoff)
    cols = {s.output_name: out.columns[s.output_name].to_list() for s in specs}
    for row in range(db.table(target).row_count):
        expected = oracle.row(row, specs)
        for spec, exp in zip(specs, expected):
            got = cols[spec.output_name][row]
            assert cell_match(exp, got), (spec.output_name, row, exp, got)


# --- naming and validation -------------------------------------------------


def test_output_names():
    assert FeatureSpec("customer", (rev("order", "customer_id"),),
                       ("order", "total"), (MEAN,)).output_name == "MEAN(order.total)"
    assert FeatureSpec("customer", (rev("order", "customer_id"),),
                       ("order", "customer_id"), (COUNT,)).output_name == "COUNT(order)"
    assert FeatureSpec("item", (fwd("product", "product_id"),),
                       ("product", "price")).output_name == "product.price"
    nested = FeatureSpec(
        "customer", (rev("order", "customer_id"), rev("item", "order_id")),
        ("item", "unit"), (MAX, MEAN))
    assert nested.output_name == "MAX(order.MEAN(item.unit))"
    counted = FeatureSpec(
        "customer", (rev("order", "customer_id"), rev("item", "order_id")),
        ("item", "order_id"), (MEAN, COUNT))
    assert counted.output_name == "MEAN(order.COUNT(item))"
    mixed = FeatureSpec(
        "customer",
        (rev("order", "customer_id"), rev("item", "order_id"),
         fwd("product", "product_id")),
        ("product", "cat"), (MODE, MODE))
    assert mixed.output_name == "MODE(order.MODE(item.product.cat))"


def test_spec_validation():
    with pytest.raises(ConfigError):
        FeatureSpec("customer", (rev("order", "customer_id"),), ("order", "total"))
    with pytest.raises(ConfigError):
        FeatureSpec("customer", (rev("order", "customer_id"),),
                    ("order", "total"), (MEAN, MEAN))
    with pytest.raises(ConfigError):
        FeatureSpec("customer", (rev("order", "customer_id"),),
                    ("order", "total"), ("SUM",))
    with pytest.raises(ConfigError):
        FeatureSpec("customer",
                    (rev("order", "customer_id"), rev("item", "order_id")),
                    ("item", "order_id"), (COUNT, MEAN))
    with pytest.raises(ConfigError):
        FeatureSpec("item", (fwd("product", "product_id"),),
                    ("product", "product_id"), (COUNT,))
    with pytest.raises(ConfigError):
        Hop("sideways", "order", "customer_id")


# --- enumeration -----------------------------------------------------------


def test_enumerate_depth0(shop_db):
    specs = enumerate_features(shop_db, "customer", 0)
    assert [s.output_name for s in specs] == ["age", "tier", "bio"]
    assert all(s.hops == () and s.aggregators == () for s in specs)


def test_enumerate_depth1_reverse_only(shop_db):
    specs = enumerate_features(shop_db, "customer", 1)
    assert [s.output_name for s in specs] == [
        "age", "tier", "bio",
        "MEAN(order.total)", "MIN(order.total)", "MAX(order.total)",
        "COUNT(order)"]


def test_enumerate_depth1_forward_only(shop_db):
    specs = enumerate_features(shop_db, "item", 1)
    assert [s.output_name for s in specs] == [
        "ts", "qty", "unit",
        "order.ts", "order.total",
        "product.price", "product.cat"]


def test_enumerate_depth_growth_and_pruning(shop_db):
    d2 = enumerate_features(shop_db, "customer", 2)
    names = [s.output_name for s in d2]
    assert len(d2) == 28  # 7 at depth 1, plus 9 qty + 9 unit + 3 count chains
    assert "MEAN(order.MEAN(item.qty))" in names
    assert "MAX(order.COUNT(item))" in names
    # the path reverse into order then forward back through the same key
    # would return to the customer; it must be pruned
    for s in d2:
        assert not any(h.direction == "forward" and h.table == "customer"
                       for h in s.hops)
    d3 = enumerate_features(shop_db, "customer", 3)
    assert len(d3) == 38  # adds 9 price chains and MODE(MODE(cat))
    assert "MODE(order.MODE(item.product.cat))" in [s.output_name for s in d3]


def test_enumerate_prefix_property(shop_db):
    prev = enumerate_features(shop_db, "customer", 0)
    for depth in (1, 2, 3):
        cur = enumerate_features(shop_db, "customer", depth)
        assert cur[:len(prev)] == prev
        prev = cur


def test_enumerate_depth_limits(shop_db):
    with pytest.raises(ConfigError):
        enumerate_features(shop_db, "customer", -1)
    with pytest.raises(ConfigError):
        enumerate_features(shop_db, "customer", 5)
    deep = enumerate_features(shop_db, "customer", 5, max_depth=5)
    # paths die out at depth 3, so raising the cap adds nothing
    assert deep == enumerate_features(shop_db, "customer", 3)


def test_enumerate_max_features_truncates(shop_db):
    full = enumerate_features(shop_db, "customer", 2)
    cut = enumerate_features(shop_db, "customer", 2, max_features=10)
    assert cut == full[:10]


def test_enumerate_aggregator_subset(shop_db):
    specs = enumerate_features(shop_db, "customer", 1, aggregators=(MEAN, COUNT))
    assert [s.output_name for s in specs] == [
        "age", "tier", "bio", "MEAN(order.total)", "COUNT(order)"]
    with pytest.raises(ConfigError):
        enumerate_features(shop_db, "customer", 1, aggregators=("SUM",))


def transfers_database():
    acct = make_table(
        "acct", [("id", PRIMARY_KEY), ("balance", FLOAT)],
        {"id": [1, 2], "balance": [10.0, 20.0]})
    txn = make_table(
        "txn", [("id", PRIMARY_KEY), ("src_id", FOREIGN_KEY, ("acct", "id")),
                ("dst_id", FOREIGN_KEY, ("acct", "id")), ("amount", FLOAT)],
        {"id": [1, 2, 3], "src_id": [1, 1, 2], "dst_id": [2, 2, 1],
         "amount": [5.0, 7.0, 100.0]})
    return Database("bank", {"acct": acct, "txn": txn})


def test_parallel_foreign_keys_get_distinct_names():
    # two FKs from txn to acct are two different relationships; each side
    # of the transfer must come out as its own feature, not a collision
    db = transfers_database()
    rev_specs = enumerate_features(db, "acct", 1, aggregators=(MEAN, COUNT))
    names = [s.output_name for s in rev_specs]
    assert names == ["balance",
                     "MEAN(txn[src_id].amount)", "COUNT(txn[src_id])",
                     "MEAN(txn[dst_id].amount)", "COUNT(txn[dst_id])"]
    fwd_specs = enumerate_features(db, "txn", 1)
    fwd_names = [s.output_name for s in fwd_specs]
    assert "acct[src_id].balance" in fwd_names
    assert "acct[dst_id].balance" in fwd_names

    out = execute_plan(db, compile_plan(db, "acct", rev_specs))
    assert cell_match([6.0, 100.0],
                      out.columns["MEAN(txn[src_id].amount)"].to_list())
    assert cell_match([100.0, 6.0],
                      out.columns["MEAN(txn[dst_id].amount)"].to_list())
    assert out.columns["COUNT(txn[src_id])"].to_list() == [2, 1]
    assert out.columns["COUNT(txn[dst_id])"].to_list() == [1, 2]
    assert_matches_oracle(db, "acct", rev_specs, out)

    deep = enumerate_features(db, "acct", 2)
    deep_names = [s.output_name for s in deep]
    assert len(set(deep_names)) == len(deep_names)


# --- execution against the oracle -------------------------------------------


def test_execute_depth0_returns_target_schema(shop_db):
    plan = compile_plan(shop_db, "customer",
                        enumerate_features(shop_db, "customer", 0))
    out = execute_plan(shop_db, plan)
    assert out.schema == shop_db.table("customer").schema
    assert out.equals(shop_db.table("customer"))


def test_execute_hand_values(shop_db):
    specs = [
        FeatureSpec("customer", (rev("order", "customer_id"),),
                    ("order", "total"), (MEAN,)),
        FeatureSpec("customer", (rev("order", "customer_id"),),
                    ("order", "customer_id"), (COUNT,)),
    ]
    out = execute_plan(shop_db, compile_plan(shop_db, "customer", specs))
    means = out.columns["MEAN(order.total)"].to_list()
    counts = out.columns["COUNT(order)"].to_list()
    # customer 1 has totals 5 and 7; customer 3's single order has a null
    # total; customer 4 has no orders at all
    assert cell_match([6.0, 3.0, None, None], means)
    assert counts == [2, 1, 1, 0]


def test_execute_matches_oracle_no_cutoff(shop_db):
    for target in ("customer", "item", "order", "product"):
        specs = enumerate_features(shop_db, target, 3)
        out = execute_plan(shop_db, compile_plan(shop_db, target, specs))
        assert_matches_oracle(shop_db, target, specs, out)


def customer_with_asof():
    db = shop_database()
    customer = make_table(
        "customer",
        [("id", PRIMARY_KEY), ("age", INT), ("tier", CATEGORICAL),
         ("bio", TEXT), ("asof", DATETIME)],
        {"id": [1, 2, 3, 4],
         "age": [34, None, 51, 28],
         "tier": ["gold", "silver", "gold", None],
         "bio": ["likes cheese", None, "", "hi"],
         "asof": ["2024-01-15T00:00:00", None, "2024-02-05T00:00:00",
                  "2024-01-01T00:00:00"]})
    tables = dict(db.tables)
    tables["customer"] = customer
    return Database("shop", tables)


def test_execute_matches_oracle_with_cutoff():
    db = customer_with_asof()
    specs = enumerate_features(db, "customer", 3)
    cutoff = CutoffRef("asof")
    plan = compile_plan(db, "customer", specs, cutoff=cutoff)
    out = execute_plan(db, plan)
    assert_matches_oracle(db, "customer", specs, out, cutoff=cutoff)
    # spot checks: the 2024-01-15 cutoff hides customer 1's February order,
    # and the null cutoff leaves customer 2 unbounded
    counts = out.columns["COUNT(order)"].to_list()
    assert counts == [1, 1, 1, 0]
    means = out.columns["MEAN(order.total)"].to_list()
    assert cell_match([5.0, 3.0, None, None], means)


def test_forward_hop_respects_cutoff():
    sess = make_table(
        "sess", [("id", PRIMARY_KEY), ("ts", DATETIME), ("val", FLOAT)],
        {"id": [1], "ts": [10], "val": [3.5]}, time_column="ts")
    evt = make_table(
        "evt", [("id", PRIMARY_KEY), ("sess_id", FOREIGN_KEY, ("sess", "id")),
                ("ts", DATETIME)],
        {"id": [1, 2], "sess_id": [1, 1], "ts": [5, 20]}, time_column="ts")
    db = Database("log", {"sess": sess, "evt": evt})
    spec = FeatureSpec("evt", (fwd("sess", "sess_id"),), ("sess", "val"))
    cutoff = CutoffRef("ts")
    out = execute_plan(db, compile_plan(db, "evt", [spec], cutoff=cutoff))
    # the first event happens before its session row exists, so the joined
    # value must be null rather than leaked from the future
    assert cell_match([None, 3.5], out.columns["sess.val"].to_list())
    for row in range(2):
        assert cell_match(brute_force_dfs(db, "evt", [spec], row, cutoff=cutoff),
                          [out.columns["sess.val"].to_list()[row]])


def test_mode_tie_breaks_to_lexicographically_smallest():
    team = make_table("team", [("id", PRIMARY_KEY)], {"id": [1, 2]})
    player = make_table(
        "player", [("id", PRIMARY_KEY), ("team_id", FOREIGN_KEY, ("team", "id")),
                   ("role", CATEGORICAL)],
        {"id": [1, 2, 3, 4, 5], "team_id": [1, 1, 2, 2, 2],
         "role": ["b", "a", "b", "b", "a"]})
    db = Database("league", {"team": team, "player": player})
    spec = FeatureSpec("team", (rev("player", "team_id"),), ("player", "role"),
                       (MODE,))
    out = execute_plan(db, compile_plan(db, "team", [spec]))
    assert out.columns["MODE(player.role)"].to_list() == ["a", "b"]


def test_vector_aggregation():
    p = make_table("p", [("id", PRIMARY_KEY)], {"id": [1, 2]})
    c = make_table(
        "c", [("id", PRIMARY_KEY), ("p_id", FOREIGN_KEY, ("p", "id")),
              ("v", VECTOR, None, 2)],
        {"id": [1, 2, 3, 4], "p_id": [1, 1, 1, 2],
         "v": [[1.0, 2.0], [3.0, 4.0], None, None]})
    db = Database("vec", {"p": p, "c": c})
    specs = [FeatureSpec("p", (rev("c", "p_id"),), ("c", "v"), (agg,))
             for agg in (MEAN, MIN, MAX)]
    out = execute_plan(db, compile_plan(db, "p", specs))
    assert cell_match([[2.0, 3.0], None], out.columns["MEAN(c.v)"].to_list())
    assert cell_match([[1.0, 2.0], None], out.columns["MIN(c.v)"].to_list())
    assert cell_match([[3.0, 4.0], None], out.columns["MAX(c.v)"].to_list())
    assert_matches_oracle(db, "p", specs, out)


def test_execute_matches_oracle_random_databases():
    for seed in range(8):
        db = random_database(seed, max_rows=300)
        specs = enumerate_features(db, "t0", 2)[:60]
        cutoff = CutoffRef("ts")
        out = execute_plan(db, compile_plan(db, "t0", specs, cutoff=cutoff))
        assert_matches_oracle(db, "t0", specs, out, cutoff=cutoff)


def test_threaded_execution_matches_serial(shop_db):
    specs = enumerate_features(shop_db, "customer", 3)
    plan = compile_plan(shop_db, "customer", specs)
    serial = execute_plan(shop_db, plan, threads=1)
    threaded = execute_plan(shop_db, plan, threads=4)
    assert threaded.schema == serial.schema
    for name in serial.columns:
        assert threaded.columns[name].equals(serial.columns[name]), name


def test_execute_is_deterministic_and_read_only(shop_db):
    before = shop_database()
    specs = enumerate_features(shop_db, "customer", 2)
    plan = compile_plan(shop_db, "customer", specs)
    a = execute_plan(shop_db, plan)
    b = execute_plan(shop_db, plan)
    assert a.equals(b)
    assert shop_db.equals(before)


def test_compile_plan_validation(shop_db):
    spec = FeatureSpec("order", (), ("order", "total"))
    with pytest.raises(ConfigError):
        compile_plan(shop_db, "customer", [spec])
    with pytest.raises(ConfigError):
        compile_plan(shop_db, "customer", [], cutoff=CutoffRef("age"))
    with pytest.raises(SchemaError):
        compile_plan(shop_db, "customer", [], cutoff=CutoffRef("missing"))


def test_plan_groups_specs_by_path(shop_db):
    specs = enumerate_features(shop_db, "customer", 2)
    plan = compile_plan(shop_db, "customer", specs)
    paths = [stage.path for stage in plan.stages]
    assert len(paths) == len(set(paths))
    assert list(plan.specs) == specs
    deep = [stage for stage in plan.stages if len(stage.path) == 2]
    assert deep and deep[0].cutoff_predicates == (("order", "ts"), ("item", "ts"))


# --- SQL emission ------------------------------------------------------------


SQLITE_TYPES = {FLOAT: "REAL", INT: "INTEGER", DATETIME: "INTEGER",
                CATEGORICAL: "TEXT", TEXT: "TEXT"}


def load_sqlite(conn, db):
    for tname, table in db.tables.items():
        defs = []
        for cs in table.schema.columns:
            sql_t = "INTEGER" if cs.dtype in KEY_DTYPES else SQLITE_TYPES[cs.dtype]
            defs.append(f'"{cs.name}" {sql_t}')
        conn.execute(f'CREATE TABLE "{tname}" ({", ".join(defs)})')
        names = [cs.name for cs in table.schema.columns]
        rows = list(zip(*[table.columns[n].to_list() for n in names]))
        marks = ", ".join("?" * len(names))
        cols = ", ".join(f'"{n}"' for n in names)
        conn.executemany(
            f'INSERT INTO "{tname}" ({cols}) VALUES ({marks})', rows)


def assert_sql_matches_executor(db, target, specs, cutoff=None):
    plan = compile_plan(db, target, specs, cutoff=cutoff)
    out = execute_plan(db, plan)
    sql = emit_sql(db, plan)
    conn = sqlite3.connect(":memory:")
    load_sqlite(conn, db)
    cursor = conn.execute(sql)
    names = [d[0] for d in cursor.description]
    pk = db.table(target).schema.primary_key
    by_id = {row[names.index(pk)]: dict(zip(names, row)) for row in cursor}
    ids = out.columns[pk].to_list()
    for spec in specs:
        name = spec.output_name
        got = out.columns[name].to_list()
        for row, pk_value in enumerate(ids):
            assert cell_match(got[row], by_id[pk_value][name]), (name, pk_value)
    conn.close()


def test_sql_matches_executor_depth1(shop_db):
    specs = [
        FeatureSpec("customer", (rev("order", "customer_id"),),
                    ("order", "total"), (agg,)) for agg in (MEAN, MIN, MAX)
    ] + [FeatureSpec("customer", (rev("order", "customer_id"),),
                     ("order", "customer_id"), (COUNT,))]
    assert_sql_matches_executor(shop_db, "customer", specs)


def test_sql_matches_executor_nested_with_cutoff():
    db = customer_with_asof()
    specs = [
        FeatureSpec("customer", (rev("order", "customer_id"),),
                    ("order", "total"), (MEAN,)),
        FeatureSpec("customer", (rev("order", "customer_id"),),
                    ("order", "customer_id"), (COUNT,)),
        FeatureSpec("customer",
                    (rev("order", "customer_id"), rev("item", "order_id")),
                    ("item", "unit"), (MAX, MEAN)),
        FeatureSpec("customer",
                    (rev("order", "customer_id"), rev("item", "order_id")),
                    ("item", "order_id"), (MEAN, COUNT)),
        FeatureSpec("customer",
                    (rev("order", "customer_id"), rev("item", "order_id"),
                     fwd("product", "product_id")),
                    ("product", "cat"), (MODE, MODE)),
        FeatureSpec("customer", (), ("customer", "age")),
    ]
    assert_sql_matches_executor(db, "customer", specs, cutoff=CutoffRef("asof"))


def test_sql_matches_executor_forward(shop_db):
    specs = [FeatureSpec("item", (fwd("product", "product_id"),),
                         ("product", "price")),
             FeatureSpec("item", (fwd("order", "order_id"),),
                         ("order", "total"))]
    assert_sql_matches_executor(shop_db, "item", specs)


def test_sql_mode_tie_matches_executor():
    team = make_table("team", [("id", PRIMARY_KEY)], {"id": [1, 2]})
    player = make_table(
        "player", [("id", PRIMARY_KEY), ("team_id", FOREIGN_KEY, ("team", "id")),
                   ("role", CATEGORICAL)],
        {"id": [1, 2, 3, 4, 5], "team_id": [1, 1, 2, 2, 2],
         "role": ["b", "a", "b", "b", "a"]})
    db = Database("league", {"team": team, "player": player})
    spec = FeatureSpec("team", (rev("player", "team_id"),), ("player", "role"),
                       (MODE,))
    assert_sql_matches_executor(db, "team", [spec])


def test_sql_empty_plan_selects_target(shop_db):
    plan = compile_plan(shop_db, "customer", [])
    sql = emit_sql(shop_db, plan)
    assert sql == 'SELECT * FROM "customer"'
    conn = sqlite3.connect(":memory:")
    load_sqlite(conn, shop_db)
    assert len(conn.execute(sql).fetchall()) == 4
    conn.close()


def test_sql_rejects_unknown_dialect(shop_db):
    plan = compile_plan(shop_db, "customer", [])
    with pytest.raises(ConfigError):
        emit_sql(shop_db, plan, dialect="postgres")
