"""Column transform steps: fit, apply, replay."""

from datetime import datetime, timezone

import numpy as np
import pytest

from rdbflow.columns import (
    CATEGORICAL,
    DATETIME,
    FLOAT,
    FOREIGN_KEY,
    INT,
    PRIMARY_KEY,
    TEXT,
    ConfigError,
    SchemaError,
)
from rdbflow.database import Database, validate_database
from rdbflow.transform import (
    TransformConfig,
    TransformStep,
    apply_transforms,
    hash_text,
)

from conftest import make_table, shop_database


def _config(*steps):
    return TransformConfig(tuple(TransformStep(k, t, dict(p)) for k, t, p in steps))


def test_normalize_numeric_hand_values():
    t = make_table("m", [("x", FLOAT)], {"x": [2.0, 4.0, 6.0]})
    db = Database("d", {"m": t})
    out = apply_transforms(db, _config(("normalize_numeric", "m.x", {})))
    got = out.table("m").columns["x"].to_list()
    want = [-1.2247, 0.0, 1.2247]
    for g, w in zip(got, want):
        assert g == pytest.approx(w, abs=1e-4)


def test_normalize_zero_variance_gives_zeros_and_nulls_stay():
    t = make_table("m", [("x", FLOAT)], {"x": [5.0, 5.0, None]})
    db = Database("d", {"m": t})
    out = apply_transforms(db, _config(("normalize_numeric", "m.x", {})))
    assert out.table("m").columns["x"].to_list() == [0.0, 0.0, None]


def test_normalize_replay_uses_fitted_parameters():
    fit_db = Database("d", {"m": make_table("m", [("x", FLOAT)], {"x": [2.0, 4.0, 6.0]})})
    cfg = _config(("normalize_numeric", "m.x", {}))
    fitted = apply_transforms(fit_db, cfg).metadata["fitted_transforms"]
    new_db = Database("d", {"m": make_table("m", [("x", FLOAT)], {"x": [4.0, 8.0]})})
    out = apply_transforms(new_db, cfg, fitted=fitted)
    # mean 4, std ~1.633 from the fit slice, not refit on [4, 8]
    got = out.table("m").columns["x"].to_list()
    assert got[0] == pytest.approx(0.0, abs=1e-9)
    assert got[1] == pytest.approx(4.0 / np.std([2.0, 4.0, 6.0]), abs=1e-9)


def test_index_categorical_sorted_and_unseen_maps_to_null():
    fit_db = Database("d", {"m": make_table("m", [("c", TEXT)],
                                            {"c": ["pear", "apple", "pear"]})})
    cfg = _config(("index_categorical", "m.c", {}))
    out = apply_transforms(fit_db, cfg)
    col = out.table("m").columns["c"]
    assert col.dtype == CATEGORICAL
    assert col.dictionary == ["apple", "pear"]
    fitted = out.metadata["fitted_transforms"]
    new_db = Database("d", {"m": make_table("m", [("c", TEXT)],
                                            {"c": ["apple", "kiwi"]})})
    replayed = apply_transforms(new_db, cfg, fitted=fitted).table("m").columns["c"]
    assert replayed.to_list() == ["apple", None]


def test_expand_datetime_matches_calendar_oracle():
    rng = np.random.default_rng(5)
    epochs = [int(v) for v in rng.integers(0, 2_000_000_000, size=40)]
    cells = {"ts": [e * 1000 for e in epochs]}
    db = Database("d", {"m": make_table("m", [("ts", DATETIME)], cells)})
    out = apply_transforms(db, _config(("expand_datetime", "m.ts", {})))
    m = out.table("m")
    for i, e in enumerate(epochs):
        dt = datetime.fromtimestamp(e, tz=timezone.utc)
        assert m.columns["ts_year"].values[i] == dt.year
        assert m.columns["ts_month"].values[i] == dt.month
        assert m.columns["ts_day"].values[i] == dt.day
        assert m.columns["ts_weekday"].values[i] == dt.weekday()
        assert m.columns["ts_hour"].values[i] == dt.hour


def test_expand_datetime_null_propagates():
    db = Database("d", {"m": make_table("m", [("ts", DATETIME)], {"ts": [None]})})
    out = apply_transforms(db, _config(("expand_datetime", "m.ts", {})))
    assert out.table("m").columns["ts_year"].to_list() == [None]


def test_hash_text_frozen_golden_values():
    assert hash_text("alpha", 16, 0) == 14
    assert hash_text("beta", 16, 0) == 14
    assert hash_text("alpha", 16, 1) == 3
    assert hash_text("", 16, 0) == 0
    assert hash_text("alpha", 4, 0) == 2
    assert hash_text("longer text value", 1000, 7) == 807


def test_hash_text_step_buckets_are_lexicographic():
    db = Database("d", {"m": make_table("m", [("t", TEXT)],
                                        {"t": ["alpha", "beta", None]})})
    out = apply_transforms(db, _config(("hash_text", "m.t", {"buckets": 16, "seed": 0})))
    col = out.table("m").columns["t"]
    assert col.dtype == CATEGORICAL
    assert col.to_list() == ["14", "14", None]
    # zero padding keeps dictionary order consistent with numeric order
    assert all(len(v) == len(col.dictionary[0]) for v in col.dictionary)


def test_impute_mean_and_indicator():
    db = Database("d", {"m": make_table("m", [("x", FLOAT), ("n", INT)],
                                        {"x": [1.0, None, 3.0], "n": [1, None, 2]})})
    out = apply_transforms(db, _config(("impute", "m.x", {}), ("impute", "m.n", {})))
    m = out.table("m")
    assert m.columns["x"].to_list() == [1.0, 2.0, 3.0]
    assert m.columns["x_missing"].to_list() == [0, 1, 0]
    assert m.columns["n"].to_list() == [1, 2, 2]  # int mean rounds


def test_impute_mode_for_categorical():
    db = Database("d", {"m": make_table("m", [("c", CATEGORICAL)],
                                        {"c": ["b", "a", None, "a"]})})
    out = apply_transforms(db, _config(("impute", "m.c", {"strategy": "mode"})))
    assert out.table("m").columns["c"].to_list() == ["b", "a", "a", "a"]


def test_make_dummy_table_rewrites_to_foreign_keys():
    db = Database("d", {
        "post": make_table("post", [("id", PRIMARY_KEY), ("user", TEXT)],
                           {"id": [1, 2, 3], "user": ["bob", "amy", "bob"]}),
        "like": make_table("like", [("id", PRIMARY_KEY), ("user", TEXT)],
                           {"id": [9], "user": ["cid"]})})
    out = apply_transforms(db, _config(
        ("make_dummy_table", "*.user", {"new_table": "user"})))
    assert "user" in out.tables
    users = out.table("user")
    assert users.columns["id"].to_list() == ["amy", "bob", "cid"]
    post_user = out.table("post").schema.column("user")
    assert post_user.dtype == FOREIGN_KEY
    assert post_user.fk_target == ("user", "id")
    assert validate_database(out) == []


def test_drop_column_refuses_referenced_primary_key(shop_db):
    with pytest.raises(SchemaError):
        apply_transforms(shop_db, _config(("drop_column", "customer.id", {})))
    out = apply_transforms(shop_db, _config(("drop_column", "customer.bio", {})))
    assert not out.table("customer").schema.has_column("bio")


def test_unknown_step_kind_rejected():
    with pytest.raises(ConfigError):
        TransformStep("frobnicate", "*.*", {})
    with pytest.raises(ConfigError):
        TransformConfig.from_dict({"steps": [], "extra": 1})
    with pytest.raises(ConfigError):
        TransformStep("impute", "*.*", {"bogus": 1})


def test_apply_does_not_mutate_input(shop_db):
    before = shop_db.table("order").columns["total"].to_list()
    apply_transforms(shop_db, _config(("normalize_numeric", "order.total", {})))
    assert shop_db.table("order").columns["total"].to_list() == before


def test_glob_targets_match_deterministically(shop_db):
    out = apply_transforms(shop_db, _config(("normalize_numeric", "*.total", {})))
    fitted = out.metadata["fitted_transforms"]
    assert list(fitted[0]["columns"]) == ["order.total"]


def test_canonicalize_keys_unifies_domains():
    db = Database("d", {
        "p": make_table("p", [("id", PRIMARY_KEY)], {"id": [" 1", "2 "]}),
        "c": make_table("c", [("id", PRIMARY_KEY), ("p_id", FOREIGN_KEY, ("p", "id"))],
                        {"id": [7, 8], "p_id": ["1", "2"]})})
    out = apply_transforms(db, _config(("canonicalize_keys", "p.id", {})))
    assert validate_database(out) == []
    assert out.table("p").columns["id"].to_list() == out.table("c").columns["p_id"].to_list()
