"""Deterministic toy retail dataset shared by the walkthrough scripts.

Forty customers place timestamped orders over the first half of 2024. Each
order holds a few line items that point at one of a dozen products, and an
order's total is the sum of its line amounts, so aggregate features computed
over this data have values you can check by hand. Everything derives from a
fixed seed; rerunning a demo prints the same numbers.
"""

from __future__ import annotations

import numpy as np

from rdbflow.columns import (
    CATEGORICAL,
    DATETIME,
    FLOAT,
    FOREIGN_KEY,
    INT,
    PRIMARY_KEY,
    ColumnSpec,
    TableSchema,
)
from rdbflow.database import Database, Table

DAY = 86_400_000  # one day in epoch milliseconds
JAN_1 = 1_704_067_200_000  # 2024-01-01T00:00:00Z


def table(name, cols, cells, time_column=None):
    """cols: list of (name, dtype) or (name, dtype, fk_target) tuples."""
    specs = tuple(
        ColumnSpec(c[0], c[1], fk_target=(c[2] if len(c) > 2 else None),
                   is_time_column=(c[0] == time_column))
        for c in cols)
    return Table.from_cells(TableSchema(name, specs), cells)


def build_shop(n_customers=40, seed=7):
    rng = np.random.default_rng(seed)

    ages = [int(a) if rng.random() > 0.1 else None
            for a in rng.integers(18, 71, size=n_customers)]
    customer = table(
        "customer",
        [("id", PRIMARY_KEY), ("age", INT), ("region", CATEGORICAL)],
        {"id": list(range(1, n_customers + 1)),
         "age": ages,
         "region": [str(r) for r in rng.choice(
             ["north", "south", "east", "west"], size=n_customers)]})

    n_products = 12
    prices = np.round(np.exp(rng.normal(2.0, 0.6, size=n_products)), 2)
    product = table(
        "product",
        [("id", PRIMARY_KEY), ("price", FLOAT), ("category", CATEGORICAL)],
        {"id": list(range(100, 100 + n_products)),
         "price": prices.tolist(),
         "category": [str(c) for c in rng.choice(
             ["food", "tool", "toy"], size=n_products)]})

    order_rows = {"id": [], "customer_id": [], "ts": [], "total": []}
    item_rows = {"id": [], "order_id": [], "product_id": [],
                 "ts": [], "qty": [], "amount": []}
    for cust in range(1, n_customers + 1):
        for _ in range(int(rng.poisson(3)) + 1):
            oid = 1000 + len(order_rows["id"])
            placed = JAN_1 + int(rng.integers(0, 181)) * DAY \
                + int(rng.integers(0, DAY))
            total = 0.0
            for _ in range(int(rng.integers(1, 5))):
                pi = int(rng.integers(0, n_products))
                qty = int(rng.integers(1, 6))
                amount = round(qty * float(prices[pi]), 2)
                total += amount
                item_rows["id"].append(len(item_rows["id"]))
                item_rows["order_id"].append(oid)
                item_rows["product_id"].append(
                    100 + pi if rng.random() > 0.03 else None)
                item_rows["ts"].append(placed + int(rng.integers(0, 3_600_000)))
                item_rows["qty"].append(qty)
                item_rows["amount"].append(amount)
            order_rows["id"].append(oid)
            order_rows["customer_id"].append(cust)
            order_rows["ts"].append(placed)
            order_rows["total"].append(round(total, 2))

    order = table(
        "order",
        [("id", PRIMARY_KEY), ("customer_id", FOREIGN_KEY, ("customer", "id")),
         ("ts", DATETIME), ("total", FLOAT)],
        order_rows, time_column="ts")
    item = table(
        "item",
        [("id", PRIMARY_KEY), ("order_id", FOREIGN_KEY, ("order", "id")),
         ("product_id", FOREIGN_KEY, ("product", "id")),
         ("ts", DATETIME), ("qty", INT), ("amount", FLOAT)],
        item_rows, time_column="ts")

    return Database("shop", {"customer": customer, "product": product,
                             "order": order, "item": item})


if __name__ == "__main__":
    db = build_shop()
    for name, t in db.tables.items():
        print(f"{name}: {t.row_count} rows, "
              f"columns {[c.name for c in t.schema.columns]}")
