"""
Synthesizing aggregate features across the schema
==================================================

Feature synthesis walks foreign keys away from a target table. A forward
hop pulls a parent attribute; a reverse hop gathers child rows and reduces
them with an aggregator (MEAN, MIN, MAX for numerics, MODE for categories,
COUNT for sizes). Deeper walks nest: MEAN over orders of the MEAN over each
order's items. With a per-row cutoff column, every aggregate only sees rows
timestamped at or before the instance it describes.
"""

import numpy as np

from rdbflow.dfs import (
    COUNT,
    CutoffRef,
    FeatureSpec,
    Hop,
    MEAN,
    compile_plan,
    emit_sql,
    enumerate_features,
    execute_plan,
)

from demo_data import build_shop

db = build_shop()

# enumeration finds every feature reachable within a hop budget
for depth in (1, 2):
    specs = enumerate_features(db, "customer", depth)
    print(f"depth {depth}: {len(specs)} features for customer")
print("a few depth-2 names:")
for spec in enumerate_features(db, "customer", 2)[5:10]:
    print("   ", spec.output_name)

# executing without a cutoff aggregates over everything; check one value
# by hand: the mean order total of customer 1
specs = enumerate_features(db, "customer", 1)
wide = execute_plan(db, compile_plan(db, "customer", specs))
cust = np.array(db.table("order").columns["customer_id"].to_list())
total = np.array(db.table("order").columns["total"].to_list())
print("\ncustomer 1, MEAN(order.total)")
print("  by hand:   ", float(total[cust == 1].mean()))
print("  synthesized:", wide.columns["MEAN(order.total)"].to_list()[0])

# --- per-row cutoffs ---------------------------------------------------------

# specs are plain data, so you can also write one directly. This path hops
# from each order up to its customer and back down over that customer's
# orders: the classic "history so far" feature. CutoffRef names the column
# on the target table holding each row's cutoff; with it, an order's history
# contains only orders placed at or before it.
path = (Hop("forward", "customer", "customer_id"),
        Hop("reverse", "order", "customer_id"))
hist_mean = FeatureSpec("order", path, ("order", "total"), (MEAN,))
hist_count = FeatureSpec("order", path, ("order", "id"), (COUNT,))
plan = compile_plan(db, "order", [hist_mean, hist_count], CutoffRef("ts"))
out = execute_plan(db, plan)

ts = db.table("order").timestamps()
print(f"\n{hist_mean.output_name} under per-order cutoffs")
row = 100
visible = (cust == cust[row]) & (ts <= ts[row])
print(f"  order row {row}: {int(visible.sum())} of "
      f"{int((cust == cust[row]).sum())} orders by this customer are visible")
print("  by hand:    ", float(total[visible].mean()))
print("  synthesized:", out.columns[hist_mean.output_name].to_list()[row])

# the same plan renders as a single SQL statement, cutoffs included, for
# running inside a warehouse instead of in process
print("\nSQL for the history features (first lines)")
for line in emit_sql(db, plan).splitlines()[:9]:
    print("   ", line)
