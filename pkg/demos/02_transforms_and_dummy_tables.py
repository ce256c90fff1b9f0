"""
Schema transforms and pseudo-key promotion
===========================================

Transforms rewrite a database before anything downstream sees it. Each step
targets columns by a ``table.column`` glob; steps that learn parameters
(means, category dictionaries) record them so the same fit can be replayed
on fresh data, the usual train-then-serve arrangement.
"""

import numpy as np

from rdbflow.columns import FOREIGN_KEY, FLOAT, INT, PRIMARY_KEY
from rdbflow.database import Database
from rdbflow.transform import TransformConfig, TransformStep, apply_transforms

from demo_data import build_shop, table

# --- learned steps: normalize and impute -----------------------------------

db = build_shop()
config = TransformConfig((
    TransformStep("impute", "customer.age", {"strategy": "mean"}),
    TransformStep("normalize_numeric", "order.total"),
))
out = apply_transforms(db, config)

ages = out.table("customer").columns["age"].to_list()
totals = np.array(out.table("order").columns["total"].to_list())
print("after impute:    customer.age nulls =", ages.count(None))
print(f"after normalize: order.total mean = {totals.mean():+.2e}, "
      f"std = {totals.std():.3f}")

# the fitted parameters ride along in database metadata; replaying them on
# other data applies the original center and scale instead of refitting
fitted = out.metadata["fitted_transforms"]
print("fitted record for normalize_numeric:",
      fitted[1]["columns"]["order.total"])

later = build_shop(seed=8)  # same schema, different draws
served = apply_transforms(later, config, fitted=fitted)
refit = apply_transforms(later, config)
a = np.array(served.table("order").columns["total"].to_list())
b = np.array(refit.table("order").columns["total"].to_list())
print(f"replayed fit vs refit on new data: means {a.mean():+.3f} "
      f"vs {b.mean():+.3f} (replay keeps the original center)")

# --- make_dummy_table: turning shared ints into real keys -------------------

# event logs often carry a user id column with no user table behind it; the
# ids agree across tables but nothing declares that. make_dummy_table
# collects the distinct ids, creates the missing table, and rewrites every
# matched column into a foreign key pointing at it.
ping = table("ping", [("id", PRIMARY_KEY), ("user_id", INT), ("ms", FLOAT)],
             {"id": [1, 2, 3], "user_id": [7, 8, 7], "ms": [12.0, 8.5, 40.0]})
crash = table("crash", [("id", PRIMARY_KEY), ("user_id", INT)],
              {"id": [1, 2], "user_id": [9, None]})
telemetry = Database("telemetry", {"ping": ping, "crash": crash})

promoted = apply_transforms(telemetry, TransformConfig((
    TransformStep("make_dummy_table", "*.user_id",
                  {"new_table": "user"}),
)))

print("\ntables after promotion:", sorted(promoted.tables))
print("user ids collected:", promoted.table("user").columns["id"].to_list())
for tname in ("ping", "crash"):
    spec = promoted.table(tname).schema.column("user_id")
    assert spec.dtype == FOREIGN_KEY
    print(f"{tname}.user_id is now a foreign key to {spec.fk_target}")
