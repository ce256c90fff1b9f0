"""
Loading, inspecting, and validating a relational dataset
=========================================================

A Database is a named set of typed tables. This script builds the toy shop,
looks at its column statistics, round-trips it through the on-disk format,
and shows what the integrity checker reports when keys are broken.
"""

import tempfile

from rdbflow.columns import FOREIGN_KEY, INT, PRIMARY_KEY
from rdbflow.database import (
    Database,
    column_statistics,
    load_database,
    serialize_database,
    validate_database,
)

from demo_data import build_shop, table

db = build_shop()
print(f"database {db.name!r}")
for name, t in db.tables.items():
    tc = t.schema.time_column
    print(f"  {name}: {t.row_count} rows"
          + (f", time column {tc!r}" if tc else ""))

# column_statistics summarizes every column: null counts, ranges for
# numerics, cardinality and the most frequent value for categoricals
stats = column_statistics(db)
print("\nselected column statistics")
print("  customer.age     ", stats["customer"]["age"])
print("  product.category ", stats["product"]["category"])
print("  order.total      ", stats["order"]["total"])

# serialize_database writes metadata.json plus one binary file per table;
# load_database reads the directory back into an equal in-memory Database
with tempfile.TemporaryDirectory() as tmp:
    serialize_database(db, tmp)
    again = load_database(tmp)
reloaded = all(db.tables[n].equals(again.tables[n]) for n in db.tables)
print(f"\nserialize -> load round trip equal: {reloaded}")

# validate_database returns one Violation per problem instead of raising,
# so callers can report everything wrong with a dataset at once
parent = table("account", [("id", PRIMARY_KEY), ("tier", INT)],
               {"id": [1, 2, 2], "tier": [0, 1, None]})
child = table("session", [("id", PRIMARY_KEY),
                          ("account_id", FOREIGN_KEY, ("account", "id"))],
              {"id": [10, 11, 12], "account_id": [1, 99, None]})
broken = Database("crm", {"account": parent, "session": child})

print("\nviolations in a deliberately broken database")
for v in validate_database(broken):
    where = f"{v.table}.{v.column}"
    row = "" if v.row_index < 0 else f" at row {v.row_index}"
    print(f"  {v.kind}: {where}{row}")

# a clean database reports nothing
print(f"\nviolations in the shop: {validate_database(db)}")
