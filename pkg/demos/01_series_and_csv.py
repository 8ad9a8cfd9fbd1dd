"""Series containers, CSV round trips and annual aggregation."""
# %%
import numpy as np

from ssbench.core import Series, aggregate_to_annual, parse_csv, rebase_index, serialize_csv

# A quarterly series starting in 1965Q1; NaN marks a missing quarter.
q = Series.quarterly(1965, 1, [1.0, 2.0, np.nan, 4.0, 2.0, 3.0, 4.0, 5.0], "gdp")
print(q)
print(serialize_csv(q))

# %%
# Text written by serialize_csv parses back to an identical series.
assert parse_csv(serialize_csv(q), "quarterly", "gdp") == q

# %%
# Aggregation needs complete years without gaps, so fill the hole first.
full = q.with_values(np.nan_to_num(q.values, nan=3.0))
print("annual sums :", aggregate_to_annual(full, "sum").values)
print("annual means:", aggregate_to_annual(full, "mean").values)

# %%
# Index rebasing: the base year averages exactly one afterwards.
idx = rebase_index(full, 1966)
print("rebased to 1966:", idx.values.round(3), "mean over 1966 =", idx.values[4:].mean())
