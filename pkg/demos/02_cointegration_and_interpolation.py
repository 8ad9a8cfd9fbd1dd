"""Annual cointegrating regression, residual unit-root tests, and the quarterly dirty series."""
# %%
import numpy as np

from ssbench.core import align, log_transform, rebase_index
from ssbench.regression import adf_table, format_adf_table, interpolate_quarterly, link_series, ols_fit
from ssbench.synthetic import INDICATORS, make_economy

eco = make_economy(seed=0)
base = 1986

# %%
# Annual regression of the target index on a trend and (log) indicator indices.
transforms = {"exports": "log", "money": "log", "copper": "none"}


def prepare(s, tr):
    s = rebase_index(s, base)
    return log_transform(s) if tr == "log" else s


y = rebase_index(eco.annual_target, base)
xs = [prepare(eco.annual_indicators[k], transforms[k]) for k in INDICATORS]
fit = ols_fit(align([y, *xs]), include_trend=True, include_constant=True)
print(fit.summary())

# %%
# Residuals of a cointegrating regression should be stationary.
print(format_adf_table(adf_table(fit.residuals)))

# %%
# The annual coefficients applied to quarterly indicators give the dirty quarterly series.
qx = [prepare(eco.quarterly_indicators[k], transforms[k]) for k in INDICATORS]
dirty = interpolate_quarterly(fit, qx)
truth = rebase_index(eco.quarterly_target, base)
print("dirty vs true quarterly RMSE:", np.sqrt(np.mean((dirty.values - truth.values) ** 2)).round(5))

# %%
# Splice an official quarterly series that only starts in the base year.
official = truth.slice_periods(truth.start.shift(4 * (base - 1965)), truth.end)
linked = link_series(dirty, official)
print("linked series:", linked.start, "to", linked.end, "; official from", official.start)
