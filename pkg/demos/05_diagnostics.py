"""Residual diagnostics of a fitted benchmarking model."""
# %%
import numpy as np

from ssbench.benchmark import DQModelSpec, build_dq_model, run_benchmarking
from ssbench.core import Series
from ssbench.diagnostics import autocorrelations, diagnose, het_f_test, jarque_bera, ljung_box
from ssbench.ssm import simulate

# %%
# Small closed-form cases first.
print("JB([-1, 0, 1])          =", jarque_bera([-1.0, 0.0, 1.0]).statistic)
print("LB of [1,0,0,0,0,0,-1]  =", ljung_box([1.0, 0, 0, 0, 0, 0, -1.0], lags=4).statistic)
e = np.random.default_rng(0).standard_normal(60)
print("H(e) * H(reversed e)    =", het_f_test(e).statistic * het_f_test(e[::-1]).statistic)

# %%
sim = simulate(build_dq_model(DQModelSpec(160, dict(level=0.5, seasonal=0.1, irregular=0.5, measurement=1.0), 0.6)), seed=3)
res = run_benchmarking(Series.quarterly(1970, 1, sim.obs[:, 0]), Series.annual(1970, sim.obs[3::4, 1]))
resid = res.standardized_residuals
print(diagnose(resid).to_text())
print("first autocorrelations:", autocorrelations(resid, 4).round(3))
