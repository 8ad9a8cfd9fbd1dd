"""Benchmarking a noisy quarterly series to annual totals with the 13-state model."""
# %%
import numpy as np

from ssbench.benchmark import DQModelSpec, build_dq_model, normalized_coherence_report, run_benchmarking
from ssbench.core import Series
from ssbench.ssm import simulate

variances = dict(level=0.5, seasonal=0.1, irregular=0.5, measurement=1.0)
model = build_dq_model(DQModelSpec(180, variances, phi=0.6))
print("states:", model.m, "; rows per quarter:", model.p[:8])

# %%
sim = simulate(model, seed=42)
dirty = Series.quarterly(1965, 1, sim.obs[:, 0], "dirty")
annual = Series.annual(1965, sim.obs[3::4, 1], "annual")
truth = sim.states[:, 0] + sim.states[:, 4] + sim.states[:, 8]

# %%
res = run_benchmarking(dirty, annual, seed=0)
print(res.fit.to_text())

# %%
mse_dirty = np.mean((dirty.values - truth) ** 2)
mse_clean = np.mean((res.clean_series.values - truth) ** 2)
print(f"MSE against the true clean series: dirty {mse_dirty:.3f}, clean {mse_clean:.3f}")

# %%
# The clean quarters add up to the annual totals.
worst = max(abs(r.relative) for r in normalized_coherence_report(res))
print("largest relative annual discrepancy:", worst)
