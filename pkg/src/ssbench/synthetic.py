"""Synthetic annual/quarterly data with a known quarterly target.

Used by the demos and the end-to-end tests: the quarterly indicators are
log random walks with drift, the quarterly target is a noisy linear function of
their logs plus seasonality, and the annual series are calendar-year averages.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Series, aggregate_to_annual, write_series

INDICATORS = ("exports", "money", "copper")


@dataclass(frozen=True, eq=False)
class SyntheticEconomy:
    quarterly_target: Series
    annual_target: Series
    quarterly_indicators: dict
    annual_indicators: dict
    official_from: int


def make_economy(first_year: int = 1965, last_year: int = 2009, official_from: int = 1986, seed: int = 0) -> SyntheticEconomy:
    """Simulate indicators and a target cointegrated with them.

    The target level is linear in a trend, the logs of ``exports`` and ``money``
    and the level of ``copper``, plus a fixed seasonal pattern and AR(1) noise.
    """
    rng = np.random.default_rng(seed)
    n = 4 * (last_year - first_year + 1)
    drift = np.array([0.012, 0.02, 0.004])
    vol = np.array([0.02, 0.015, 0.05])
    logs = np.cumsum(drift + vol * rng.standard_normal((n, 3)), axis=0) + np.log([50.0, 20.0, 1.5])
    levels = np.exp(logs)
    seasonal = np.tile([-0.03, 0.01, 0.04, -0.02], n // 4)
    trend = np.arange(n) / 4.0
    noise = np.zeros(n)
    shocks = 0.01 * rng.standard_normal(n)
    for t in range(n):
        noise[t] = (0.7 * noise[t - 1] if t else 0.0) + shocks[t]
    target = 1.0 + 0.6 * logs[:, 0] + 0.3 * logs[:, 1] + 0.05 * levels[:, 2] + 0.002 * trend + seasonal + noise
    q = {nm: Series.quarterly(first_year, 1, levels[:, k], nm) for k, nm in enumerate(INDICATORS)}
    qt = Series.quarterly(first_year, 1, target, "gdp")
    a = {nm: aggregate_to_annual(s, "mean") for nm, s in q.items()}
    return SyntheticEconomy(qt, aggregate_to_annual(qt, "mean"), q, a, official_from)

CONFIG_TEMPLATE = """\
[data]
annual_response = annual_gdp.csv
annual_regressors = annual_exports.csv, annual_money.csv, annual_copper.csv
quarterly_regressors = quarterly_exports.csv, quarterly_money.csv, quarterly_copper.csv
official_quarterly = official_gdp.csv
scale = quarterly_exports.csv

[regression]
transforms = log, log, none
base_year = {base_year}
include_trend = true
include_constant = true
adf_lags = auto

[benchmark]
include_u_in_benchmark_row = false
fix_unit_measurement_variance = false
aggregation = mean

[optimizer]
max_iter = 500
tolerance = 1e-6
seed = 0
n_starts = {n_starts}

[output]
directory = out
"""


def write_fixture(directory, seed: int = 0, base_year: int = 1986, n_starts: int = 3) -> Path:
    """Write the synthetic CSV inputs and a pipeline config; return the config path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    eco = make_economy(seed=seed, official_from=base_year)
    write_series(directory / "annual_gdp.csv", eco.annual_target)
    for nm in INDICATORS:
        write_series(directory / f"annual_{nm}.csv", eco.annual_indicators[nm])
        write_series(directory / f"quarterly_{nm}.csv", eco.quarterly_indicators[nm])
    qt = eco.quarterly_target
    official = qt.slice_periods(qt.start.shift(4 * (eco.official_from - qt.start.year)), qt.end)
    write_series(directory / "official_gdp.csv", official)
    path = directory / "config.ini"
    path.write_text(CONFIG_TEMPLATE.format(base_year=base_year, n_starts=n_starts))
    return path
