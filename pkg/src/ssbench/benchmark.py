"""State-space benchmarking of a quarterly series to annual totals.

The quarterly observation is modelled as level + seasonal + irregular +
measurement error, with the state vector

    [mu_t, mu_t-1, mu_t-2, mu_t-3, g_t, g_t-1, g_t-2, g_t-3,
     e_t, e_t-1, e_t-2, e_t-3, u_t]

In the fourth quarter of each year a second, noise-free observation row ties
the sum of the four quarters of level + seasonal + irregular to the annual
benchmark. The clean series is the smoothed ``mu + g + e``; ``u`` is an AR(1)
measurement error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import ANNUAL, QUARTERLY, PeriodIndex, Series, SeriesError, format_value
from .diagnostics import FitStatistics, fit_statistics, standardized_residuals
from .ssm import (
    FilterOutput,
    Hyperparameters,
    MleResult,
    SmootherOutput,
    StateSpaceModel,
    drop_missing,
    estimate_mle,
    kalman_filter,
    kalman_smoother,
)

STATE_NAMES = (
    "level", "level_lag1", "level_lag2", "level_lag3",
    "seasonal", "seasonal_lag1", "seasonal_lag2", "seasonal_lag3",
    "irregular", "irregular_lag1", "irregular_lag2", "irregular_lag3",
    "measurement_error",
)
LEVEL, SEASONAL, IRREGULAR, MEASUREMENT = 0, 4, 8, 12
N_STATES = 13
QUARTER_ROW = np.array([1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1], dtype=float)
# level and the three seasonal states that feed the seasonal recursion
DIFFUSE_STATES = (0, 4, 5, 6)
VARIANCE_NAMES = ("level", "seasonal", "irregular", "measurement")


@dataclass(frozen=True)
class DQModelSpec:
    n_quarters: int
    variances: dict
    phi: float = 0.0
    annual_benchmarks: Series | None = None
    include_u_in_benchmark_row: bool = False

    def __post_init__(self):
        if not -1 < self.phi < 1:
            raise ValueError(f"AR coefficient must lie in (-1, 1), got {self.phi}")
        missing = set(VARIANCE_NAMES) - set(self.variances)
        if missing:
            raise ValueError(f"missing variances: {sorted(missing)}")
        if any(self.variances[k] < 0 for k in VARIANCE_NAMES):
            raise ValueError("variances must be non-negative")
        if self.annual_benchmarks is not None and len(self.annual_benchmarks) != self.n_quarters // 4:
            raise ValueError("need one annual benchmark per complete year")


def _transition() -> tuple[np.ndarray, np.ndarray]:
    T = np.zeros((N_STATES, N_STATES))
    T[0, 0] = 1.0
    T[1, 0] = T[2, 1] = T[3, 2] = 1.0
    T[4, 4:7] = -1.0
    T[5, 4] = T[6, 5] = T[7, 6] = 1.0
    T[9, 8] = T[10, 9] = T[11, 10] = 1.0
    R = np.zeros((N_STATES, 4))
    R[LEVEL, 0] = R[SEASONAL, 1] = R[IRREGULAR, 2] = R[MEASUREMENT, 3] = 1.0
    return T, R


_T, _R = _transition()
_T.flags.writeable = False
_R.flags.writeable = False


def observation_schedule(n_quarters: int, include_u_in_benchmark_row: bool = False):
    """``Z`` of shape ``(n, 2, 13)`` and row counts ``p``: two rows in every fourth quarter."""
    Z = np.zeros((n_quarters, 2, N_STATES))
    Z[:, 0] = QUARTER_ROW
    p = np.ones(n_quarters, dtype=np.int64)
    annual_row = np.ones(N_STATES)
    annual_row[MEASUREMENT] = 1.0 if include_u_in_benchmark_row else 0.0
    idx = np.arange(3, n_quarters, 4)
    Z[idx, 1] = annual_row
    p[idx] = 2
    return Z, p


def _system(variances, phi):
    s_level, s_seas, s_irr, s_u = (float(variances[k]) for k in VARIANCE_NAMES)
    Q = np.diag([s_level, s_seas, s_irr, s_u * (1.0 - phi * phi)])
    T = _T.copy()
    T[MEASUREMENT, MEASUREMENT] = phi
    P1 = np.zeros((N_STATES, N_STATES))
    P1[np.arange(8, 12), np.arange(8, 12)] = s_irr
    P1[MEASUREMENT, MEASUREMENT] = s_u
    mask = np.zeros(N_STATES, dtype=bool)
    mask[list(DIFFUSE_STATES)] = True
    return T, Q, P1, mask


def build_dq_model(spec: DQModelSpec) -> StateSpaceModel:
    """The 13-state benchmarking model with zero observation noise."""
    Z, p = observation_schedule(spec.n_quarters, spec.include_u_in_benchmark_row)
    T, Q, P1, mask = _system(spec.variances, spec.phi)
    H = np.zeros((spec.n_quarters, 2, 2))
    return StateSpaceModel(Z, H, p, T, _R, Q, np.zeros(N_STATES), P1, mask)


def default_hyperparameters(dirty_norm, fix_unit_measurement_variance: bool = False) -> Hyperparameters:
    """Starting values scaled to the variance of the first differences of the data."""
    y = np.asarray(dirty_norm.values if isinstance(dirty_norm, Series) else dirty_norm, dtype=float)
    y = y[~np.isnan(y)]
    d = np.diff(y)
    s = float(np.var(d)) if d.size > 1 and np.var(d) > 0 else 1.0
    values = {
        "level": 0.1 * s,
        "seasonal": 0.01 * s,
        "irregular": 0.2 * s,
        "measurement": 1.0 if fix_unit_measurement_variance else 0.2 * s,
        "phi": 0.5,
    }
    transforms = {k: "log" for k in VARIANCE_NAMES}
    transforms["phi"] = "fisher_z"
    fixed = frozenset({"measurement"}) if fix_unit_measurement_variance else frozenset()
    return Hyperparameters(values, transforms, fixed)


class DQTemplate:
    """Maps hyperparameters to the benchmarking model for a fixed observation pattern.

    Rows whose observation is missing (NaN) are removed once, up front.
    """

    def __init__(self, obs: np.ndarray, include_u_in_benchmark_row: bool = False):
        n = obs.shape[0]
        Z, p = observation_schedule(n, include_u_in_benchmark_row)
        H = np.zeros((n, 2, 2))
        T, Q, P1, mask = _system({k: 1.0 for k in VARIANCE_NAMES}, 0.0)
        full = StateSpaceModel(Z, H, p, T, _R, Q, np.zeros(N_STATES), P1, mask)
        reduced, self.obs = drop_missing(full, obs)
        self.Z, self.H, self.p = reduced.Z, reduced.H, reduced.p

    def __call__(self, psi: Hyperparameters) -> StateSpaceModel:
        T, Q, P1, mask = _system(psi.values, psi["phi"])
        return StateSpaceModel(self.Z, self.H, self.p, T, _R, Q, np.zeros(N_STATES), P1, mask, validate=False)


def normalize(dirty: Series, scale: Series) -> Series:
    _check_pair(dirty, scale)
    if not (scale.values > 0).all():
        k = int(np.argmax(~(scale.values > 0)))
        raise SeriesError(f"scale must be strictly positive; {scale.values[k]!r} at {scale.start.shift(k)}")
    return dirty.with_values(dirty.values / scale.values)


def denormalize(norm: Series, scale: Series) -> Series:
    _check_pair(norm, scale)
    return norm.with_values(norm.values * scale.values)


def _check_pair(a: Series, b: Series):
    if (a.frequency, a.start, len(a)) != (b.frequency, b.start, len(b)):
        raise SeriesError(f"{a.name!r} and {b.name!r} do not cover the same periods")


def stack_observations(dirty_norm: Series, annual_norm: Series) -> list[np.ndarray]:
    """Per-quarter observation vectors: ``[y_t]``, or ``[y_t, annual]`` in each fourth quarter."""
    n = len(dirty_norm)
    if dirty_norm.frequency != QUARTERLY or annual_norm.frequency != ANNUAL:
        raise SeriesError("need a quarterly series and an annual benchmark series")
    if n < 4:
        raise SeriesError(f"{n} quarters do not contain a complete year")
    if len(annual_norm) != n // 4:
        raise SeriesError(f"{n} quarters need {n // 4} annual values, got {len(annual_norm)}")
    out = []
    for t in range(n):
        if t % 4 == 3:
            out.append(np.array([dirty_norm.values[t], annual_norm.values[t // 4]]))
        else:
            out.append(np.array([dirty_norm.values[t]]))
    return out


def _packed(obs_list) -> np.ndarray:
    y = np.full((len(obs_list), 2), np.nan)
    for t, v in enumerate(obs_list):
        y[t, : v.size] = v
    return y


@dataclass(frozen=True, eq=False)
class FitReport:
    log_likelihood: float
    variances: dict
    phi: float
    mse: float
    pseudo_r2: float
    aic: float
    k_params: int
    converged: bool
    message: str

    def to_text(self) -> str:
        rows = [
            ("Log-Likelihood", self.log_likelihood),
            ("Level variance", self.variances["level"]),
            ("Seasonal variance", self.variances["seasonal"]),
            ("Irregular variance", self.variances["irregular"]),
            ("Measurement error variance", self.variances["measurement"]),
            ("Measurement error AR(1) coefficient", self.phi),
            ("MSE", self.mse),
            ("Pseudo R2", self.pseudo_r2),
            ("AIC", self.aic),
        ]
        lines = [f"{a:<38}{b:>16.8g}" for a, b in rows]
        lines.append(f"{'Converged':<38}{str(self.converged):>16}")
        lines.append(f"{'Optimizer message':<38}{self.message}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True, eq=False)
class BenchmarkResult:
    clean_series: Series
    components: dict
    fit: FitReport
    standardized_residuals: Series
    dirty_normalized: Series
    annual_normalized: Series
    clean_normalized: Series
    components_normalized: dict
    scale: Series
    params: Hyperparameters
    mle: MleResult | None = field(default=None, repr=False)
    filter_output: FilterOutput | None = field(default=None, repr=False)
    smoother_output: SmootherOutput | None = field(default=None, repr=False)

    def components_csv(self, normalized: bool = False) -> str:
        comps = self.components_normalized if normalized else self.components
        names = ("level", "seasonal", "irregular", "measurement_error")
        lines = ["period," + ",".join(names)]
        for k, per in enumerate(self.clean_series.periods):
            lines.append(f"{per}," + ",".join(format_value(comps[c].values[k]) for c in names))
        return "\n".join(lines) + "\n"


def run_benchmarking(
    dirty: Series,
    annual: Series,
    scale: Series | None = None,
    psi0: Hyperparameters | None = None,
    include_u_in_benchmark_row: bool = False,
    fix_unit_measurement_variance: bool = False,
    aggregation: str = "sum",
    n_starts: int = 5,
    seed: int = 0,
    max_iter: int = 500,
    gtol: float = 1e-6,
) -> BenchmarkResult:
    """Estimate the benchmarking model and extract the clean series.

    ``dirty`` is divided by ``scale`` (ones by default). Each annual value is
    divided by the mean of that year's four scale values, so a constant scale
    within a year leaves the sum constraint unchanged. With
    ``aggregation="mean"`` the annual values are averages and are multiplied by
    four first. The smoothed components are multiplied back by ``scale``.
    """
    if dirty.frequency != QUARTERLY or dirty.start.quarter != 1:
        raise SeriesError("dirty series must be quarterly and start in the first quarter")
    if aggregation not in ("sum", "mean"):
        raise ValueError("aggregation must be 'sum' or 'mean'")
    n = len(dirty) - len(dirty) % 4
    if n < 8:
        raise SeriesError("benchmarking needs at least two complete years")
    if n != len(dirty):
        dirty = dirty.slice_periods(dirty.start, dirty.start.shift(n - 1))
    if scale is None:
        scale = dirty.with_values(np.ones(n), name="scale")
    else:
        scale = scale.slice_periods(dirty.start, dirty.start.shift(n - 1))
    first_year = dirty.start.year
    bench = annual.slice_periods(PeriodIndex(first_year), PeriodIndex(first_year + n // 4 - 1))
    bench_vals = bench.values * (4.0 if aggregation == "mean" else 1.0)

    dirty_norm = normalize(dirty, scale)
    year_scale = scale.values.reshape(-1, 4).mean(axis=1)
    annual_norm = Series(ANNUAL, bench.start, bench_vals / year_scale, "annual_normalized")
    y = _packed(stack_observations(dirty_norm, annual_norm))

    template = DQTemplate(y, include_u_in_benchmark_row)
    if psi0 is None:
        psi0 = default_hyperparameters(dirty_norm, fix_unit_measurement_variance)
    elif fix_unit_measurement_variance:
        psi0 = Hyperparameters({**psi0.values, "measurement": 1.0}, psi0.transforms, psi0.fixed | {"measurement"})
    mle = estimate_mle(template, template.obs, psi0, n_starts=n_starts, seed=seed, max_iter=max_iter, gtol=gtol)
    psi = mle.params
    model = template(psi)
    filt = kalman_filter(model, template.obs)
    smooth = kalman_smoother(model, template.obs, filt)

    st = smooth.states
    comp_norm = {
        "level": st[:, LEVEL],
        "seasonal": st[:, SEASONAL],
        "irregular": st[:, IRREGULAR],
        "measurement_error": st[:, MEASUREMENT],
    }
    clean_norm = comp_norm["level"] + comp_norm["seasonal"] + comp_norm["irregular"]
    mk = lambda v, nm: Series(QUARTERLY, dirty.start, v, nm)  # noqa: E731
    components_normalized = {k: mk(v, k) for k, v in comp_norm.items()}
    components = {k: mk(v * scale.values, k) for k, v in comp_norm.items()}

    k_params = len(psi.free) + len(DIFFUSE_STATES)
    stats: FitStatistics = fit_statistics(filt, y[:, 0], k_params)
    fit = FitReport(
        log_likelihood=filt.log_likelihood,
        variances={k: psi[k] for k in VARIANCE_NAMES},
        phi=psi["phi"],
        mse=stats.mse,
        pseudo_r2=stats.pseudo_r2,
        aic=stats.aic,
        k_params=k_params,
        converged=mle.converged,
        message=mle.message,
    )
    return BenchmarkResult(
        clean_series=mk(clean_norm * scale.values, "clean"),
        components=components,
        fit=fit,
        standardized_residuals=standardized_residuals(filt, dirty.start),
        dirty_normalized=dirty_norm,
        annual_normalized=annual_norm,
        clean_normalized=mk(clean_norm, "clean_normalized"),
        components_normalized=components_normalized,
        scale=scale,
        params=psi,
        mle=mle,
        filter_output=filt,
        smoother_output=smooth,
    )


@dataclass(frozen=True)
class CoherenceRow:
    year: int
    quarterly_sum: float
    benchmark: float
    discrepancy: float
    relative: float


def annual_coherence_report(
    result: BenchmarkResult | Series, annual: Series, aggregation: str = "sum"
) -> list[CoherenceRow]:
    """Per-year ``sum of quarters - benchmark``, absolute and relative to the benchmark.

    ``result`` may be a :class:`BenchmarkResult` (its clean series is used) or
    any quarterly series. With ``aggregation="mean"`` the benchmarks are annual
    averages and the quarterly sums are divided by four before comparing.
    """
    clean = result.clean_series if isinstance(result, BenchmarkResult) else result
    if clean.start.quarter != 1:
        raise SeriesError("coherence report needs a series starting in the first quarter")
    n_years = len(clean) // 4
    sums = clean.values[: 4 * n_years].reshape(-1, 4)
    sums = ((sums[:, 0] + sums[:, 1]) + sums[:, 2]) + sums[:, 3]
    if aggregation == "mean":
        sums = sums / 4.0
    rows = []
    for k in range(n_years):
        year = clean.start.year + k
        try:
            b = annual.value_at(PeriodIndex(year))
        except SeriesError:
            continue
        if math.isnan(b):
            continue
        d = float(sums[k] - b)
        rel = d / abs(b) if b != 0 else (0.0 if d == 0 else math.inf)
        rows.append(CoherenceRow(year, float(sums[k]), b, d, rel))
    return rows


def normalized_coherence_report(result: BenchmarkResult) -> list[CoherenceRow]:
    """Coherence of the normalized clean series with the normalized benchmarks.

    This is the constraint the model imposes, so discrepancies are at rounding
    level whenever the benchmark row excludes the measurement error. The raw
    scale report is exact only when the scale is constant within each year.
    """
    return annual_coherence_report(result.clean_normalized, result.annual_normalized, "sum")


def coherence_csv(rows: list[CoherenceRow]) -> str:
    lines = ["period,quarterly_sum,benchmark,discrepancy,relative"]
    for r in rows:
        lines.append(
            f"{r.year},{format_value(r.quarterly_sum)},{format_value(r.benchmark)},"
            f"{format_value(r.discrepancy)},{format_value(r.relative)}"
        )
    return "\n".join(lines) + "\n"
