"""Residual diagnostics and fit statistics for estimated state-space models."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._dist import chi2_sf, f_cdf, f_sf
from .core import PeriodIndex, Series
from .regression import AdfResult, adf_test, durbin_watson
from .ssm import FilterOutput


class DiagnosticsError(ValueError):
    pass


@dataclass(frozen=True)
class TestStatistic:
    statistic: float
    p_value: float
    dof: float = math.nan
    lags: int = 0


@dataclass(frozen=True)
class DiagnosticsReport:
    ljung_box: TestStatistic
    jarque_bera: TestStatistic
    adf: dict
    het_f: TestStatistic
    durbin_watson: float

    def to_text(self) -> str:
        lines = [
            f"{'Test':<34}{'Statistic':>14}{'p-value':>14}",
            "-" * 62,
            f"{f'Ljung-Box (lags={self.ljung_box.lags}, dof={self.ljung_box.dof:g})':<34}"
            f"{self.ljung_box.statistic:>14.6g}{self.ljung_box.p_value:>14.6g}",
            f"{'Jarque-Bera':<34}{self.jarque_bera.statistic:>14.6g}{self.jarque_bera.p_value:>14.6g}",
        ]
        for name, r in self.adf.items():
            lines.append(f"{f'Dickey-Fuller ({name}, lags={r.lags})':<34}{r.statistic:>14.6g}{r.p_value:>14.6g}")
        lines.append(
            f"{f'F heteroscedasticity (h={self.het_f.dof:g})':<34}"
            f"{self.het_f.statistic:>14.6g}{self.het_f.p_value:>14.6g}"
        )
        lines.append(f"{'Durbin-Watson':<34}{self.durbin_watson:>14.6g}{'':>14}")
        return "\n".join(lines) + "\n"


def _values(e) -> np.ndarray:
    x = np.asarray(e.values if isinstance(e, Series) else e, dtype=float)
    if np.isnan(x).any():
        raise DiagnosticsError("missing values in residuals")
    return x


def standardized_residuals(filt: FilterOutput, start: PeriodIndex) -> Series:
    """First-row innovations scaled by their standard deviation, after the diffuse periods.

    ``start`` is the period of the model's first observation. Periods without an
    observation are skipped.
    """
    nd = filt.diffuse_periods
    v = filt.v[nd:, 0]
    F = filt.F[nd:, 0, 0]
    keep = filt.p[nd:] > 0
    e = v[keep] / np.sqrt(F[keep])
    return Series(start.frequency, start.shift(nd), e, "standardized_residual")


def autocorrelations(e, nlags: int) -> np.ndarray:
    x = _values(e)
    x = x - x.mean()
    denom = float(x @ x)
    if denom == 0:
        raise DiagnosticsError("autocorrelation of a constant series is undefined")
    return np.array([float(x[k:] @ x[: x.size - k]) / denom for k in range(1, nlags + 1)])


def ljung_box(e, lags: int = 4, dof_correction: int = 0) -> TestStatistic:
    """Portmanteau statistic ``n (n + 2) sum_k r_k^2 / (n - k)``, chi-square with ``lags - dof_correction`` dof."""
    x = _values(e)
    n = x.size
    if not 1 <= lags < n:
        raise DiagnosticsError(f"need 1 <= lags < n, got lags={lags}, n={n}")
    dof = lags - dof_correction
    if dof < 1:
        raise DiagnosticsError("Ljung-Box needs at least one degree of freedom")
    r = autocorrelations(x, lags)
    k = np.arange(1, lags + 1)
    q = float(n * (n + 2) * np.sum(r**2 / (n - k)))
    return TestStatistic(q, float(chi2_sf(q, dof)), dof, lags)


def jarque_bera(e) -> TestStatistic:
    """Normality test from moment skewness and kurtosis; chi-square(2) p-value."""
    x = _values(e)
    n = x.size
    if n < 3:
        raise DiagnosticsError("Jarque-Bera needs at least 3 observations")
    d = x - x.mean()
    m2 = float(np.mean(d**2))
    if m2 == 0:
        raise DiagnosticsError("Jarque-Bera is undefined for zero variance")
    s = float(np.mean(d**3)) / m2**1.5
    k = float(np.mean(d**4)) / m2**2
    jb = n / 6.0 * (s**2 + (k - 3.0) ** 2 / 4.0)
    return TestStatistic(jb, float(chi2_sf(jb, 2)), 2.0)


def het_f_test(e, block_fraction: float = 1.0 / 3.0) -> TestStatistic:
    """Ratio of squared residuals in the last and first ``h = floor(fraction * n)`` periods.

    The p-value is two-sided under ``F(h, h)``; ``dof`` holds ``h``.
    """
    x = _values(e)
    n = x.size
    if n < 6:
        raise DiagnosticsError("heteroscedasticity test needs at least 6 observations")
    h = int(math.floor(block_fraction * n))
    if h < 1:
        raise DiagnosticsError("block too small")
    num = float(np.sum(x[n - h :] ** 2))
    den = float(np.sum(x[:h] ** 2))
    if den == 0:
        raise DiagnosticsError("first block has zero sum of squares")
    stat = num / den
    p = 2.0 * min(float(f_cdf(stat, h, h)), float(f_sf(stat, h, h)))
    return TestStatistic(stat, min(p, 1.0), float(h))


def diagnose(e, lags: int = 4, dof_correction: int = 0, adf_lags="auto") -> DiagnosticsReport:
    adf: dict[str, AdfResult] = {
        d: adf_test(e, d, adf_lags) for d in ("trend", "intercept", "none")
    }
    return DiagnosticsReport(
        ljung_box=ljung_box(e, lags, dof_correction),
        jarque_bera=jarque_bera(e),
        adf=adf,
        het_f=het_f_test(e),
        durbin_watson=durbin_watson(_values(e)),
    )


@dataclass(frozen=True)
class FitStatistics:
    mse: float
    pseudo_r2: float
    aic: float
    log_likelihood: float
    k_params: int
    nobs: int


def fit_statistics(filt: FilterOutput, obs, k_params: int) -> FitStatistics:
    """Summary statistics of a fitted state-space model.

    ``mse`` is the mean squared first-row innovation over the fully initialized
    periods; ``pseudo_r2`` is ``1 - sum v^2 / sum (dy - mean dy)^2`` with ``dy``
    the first differences of the first observation row; ``aic`` is
    ``(-2 logL + 2 k) / n`` with ``n`` the number of periods.
    """
    y = np.asarray(obs, dtype=float)
    y = y[:, 0] if y.ndim == 2 else y
    nd = filt.diffuse_periods
    v = filt.v[nd:, 0]
    v = v[~np.isnan(v)]
    mse = float(np.mean(v**2)) if v.size else math.nan
    dy = np.diff(y[~np.isnan(y)])
    ss = float(np.sum((dy - dy.mean()) ** 2)) if dy.size else 0.0
    if ss > 0:
        pseudo = 1.0 - float(np.sum(v**2)) / ss
    else:
        pseudo = 1.0 if not np.any(v) else -math.inf
    n = y.size
    aic = (-2.0 * filt.log_likelihood + 2.0 * k_params) / n
    return FitStatistics(mse, pseudo, aic, filt.log_likelihood, k_params, n)


def qq_points(e) -> tuple[np.ndarray, np.ndarray]:
    """Theoretical normal quantiles against sorted standardized residuals."""
    from scipy.special import ndtri

    x = np.sort(_values(e))
    n = x.size
    probs = (np.arange(1, n + 1) - 0.5) / n
    return ndtri(probs), x


def histogram(e, bins: int = 20) -> tuple[np.ndarray, np.ndarray]:
    counts, edges = np.histogram(_values(e), bins=bins)
    return counts, edges
