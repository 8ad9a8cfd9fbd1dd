"""Static cointegrating regression, unit-root testing and quarterly interpolation.

The first stage of the estimation works on annual data: an OLS regression of the
annual target on related indicators (optionally with a linear trend), a unit-root
test on its residuals, and then the annual coefficients applied to the quarterly
indicators to produce a preliminary ("dirty") quarterly series.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from statsmodels.tsa.adfvalues import mackinnoncrit, mackinnonp

from ._dist import t_two_sided
from .core import ANNUAL, QUARTERLY, Dataset, Series, SeriesError

SIGNIFICANCE_LEVELS = ("1%", "5%", "10%")
_DETERMINISTIC = {"none": "n", "intercept": "c", "trend": "ct"}


class RegressionError(ValueError):
    """Raised when a regression cannot be estimated as requested."""


@dataclass(frozen=True, eq=False)
class OlsFit:
    names: tuple[str, ...]
    coefficients: np.ndarray
    std_errors: np.ndarray
    t_stats: np.ndarray
    p_values: np.ndarray
    residuals: Series
    fitted: Series
    r_squared: float
    adj_r_squared: float
    se_of_regression: float
    sum_sq_resid: float
    log_likelihood: float
    aic: float
    bic: float
    durbin_watson: float
    mean_dep: float
    sd_dep: float
    include_trend: bool = False
    include_constant: bool = False
    trend_origin: int = 0

    @property
    def nobs(self) -> int:
        return len(self.residuals)

    def summary(self) -> str:
        return format_ols_report(self)


@dataclass(frozen=True)
class AdfResult:
    statistic: float
    deterministic: str
    lags: int
    nobs: int
    critical_values: dict
    reject_unit_root: dict
    p_value: float = math.nan
    magnitude_compare: bool = False


def _find_collinear(X: np.ndarray, tol: float) -> int | None:
    """Index of the first column that adds no rank to the ones before it."""
    scale = np.linalg.norm(X, axis=0)
    scale[scale == 0] = 1.0
    Xs = X / scale
    rank = 0
    for j in range(X.shape[1]):
        r = np.linalg.matrix_rank(Xs[:, : j + 1], tol=tol * max(X.shape))
        if r == rank:
            return j
        rank = r
    return None


def _lstsq(X: np.ndarray, y: np.ndarray, names) -> np.ndarray:
    j = _find_collinear(X, 1e-12)
    if j is not None:
        raise RegressionError(f"design matrix is rank deficient: column {names[j]!r} is collinear")
    q, r = np.linalg.qr(X)
    return np.linalg.solve(r, q.T @ y)


def ols_fit(ds: Dataset, include_trend: bool = False, include_constant: bool = False) -> OlsFit:
    """OLS of ``ds.response`` on ``ds.regressors``.

    A trend column ``1, 2, 3, ...`` is prepended when ``include_trend``; a column
    of ones is prepended (before the trend) when ``include_constant``. Information
    criteria are per observation, ``(-2 logL + 2k) / n``.
    """
    y = ds.response.values
    X = ds.design()
    names = list(ds.names)
    n = y.size
    if include_trend:
        X = np.column_stack([np.arange(1, n + 1, dtype=float), X])
        names.insert(0, "trend")
    if include_constant:
        X = np.column_stack([np.ones(n), X])
        names.insert(0, "const")
    k = X.shape[1]
    if k == 0:
        raise RegressionError("no regressors")
    if np.isnan(y).any() or np.isnan(X).any():
        raise RegressionError("missing values in regression data")
    if n < k + 1:
        raise RegressionError(f"too few observations: {n} for {k} regressors")

    beta = _lstsq(X, y, names)
    fitted = X @ beta
    resid = y - fitted
    ssr = float(resid @ resid)
    dof = n - k
    s2 = ssr / dof
    xtx_inv = np.linalg.inv(X.T @ X)
    se = np.sqrt(np.maximum(np.diag(xtx_inv) * s2, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, beta / se, np.nan)
    p = np.where(np.isfinite(t), t_two_sided(np.nan_to_num(t), dof), np.nan)

    ybar = y.mean()
    tss = float(((y - ybar) ** 2).sum())
    r2 = 1.0 - ssr / tss if tss > 0 else math.nan
    adj = 1.0 - (1.0 - r2) * (n - 1) / dof
    if ssr > 0:
        llf = -0.5 * n * (1.0 + math.log(2 * math.pi) + math.log(ssr / n))
        dw = durbin_watson(resid)
    else:
        llf = math.inf
        dw = math.nan
    mk = lambda v, nm: Series(ds.response.frequency, ds.response.start, v, nm)  # noqa: E731
    return OlsFit(
        names=tuple(names),
        coefficients=beta,
        std_errors=se,
        t_stats=t,
        p_values=p,
        residuals=mk(resid, "residual"),
        fitted=mk(fitted, "fitted"),
        r_squared=r2,
        adj_r_squared=adj,
        se_of_regression=math.sqrt(s2),
        sum_sq_resid=ssr,
        log_likelihood=llf,
        aic=(-2 * llf + 2 * k) / n,
        bic=(-2 * llf + k * math.log(n)) / n,
        durbin_watson=dw,
        mean_dep=ybar,
        sd_dep=float(y.std(ddof=1)) if n > 1 else math.nan,
        include_trend=include_trend,
        include_constant=include_constant,
        trend_origin=ds.response.start.year if ds.response.frequency == ANNUAL else 0,
    )


def durbin_watson(resid) -> float:
    """Sum of squared first differences over the sum of squares."""
    e = np.asarray(resid.values if isinstance(resid, Series) else resid, dtype=float)
    if e.size < 2:
        raise RegressionError("Durbin-Watson needs at least two residuals")
    if np.isnan(e).any():
        raise RegressionError("missing residuals")
    ss = float(e @ e)
    if ss == 0:
        raise RegressionError("Durbin-Watson is undefined for all-zero residuals")
    d = np.diff(e)
    return float(d @ d) / ss


def _adf_design(x: np.ndarray, lags: int, det: str, trim: int):
    """Regressand and design for the ADF regression, dropping the first ``trim`` differences."""
    dx = np.diff(x)
    rows = np.arange(trim, dx.size)
    cols = [x[rows]]  # lagged level s_{t-1}, aligned with dx[t]
    for j in range(1, lags + 1):
        cols.append(dx[rows - j])
    if det in ("c", "ct"):
        cols.append(np.ones(rows.size))
    if det == "ct":
        cols.append(rows + 1.0)
    return dx[rows], np.column_stack(cols)


def _ols_tstat(y, X):
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    e = y - X @ beta
    n, k = X.shape
    ssr = float(e @ e)
    s2 = ssr / (n - k)
    cov = s2 * np.linalg.inv(X.T @ X)
    llf = -0.5 * n * (1.0 + math.log(2 * math.pi) + math.log(ssr / n))
    return beta[0] / math.sqrt(cov[0, 0]), llf


def adf_test(
    s,
    deterministic: str = "intercept",
    lags: int | str = "auto",
    critical_values: dict | None = None,
    magnitude_compare: bool = False,
) -> AdfResult:
    """Augmented Dickey-Fuller t-test on the lagged level coefficient.

    ``lags="auto"`` picks the lag order by AIC over ``0..floor(12 (n/100)^(1/4))``
    on a common sample, then refits on the full sample. Critical values are
    MacKinnon (2010) response surfaces unless ``critical_values`` overrides them.
    """
    x = np.asarray(s.values if isinstance(s, Series) else s, dtype=float)
    if deterministic not in _DETERMINISTIC:
        raise RegressionError(f"deterministic must be one of {sorted(_DETERMINISTIC)}")
    det = _DETERMINISTIC[deterministic]
    if np.isnan(x).any():
        raise RegressionError("missing values in ADF input")
    n = x.size
    if np.ptp(x) == 0:
        raise RegressionError("ADF test on a constant series is degenerate")

    if lags == "auto":
        maxlag = int(math.floor(12.0 * (n / 100.0) ** 0.25))
        # keep enough observations for the largest regression
        maxlag = max(0, min(maxlag, (n - 1) // 2 - 3))
        if n < maxlag + 10:
            raise RegressionError(f"series too short for ADF (n={n})")
        best = None
        for p in range(maxlag + 1):
            y, X = _adf_design(x, p, det, maxlag)
            _, llf = _ols_tstat(y, X)
            aic = -2 * llf + 2 * X.shape[1]
            if best is None or aic < best[0]:
                best = (aic, p)
        lags = best[1]
    lags = int(lags)
    if lags < 0:
        raise RegressionError("lags must be non-negative")
    if n < lags + 10:
        raise RegressionError(f"series too short for ADF with {lags} lags (n={n})")
    y, X = _adf_design(x, lags, det, lags)
    stat, _ = _ols_tstat(y, X)
    nobs = y.size

    if critical_values is None:
        cv = mackinnoncrit(1, det, nobs)
        critical_values = dict(zip(SIGNIFICANCE_LEVELS, map(float, cv)))
        pval = float(mackinnonp(stat, det, 1))
    else:
        critical_values = {k: float(v) for k, v in critical_values.items()}
        pval = math.nan
    if magnitude_compare:
        reject = {k: abs(stat) > abs(v) for k, v in critical_values.items()}
    else:
        reject = {k: stat < v for k, v in critical_values.items()}
    return AdfResult(
        statistic=float(stat),
        deterministic=deterministic,
        lags=lags,
        nobs=nobs,
        critical_values=critical_values,
        reject_unit_root=reject,
        p_value=pval,
        magnitude_compare=magnitude_compare,
    )


def engle_granger_critical_values(n_vars: int, nobs: int, deterministic: str = "intercept") -> dict:
    """MacKinnon critical values for residual-based cointegration tests with ``n_vars`` series."""
    det = _DETERMINISTIC[deterministic]
    if det == "n" and n_vars > 1:
        raise RegressionError("no tabulated cointegration critical values without deterministic terms")
    cv = mackinnoncrit(n_vars, det, nobs)
    return dict(zip(SIGNIFICANCE_LEVELS, map(float, cv)))


def adf_table(resid: Series, lags: int | str = "auto", **kw) -> dict[str, AdfResult]:
    """ADF results for all three deterministic specifications."""
    return {d: adf_test(resid, d, lags, **kw) for d in ("trend", "intercept", "none")}


def _regressor_list(regressors) -> list[Series]:
    if isinstance(regressors, Dataset):
        return list(regressors.regressors)
    return list(regressors)


def interpolate_quarterly(fit: OlsFit, quarterly_regressors) -> Series:
    """Apply annual coefficients to quarterly regressors.

    The quarterly trend for quarter ``q`` of year ``Y`` is the annual trend value
    of ``Y`` plus ``(q - 1) / 4``.
    """
    regs = _regressor_list(quarterly_regressors)
    n_expected = len(fit.names) - int(fit.include_trend) - int(fit.include_constant)
    if len(regs) != n_expected:
        raise RegressionError(
            f"regressor count mismatch: fit has {n_expected}, got {len(regs)} quarterly series"
        )
    if not regs:
        raise RegressionError("interpolation needs at least one quarterly regressor")
    first = regs[0]
    if first.frequency != QUARTERLY:
        raise RegressionError("interpolation needs quarterly regressors")
    for s in regs[1:]:
        if (s.start, len(s), s.frequency) != (first.start, len(first), first.frequency):
            raise RegressionError(f"quarterly regressor {s.name!r} is not aligned")
    cols = [s.values for s in regs]
    periods = first.periods
    if fit.include_trend:
        trend = np.array([p.year - fit.trend_origin + 1 + (p.quarter - 1) / 4.0 for p in periods])
        cols.insert(0, trend)
    if fit.include_constant:
        cols.insert(0, np.ones(len(first)))
    X = np.column_stack(cols)
    return Series(QUARTERLY, first.start, X @ fit.coefficients, "dirty")


def link_series(estimated: Series, official: Series) -> Series:
    """Splice ``official`` onto the end of ``estimated``.

    The official values are kept where they exist. Earlier estimated values are
    multiplied by ``mean(official) / mean(estimated)`` over the first four
    overlapping quarters.
    """
    if estimated.frequency != official.frequency:
        raise SeriesError("cannot link series of different frequency")
    lo = max(estimated.start.ordinal(), official.start.ordinal())
    hi = min(estimated.end.ordinal(), official.end.ordinal())
    if hi - lo + 1 < 4:
        raise SeriesError("linking needs at least four overlapping periods")
    if official.start.ordinal() < estimated.start.ordinal():
        raise SeriesError("official series must start inside the estimated span")
    k0 = official.start.ordinal() - estimated.start.ordinal()
    est_overlap = estimated.values[k0 : k0 + 4]
    off_overlap = official.values[:4]
    if np.isnan(est_overlap).any() or np.isnan(off_overlap).any():
        raise SeriesError("missing values in the first overlap year")
    ratio = off_overlap.mean() / est_overlap.mean()
    head = estimated.values[:k0] * ratio
    out = np.concatenate([head, official.values])
    return Series(estimated.frequency, estimated.start, out, "linked")


def format_ols_report(fit: OlsFit) -> str:
    lines = [
        f"{'Variable':<14}{'Coef.':>14}{'Std. Error':>14}{'t-Stat.':>14}{'Prob.':>10}",
        "-" * 66,
    ]
    for nm, b, se, t, p in zip(fit.names, fit.coefficients, fit.std_errors, fit.t_stats, fit.p_values):
        lines.append(f"{nm:<14}{b:>14.6g}{se:>14.6g}{t:>14.6g}{p:>10.4f}")
    lines.append("-" * 66)
    stats = [
        ("R-squared", fit.r_squared, "Mean dep. var", fit.mean_dep),
        ("Adj. R-squared", fit.adj_r_squared, "S.D. dep. var", fit.sd_dep),
        ("S.E. of reg.", fit.se_of_regression, "AIC", fit.aic),
        ("Sum sq. resid", fit.sum_sq_resid, "BIC", fit.bic),
        ("Log Lik.", fit.log_likelihood, "DW", fit.durbin_watson),
    ]
    for a, x, b, y in stats:
        lines.append(f"{a:<16}{x:>14.6g}    {b:<16}{y:>14.6g}")
    lines.append(f"Observations    {fit.nobs:>14d}")
    return "\n".join(lines) + "\n"


def format_adf_table(results: dict[str, AdfResult]) -> str:
    lines = [f"{'Deterministic':<14}{'Statistic':>12}{'Lags':>6}{'Nobs':>6}{'1%':>10}{'5%':>10}{'10%':>10}{'p-value':>10}"]
    for name, r in results.items():
        cv = r.critical_values
        lines.append(
            f"{name:<14}{r.statistic:>12.4f}{r.lags:>6d}{r.nobs:>6d}"
            f"{cv['1%']:>10.4f}{cv['5%']:>10.4f}{cv['10%']:>10.4f}{r.p_value:>10.4f}"
        )
    return "\n".join(lines) + "\n"
