import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ssbench.core import Dataset, Series, SeriesError, aggregate_to_annual
from ssbench.regression import (
    RegressionError,
    adf_table,
    adf_test,
    durbin_watson,
    engle_granger_critical_values,
    format_adf_table,
    interpolate_quarterly,
    link_series,
    ols_fit,
)


def make_ds(X, y, year=1965):
    regs = tuple(Series.annual(year, X[:, j], f"x{j}") for j in range(X.shape[1]))
    return Dataset(Series.annual(year, y, "y"), regs)


def random_design(rng):
    n = int(rng.integers(15, 60))
    k = int(rng.integers(1, 6))
    X = rng.normal(size=(n, k)) * rng.uniform(0.5, 3, size=k) + rng.normal(size=k)
    y = X @ rng.normal(size=k) + rng.normal(size=n)
    return X, y


def test_exact_fit():
    fit = ols_fit(make_ds(np.array([[1.0], [2.0], [3.0]]), np.array([2.0, 4.0, 6.0])))
    assert fit.coefficients[0] == pytest.approx(2.0, abs=1e-14)
    assert fit.r_squared == pytest.approx(1.0)
    np.testing.assert_allclose(fit.residuals.values, 0.0, atol=1e-14)


def test_trend_and_constant_columns_are_prepended():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(30, 2))
    y = 1.0 + 0.5 * np.arange(1, 31) + X @ [2.0, -1.0]
    fit = ols_fit(make_ds(X, y), include_trend=True, include_constant=True)
    assert fit.names == ("const", "trend", "x0", "x1")
    np.testing.assert_allclose(fit.coefficients, [1.0, 0.5, 2.0, -1.0], atol=1e-10)


def test_statistics_are_consistent():
    rng = np.random.default_rng(4)
    X, y = random_design(rng)
    fit = ols_fit(make_ds(X, y), include_constant=True)
    ok = fit.std_errors > 0
    np.testing.assert_allclose(fit.t_stats[ok], fit.coefficients[ok] / fit.std_errors[ok])
    assert 0 <= fit.r_squared <= 1
    assert 0 <= fit.durbin_watson <= 4
    n, k = fit.nobs, len(fit.coefficients)
    assert fit.aic == pytest.approx((-2 * fit.log_likelihood + 2 * k) / n)
    assert fit.bic == pytest.approx((-2 * fit.log_likelihood + k * math.log(n)) / n)
    assert fit.se_of_regression == pytest.approx(math.sqrt(fit.sum_sq_resid / (n - k)))
    assert np.all((fit.p_values >= 0) & (fit.p_values <= 1))


def test_information_criteria_per_observation_convention():
    # log-likelihood 58.228 with 6 regressors on 45 annual observations corresponds to
    # AIC -2.32 and BIC -2.08 only under the per-observation scaling
    llf, k, n = 58.228, 6, 45
    assert round((-2 * llf + 2 * k) / n, 2) == -2.32
    assert round((-2 * llf + k * math.log(n)) / n, 2) == -2.08
    # and the Gaussian log-likelihood of a sum of squares of 0.1960 is close to it
    ll_from_ssr = -0.5 * n * (1 + math.log(2 * math.pi) + math.log(0.1960 / n))
    assert ll_from_ssr == pytest.approx(llf, abs=0.5)


def test_rank_deficiency_names_the_column():
    X = np.column_stack([np.arange(10.0), 2 * np.arange(10.0)])
    with pytest.raises(RegressionError, match="x1"):
        ols_fit(make_ds(X, np.arange(10.0) ** 2))


def test_too_few_observations():
    with pytest.raises(RegressionError, match="too few"):
        ols_fit(make_ds(np.eye(3), np.ones(3)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_adding_a_regressor_never_lowers_r2(seed):
    rng = np.random.default_rng(seed)
    X, y = random_design(rng)
    extra = rng.normal(size=(X.shape[0], 1))
    r0 = ols_fit(make_ds(X, y), include_constant=True).r_squared
    r1 = ols_fit(make_ds(np.hstack([X, extra]), y), include_constant=True).r_squared
    assert r1 >= r0 - 1e-12


def test_durbin_watson_values():
    assert durbin_watson([1.0, 1.0, 1.0, 1.0]) == 0.0
    assert durbin_watson([1.0, -1.0, 1.0, -1.0]) == 3.0
    with pytest.raises(RegressionError):
        durbin_watson([0.0, 0.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=3, max_size=40), st.floats(1e-3, 1e3), st.booleans())
def test_durbin_watson_scale_invariant(e, c, neg):
    e = np.array(e)
    if np.sum(e**2) < 1e-6:
        return
    c = -c if neg else c
    assert durbin_watson(c * e) == pytest.approx(durbin_watson(e), rel=1e-10)


def test_durbin_watson_iid_range():
    rng = np.random.default_rng(11)
    inside = [1.7 <= durbin_watson(rng.standard_normal(500)) <= 2.3 for _ in range(300)]
    assert np.mean(inside) >= 0.99


def test_adf_scale_invariant_and_fields():
    rng = np.random.default_rng(5)
    x = np.cumsum(rng.standard_normal(120))
    a = adf_test(x, "trend", "auto")
    b = adf_test(7.5 * x, "trend", "auto")
    assert a.statistic == pytest.approx(b.statistic, rel=1e-9)
    assert a.lags == b.lags >= 0
    assert set(a.critical_values) == {"1%", "5%", "10%"}
    assert a.critical_values["1%"] < a.critical_values["5%"] < a.critical_values["10%"]
    assert 0 <= a.p_value <= 1


def test_adf_stationary_rejects():
    rng = np.random.default_rng(6)
    r = adf_test(rng.standard_normal(200), "intercept", 0)
    assert r.statistic < -8
    assert all(r.reject_unit_root.values())


def test_adf_override_and_magnitude_compare():
    rng = np.random.default_rng(7)
    x = rng.standard_normal(100)
    cv = {"1%": 4.0, "5%": 3.4, "10%": 3.1}
    r = adf_test(x, "trend", 1, critical_values=cv, magnitude_compare=True)
    assert r.critical_values == cv
    assert r.reject_unit_root["5%"] == (abs(r.statistic) > 3.4)
    assert math.isnan(r.p_value)


def test_adf_errors():
    with pytest.raises(RegressionError, match="constant"):
        adf_test(np.ones(50))
    with pytest.raises(RegressionError, match="short"):
        adf_test(np.arange(8.0) ** 2, lags=2)


def test_engle_granger_values_are_more_negative_than_single_series():
    cv2 = engle_granger_critical_values(3, 45, "intercept")
    cv1 = engle_granger_critical_values(1, 45, "intercept")
    assert cv2["5%"] < cv1["5%"]
    with pytest.raises(RegressionError):
        engle_granger_critical_values(3, 45, "none")


def test_adf_table_has_three_cases():
    rng = np.random.default_rng(8)
    s = Series.annual(1965, rng.standard_normal(45))
    tab = adf_table(s)
    assert list(tab) == ["trend", "intercept", "none"]
    text = format_adf_table(tab)
    assert text.count("\n") == 4


def _fit(coefs, trend=False):
    n = 6
    X = np.column_stack([np.arange(1.0, n + 1) ** (j + 2) for j in range(len(coefs))])
    y = X @ np.asarray(coefs, float) + (0.25 * np.arange(1, n + 1) if trend else 0)
    return ols_fit(make_ds(X, y), include_trend=trend)


def test_interpolate_linear_combination():
    fit = _fit([2.0])
    q = Series.quarterly(1970, 1, [1.0, 2.0], "x0")
    assert fit.coefficients[0] == pytest.approx(2.0)
    np.testing.assert_allclose(interpolate_quarterly(fit, [q]).values, [2.0, 4.0], atol=1e-12)


def test_interpolate_count_mismatch():
    fit = _fit([2.0, 1.0])
    with pytest.raises(RegressionError, match="mismatch"):
        interpolate_quarterly(fit, [Series.quarterly(1970, 1, [1.0])])


def test_interpolate_quarterly_trend_spacing():
    fit = _fit([1.0], trend=True)
    q = Series.quarterly(1965, 1, np.zeros(8), "x0")
    out = interpolate_quarterly(fit, [q]).values
    b_trend = fit.coefficients[0]
    np.testing.assert_allclose(out, b_trend * (1 + np.arange(8) / 4.0), rtol=1e-10)


def test_interpolation_reproduces_annual_fit_for_step_regressors():
    rng = np.random.default_rng(9)
    n = 12
    X = rng.normal(size=(n, 2))
    y = X @ [1.5, -0.7] + 0.1 * rng.normal(size=n)
    fit = ols_fit(make_ds(X, y), include_constant=True)
    qs = [Series.quarterly(1965, 1, np.repeat(X[:, j], 4), f"x{j}") for j in range(2)]
    dirty = interpolate_quarterly(fit, qs)
    np.testing.assert_allclose(aggregate_to_annual(dirty, "mean").values, fit.fitted.values, rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5))
def test_interpolation_is_linear_in_coefficients(a, b):
    fit = _fit([1.0])
    q = [Series.quarterly(1970, 1, [0.3, -1.2, 2.0, 4.5], "x0")]
    base = interpolate_quarterly(fit, q).values
    from dataclasses import replace

    f2 = replace(fit, coefficients=np.array([a + b]))
    lhs = interpolate_quarterly(f2, q).values
    np.testing.assert_allclose(lhs, (a + b) * base / fit.coefficients[0], rtol=1e-9, atol=1e-9)


def test_zero_coefficients_give_zero_series():
    from dataclasses import replace

    fit = replace(_fit([3.0]), coefficients=np.zeros(1))
    out = interpolate_quarterly(fit, [Series.quarterly(1970, 1, [1.0, 5.0, 9.0])])
    assert not out.values.any()


def test_link_identity_and_halving():
    est = Series.quarterly(1984, 1, np.arange(1.0, 17.0))
    off = est.slice_periods(est.start.shift(8), est.end)
    assert link_series(est, off).values.tolist() == est.values.tolist()
    doubled = est.with_values(2 * est.values)
    out = link_series(doubled, off)
    np.testing.assert_allclose(out.values[:8], est.values[:8])
    np.testing.assert_array_equal(out.values[8:], off.values)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_link_splice_matches_ratio_adjustment(seed):
    rng = np.random.default_rng(seed)
    est = Series.quarterly(1980, 1, rng.uniform(1, 2, 24))
    off = Series.quarterly(1984, 1, rng.uniform(1, 2, 8))
    out = link_series(est, off)
    ratio = off.values[:4].mean() / est.values[16:20].mean()
    np.testing.assert_allclose(out.values[:16], ratio * est.values[:16], rtol=1e-14)
    # the step into the official segment is the ratio-adjusted step of the estimate
    # plus the level difference at the splice, never anything else
    assert out.values[16] == off.values[0]


def test_link_requires_overlap():
    est = Series.quarterly(1980, 1, np.ones(8))
    with pytest.raises(SeriesError):
        link_series(est, Series.quarterly(1981, 3, np.ones(4)))
