import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from ssbench import _dist
from ssbench.core import PeriodIndex, Series
from ssbench.diagnostics import (
    DiagnosticsError,
    autocorrelations,
    diagnose,
    fit_statistics,
    het_f_test,
    histogram,
    jarque_bera,
    ljung_box,
    qq_points,
    standardized_residuals,
)
from ssbench.regression import durbin_watson
from ssbench.ssm import StateSpaceModel, kalman_filter, simulate

vectors = st.lists(st.floats(-1e3, 1e3), min_size=12, max_size=60).map(np.array)


def nondegenerate(x):
    return np.std(x) > 1e-3 * (1 + np.abs(x).max())


# --- distribution functions against series expansions ----------------------

CHI2_POINTS = [(0.5, 1), (1.0, 2), (3.84, 1), (5.9823, 4), (9.49, 4), (0.1, 3), (20.0, 10), (2.5, 5), (40.0, 30), (150.0, 2)]
F_POINTS = [(0.58, 58, 58), (1.0, 5, 5), (2.5, 3, 10), (0.2, 10, 3), (4.0, 1, 30), (1.7, 20, 20), (0.9, 7, 2), (3.3, 2, 7), (1.1, 40, 60), (0.05, 4, 4)]


def chi2_cdf_series(x, k):
    # lower regularized gamma: e^{-z} z^a sum_n z^n / Gamma(a+n+1)
    with mp.workdps(50):
        a, z = mp.mpf(k) / 2, mp.mpf(x) / 2
        return mp.exp(-z) * z**a * mp.nsum(lambda n: z**n / mp.gamma(a + n + 1), [0, mp.inf])


def beta_reg_series(a, b, z):
    # I_z(a, b) = z^a (1-z)^b / (a B(a,b)) * (1 + sum_n B(a+1, n+1)/B(a+b, n+1) z^(n+1))
    with mp.workdps(50):
        a, b, z = mp.mpf(a), mp.mpf(b), mp.mpf(z)
        s = 1 + mp.nsum(lambda n: mp.beta(a + 1, n + 1) / mp.beta(a + b, n + 1) * z ** (n + 1), [0, mp.inf])
        return z**a * (1 - z) ** b / (a * mp.beta(a, b)) * s


@pytest.mark.parametrize("x, k", CHI2_POINTS)
def test_chi2_against_series(x, k):
    ref = float(chi2_cdf_series(x, k))
    assert float(_dist.chi2_cdf(x, k)) == pytest.approx(ref, abs=1e-8)
    assert float(_dist.chi2_sf(x, k)) == pytest.approx(1 - ref, abs=1e-8)


@pytest.mark.parametrize("x, d1, d2", F_POINTS)
def test_f_against_series(x, d1, d2):
    z = d1 * x / (d1 * x + d2)
    ref = float(beta_reg_series(d1 / 2, d2 / 2, z)) if z < 0.6 else 1 - float(beta_reg_series(d2 / 2, d1 / 2, 1 - z))
    assert float(_dist.f_cdf(x, d1, d2)) == pytest.approx(ref, abs=1e-8)
    assert float(_dist.f_sf(x, d1, d2)) == pytest.approx(1 - ref, abs=1e-8)


@pytest.mark.parametrize("t, dof", [(0.5, 3), (2.0, 10), (1.96, 1000), (3.0, 5), (0.0, 7), (-2.5, 20), (1.0, 1), (4.5, 39), (2.2, 2), (0.1, 60)])
def test_t_two_sided_against_series(t, dof):
    z = dof / (dof + t * t)
    a, b = dof / 2, 0.5
    ref = float(beta_reg_series(a, b, z)) if z < 0.6 else 1 - float(beta_reg_series(b, a, 1 - z))
    assert float(_dist.t_two_sided(t, dof)) == pytest.approx(ref, abs=1e-8)


# --- closed forms ------------------------------------------------------------


def test_jarque_bera_three_points():
    r = jarque_bera([-1.0, 0.0, 1.0])
    assert abs(r.statistic - 0.28125) <= 1e-12
    assert r.p_value == pytest.approx(math.exp(-0.28125 / 2))


def test_jarque_bera_errors():
    with pytest.raises(DiagnosticsError):
        jarque_bera([1.0, 1.0, 1.0, 1.0])
    with pytest.raises(DiagnosticsError):
        jarque_bera([1.0, 2.0])


def test_ljung_box_zero_autocorrelation_construction():
    r = ljung_box([1.0, 0, 0, 0, 0, 0, -1.0], lags=4)
    np.testing.assert_allclose(autocorrelations([1.0, 0, 0, 0, 0, 0, -1.0], 4), 0.0, atol=1e-15)
    assert r.statistic == 0.0
    assert r.p_value == 1.0
    assert r.dof == 4


def test_ljung_box_dof_correction_and_errors():
    rng = np.random.default_rng(0)
    e = rng.standard_normal(50)
    assert ljung_box(e, 6, dof_correction=2).dof == 4
    with pytest.raises(DiagnosticsError):
        ljung_box(e, 6, dof_correction=6)
    with pytest.raises(DiagnosticsError):
        ljung_box(np.ones(20), 4)
    with pytest.raises(DiagnosticsError):
        ljung_box(e[:4], 4)


def test_het_f_identical_blocks():
    e = np.array([1.0, -2.0, 3.0, 0.5, 0.5, 0.5, 1.0, -2.0, 3.0])
    r = het_f_test(e)
    assert r.statistic == 1.0 and r.dof == 3.0
    assert r.p_value == pytest.approx(1.0)


def test_standardized_residuals_zero_innovations():
    model = StateSpaceModel.time_invariant([[1.0]], [[1.0]], [[1.0]], [[1.0]], [[0.0]], [0.0], [[0.0]], 5, [True])
    f = kalman_filter(model, np.full((5, 1), 3.0))
    e = standardized_residuals(f, PeriodIndex(2000, 1))
    assert len(e) == 4 and e.start == PeriodIndex(2000, 2)
    assert not e.values.any()


def test_fit_statistics_perfect_prediction():
    model = StateSpaceModel.time_invariant([[1.0]], [[0.0]], [[1.0]], [[1.0]], [[1.0]], [0.0], [[0.0]], 6, [True])
    y = np.arange(6.0)[:, None] * 0 + 2.0
    f = kalman_filter(model, y)
    stats = fit_statistics(f, y, 2)
    assert stats.mse == 0.0 and stats.pseudo_r2 == 1.0


# --- invariants ---------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(vectors, st.floats(0.01, 100))
def test_ljung_box_scale_invariant(e, c):
    assume(nondegenerate(e))
    assert ljung_box(c * e, 4).statistic == pytest.approx(ljung_box(e, 4).statistic, rel=1e-8, abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(vectors, st.floats(0.01, 100), st.booleans(), st.floats(-100, 100))
def test_jarque_bera_affine_invariant(e, a, neg, b):
    assume(nondegenerate(e))
    a = -a if neg else a
    assert jarque_bera(a * e + b).statistic == pytest.approx(jarque_bera(e).statistic, rel=1e-7, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(vectors)
def test_het_f_reversal(e):
    h = len(e) // 3
    assume(np.sum(e[:h] ** 2) > 1e-6 and np.sum(e[-h:] ** 2) > 1e-6)
    assert het_f_test(e[::-1]).statistic * het_f_test(e).statistic == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(vectors)
def test_p_values_in_unit_interval(e):
    assume(nondegenerate(e))
    h = len(e) // 3
    assume(np.sum(e[:h] ** 2) > 0)
    for r in (ljung_box(e, 4), jarque_bera(e), het_f_test(e)):
        assert 0.0 <= r.p_value <= 1.0


# --- Monte Carlo behaviour ----------------------------------------------------


def test_ljung_box_detects_ar1():
    rng = np.random.default_rng(1)
    hits = 0
    reps = 200
    for _ in range(reps):
        z = rng.standard_normal(200)
        x = np.empty(200)
        x[0] = z[0]
        for t in range(1, 200):
            x[t] = 0.9 * x[t - 1] + z[t]
        hits += ljung_box(x, 5).p_value < 0.01
    assert hits / reps >= 0.99


def test_jarque_bera_size():
    rng = np.random.default_rng(2)
    rej = np.mean([jarque_bera(rng.standard_normal(1000)).p_value < 0.05 for _ in range(1000)])
    assert 0.03 <= rej <= 0.07


def test_het_f_detects_doubled_variance():
    rng = np.random.default_rng(3)
    stats = []
    for _ in range(500):
        e = rng.standard_normal(300)
        e[150:] *= math.sqrt(2)
        stats.append(het_f_test(e).statistic)
    assert np.mean(stats) == pytest.approx(2.0, rel=0.05)


# --- report and plot data ----------------------------------------------------


def test_diagnose_report():
    rng = np.random.default_rng(4)
    e = Series.quarterly(2000, 1, rng.standard_normal(120))
    rep = diagnose(e)
    assert set(rep.adf) == {"trend", "intercept", "none"}
    assert rep.durbin_watson == pytest.approx(durbin_watson(e))
    text = rep.to_text()
    for label in ("Ljung-Box", "Jarque-Bera", "Dickey-Fuller", "heteroscedasticity", "Durbin-Watson"):
        assert label in text


def test_plot_data():
    rng = np.random.default_rng(5)
    e = rng.standard_normal(101)
    theo, samp = qq_points(e)
    assert theo[50] == pytest.approx(0.0, abs=1e-12)
    assert np.all(np.diff(samp) >= 0)
    counts, edges = histogram(e, 10)
    assert counts.sum() == 101 and edges.size == 11


def test_residuals_from_simulated_model_look_white():
    n = 400
    model = StateSpaceModel.time_invariant([[1.0]], [[1.0]], [[1.0]], [[1.0]], [[0.5]], [0.0], [[0.0]], n, [True])
    sim = simulate(model, seed=6)
    e = standardized_residuals(kalman_filter(model, sim.obs), PeriodIndex(2000, 1))
    assert ljung_box(e, 4).p_value > 0.01
    assert abs(np.mean(e.values)) < 0.2
