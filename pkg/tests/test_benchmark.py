import numpy as np
import pytest

from oracles import simulate_dq
from ssbench.benchmark import (
    DIFFUSE_STATES,
    DQModelSpec,
    QUARTER_ROW,
    annual_coherence_report,
    build_dq_model,
    coherence_csv,
    denormalize,
    normalize,
    normalized_coherence_report,
    run_benchmarking,
    stack_observations,
)
from ssbench.core import Series, SeriesError, aggregate_to_annual
from ssbench.ssm import simulate

VARS = dict(level=0.5, seasonal=0.1, irregular=0.5, measurement=1.0)


@pytest.fixture(scope="module")
def simulated_fit():
    dirty, annual, truth, _ = simulate_dq(seed=101)
    return dirty, annual, truth, run_benchmarking(dirty, annual, n_starts=3)


def test_model_structure():
    model = build_dq_model(DQModelSpec(12, VARS, 0.4))
    assert model.m == 13
    np.testing.assert_array_equal(model.p, [1, 1, 1, 2] * 3)
    for t in range(12):
        np.testing.assert_array_equal(model.Z[t, 0], QUARTER_ROW)
    row = model.Z[3, 1]
    assert row[:12].tolist() == [1.0] * 12 and row[12] == 0.0
    assert not model.H.any()
    assert model.Q[3, 3] == pytest.approx(1.0 * (1 - 0.4**2))
    assert model.P1[12, 12] == 1.0
    np.testing.assert_array_equal(np.diag(model.P1)[8:12], 0.5)
    assert np.flatnonzero(model.diffuse_mask).tolist() == list(DIFFUSE_STATES)
    literal = build_dq_model(DQModelSpec(8, VARS, 0.0, include_u_in_benchmark_row=True))
    assert literal.Z[3, 1].tolist() == [1.0] * 13


def test_transition_dynamics():
    T = build_dq_model(DQModelSpec(4, VARS, 0.3)).T
    x = np.arange(1.0, 14.0)
    nxt = T @ x
    assert nxt[0] == x[0] and nxt[1:4].tolist() == x[0:3].tolist()
    assert nxt[4] == -(x[4] + x[5] + x[6])
    assert nxt[5:8].tolist() == x[4:7].tolist()
    assert nxt[8] == 0.0 and nxt[9:12].tolist() == x[8:11].tolist()
    assert nxt[12] == pytest.approx(0.3 * x[12])


def test_spec_validation():
    with pytest.raises(ValueError):
        DQModelSpec(8, VARS, 1.0)
    with pytest.raises(ValueError):
        DQModelSpec(8, {**VARS, "level": -1.0})


def test_degenerate_simulation_is_deterministic():
    zero = {k: 0.0 for k in VARS}
    model = build_dq_model(DQModelSpec(16, zero, 0.0))
    sim = simulate(model, seed=0)
    mu0 = sim.states[0, 0]
    # constant level plus a seasonal pattern summing to zero over any four quarters
    np.testing.assert_allclose(sim.states[:, 0], mu0)
    y = sim.obs[:, 0]
    np.testing.assert_allclose(y[4:], y[:-4], atol=1e-9)
    np.testing.assert_allclose(y[1:5].sum(), 4 * mu0, atol=1e-9)


def test_normalize_round_trip_and_errors():
    d = Series.quarterly(2000, 1, [2.0, 4.0, 6.0, 8.0])
    s = Series.quarterly(2000, 1, [2.0, 2.0, 3.0, 4.0])
    assert normalize(d, d.with_values(np.ones(4))) == d
    assert normalize(d, d).values.tolist() == [1.0] * 4
    np.testing.assert_allclose(denormalize(normalize(d, s), s).values, d.values, rtol=1e-12)
    with pytest.raises(SeriesError):
        normalize(d, s.with_values([1.0, 0.0, 1.0, 1.0]))


def test_stack_observations_schedule():
    obs = stack_observations(Series.quarterly(2000, 1, np.ones(8)), Series.annual(2000, [4.0, 4.0]))
    assert [o.size for o in obs] == [1, 1, 1, 2, 1, 1, 1, 2]
    assert obs[3].tolist() == [1.0, 4.0]
    with pytest.raises(SeriesError):
        stack_observations(Series.quarterly(2000, 1, np.ones(3)), Series.annual(2000, []))
    with pytest.raises(SeriesError):
        stack_observations(Series.quarterly(2000, 1, np.ones(8)), Series.annual(2000, [4.0]))


def test_result_coherence_and_identity(simulated_fit):
    dirty, annual, truth, res = simulated_fit
    assert res.fit.converged
    rows = normalized_coherence_report(res)
    assert len(rows) == 45
    assert max(abs(r.relative) for r in rows) <= 1e-6
    c = res.components_normalized
    total = c["level"].values + c["seasonal"].values + c["irregular"].values + c["measurement_error"].values
    np.testing.assert_allclose(total, res.dirty_normalized.values, atol=1e-8)
    # unit scale: raw and normalized reports agree
    raw = annual_coherence_report(res, annual)
    assert max(abs(r.relative) for r in raw) <= 1e-6


def test_clean_beats_dirty_on_simulated_data(simulated_fit):
    dirty, _, truth, res = simulated_fit
    assert np.mean((res.clean_series.values - truth) ** 2) < np.mean((dirty.values - truth) ** 2)


def test_fit_report_fields(simulated_fit):
    res = simulated_fit[3]
    f = res.fit
    assert f.pseudo_r2 <= 1
    assert f.k_params == 5 + 4
    assert len(res.standardized_residuals) == 180 - res.filter_output.diffuse_periods
    text = f.to_text()
    for label in ("Log-Likelihood", "MSE", "Pseudo R2", "AIC", "Measurement error variance"):
        assert label in text
    header = res.components_csv().splitlines()[0]
    assert header == "period,level,seasonal,irregular,measurement_error"


def test_zero_measurement_error_leaves_series_unchanged():
    rng = np.random.default_rng(3)
    n = 80
    q = np.arange(n)
    y = 10 + 0.05 * q + np.tile([0.5, -0.2, 0.1, -0.4], n // 4) + 0.1 * rng.standard_normal(n)
    d = Series.quarterly(2000, 1, y)
    res = run_benchmarking(d, aggregate_to_annual(d), n_starts=2)
    np.testing.assert_allclose(res.clean_series.values, y, rtol=1e-6)


def test_mean_aggregation_matches_sum():
    dirty, annual, _, _ = simulate_dq(seed=7, n=60)
    a = run_benchmarking(dirty, annual, n_starts=1)
    b = run_benchmarking(dirty, annual.with_values(annual.values / 4), aggregation="mean", n_starts=1)
    np.testing.assert_allclose(a.clean_series.values, b.clean_series.values, rtol=1e-9)
    rows = annual_coherence_report(b, annual.with_values(annual.values / 4), aggregation="mean")
    assert max(abs(r.relative) for r in rows) <= 1e-6


def test_scale_equivariance():
    dirty, annual, _, _ = simulate_dq(seed=11, n=120)
    sc = np.exp(0.01 * np.arange(120)) * (1 + 0.1 * np.sin(np.arange(120)))
    scale = dirty.with_values(sc, "scale")
    d = dirty.with_values(dirty.values * sc)
    a = annual.with_values(annual.values * sc.reshape(-1, 4).mean(1))
    r1 = run_benchmarking(d, a, scale, n_starts=2)
    r2 = run_benchmarking(d, a, scale.with_values(7.3 * sc), n_starts=2)
    np.testing.assert_allclose(r1.clean_series.values, r2.clean_series.values, rtol=1e-6)


def test_varying_scale_keeps_normalized_constraint():
    dirty, annual, _, _ = simulate_dq(seed=12, n=60)
    sc = dirty.with_values(2 + np.sin(np.arange(60)), "scale")
    res = run_benchmarking(dirty.with_values(dirty.values * sc.values), annual, sc, n_starts=1)
    assert max(abs(r.relative) for r in normalized_coherence_report(res)) <= 1e-6


def test_fixed_unit_measurement_variance():
    dirty, annual, _, _ = simulate_dq(seed=13, n=60)
    res = run_benchmarking(dirty, annual, fix_unit_measurement_variance=True, n_starts=1)
    assert res.params["measurement"] == 1.0
    assert "measurement" not in res.params.free


def test_literal_benchmark_row_constrains_dirty_sum():
    dirty, annual, _, _ = simulate_dq(seed=14, n=60)
    # under the literal row the annual value is tied to the observed quarterly sum
    coherent = annual.with_values(dirty.values.reshape(-1, 4).sum(1))
    res = run_benchmarking(dirty, coherent, include_u_in_benchmark_row=True, n_starts=1)
    assert res.clean_series is not None


def test_zero_seasonal_variance_is_recovered_at_the_boundary():
    # the MLE sits on the boundary in most samples; otherwise it stays tiny
    est = []
    for seed in range(6):
        dirty, annual, _, _ = simulate_dq(seed=300 + seed, variances={**VARS, "seasonal": 0.0}, phi=0.6)
        est.append(run_benchmarking(dirty, annual, n_starts=3, seed=seed).params["seasonal"])
    assert np.median(est) < 1e-4
    assert max(est) < 1e-2


def test_coherence_report_corrupted_series_keeps_sign():
    clean = Series.quarterly(2000, 1, np.ones(8))
    annual = Series.annual(2000, [4.0, 4.0])
    assert all(abs(r.discrepancy) == 0 for r in annual_coherence_report(clean, annual))
    bumped = clean.with_values(np.r_[np.ones(4), 1.5, np.ones(3)])
    rows = annual_coherence_report(bumped, annual)
    assert rows[0].discrepancy == 0 and rows[1].discrepancy == pytest.approx(0.5)
    assert rows[1].relative == pytest.approx(0.125)
    low = clean.with_values(np.r_[0.5, np.ones(7)])
    assert annual_coherence_report(low, annual)[0].discrepancy == pytest.approx(-0.5)
    assert coherence_csv(rows).splitlines()[0] == "period,quarterly_sum,benchmark,discrepancy,relative"


def test_run_benchmarking_input_errors():
    with pytest.raises(SeriesError):
        run_benchmarking(Series.quarterly(2000, 2, np.ones(8)), Series.annual(2000, [4.0, 4.0]))
    with pytest.raises(ValueError):
        run_benchmarking(Series.quarterly(2000, 1, np.ones(8)), Series.annual(2000, [4.0, 4.0]), aggregation="median")
