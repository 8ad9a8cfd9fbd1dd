"""Two-stage construction of quarterly series coherent with annual benchmarks.

Stage one interpolates an annual target to quarters through a cointegrating
regression on quarterly indicators. Stage two removes the measurement error of
that interpolation with a state-space benchmarking model estimated by maximum
likelihood.
"""
__version__ = "0.1.0"

from .core import PeriodIndex, Series, SeriesError, Dataset, parse_csv, serialize_csv, read_series, write_series
from .regression import OlsFit, AdfResult, ols_fit, adf_test, interpolate_quarterly, link_series
from .ssm import StateSpaceModel, FilterError, kalman_filter, kalman_smoother, estimate_mle, simulate
from .benchmark import DQModelSpec, BenchmarkResult, build_dq_model, run_benchmarking, annual_coherence_report
from .diagnostics import DiagnosticsReport, standardized_residuals, ljung_box, jarque_bera, het_f_test, fit_statistics

__all__ = [
    "PeriodIndex", "Series", "SeriesError", "Dataset", "parse_csv", "serialize_csv", "read_series", "write_series",
    "OlsFit", "AdfResult", "ols_fit", "adf_test", "interpolate_quarterly", "link_series",
    "StateSpaceModel", "FilterError", "kalman_filter", "kalman_smoother", "estimate_mle", "simulate",
    "DQModelSpec", "BenchmarkResult", "build_dq_model", "run_benchmarking", "annual_coherence_report",
    "DiagnosticsReport", "standardized_residuals", "ljung_box", "jarque_bera", "het_f_test", "fit_statistics",
]
