"""Command-line pipeline: ``cointegrate``, ``interpolate``, ``benchmark``, ``pipeline``.

Every command reads one INI-style config file. Exit codes: 0 success,
2 finished but the likelihood maximization did not converge, 1 error.
"""
from __future__ import annotations

import argparse
import configparser
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .benchmark import annual_coherence_report, coherence_csv, normalized_coherence_report, run_benchmarking
from .core import ANNUAL, QUARTERLY, Series, SeriesError, align, format_value, log_transform, read_series, rebase_index, write_series
from .diagnostics import autocorrelations, diagnose, histogram, qq_points
from .regression import adf_table, format_adf_table, interpolate_quarterly, link_series, ols_fit

logger = logging.getLogger("ssbench")

EXIT_OK, EXIT_ERROR, EXIT_WARN = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    annual_response: Path
    annual_regressors: list
    quarterly_regressors: list
    transforms: list
    official_quarterly: Path | None = None
    scale: Path | None = None
    dirty: Path | None = None
    annual_benchmark: Path | None = None
    base_year: int | None = None
    include_trend: bool = True
    include_constant: bool = False
    adf_lags: int | str = "auto"
    include_u_in_benchmark_row: bool = False
    fix_unit_measurement_variance: bool = False
    aggregation: str = "sum"
    max_iter: int = 500
    tolerance: float = 1e-6
    seed: int = 0
    n_starts: int = 5
    output_dir: Path = field(default_factory=lambda: Path("out"))


def _paths(raw: str, root: Path) -> list[Path]:
    return [root / p.strip() for p in raw.split(",") if p.strip()]


def load_config(path) -> PipelineConfig:
    """Parse and validate a config file; relative paths resolve against its directory."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser()
    cp.read(path)
    root = path.parent
    try:
        data = cp["data"]
    except KeyError:
        raise ConfigError("config needs a [data] section") from None
    reg = cp["regression"] if cp.has_section("regression") else {}
    bm = cp["benchmark"] if cp.has_section("benchmark") else {}
    opt = cp["optimizer"] if cp.has_section("optimizer") else {}
    out = cp["output"] if cp.has_section("output") else {}

    def opt_path(key):
        v = data.get(key, "").strip()
        return root / v if v else None

    def flag(sec, key, default):
        if not hasattr(sec, "getboolean"):
            return default
        return sec.getboolean(key, fallback=default)

    annual_regs = _paths(data.get("annual_regressors", ""), root)
    quarterly_regs = _paths(data.get("quarterly_regressors", ""), root)
    transforms = [t.strip() for t in reg.get("transforms", "").split(",") if t.strip()] or ["none"] * len(annual_regs)
    adf_lags = reg.get("adf_lags", "auto").strip()
    cfg = PipelineConfig(
        annual_response=opt_path("annual_response"),
        annual_regressors=annual_regs,
        quarterly_regressors=quarterly_regs,
        transforms=transforms,
        official_quarterly=opt_path("official_quarterly"),
        scale=opt_path("scale"),
        dirty=opt_path("dirty"),
        annual_benchmark=opt_path("annual_benchmark"),
        base_year=int(reg["base_year"]) if reg.get("base_year") else None,
        include_trend=flag(reg, "include_trend", True),
        include_constant=flag(reg, "include_constant", False),
        adf_lags=adf_lags if adf_lags == "auto" else int(adf_lags),
        include_u_in_benchmark_row=flag(bm, "include_u_in_benchmark_row", False),
        fix_unit_measurement_variance=flag(bm, "fix_unit_measurement_variance", False),
        aggregation=bm.get("aggregation", "sum").strip(),
        max_iter=int(opt.get("max_iter", 500)),
        tolerance=float(opt.get("tolerance", 1e-6)),
        seed=int(opt.get("seed", 0)),
        n_starts=int(opt.get("n_starts", 5)),
        output_dir=root / out.get("directory", "out").strip(),
    )
    if len(cfg.transforms) != len(cfg.annual_regressors):
        raise ConfigError("need one transform per annual regressor")
    if any(t not in ("log", "none") for t in cfg.transforms):
        raise ConfigError("transforms must be 'log' or 'none'")
    if cfg.quarterly_regressors and len(cfg.quarterly_regressors) != len(cfg.annual_regressors):
        raise ConfigError("annual and quarterly regressor lists differ in length")
    if cfg.aggregation not in ("sum", "mean"):
        raise ConfigError("aggregation must be 'sum' or 'mean'")
    return cfg


def configured_paths(cfg: PipelineConfig) -> list[Path]:
    paths = [cfg.annual_response, *cfg.annual_regressors, *cfg.quarterly_regressors,
             cfg.official_quarterly, cfg.scale, cfg.dirty, cfg.annual_benchmark]
    return [p for p in paths if p is not None]


def _require(paths):
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise ConfigError(f"input file not found: {p}")


def _prepare(s: Series, transform: str, base_year: int | None) -> Series:
    if base_year is not None:
        s = rebase_index(s, base_year)
    if transform == "log":
        s = log_transform(s)
    return s


def _write(path: Path, text: str):
    path.write_text(text)
    logger.info("wrote %s", path)


def _regression(cfg: PipelineConfig):
    _require([cfg.annual_response, *cfg.annual_regressors])
    y = _prepare(read_series(cfg.annual_response, ANNUAL), "none", cfg.base_year)
    xs = [
        _prepare(read_series(p, ANNUAL), tr, cfg.base_year)
        for p, tr in zip(cfg.annual_regressors, cfg.transforms)
    ]
    ds = align([y, *xs])
    return ols_fit(ds, include_trend=cfg.include_trend, include_constant=cfg.include_constant)


def cmd_cointegrate(cfg: PipelineConfig, out: Path):
    fit = _regression(cfg)
    _write(out / "regression_report.txt", fit.summary())
    write_series(out / "residuals.csv", fit.residuals)
    _write(out / "adf_table.txt", format_adf_table(adf_table(fit.residuals, cfg.adf_lags)))
    return fit


def cmd_interpolate(cfg: PipelineConfig, out: Path, fit=None) -> Series:
    if fit is None:
        fit = _regression(cfg)
    _require(cfg.quarterly_regressors)
    qs = [
        _prepare(read_series(p, QUARTERLY), tr, cfg.base_year)
        for p, tr in zip(cfg.quarterly_regressors, cfg.transforms)
    ]
    ds = align(qs)
    dirty = interpolate_quarterly(fit, [ds.response, *ds.regressors])
    write_series(out / "dirty.csv", dirty)
    if cfg.official_quarterly is not None:
        _require([cfg.official_quarterly])
        official = _prepare(read_series(cfg.official_quarterly, QUARTERLY), "none", cfg.base_year)
        linked = link_series(dirty, official)
        write_series(out / "linked.csv", linked)
        return linked
    return dirty


def _dirty_input(cfg: PipelineConfig, out: Path) -> Series:
    if cfg.dirty is not None:
        _require([cfg.dirty])
        return read_series(cfg.dirty, QUARTERLY, "dirty")
    for name in ("linked.csv", "dirty.csv"):
        if (out / name).is_file():
            return read_series(out / name, QUARTERLY, "dirty")
    raise ConfigError("no dirty series: set data.dirty or run 'interpolate' first")


def cmd_benchmark(cfg: PipelineConfig, out: Path, dirty: Series | None = None) -> int:
    if dirty is None:
        dirty = _dirty_input(cfg, out)
    bench_path = cfg.annual_benchmark or cfg.annual_response
    _require([bench_path, cfg.scale])
    annual = _prepare(read_series(bench_path, ANNUAL), "none", cfg.base_year)
    scale = None
    if cfg.scale is not None:
        scale = read_series(cfg.scale, QUARTERLY, "scale")
        n = len(dirty) - len(dirty) % 4
        scale = scale.slice_periods(dirty.start, dirty.start.shift(n - 1))
    res = run_benchmarking(
        dirty,
        annual,
        scale,
        include_u_in_benchmark_row=cfg.include_u_in_benchmark_row,
        fix_unit_measurement_variance=cfg.fix_unit_measurement_variance,
        aggregation=cfg.aggregation,
        n_starts=cfg.n_starts,
        seed=cfg.seed,
        max_iter=cfg.max_iter,
        gtol=cfg.tolerance,
    )
    write_series(out / "clean.csv", res.clean_series)
    _write(out / "components.csv", res.components_csv())
    _write(out / "fit_report.txt", res.fit.to_text())
    e = res.standardized_residuals
    write_series(out / "standardized_residuals.csv", e)
    _write(out / "diagnostics.txt", diagnose(e).to_text())

    acf = autocorrelations(e, min(20, len(e) - 1))
    _write(out / "acf.csv", "lag,acf\n" + "".join(f"{k + 1},{format_value(r)}\n" for k, r in enumerate(acf)))
    counts, edges = histogram(e)
    _write(
        out / "histogram.csv",
        "left,right,count\n"
        + "".join(f"{format_value(edges[k])},{format_value(edges[k + 1])},{c}\n" for k, c in enumerate(counts)),
    )
    theo, samp = qq_points(e)
    _write(out / "qq.csv", "theoretical,sample\n" + "".join(f"{format_value(a)},{format_value(b)}\n" for a, b in zip(theo, samp)))

    official = None
    if cfg.official_quarterly is not None and cfg.official_quarterly.is_file():
        official = _prepare(read_series(cfg.official_quarterly, QUARTERLY), "none", cfg.base_year)
    lines = ["period,dirty,clean,official"]
    for k, per in enumerate(res.clean_series.periods):
        off = ""
        if official is not None and official.start <= per <= official.end:
            off = format_value(official.value_at(per))
        lines.append(f"{per},{format_value(dirty.values[k])},{format_value(res.clean_series.values[k])},{off}")
    _write(out / "comparison.csv", "\n".join(lines) + "\n")
    _write(out / "coherence.csv", coherence_csv(normalized_coherence_report(res)))
    _write(out / "coherence_raw.csv", coherence_csv(annual_coherence_report(res, annual, cfg.aggregation)))
    if not res.fit.converged:
        logger.warning("likelihood maximization did not converge: %s", res.fit.message)
        return EXIT_WARN
    return EXIT_OK


def cmd_pipeline(cfg: PipelineConfig, out: Path) -> int:
    fit = cmd_cointegrate(cfg, out)
    dirty = cmd_interpolate(cfg, out, fit)
    return cmd_benchmark(cfg, out, dirty)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssbench", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("cointegrate", "annual cointegrating regression and ADF table"),
        ("interpolate", "quarterly dirty series from the annual coefficients"),
        ("benchmark", "state-space benchmarking of the dirty series"),
        ("pipeline", "all stages in sequence"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="INI config file")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, help="optimizer seed (overrides the config)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = load_config(args.config)
        _require(configured_paths(cfg))
        if args.seed is not None:
            cfg.seed = args.seed
        out = Path(args.out) if args.out else cfg.output_dir
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "cointegrate":
            cmd_cointegrate(cfg, out)
            return EXIT_OK
        if args.command == "interpolate":
            cmd_interpolate(cfg, out)
            return EXIT_OK
        if args.command == "benchmark":
            return cmd_benchmark(cfg, out)
        return cmd_pipeline(cfg, out)
    except (ConfigError, SeriesError, ValueError, RuntimeError, OSError) as exc:
        print(f"ssbench: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
