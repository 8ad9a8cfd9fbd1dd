"""Time-series containers, CSV ingestion and simple transforms.

A :class:`Series` is an immutable, regularly spaced sequence of floats with an
explicit frequency (quarterly or annual) and a start period. Missing
observations are stored as ``NaN``; infinities are rejected.
"""
from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field
from functools import total_ordering
from typing import Iterable, Sequence

import numpy as np

QUARTERLY = "quarterly"
ANNUAL = "annual"
FREQUENCIES = (QUARTERLY, ANNUAL)

_QUARTER_RE = re.compile(r"^\s*(-?\d{1,4})Q([1-4])\s*$")
_YEAR_RE = re.compile(r"^\s*(-?\d{1,4})\s*$")


class SeriesError(ValueError):
    """Raised for malformed series data or incompatible series operations."""


@total_ordering
@dataclass(frozen=True)
class PeriodIndex:
    """A calendar year, optionally refined to a quarter (1..4)."""

    year: int
    quarter: int | None = None

    def __post_init__(self):
        if self.quarter is not None and self.quarter not in (1, 2, 3, 4):
            raise SeriesError(f"quarter must be in 1..4, got {self.quarter}")

    @property
    def frequency(self) -> str:
        return ANNUAL if self.quarter is None else QUARTERLY

    def _key(self):
        return (self.year, self.quarter or 0)

    def __lt__(self, other: PeriodIndex) -> bool:
        if self.frequency != other.frequency:
            raise SeriesError("cannot order periods of different frequency")
        return self._key() < other._key()

    def ordinal(self) -> int:
        """Integer position on the frequency's time axis (consecutive periods differ by 1)."""
        if self.quarter is None:
            return self.year
        return 4 * self.year + self.quarter - 1

    @classmethod
    def from_ordinal(cls, k: int, frequency: str) -> PeriodIndex:
        if frequency == ANNUAL:
            return cls(k)
        return cls(k // 4, k % 4 + 1)

    def shift(self, k: int) -> PeriodIndex:
        return PeriodIndex.from_ordinal(self.ordinal() + k, self.frequency)

    def __str__(self) -> str:
        if self.quarter is None:
            return f"{self.year:d}"
        return f"{self.year:d}Q{self.quarter:d}"

    @classmethod
    def parse(cls, token: str, frequency: str) -> PeriodIndex:
        """Parse ``YYYYQn`` (quarterly) or ``YYYY`` (annual)."""
        if frequency == QUARTERLY:
            m = _QUARTER_RE.match(token)
            if not m:
                raise SeriesError(f"malformed quarterly period token {token!r}")
            return cls(int(m.group(1)), int(m.group(2)))
        if frequency == ANNUAL:
            m = _YEAR_RE.match(token)
            if not m:
                raise SeriesError(f"malformed annual period token {token!r}")
            return cls(int(m.group(1)))
        raise SeriesError(f"unknown frequency {frequency!r}")


def _readonly(values) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True).reshape(-1)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Series:
    """Immutable regularly spaced series. ``NaN`` marks a missing value."""

    frequency: str
    start: PeriodIndex
    values: np.ndarray
    name: str = ""

    def __post_init__(self):
        if self.frequency not in FREQUENCIES:
            raise SeriesError(f"unknown frequency {self.frequency!r}")
        if self.start.frequency != self.frequency:
            raise SeriesError(
                f"start period {self.start} does not match frequency {self.frequency}"
            )
        values = _readonly(self.values)
        if np.isinf(values).any():
            raise SeriesError("series values must be finite or missing (NaN)")
        object.__setattr__(self, "values", values)

    @classmethod
    def quarterly(cls, year: int, quarter: int, values, name: str = "") -> Series:
        return cls(QUARTERLY, PeriodIndex(year, quarter), values, name)

    @classmethod
    def annual(cls, year: int, values, name: str = "") -> Series:
        return cls(ANNUAL, PeriodIndex(year), values, name)

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, Series):
            return NotImplemented
        return (
            self.frequency == other.frequency
            and self.start == other.start
            and self.name == other.name
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    @property
    def end(self) -> PeriodIndex:
        return self.start.shift(len(self) - 1)

    @property
    def periods(self) -> list[PeriodIndex]:
        return [self.start.shift(k) for k in range(len(self))]

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    def with_values(self, values, name: str | None = None) -> Series:
        values = np.asarray(values, dtype=float)
        if values.size != len(self):
            raise SeriesError("replacement values must keep the series length")
        return Series(self.frequency, self.start, values, self.name if name is None else name)

    def slice_periods(self, first: PeriodIndex, last: PeriodIndex) -> Series:
        """Sub-series covering ``first..last`` inclusive."""
        i = first.ordinal() - self.start.ordinal()
        j = last.ordinal() - self.start.ordinal()
        if i < 0 or j >= len(self) or j < i:
            raise SeriesError(f"{first}..{last} is not inside {self.start}..{self.end}")
        return Series(self.frequency, first, self.values[i : j + 1], self.name)

    def value_at(self, period: PeriodIndex) -> float:
        k = period.ordinal() - self.start.ordinal()
        if not 0 <= k < len(self):
            raise SeriesError(f"period {period} outside {self.start}..{self.end}")
        return float(self.values[k])

    def __repr__(self) -> str:
        return (
            f"Series({self.name!r}, {self.frequency}, {self.start}..{self.end}, "
            f"n={len(self)})"
        )


@dataclass(frozen=True)
class Dataset:
    """Response plus regressors sharing frequency, start and length."""

    response: Series
    regressors: tuple[Series, ...] = field(default_factory=tuple)

    def __post_init__(self):
        regs = tuple(self.regressors)
        object.__setattr__(self, "regressors", regs)
        for s in regs:
            if (s.frequency, s.start, len(s)) != (
                self.response.frequency,
                self.response.start,
                len(self.response),
            ):
                raise SeriesError(
                    f"regressor {s.name!r} is not aligned with response {self.response.name!r}"
                )

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.regressors]

    def design(self) -> np.ndarray:
        if not self.regressors:
            return np.empty((len(self.response), 0))
        return np.column_stack([s.values for s in self.regressors])


def parse_csv(text: str | Iterable[str], frequency: str, name: str = "", column: str | None = None) -> Series:
    """Read a ``period,value`` CSV into a :class:`Series`.

    Periods must be consecutive and strictly increasing; empty value cells are
    read as missing. With ``column`` set, the header may list several columns
    after ``period`` and the named one is read.
    """
    if isinstance(text, str):
        text = io.StringIO(text)
    reader = csv.reader(text)
    rows = [row for row in reader if row and any(c.strip() for c in row)]
    if not rows:
        raise SeriesError("empty CSV")
    header = [c.strip().lower() for c in rows[0]]
    if column is None:
        if header != ["period", "value"]:
            raise SeriesError(f"expected header 'period,value', got {','.join(rows[0])!r}")
        col = 1
    else:
        if not header or header[0] != "period" or column.lower() not in header[1:]:
            raise SeriesError(f"expected header 'period,...,{column}', got {','.join(rows[0])!r}")
        col = header.index(column.lower())
    width = len(header)
    start = None
    prev = None
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise SeriesError(f"line {lineno}: expected {width} fields, got {len(row)}")
        period = PeriodIndex.parse(row[0], frequency)
        if prev is not None:
            step = period.ordinal() - prev.ordinal()
            if step <= 0:
                raise SeriesError(f"line {lineno}: period {period} out of order or duplicated")
            if step > 1:
                raise SeriesError(f"line {lineno}: gap at {prev.shift(1)}")
        else:
            start = period
        prev = period
        cell = row[col].strip()
        if cell == "":
            values.append(math.nan)
            continue
        try:
            x = float(cell)
        except ValueError:
            raise SeriesError(f"line {lineno}: non-numeric value {cell!r}") from None
        if not math.isfinite(x):
            raise SeriesError(f"line {lineno}: non-finite value {cell!r}")
        values.append(x)
    if start is None:
        raise SeriesError("CSV has a header but no data rows")
    return Series(frequency, start, values, name)


def format_value(x: float) -> str:
    """Shortest round-trip decimal text; empty for missing."""
    if math.isnan(x):
        return ""
    return repr(float(x))


def serialize_csv(s: Series) -> str:
    lines = ["period,value"]
    for p, x in zip(s.periods, s.values):
        lines.append(f"{p},{format_value(x)}")
    return "\n".join(lines) + "\n"


def read_series(path, frequency: str, name: str | None = None) -> Series:
    from pathlib import Path

    path = Path(path)
    with open(path, newline="") as fh:
        try:
            return parse_csv(fh, frequency, name if name is not None else path.stem)
        except SeriesError as exc:
            raise SeriesError(f"{path}: {exc}") from None


def write_series(path, s: Series) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(serialize_csv(s))


def aggregate_to_annual(s: Series, method: str = "sum") -> Series:
    """Collapse complete calendar years of a quarterly series to annual values."""
    if s.frequency != QUARTERLY:
        raise SeriesError("aggregate_to_annual needs a quarterly series")
    if method not in ("sum", "mean"):
        raise SeriesError(f"unknown aggregation method {method!r}")
    if s.start.quarter != 1 or len(s) % 4:
        raise SeriesError(
            f"series {s.start}..{s.end} does not span complete calendar years"
        )
    blocks = s.values.reshape(-1, 4)
    bad = np.isnan(blocks).any(axis=1)
    if bad.any():
        year = s.start.year + int(np.argmax(bad))
        raise SeriesError(f"missing quarterly value inside year {year}")
    # explicit left-to-right order keeps the result bitwise reproducible
    out = ((blocks[:, 0] + blocks[:, 1]) + blocks[:, 2]) + blocks[:, 3]
    if method == "mean":
        out = out / 4.0
    return Series(ANNUAL, PeriodIndex(s.start.year), out, s.name)


def _year_values(s: Series, year: int) -> np.ndarray:
    if s.frequency == ANNUAL:
        k = year - s.start.year
        return s.values[k : k + 1] if 0 <= k < len(s) else s.values[:0]
    years = np.array([p.year for p in s.periods])
    return s.values[years == year]


def rebase_index(s: Series, base_year: int) -> Series:
    """Divide by the base-year average so that the base year averages 1."""
    vals = _year_values(s, base_year)
    if vals.size == 0:
        raise SeriesError(f"base year {base_year} outside {s.start}..{s.end}")
    if np.isnan(vals).any():
        raise SeriesError(f"missing values in base year {base_year}")
    base = vals.mean()
    if base == 0:
        raise SeriesError(f"base-year mean of {s.name!r} is zero")
    return s.with_values(s.values / base)


def log_transform(s: Series) -> Series:
    bad = ~(s.values > 0) & ~np.isnan(s.values)
    if bad.any():
        k = int(np.argmax(bad))
        raise SeriesError(
            f"log of non-positive value {s.values[k]!r} at {s.start.shift(k)} in {s.name!r}"
        )
    return s.with_values(np.log(s.values))


def align(series: Sequence[Series]) -> Dataset:
    """Truncate series to their common span; the first becomes the response."""
    if not series:
        raise SeriesError("align needs at least one series")
    freqs = {s.frequency for s in series}
    if len(freqs) > 1:
        raise SeriesError(f"mixed frequencies: {sorted(freqs)}")
    lo = max(s.start.ordinal() for s in series)
    hi = min(s.end.ordinal() for s in series)
    if hi < lo:
        raise SeriesError("series spans do not intersect")
    freq = series[0].frequency
    first = PeriodIndex.from_ordinal(lo, freq)
    last = PeriodIndex.from_ordinal(hi, freq)
    cut = [s.slice_periods(first, last) for s in series]
    return Dataset(cut[0], tuple(cut[1:]))
