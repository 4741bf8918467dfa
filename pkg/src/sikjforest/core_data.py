"""Daily hospitalization series, the MMWR epiweek calendar and source adjustments.

All series are held at daily cadence.  Weekly sources are spread uniformly over
the seven days of their epiweek before they become a :class:`RegionSeries`.
"""
from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import InvalidConfigError, InvalidDataError

__all__ = [
    "QUANTILE_LEVELS",
    "EpiWeek",
    "QuantileForecast",
    "RegionSeries",
    "adjust_for_reporting",
    "aggregate_weekly",
    "disaggregate_national",
    "epiweek_start",
    "expand_weekly",
    "scale_surveillance_to_national",
    "to_epiweek",
]

# FluSight quantile set: 0.01, 0.025, 0.05..0.95 by 0.05, 0.975, 0.99.
QUANTILE_LEVELS: tuple[float, ...] = tuple(
    [0.01, 0.025] + [round(0.05 * i, 2) for i in range(1, 20)] + [0.975, 0.99]
)

ONE_DAY = dt.timedelta(days=1)
ONE_WEEK = dt.timedelta(days=7)


def _as_date(value) -> dt.date:
    if isinstance(value, dt.datetime):
        return value.date()
    if isinstance(value, dt.date):
        return value
    if isinstance(value, np.datetime64):
        return value.astype("datetime64[D]").item()
    if hasattr(value, "date") and callable(value.date):  # pandas.Timestamp
        return value.date()
    return dt.date.fromisoformat(str(value))


# --------------------------------------------------------------------------
# Calendar
# --------------------------------------------------------------------------

@dataclass(frozen=True, order=True)
class EpiWeek:
    """An MMWR epidemiological week (Sunday through Saturday)."""

    year: int
    week: int
    start_date: dt.date = field(compare=False)
    end_date: dt.date = field(compare=False)

    def __str__(self) -> str:
        return f"{self.year}w{self.week:02d}"

    def shift(self, weeks: int) -> "EpiWeek":
        return to_epiweek(self.start_date + weeks * ONE_WEEK)


def epiweek_start(date) -> dt.date:
    """Sunday on or before ``date``."""
    d = _as_date(date)
    return d - dt.timedelta(days=(d.weekday() + 1) % 7)


def _week_one_start(year: int) -> dt.date:
    # MMWR week 1 is the Sunday-Saturday week that contains January 4.
    return epiweek_start(dt.date(year, 1, 4))


def to_epiweek(date) -> EpiWeek:
    start = epiweek_start(date)
    # The week belongs to the year holding its Wednesday (4+ days rule).
    year = (start + dt.timedelta(days=3)).year
    week = (start - _week_one_start(year)).days // 7 + 1
    return EpiWeek(year, week, start, start + dt.timedelta(days=6))


# --------------------------------------------------------------------------
# Series
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RegionSeries:
    """Daily incident hospitalizations for one region.

    Parameters
    ----------
    region_id : str
        Opaque region key (e.g. a FIPS code).
    population : int
        Region population, persons.
    start : datetime.date
        Date of the first value.  Dates are contiguous and daily from here.
    incident_hosp : array_like
        Nonnegative daily incident hospitalizations.
    reporting_pct : mapping, optional
        Percentage of hospitals reporting, keyed by epiweek start (Sunday).
    """

    region_id: str
    population: int
    start: dt.date
    incident_hosp: np.ndarray
    reporting_pct: Mapping[dt.date, float] | None = None

    def __post_init__(self):
        values = np.array(self.incident_hosp, dtype=float).reshape(-1)
        values.setflags(write=False)
        object.__setattr__(self, "incident_hosp", values)
        object.__setattr__(self, "start", _as_date(self.start))
        if self.reporting_pct is not None:
            pct = {epiweek_start(k): float(v) for k, v in self.reporting_pct.items()}
            object.__setattr__(self, "reporting_pct", pct)
        if not self.population > 0:
            raise InvalidDataError(
                f"region {self.region_id}: population must be positive, got {self.population}"
            )
        if not np.all(np.isfinite(values)):
            raise InvalidDataError(f"region {self.region_id}: missing or non-finite values")
        if np.any(values < 0):
            first = int(np.argmax(values < 0))
            raise InvalidDataError(
                f"region {self.region_id}: negative value on {self.start + first * ONE_DAY}"
            )

    def __len__(self) -> int:
        return self.incident_hosp.size

    @property
    def end(self) -> dt.date:
        """Last observed date (inclusive)."""
        return self.start + (len(self) - 1) * ONE_DAY

    @property
    def dates(self) -> list[dt.date]:
        return [self.start + i * ONE_DAY for i in range(len(self))]

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.incident_hosp)

    def index_of(self, date) -> int:
        return (_as_date(date) - self.start).days

    def replace_values(self, values) -> "RegionSeries":
        return RegionSeries(self.region_id, self.population, self.start, values, self.reporting_pct)

    def window(self, start=None, end=None) -> "RegionSeries":
        """Sub-series on ``[start, end]`` (inclusive, clipped to the data)."""
        lo = 0 if start is None else max(0, self.index_of(start))
        hi = len(self) if end is None else min(len(self), self.index_of(end) + 1)
        hi = max(hi, lo)
        return RegionSeries(
            self.region_id,
            self.population,
            self.start + lo * ONE_DAY,
            self.incident_hosp[lo:hi],
            self.reporting_pct,
        )

    def total(self, start, end) -> float:
        """Sum of daily values on ``[start, end]``; the span must be observed."""
        lo, hi = self.index_of(start), self.index_of(end)
        if lo < 0 or hi >= len(self) or hi < lo:
            raise InvalidDataError(
                f"region {self.region_id}: span {start}..{end} not inside {self.start}..{self.end}"
            )
        return float(self.incident_hosp[lo : hi + 1].sum())


def adjust_for_reporting(series: RegionSeries) -> RegionSeries:
    """Scale each week's daily values by ``100 / P``.

    Weeks without a reporting percentage pass through unchanged.
    """
    if not series.reporting_pct:
        return series
    values = series.incident_hosp.copy()
    for week_start, pct in sorted(series.reporting_pct.items()):
        if not 0.0 < pct <= 100.0:
            raise InvalidDataError(
                f"region {series.region_id}: reporting percentage {pct} for week "
                f"{to_epiweek(week_start)} ({week_start}) outside (0, 100]"
            )
        lo = max(0, series.index_of(week_start))
        hi = min(len(series), series.index_of(week_start) + 7)
        if lo < hi:
            values[lo:hi] *= 100.0 / pct
    return series.replace_values(values)


def aggregate_weekly(series: RegionSeries) -> list[tuple[EpiWeek, float]]:
    """Epiweek totals over the complete weeks of ``series``.

    Partial leading and trailing weeks are dropped.
    """
    if len(series) == 0:
        return []
    first = epiweek_start(series.start)
    if first < series.start:
        first += ONE_WEEK
    out = []
    week = first
    while week + 6 * ONE_DAY <= series.end:
        out.append((to_epiweek(week), series.total(week, week + 6 * ONE_DAY)))
        week += ONE_WEEK
    return out


def expand_weekly(total: float) -> np.ndarray:
    """Spread a weekly total evenly across seven days."""
    return np.full(7, float(total) / 7.0)


# --------------------------------------------------------------------------
# Network surveillance to region estimates
# --------------------------------------------------------------------------

def scale_surveillance_to_national(surveillance_total, member_population_sum, national_population):
    """Inflate a surveillance-network count to a national estimate.

    The network count is divided by the fraction of the national population
    the member states represent.
    """
    if not national_population > 0:
        raise InvalidConfigError("national population must be positive")
    if not member_population_sum > 0:
        raise InvalidConfigError("member population sum must be positive")
    return np.asarray(surveillance_total, dtype=float) / (member_population_sum / national_population)


def disaggregate_national(
    national_weekly: Sequence[float],
    region_populations: Mapping[str, float],
    national_population: float,
    *,
    member_populations: Mapping[str, float] | None = None,
) -> dict[str, np.ndarray]:
    """Distribute a national weekly series to regions by population share.

    Parameters
    ----------
    national_weekly : sequence of float
        National weekly counts.  When ``member_populations`` is given these
        are raw surveillance-network totals and are first scaled to the
        national level.
    region_populations : mapping
        Population of each output region.
    national_population : float
        Total national population.
    member_populations : mapping, optional
        Populations of the states participating in the surveillance network.

    Returns
    -------
    dict
        ``region -> national estimate * population / national_population``.
    """
    if not national_population or national_population <= 0:
        raise InvalidConfigError("national population must be positive")
    for region, pop in region_populations.items():
        if not pop > 0:
            raise InvalidConfigError(f"population of {region} must be positive")
    national = np.asarray(national_weekly, dtype=float)
    if member_populations is not None:
        national = scale_surveillance_to_national(
            national, math.fsum(member_populations.values()), national_population
        )
    return {
        region: national * (pop / national_population)
        for region, pop in region_populations.items()
    }


# --------------------------------------------------------------------------
# Forecast record
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class QuantileForecast:
    """Point and quantile forecast for one (region, forecast date, horizon).

    ``quantiles`` holds ``(level, value)`` pairs in original units, or is
    ``None`` for point-only ensembles.
    """

    region: str
    forecast_date: dt.date
    horizon: int
    point: float
    quantiles: tuple[tuple[float, float], ...] | None = None

    @property
    def levels(self) -> tuple[float, ...]:
        return tuple(q[0] for q in self.quantiles or ())

    @property
    def values(self) -> tuple[float, ...]:
        return tuple(q[1] for q in self.quantiles or ())

    def quantile(self, level: float) -> float:
        for lv, v in self.quantiles or ():
            if abs(lv - level) < 1e-9:
                return v
        raise KeyError(level)

    def problems(self, levels: Sequence[float] = QUANTILE_LEVELS) -> list[str]:
        """Invariant violations, empty when the forecast is well formed."""
        out = []
        tag = f"{self.region} h{self.horizon}"
        if not 1 <= self.horizon <= 4:
            out.append(f"{tag}: horizon {self.horizon} outside 1..4")
        if not (math.isfinite(self.point) and self.point >= 0):
            out.append(f"{tag}: point {self.point} not a nonnegative number")
        if self.quantiles is None:
            return out
        got = self.levels
        if len(got) != len(levels) or any(abs(a - b) > 1e-9 for a, b in zip(got, levels)):
            out.append(f"{tag}: quantile levels {got} differ from the required {len(levels)}")
        vals = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            out.append(f"{tag}: quantile values must be finite and nonnegative")
        if np.any(np.diff(vals) < 0):
            out.append(f"{tag}: quantile values decrease with level")
        return out
