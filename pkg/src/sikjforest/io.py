"""File formats: source ingestion, FluSight submissions and the predictor-panel cache."""
from __future__ import annotations

import csv
import datetime as dt
import math
from collections import defaultdict
from collections.abc import MutableMapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core_data import (
    QUANTILE_LEVELS,
    QuantileForecast,
    RegionSeries,
    disaggregate_national,
    epiweek_start,
    expand_weekly,
)
from .errors import InvalidConfigError, InvalidDataError
from .sikjalpha import PredictorPanel

__all__ = [
    "SCHEMAS",
    "SUBMISSION_COLUMNS",
    "PanelStore",
    "PopulationTable",
    "ValidationReport",
    "ingest",
    "read_populations",
    "read_submission",
    "target_name",
    "validate_submission",
    "write_series",
    "write_submission",
]

SCHEMAS = ("daily_hosp", "weekly_ili", "flusurv")
SOURCE_COLUMNS = ("date", "region_id", "value")
DAY = dt.timedelta(days=1)


# --------------------------------------------------------------------------
# Populations
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PopulationTable:
    """Region populations plus the national total and surveillance membership."""

    populations: Mapping[str, int]
    national_population: int | None = None
    national_id: str = "US"
    flusurv_members: frozenset = frozenset()

    def __getitem__(self, region: str) -> int:
        return self.populations[region]

    def __contains__(self, region) -> bool:
        return region in self.populations

    @property
    def regions(self) -> list[str]:
        return sorted(self.populations)


def read_populations(path, national_id: str = "US") -> PopulationTable:
    """Read ``region_id,population[,flusurv_member]``; the national row is kept apart."""
    pops, members, national = {}, set(), None
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        _require_columns(reader.fieldnames, ("region_id", "population"), path)
        for lineno, row in enumerate(reader, start=2):
            region = row["region_id"].strip()
            try:
                pop = int(float(row["population"]))
            except ValueError:
                raise InvalidDataError(f"{path}:{lineno}: bad population {row['population']!r}") from None
            if pop <= 0:
                raise InvalidDataError(f"{path}:{lineno}: population must be positive")
            if region == national_id:
                national = pop
                continue
            pops[region] = pop
            if str(row.get("flusurv_member") or "").strip().lower() in ("1", "true", "yes"):
                members.add(region)
    return PopulationTable(pops, national, national_id, frozenset(members))


# --------------------------------------------------------------------------
# Ingestion
# --------------------------------------------------------------------------

def _require_columns(found, required, path):
    missing = [c for c in required if c not in (found or [])]
    if missing:
        raise InvalidDataError(f"{path}: header lacks column(s) {', '.join(missing)}; found {found}")


def _parse_date(text, path, lineno) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        raise InvalidDataError(f"{path}:{lineno}: bad ISO date {text!r}") from None


def _parse_float(text, what, path, lineno) -> float:
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise InvalidDataError(f"{path}:{lineno}: bad {what} {text!r}") from None
    if not math.isfinite(v):
        raise InvalidDataError(f"{path}:{lineno}: non-finite {what}")
    return v


def _read_records(path, column_map):
    """Yield ``(lineno, date, region, value, pct or None)`` from a source file."""
    rename = {v: k for k, v in (column_map or {}).items()}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = [rename.get(c, c) for c in (reader.fieldnames or [])]
        _require_columns(header, SOURCE_COLUMNS, path)
        reader.fieldnames = header
        for lineno, row in enumerate(reader, start=2):
            if None in row or any(row.get(c) is None for c in SOURCE_COLUMNS):
                raise InvalidDataError(f"{path}:{lineno}: wrong number of fields")
            date = _parse_date(row["date"], path, lineno)
            value = _parse_float(row["value"], "value", path, lineno)
            if value < 0:
                raise InvalidDataError(f"{path}:{lineno}: negative value {value}")
            pct_text = (row.get("reporting_pct") or "").strip()
            pct = _parse_float(pct_text, "reporting_pct", path, lineno) if pct_text else None
            if pct is not None and not 0 < pct <= 100:
                raise InvalidDataError(f"{path}:{lineno}: reporting_pct {pct} outside (0, 100]")
            yield lineno, date, row["region_id"].strip(), value, pct


def _check_region(region, populations, path, lineno):
    if region not in populations:
        raise InvalidDataError(
            f"{path}:{lineno}: unknown region {region!r}; valid codes: {', '.join(populations.regions)}"
        )


def _assemble(region, days: dict, pcts: dict, population, path) -> RegionSeries:
    dates = sorted(days)
    start, end = dates[0], dates[-1]
    n = (end - start).days + 1
    if n != len(dates):
        have = set(dates)
        gap = next(start + i * DAY for i in range(n) if start + i * DAY not in have)
        raise InvalidDataError(f"{path}: region {region} has no value for {gap}")
    values = np.array([days[d] for d in dates])
    return RegionSeries(region, population, start, values, pcts or None)


def _add_pct(pcts, region, date, pct, path, lineno):
    if pct is None:
        return
    week = epiweek_start(date)
    old = pcts[region].get(week)
    if old is not None and old != pct:
        raise InvalidDataError(f"{path}:{lineno}: conflicting reporting_pct for {region} week of {week}")
    pcts[region][week] = pct


def ingest(path, schema: str, populations: PopulationTable, *,
           column_map: Mapping[str, str] | None = None) -> dict[str, RegionSeries]:
    """Load a source file into daily region series.

    Schemas
    -------
    ``daily_hosp``
        One row per region and day.
    ``weekly_ili``
        One row per region and epiweek (``date`` any day in the week); the
        total is spread evenly over the week's seven days.
    ``flusurv``
        Surveillance-network weekly counts (summed over rows sharing a
        week).  They are scaled to a national estimate using the member
        populations and distributed to every region by population share.

    ``column_map`` maps canonical names (``date``, ``region_id``, ``value``,
    ``reporting_pct``) to the headers actually used in the file.
    """
    if schema not in SCHEMAS:
        raise InvalidConfigError(f"unknown schema {schema!r}; expected one of {SCHEMAS}")
    path = Path(path)
    days = defaultdict(dict)
    pcts = defaultdict(dict)

    if schema == "flusurv":
        weekly = defaultdict(float)
        for lineno, date, _, value, _ in _read_records(path, column_map):
            weekly[epiweek_start(date)] += value
        if not weekly:
            return {}
        if not populations.national_population:
            raise InvalidConfigError(f"{path}: flusurv ingestion needs a national population row")
        if not populations.flusurv_members:
            raise InvalidConfigError(f"{path}: flusurv ingestion needs flusurv_member regions")
        weeks = sorted(weekly)
        shares = disaggregate_national(
            [weekly[w] for w in weeks],
            {r: populations[r] for r in populations.regions},
            populations.national_population,
            member_populations={r: populations[r] for r in populations.flusurv_members},
        )
        for region, series in shares.items():
            for week, total in zip(weeks, series):
                for i, v in enumerate(expand_weekly(total)):
                    days[region][week + i * DAY] = float(v)
    else:
        for lineno, date, region, value, pct in _read_records(path, column_map):
            _check_region(region, populations, path, lineno)
            if schema == "daily_hosp":
                if date in days[region]:
                    raise InvalidDataError(f"{path}:{lineno}: duplicate value for {region} on {date}")
                days[region][date] = value
            else:
                week = epiweek_start(date)
                if week in days[region]:
                    raise InvalidDataError(f"{path}:{lineno}: duplicate week {week} for {region}")
                for i, v in enumerate(expand_weekly(value)):
                    days[region][week + i * DAY] = float(v)
            _add_pct(pcts, region, date, pct, path, lineno)

    return {
        region: _assemble(region, days[region], pcts.get(region), populations[region], path)
        for region in sorted(days)
    }


def write_series(series: Mapping[str, RegionSeries], path) -> Path:
    """Write daily series in the ``daily_hosp`` schema (values at full precision)."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SOURCE_COLUMNS)
        for region in sorted(series):
            s = series[region]
            for d, v in zip(s.dates, s.incident_hosp):
                w.writerow([d.isoformat(), region, repr(float(v))])
    return path


# --------------------------------------------------------------------------
# Submissions
# --------------------------------------------------------------------------

SUBMISSION_COLUMNS = ("forecast_date", "target", "target_end_date", "location", "type",
                      "quantile", "value")
_TARGET_SUFFIX = " wk ahead inc flu hosp"


def target_name(horizon: int) -> str:
    return f"{horizon}{_TARGET_SUFFIX}"


def _target_horizon(text: str) -> int | None:
    if not text.endswith(_TARGET_SUFFIX):
        return None
    head = text[: -len(_TARGET_SUFFIX)]
    return int(head) if head.isdigit() and 1 <= int(head) <= 4 else None


def target_end_date(forecast_date: dt.date, horizon: int) -> dt.date:
    """Saturday closing the ``horizon``-th week after a Sunday forecast date."""
    return forecast_date + dt.timedelta(days=7 * horizon - 1)


def _level_text(level: float) -> str:
    return format(level, "g")


class SubmissionError(InvalidDataError):
    def __init__(self, problems: Sequence[str]):
        super().__init__("refusing to write submission:\n  " + "\n  ".join(problems))
        self.problems = list(problems)


def write_submission(forecasts: Iterable[QuantileForecast], forecast_date: dt.date, path, *,
                     levels: Sequence[float] = QUANTILE_LEVELS,
                     point_only: bool = False) -> Path:
    """Write a FluSight-style CSV, one point row and one row per quantile level.

    Rows are ordered by location, target, type and level.  Nothing is
    written if any forecast breaks its invariants.
    """
    forecasts = list(forecasts)
    problems = []
    seen = set()
    for fc in forecasts:
        problems += fc.problems(levels) if fc.quantiles is not None else fc.problems(())
        if fc.quantiles is None and not point_only:
            problems.append(f"{fc.region} h{fc.horizon}: no quantiles (point-only forecast)")
        if fc.forecast_date != forecast_date:
            problems.append(f"{fc.region} h{fc.horizon}: forecast date {fc.forecast_date} != {forecast_date}")
        key = (fc.region, fc.horizon)
        if key in seen:
            problems.append(f"{fc.region} h{fc.horizon}: duplicate forecast")
        seen.add(key)
    if problems:
        raise SubmissionError(problems)

    rows = []
    for fc in sorted(forecasts, key=lambda f: (f.region, f.horizon)):
        base = [forecast_date.isoformat(), target_name(fc.horizon),
                target_end_date(forecast_date, fc.horizon).isoformat(), fc.region]
        rows.append(base + ["point", "", repr(float(fc.point))])
        for level, value in fc.quantiles or ():
            rows.append(base + ["quantile", _level_text(level), repr(float(value))])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUBMISSION_COLUMNS)
        w.writerows(rows)
    return path


def read_submission(path) -> list[QuantileForecast]:
    """Parse a submission file back into forecasts (no validation)."""
    groups = defaultdict(lambda: {"point": None, "quantiles": []})
    meta = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        _require_columns(reader.fieldnames, SUBMISSION_COLUMNS, path)
        for lineno, row in enumerate(reader, start=2):
            h = _target_horizon(row["target"])
            if h is None:
                raise InvalidDataError(f"{path}:{lineno}: bad target {row['target']!r}")
            key = (row["location"], h)
            meta[key] = _parse_date(row["forecast_date"], path, lineno)
            value = _parse_float(row["value"], "value", path, lineno)
            if row["type"] == "point":
                groups[key]["point"] = value
            else:
                level = _parse_float(row["quantile"], "quantile", path, lineno)
                groups[key]["quantiles"].append((level, value))
    out = []
    for key in sorted(groups):
        g = groups[key]
        qs = tuple(sorted(g["quantiles"])) or None
        point = g["point"] if g["point"] is not None else float("nan")
        out.append(QuantileForecast(key[0], meta[key], key[1], point, qs))
    return out


@dataclass
class ValidationReport:
    path: Path
    n_rows: int = 0
    problems: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems

    def __str__(self) -> str:
        if self.ok:
            return f"{self.path}: OK ({self.n_rows} rows)"
        return f"{self.path}: {len(self.problems)} problem(s)\n  " + "\n  ".join(self.problems)


def validate_submission(path, levels: Sequence[float] = QUANTILE_LEVELS) -> ValidationReport:
    """Check every submission-row invariant; failures are reported, not raised."""
    path = Path(path)
    report = ValidationReport(path)
    bad = report.problems.append
    try:
        fh = open(path, newline="")
    except OSError as exc:
        bad(f"cannot read file: {exc}")
        return report
    groups = defaultdict(lambda: {"point": 0, "levels": {}})
    with fh:
        reader = csv.DictReader(fh)
        missing = [c for c in SUBMISSION_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            bad(f"header lacks column(s) {', '.join(missing)}")
            return report
        for lineno, row in enumerate(reader, start=2):
            report.n_rows += 1
            where = f"line {lineno}"
            try:
                fdate = dt.date.fromisoformat(row["forecast_date"])
                edate = dt.date.fromisoformat(row["target_end_date"])
            except (TypeError, ValueError):
                bad(f"{where}: bad date")
                continue
            h = _target_horizon(row["target"] or "")
            if h is None:
                bad(f"{where}: bad target {row['target']!r}")
                continue
            if fdate.weekday() != 6:
                bad(f"{where}: forecast_date {fdate} is not a Sunday")
            if edate != target_end_date(fdate, h):
                bad(f"{where}: target_end_date {edate} should be {target_end_date(fdate, h)}")
            try:
                value = float(row["value"])
            except (TypeError, ValueError):
                bad(f"{where}: bad value {row['value']!r}")
                continue
            if not math.isfinite(value) or value < 0:
                bad(f"{where}: value {value} must be finite and nonnegative")
            g = groups[(row["location"], row["target"])]
            if row["type"] == "point":
                if (row["quantile"] or "").strip():
                    bad(f"{where}: point row carries a quantile")
                g["point"] += 1
            elif row["type"] == "quantile":
                try:
                    level = float(row["quantile"])
                except (TypeError, ValueError):
                    bad(f"{where}: bad quantile level {row['quantile']!r}")
                    continue
                if level in g["levels"]:
                    bad(f"{where}: duplicate quantile {level:g}")
                g["levels"][level] = value
            else:
                bad(f"{where}: type {row['type']!r} is neither point nor quantile")
    for (loc, target), g in sorted(groups.items()):
        tag = f"({loc}, {target})"
        if g["point"] != 1:
            bad(f"{tag}: {g['point']} point rows, expected 1")
        got = sorted(g["levels"])
        for lv in levels:
            if not any(abs(lv - x) < 1e-9 for x in got):
                bad(f"{tag}: missing quantile level {lv:g}")
        for x in got:
            if not any(abs(lv - x) < 1e-9 for lv in levels):
                bad(f"{tag}: unexpected quantile level {x:g}")
        vals = [g["levels"][x] for x in got]
        if any(b < a for a, b in zip(vals, vals[1:])):
            bad(f"{tag}: quantile values cross (decrease with level)")
    return report


# --------------------------------------------------------------------------
# Predictor-panel cache
# --------------------------------------------------------------------------

class PanelStore(MutableMapping):
    """Predictor panels keyed by ``(region, as_of)``, persisted as a flat CSV.

    Columns are ``region, as_of, alpha, lambda, mu, day_1 .. day_28``, one row
    per predictor.  :meth:`flush` appends only panels added since the last
    load or flush, so weekly runs extend the file instead of rewriting it.
    Values are written with ``repr`` and therefore reload bit-for-bit.
    """

    FILENAME = "predictor_panels.csv"

    def __init__(self, directory, horizon_days: int = 28):
        self.path = Path(directory) / self.FILENAME
        self.horizon_days = horizon_days
        self._panels: dict = {}
        self._pending: list = []
        if self.path.exists():
            self._load()

    @property
    def columns(self) -> list[str]:
        return ["region", "as_of", "alpha", "lambda", "mu"] + [
            f"day_{i}" for i in range(1, self.horizon_days + 1)
        ]

    def _load(self):
        rows = defaultdict(list)
        with open(self.path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != self.columns:
                raise InvalidDataError(f"{self.path}: unexpected panel cache header")
            for rec in reader:
                key = (rec[0], dt.date.fromisoformat(rec[1]))
                rows[key].append(((float(rec[2]), int(rec[3]), float(rec[4])),
                                  [float(v) for v in rec[5:]]))
        for (region, as_of), entries in rows.items():
            self._panels[region, as_of] = PredictorPanel(
                region, as_of, np.array([e[1] for e in entries]), tuple(e[0] for e in entries)
            )

    def __getitem__(self, key):
        return self._panels[key]

    def __setitem__(self, key, panel: PredictorPanel):
        if key not in self._panels:
            self._pending.append(key)
        self._panels[key] = panel

    def __delitem__(self, key):
        raise TypeError("the panel cache is append-only")

    def __iter__(self):
        return iter(self._panels)

    def __len__(self) -> int:
        return len(self._panels)

    @property
    def pending(self) -> int:
        return len(self._pending)

    def flush(self) -> int:
        """Append pending panels to disk; returns the number written."""
        if not self._pending:
            return 0
        self.path.parent.mkdir(parents=True, exist_ok=True)
        new_file = not self.path.exists()
        with open(self.path, "a", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if new_file:
                w.writerow(self.columns)
            for key in sorted(self._pending):
                panel = self._panels[key]
                for (a, lag, mu), row in zip(panel.grid_labels, panel.predictors):
                    w.writerow([panel.region_id, panel.as_of.isoformat(), repr(float(a)), int(lag),
                                repr(float(mu))] + [repr(float(v)) for v in row])
        n = len(self._pending)
        self._pending.clear()
        return n
