"""Rolling-origin training and forecasting with tree ensembles over SIkJalpha predictors.

Forecast origins are Sundays.  For an origin ``o`` the observed data end on
the Saturday ``o - 1``; the ``x``-week-ahead target is the total over days
``o + 7(x-1) .. o + 7x - 1``.  All time-series features and targets are
divided by the region population before they reach the trees.
"""
from __future__ import annotations

import datetime as dt
import enum
import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, MutableMapping, Sequence

import numpy as np

from .core_data import QUANTILE_LEVELS, QuantileForecast, RegionSeries, epiweek_start
from .errors import InsufficientDataError, InvalidConfigError, NoTrainingDataError
from .metrics import ScoredTarget
from .sikjalpha import (
    DEFAULT_ALPHAS,
    DEFAULT_LAGS,
    DEFAULT_MUS,
    HORIZON_DAYS,
    PredictorPanel,
    generate_predictor_grid,
    required_history,
    weekly_target_from_daily,
)
from .tree_ensemble import (
    LSBoostModel,
    RandomForestModel,
    forest_fit,
    forest_predict_mean,
    forest_predict_quantiles,
    lsboost_fit,
    lsboost_predict,
)

logger = logging.getLogger(__name__)

__all__ = [
    "DATAPOINT_FEATURES",
    "HORIZONS",
    "FeatureMode",
    "FeatureRow",
    "GridSpec",
    "Season",
    "TrainingSet",
    "backtest",
    "build_training_set",
    "build_training_sets",
    "feature_names",
    "forecast_current",
    "make_feature_row",
    "mean_ensemble_baseline",
    "mean_ensemble_forecast",
    "origins_in",
    "populate_panels",
    "train_horizon_models",
    "weekly_truth",
]

HORIZONS = (1, 2, 3, 4)
DATAPOINT_FEATURES = ("prev_week_hosp", "incident_week_hosp", "population")
DAY = dt.timedelta(days=1)
WEEK = dt.timedelta(days=7)


class FeatureMode(str, enum.Enum):
    FULL = "full"
    PREDICTORS_ONLY = "predictors"
    DATAPOINTS_ONLY = "datapoints"

    @property
    def uses_predictors(self) -> bool:
        return self is not FeatureMode.DATAPOINTS_ONLY

    @property
    def uses_datapoints(self) -> bool:
        return self is not FeatureMode.PREDICTORS_ONLY


@dataclass(frozen=True)
class Season:
    """A named, inclusive date range whose weeks are iterated in order."""

    name: str
    start: dt.date
    end: dt.date

    def __post_init__(self):
        if self.end < self.start:
            raise InvalidConfigError(f"season {self.name} ends before it starts")

    def contains(self, date: dt.date) -> bool:
        return self.start <= date <= self.end


@dataclass(frozen=True)
class GridSpec:
    alphas: tuple[float, ...] = DEFAULT_ALPHAS
    lags: tuple[int, ...] = DEFAULT_LAGS
    mus: tuple[float, ...] = DEFAULT_MUS
    k: int = 3
    J: int = 7

    @property
    def size(self) -> int:
        return len(set(self.alphas)) * len(set(self.lags)) * len(set(self.mus))

    @property
    def required_days(self) -> int:
        return required_history(self.k, self.J, max(self.lags))

    def panel(self, series: RegionSeries) -> PredictorPanel:
        return generate_predictor_grid(series, self.alphas, self.lags, self.mus,
                                       k=self.k, J=self.J, horizon_days=HORIZON_DAYS)

    def labels(self) -> list[tuple[float, int, float]]:
        return [(a, l, m) for a in sorted(set(self.alphas)) for l in sorted(set(self.lags))
                for m in sorted(set(self.mus))]


def _predictor_name(label) -> str:
    a, lag, mu = label
    return f"alpha={a:g},lag={lag},mu=1/{1 / mu:g}"


def feature_names(mode: FeatureMode, grid: GridSpec = GridSpec()) -> list[str]:
    """Column names of the feature vector, predictors first."""
    mode = FeatureMode(mode)
    names = []
    if mode.uses_predictors:
        names += [_predictor_name(lb) for lb in grid.labels()]
    if mode.uses_datapoints:
        names += list(DATAPOINT_FEATURES)
    return names


@dataclass(frozen=True)
class FeatureRow:
    """Ensemble input for one (region, origin, horizon).

    ``predictor_values``, the two weekly totals and ``target`` are per
    capita; ``population`` is in persons.  ``target`` is NaN at inference.
    """

    region: str
    as_of: dt.date
    horizon: int
    predictor_values: np.ndarray
    prev_week_hosp: float
    incident_week_hosp: float
    population: float
    target: float = float("nan")

    def vector(self, mode: FeatureMode) -> np.ndarray:
        mode = FeatureMode(mode)
        parts = []
        if mode.uses_predictors:
            parts.append(np.asarray(self.predictor_values, dtype=float))
        if mode.uses_datapoints:
            parts.append(np.array([self.prev_week_hosp, self.incident_week_hosp, self.population]))
        return np.concatenate(parts)


@dataclass
class TrainingSet:
    horizon: int
    mode: FeatureMode
    feature_names: list[str]
    rows: list[FeatureRow] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def X(self) -> np.ndarray:
        if not self.rows:
            return np.empty((0, len(self.feature_names)))
        return np.vstack([r.vector(self.mode) for r in self.rows])

    @property
    def y(self) -> np.ndarray:
        return np.array([r.target for r in self.rows], dtype=float)

    @property
    def keys(self) -> list[tuple[str, dt.date, int]]:
        return [(r.region, r.as_of, r.horizon) for r in self.rows]


# --------------------------------------------------------------------------
# Row construction
# --------------------------------------------------------------------------

def origins_in(season: Season) -> list[dt.date]:
    """Sundays inside ``season``."""
    first = epiweek_start(season.start)
    if first < season.start:
        first += WEEK
    out = []
    while first <= season.end:
        out.append(first)
        first += WEEK
    return out


def weekly_truth(series: RegionSeries, as_of: dt.date, x: int) -> float | None:
    """Observed ``x``-week-ahead total for origin ``as_of``, ``None`` if unobserved."""
    lo = as_of + (x - 1) * WEEK
    hi = lo + 6 * DAY
    if lo < series.start or hi > series.end:
        return None
    return series.total(lo, hi)


def _observed_window(series: RegionSeries, season_start: dt.date, as_of: dt.date) -> RegionSeries | None:
    start = max(season_start, series.start)
    if series.end < as_of - DAY or start > as_of - DAY:
        return None
    return series.window(start, as_of - DAY)


def _min_days(grid: GridSpec, min_weeks: int) -> int:
    return max(7 * min_weeks, grid.required_days)


def make_feature_row(window: RegionSeries, panel: PredictorPanel | None, x: int,
                     target_total: float | None = None) -> FeatureRow:
    """Feature row from the observed window ending the day before the origin."""
    pop = float(window.population)
    end = window.end
    incident = window.total(end - 6 * DAY, end)
    prev = window.total(end - 13 * DAY, end - 7 * DAY)
    preds = panel.weekly_targets(x) / pop if panel is not None else np.empty(0)
    target = float("nan") if target_total is None else target_total / pop
    return FeatureRow(window.region_id, end + DAY, x, preds, prev / pop, incident / pop, pop, target)


class _Panels:
    """Panel lookup that fills a shared cache on demand."""

    def __init__(self, grid: GridSpec, cache: MutableMapping | None):
        self.grid = grid
        self.labels = tuple(grid.labels())
        self.cache = {} if cache is None else cache
        self.computed = 0

    def get(self, window: RegionSeries) -> PredictorPanel:
        key = (window.region_id, window.end + DAY)
        panel = self.cache.get(key)
        if panel is None or panel.grid_labels != self.labels:
            panel = self.grid.panel(window)
            self.cache[key] = panel
            self.computed += 1
        return panel


def build_training_sets(
    history: Mapping[str, RegionSeries],
    seasons: Sequence[Season],
    horizons: Iterable[int] = HORIZONS,
    mode: FeatureMode = FeatureMode.FULL,
    *,
    as_of: dt.date | None = None,
    grid: GridSpec = GridSpec(),
    cache: MutableMapping | None = None,
    min_weeks: int = 4,
) -> dict[int, TrainingSet]:
    """Training sets for several horizons sharing one predictor-panel pass.

    Every Sunday ``o`` of every season, and every region with at least
    ``min_weeks`` weeks (and enough days for the lagged fits) observed in
    that season before ``o``, contributes one row per horizon whose target
    week is observed.  With ``as_of`` set, data on or after ``as_of`` are
    discarded first so no row depends on them.
    """
    mode = FeatureMode(mode)
    horizons = sorted(set(horizons))
    if as_of is not None:
        history = {r: s.window(end=as_of - DAY) for r, s in history.items()}
    names = feature_names(mode, grid)
    sets = {x: TrainingSet(x, mode, names) for x in horizons}
    panels = _Panels(grid, cache)
    need = _min_days(grid, min_weeks)
    for season in seasons:
        for origin in origins_in(season):
            for region in sorted(history):
                series = history[region]
                window = _observed_window(series, season.start, origin)
                if window is None or len(window) < need:
                    continue
                panel = None
                for x in horizons:
                    if origin + x * WEEK - DAY > season.end:
                        continue
                    truth = weekly_truth(series, origin, x)
                    if truth is None:
                        continue
                    if panel is None and mode.uses_predictors:
                        panel = panels.get(window)
                    sets[x].rows.append(make_feature_row(window, panel, x, truth))
    logger.debug("built training sets %s (%d new panels)",
                 {x: len(s) for x, s in sets.items()}, panels.computed)
    return sets


def populate_panels(
    history: Mapping[str, RegionSeries],
    seasons: Sequence[Season],
    cache: MutableMapping,
    *,
    as_of: dt.date | None = None,
    grid: GridSpec = GridSpec(),
    min_weeks: int = 4,
) -> int:
    """Fill ``cache`` with the panel of every eligible (region, origin).

    Origins after ``as_of`` are skipped.  Returns the number of panels
    computed (already cached panels are reused).
    """
    panels = _Panels(grid, cache)
    need = _min_days(grid, min_weeks)
    for season in seasons:
        for origin in origins_in(season):
            if as_of is not None and origin > as_of:
                break
            for region in sorted(history):
                window = _observed_window(history[region], season.start, origin)
                if window is not None and len(window) >= need:
                    panels.get(window)
    return panels.computed


def build_training_set(history, seasons, x: int, mode: FeatureMode = FeatureMode.FULL,
                       **kwargs) -> TrainingSet:
    """Training set for one horizon; raises when no row is eligible."""
    ts = build_training_sets(history, seasons, [x], mode, **kwargs)[x]
    if len(ts) == 0:
        raise NoTrainingDataError(f"no eligible (season, week, region) for {x}-week-ahead training")
    return ts


# --------------------------------------------------------------------------
# Models
# --------------------------------------------------------------------------

ENSEMBLE_KINDS = ("forest", "lsboost", "mean")


def train_horizon_models(
    training_sets: Mapping[int, TrainingSet],
    kind: str = "forest",
    params: Mapping | None = None,
    seed: int = 0,
) -> dict:
    """One independently seeded ensemble per horizon."""
    if kind not in ("forest", "lsboost"):
        raise InvalidConfigError(f"cannot train ensemble kind {kind!r}")
    params = dict(params or {})
    models = {}
    for x in sorted(training_sets):
        ts = training_sets[x]
        if len(ts) == 0:
            raise NoTrainingDataError(f"no training rows for {x}-week-ahead model")
        hseed = np.random.SeedSequence([int(seed), int(x)])
        if kind == "forest":
            model = forest_fit(ts.X, ts.y, seed=hseed, **params)
        else:
            model = lsboost_fit(ts.X, ts.y, seed=np.random.default_rng(hseed), **params)
        model.meta.update(horizon=x, mode=ts.mode.value, kind=kind,
                          feature_names=list(ts.feature_names), n_rows=len(ts), seed=int(seed))
        models[x] = model
    return models


def mean_ensemble_baseline(panel: PredictorPanel, x: int) -> float:
    """Mean of every predictor's ``x``-week-ahead total."""
    if len(panel) == 0:
        raise InvalidConfigError("empty predictor panel")
    return float(np.mean([weekly_target_from_daily(row, x) for row in panel.predictors]))


def mean_ensemble_forecast(panel: PredictorPanel, x: int,
                           levels: Sequence[float] = QUANTILE_LEVELS) -> QuantileForecast:
    """Mean-ensemble point with quantiles taken from the spread of the predictors."""
    targets = panel.weekly_targets(x)
    q = np.quantile(targets, np.asarray(levels, dtype=float))
    return _finalize(panel.region_id, panel.as_of, x, float(targets.mean()), q, levels)


def _finalize(region, as_of, x, point, qvals, levels) -> QuantileForecast:
    point = max(float(point), 0.0)
    if qvals is None:
        return QuantileForecast(region, as_of, x, point, None)
    qvals = np.maximum(np.sort(np.asarray(qvals, dtype=float)), 0.0)
    return QuantileForecast(region, as_of, x, point,
                            tuple(zip(map(float, levels), map(float, qvals))))


def forecast_current(
    models: Mapping[int, object] | None,
    history: Mapping[str, RegionSeries],
    as_of: dt.date,
    mode: FeatureMode = FeatureMode.FULL,
    *,
    season_start: dt.date,
    grid: GridSpec = GridSpec(),
    cache: MutableMapping | None = None,
    quantile_levels: Sequence[float] = QUANTILE_LEVELS,
    horizons: Iterable[int] = HORIZONS,
    min_weeks: int = 4,
) -> list[QuantileForecast]:
    """Forecasts for every region at origin ``as_of``.

    ``models`` maps horizon to a fitted forest or boosted model; ``None``
    selects the mean ensemble of the predictors.  Forest quantiles are the
    tree-spread quantiles, sorted and clamped at zero after scaling back to
    counts.  Regions without enough data are skipped and logged.
    """
    mode = FeatureMode(mode)
    panels = _Panels(grid, cache)
    need = _min_days(grid, min_weeks)
    levels = list(quantile_levels)
    out = []
    use = sorted(models) if models is not None else sorted(set(horizons))
    for region in sorted(history):
        series = history[region]
        window = _observed_window(series, season_start, as_of)
        if window is None:
            logger.warning("skipping %s: no data through %s", region, as_of - DAY)
            continue
        if len(window) < need:
            logger.warning("skipping %s: %d days observed this season, %d required",
                           region, len(window), need)
            continue
        try:
            panel = panels.get(window) if (models is None or mode.uses_predictors) else None
        except InsufficientDataError as exc:
            logger.warning("skipping %s: %s", region, exc)
            continue
        pop = float(series.population)
        for x in use:
            if models is None:
                out.append(mean_ensemble_forecast(panel, x, levels))
                continue
            model = models[x]
            _check_layout(model, mode, grid)
            v = make_feature_row(window, panel, x).vector(mode)
            if isinstance(model, RandomForestModel):
                point = pop * forest_predict_mean(model, v)
                q = pop * forest_predict_quantiles(model, v, levels)
            elif isinstance(model, LSBoostModel):
                point, q = pop * lsboost_predict(model, v), None
            else:
                raise InvalidConfigError(f"unsupported model type {type(model).__name__}")
            out.append(_finalize(region, as_of, x, point, q, levels))
    return out


def _check_layout(model, mode: FeatureMode, grid: GridSpec) -> None:
    names = model.meta.get("feature_names")
    if names is not None and list(names) != feature_names(mode, grid):
        raise InvalidConfigError(
            f"model trained with features {len(names)} ({model.meta.get('mode')}) "
            f"does not match mode {mode.value}"
        )


# --------------------------------------------------------------------------
# Rolling evaluation
# --------------------------------------------------------------------------

def backtest(
    history: Mapping[str, RegionSeries],
    seasons: Sequence[Season],
    eval_season: Season,
    *,
    kind: str = "forest",
    mode: FeatureMode = FeatureMode.FULL,
    grid: GridSpec = GridSpec(),
    params: Mapping | None = None,
    seed: int = 0,
    horizons: Iterable[int] = HORIZONS,
    cache: MutableMapping | None = None,
    quantile_levels: Sequence[float] = QUANTILE_LEVELS,
    origins: Sequence[dt.date] | None = None,
    min_weeks: int = 4,
    model_name: str | None = None,
) -> list[ScoredTarget]:
    """Prospective replay over ``eval_season``.

    At each origin the ensembles are retrained on everything observed before
    it (earlier seasons plus the elapsed part of ``eval_season``), then the
    forecasts are scored against the observed target weeks.
    """
    mode = FeatureMode(mode)
    horizons = sorted(set(horizons))
    cache = {} if cache is None else cache
    name = model_name or (f"{kind}-{mode.value}" if kind != "mean" else "mean")
    train_seasons = list(seasons)
    if eval_season not in train_seasons:
        train_seasons.append(eval_season)
    scored = []
    for origin in (origins if origins is not None else origins_in(eval_season)):
        active = [x for x in horizons
                  if any(weekly_truth(s, origin, x) is not None for s in history.values())]
        if not active:
            continue
        if kind == "mean":
            models = None
        else:
            sets = build_training_sets(history, train_seasons, active, mode, as_of=origin,
                                       grid=grid, cache=cache, min_weeks=min_weeks)
            sets = {x: s for x, s in sets.items() if len(s)}
            if not sets:
                continue
            models = train_horizon_models(sets, kind, params, seed)
        visible = {r: s.window(end=origin - DAY) for r, s in history.items()}
        fcs = forecast_current(models, visible, origin, mode, season_start=eval_season.start,
                               grid=grid, cache=cache, quantile_levels=quantile_levels,
                               horizons=active, min_weeks=min_weeks)
        for fc in fcs:
            truth = weekly_truth(history[fc.region], origin, fc.horizon)
            if truth is None:
                continue
            scored.append(ScoredTarget(fc.region, origin, fc.horizon, truth, fc.point,
                                       fc.quantiles, name))
    return scored
