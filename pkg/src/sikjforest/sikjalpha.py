"""SIkJalpha hospitalization model.

New hospitalizations on day ``t`` are a susceptible-weighted combination of
the hospitalizations in ``k`` trailing bins of ``J`` days::

    dH(t) = S(t) * sum_i beta_i * (H(t-1-(i-1)J) - H(t-1-iJ))
    S(t)  = 1 - H(t-1) / (mu * N)

where ``H`` is the cumulative count since the start of the series.  The rates
``beta_i >= 0`` come from an exponentially weighted nonnegative least-squares
fit, and forecasts are produced by running the recursion forward.
"""
from __future__ import annotations

import datetime as dt
import itertools
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import nnls
from scipy.stats import norm

from .core_data import QUANTILE_LEVELS, QuantileForecast, RegionSeries
from .errors import InsufficientDataError, InvalidConfigError

__all__ = [
    "DEFAULT_ALPHAS",
    "DEFAULT_LAGS",
    "DEFAULT_MUS",
    "SAMPLER_MUS",
    "BetaInterval",
    "PredictorPanel",
    "SikjalphaConfig",
    "SikjalphaFit",
    "SusceptibleDepletionWarning",
    "TrajectorySample",
    "beta_confidence",
    "build_design",
    "fit_series",
    "fit_weighted",
    "forecast_daily",
    "generate_predictor_grid",
    "required_history",
    "sample_trajectories",
    "weekly_target_from_daily",
]

DEFAULT_ALPHAS = (0.90, 0.92, 0.94, 0.96, 0.98)
DEFAULT_LAGS = (0, 7)
DEFAULT_MUS = (1 / 50, 1 / 100, 1 / 200)
SAMPLER_MUS = (1 / 50, 1 / 100, 1 / 150)
HORIZON_DAYS = 28


class SusceptibleDepletionWarning(UserWarning):
    """Cumulative hospitalizations exceeded ``mu * N``; S(t) was clamped to 0."""


@dataclass(frozen=True)
class SikjalphaConfig:
    k: int = 3
    J: int = 7
    alpha: float = 0.98
    lambda_lag: int = 0
    mu: float = 1 / 100

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise InvalidConfigError(f"k must be a positive integer, got {self.k}")
        if int(self.J) != self.J or self.J < 1:
            raise InvalidConfigError(f"J must be a positive integer, got {self.J}")
        if not 0.0 < self.alpha <= 1.0:
            raise InvalidConfigError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.lambda_lag not in (0, 7):
            raise InvalidConfigError(f"lambda_lag must be 0 or 7, got {self.lambda_lag}")
        if not 0.0 < self.mu < 1.0:
            raise InvalidConfigError(f"mu must lie in (0, 1), got {self.mu}")

    @property
    def label(self) -> tuple[float, int, float]:
        return (self.alpha, self.lambda_lag, self.mu)


def required_history(k: int, J: int, lambda_lag: int = 0) -> int:
    """Days of data needed for at least one regression row."""
    return k * J + 1 + lambda_lag


@dataclass(frozen=True)
class SikjalphaFit:
    betas: np.ndarray
    config: SikjalphaConfig
    train_end: dt.date
    cumulative_hosp_at_end: float

    def __post_init__(self):
        b = np.array(self.betas, dtype=float).reshape(-1)
        if b.size != self.config.k:
            raise InvalidConfigError(f"expected {self.config.k} rates, got {b.size}")
        if np.any(b < 0):
            raise InvalidConfigError("rates must be nonnegative")
        b.setflags(write=False)
        object.__setattr__(self, "betas", b)


@dataclass(frozen=True)
class BetaInterval:
    lower: np.ndarray
    upper: np.ndarray
    level: float = 0.95

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower


# --------------------------------------------------------------------------
# Regression
# --------------------------------------------------------------------------

def _shifted_cumsum(incident: np.ndarray) -> np.ndarray:
    # c[j] = H(j - 1); c[0] = 0 is the cumulative before the first day.
    return np.concatenate(([0.0], np.cumsum(incident, dtype=float)))


def _lag_matrix(incident: np.ndarray, k: int, J: int) -> tuple[np.ndarray, np.ndarray]:
    c = _shifted_cumsum(incident)
    t = np.arange(k * J, incident.size)
    lags = np.column_stack([c[t - (i - 1) * J] - c[t - i * J] for i in range(1, k + 1)])
    return lags, t


def _susceptible(cum_prev, mu: float, population: float, region: str = "") -> np.ndarray:
    s = 1.0 - np.asarray(cum_prev, dtype=float) / (mu * population)
    if np.any(s < 0):
        warnings.warn(
            f"region {region}: cumulative hospitalizations exceed mu*N "
            f"({mu * population:.6g}); susceptible fraction clamped to 0",
            SusceptibleDepletionWarning,
            stacklevel=3,
        )
        s = np.maximum(s, 0.0)
    return s


def build_design(series: RegionSeries, config: SikjalphaConfig) -> tuple[np.ndarray, np.ndarray]:
    """Regression design for the rate fit.

    Returns ``X`` of shape ``(n - k*J, k)`` and targets ``y``; row ``r``
    corresponds to day ``t = k*J + r`` of the series.
    """
    k, J = config.k, config.J
    need = required_history(k, J)
    if len(series) < need:
        raise InsufficientDataError(
            f"region {series.region_id}: SIkJalpha fit needs {need} days, {len(series)} available",
            required=need,
            available=len(series),
        )
    incident = series.incident_hosp
    lags, t = _lag_matrix(incident, k, J)
    c = _shifted_cumsum(incident)
    s = _susceptible(c[t], config.mu, series.population, series.region_id)
    return s[:, None] * lags, incident[t].copy()


def _recency_weights(n: int, alpha: float) -> np.ndarray:
    return alpha ** np.arange(n - 1, -1, -1, dtype=float)


def fit_weighted(X, y, alpha: float) -> np.ndarray:
    """Nonnegative rates minimizing ``sum_t alpha**(T-t) * (y_t - X_t @ beta)**2``.

    The last row of ``X`` is the most recent day ``T``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[0] != y.size:
        raise InvalidConfigError(f"design {X.shape} and target {y.shape} do not match")
    if not np.any(X):
        return np.zeros(X.shape[1])
    root_w = np.sqrt(_recency_weights(y.size, alpha))
    beta, _ = nnls(X * root_w[:, None], y * root_w, maxiter=50 * X.shape[1])
    return beta


def weighted_objective(X, y, alpha: float, beta) -> float:
    r = np.asarray(y, float) - np.asarray(X, float) @ np.asarray(beta, float)
    return float(np.sum(_recency_weights(r.size, alpha) * r * r))


def _training_window(series: RegionSeries, lambda_lag: int) -> RegionSeries:
    if lambda_lag == 0:
        return series
    return series.window(end=series.end - dt.timedelta(days=lambda_lag))


def fit_series(series: RegionSeries, config: SikjalphaConfig) -> SikjalphaFit:
    """Fit rates on ``series``; a 7-day lag fits on data ending a week earlier."""
    need = required_history(config.k, config.J, config.lambda_lag)
    if len(series) < need:
        raise InsufficientDataError(
            f"region {series.region_id}: lag-{config.lambda_lag} fit needs {need} days, "
            f"{len(series)} available",
            required=need,
            available=len(series),
        )
    train = _training_window(series, config.lambda_lag)
    X, y = build_design(train, config)
    beta = fit_weighted(X, y, config.alpha)
    return SikjalphaFit(beta, config, train.end, float(train.incident_hosp.sum()))


def beta_confidence(X, y, alpha: float, fit, level: float = 0.95) -> BetaInterval:
    """Gaussian large-sample interval for each rate.

    The weighted residual variance and the weighted normal matrix give the
    coefficient standard errors.  Lower bounds are clamped at zero.
    Coefficients whose column is degenerate, or all of them when the normal
    matrix is singular, get a zero-width interval.
    """
    if not 0.0 < level < 1.0:
        raise InvalidConfigError(f"level must lie in (0, 1), got {level}")
    beta = np.asarray(getattr(fit, "betas", fit), dtype=float)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    w = _recency_weights(n, alpha)
    resid = y - X @ beta
    se = np.zeros(p)
    live = np.flatnonzero(np.any(X != 0, axis=0))
    dof = n - live.size
    if live.size and dof > 0:
        sigma2 = float(np.sum(w * resid * resid)) / dof
        Xl = X[:, live] * np.sqrt(w)[:, None]
        gram = Xl.T @ Xl
        if np.linalg.cond(gram) < 1e12:
            cov = sigma2 * np.linalg.inv(gram)
            se[live] = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    z = norm.ppf(0.5 + level / 2.0)
    return BetaInterval(np.maximum(beta - z * se, 0.0), beta + z * se, level)


# --------------------------------------------------------------------------
# Forecasting
# --------------------------------------------------------------------------

def _recurse(incident: np.ndarray, betas, k: int, J: int, mu: float, population: float,
             horizon_days: int) -> np.ndarray:
    cum = list(_shifted_cumsum(incident))
    n = incident.size
    cap = mu * population
    out = np.empty(horizon_days)
    for h in range(horizon_days):
        t = n + h
        # cum[t] = H(t-1); indices before the series start read as zero.
        drive = 0.0
        for i in range(1, k + 1):
            hi, lo = t - (i - 1) * J, t - i * J
            drive += betas[i - 1] * (cum[max(hi, 0)] - cum[max(lo, 0)])
        s = max(0.0, 1.0 - cum[t] / cap)
        dh = min(max(s * drive, 0.0), max(cap - cum[t], 0.0))
        out[h] = dh
        cum.append(cum[t] + dh)
    return out


def forecast_daily(fit: SikjalphaFit, series: RegionSeries, horizon_days: int = HORIZON_DAYS) -> np.ndarray:
    """Daily hospitalizations for the ``horizon_days`` days after ``series.end``."""
    if horizon_days < 1:
        raise InvalidConfigError("horizon_days must be at least 1")
    cfg = fit.config
    return _recurse(series.incident_hosp, fit.betas, cfg.k, cfg.J, cfg.mu,
                    series.population, horizon_days)


def weekly_target_from_daily(daily, x: int) -> float:
    """Total of days ``7(x-1)+1 .. 7x`` of a daily forecast (1-indexed)."""
    daily = np.asarray(daily, dtype=float)
    if x < 1 or daily.size < 7 * x:
        raise IndexError(f"{x}-week target needs {7 * max(x, 1)} days, got {daily.size}")
    return float(daily[7 * (x - 1) : 7 * x].sum())


# --------------------------------------------------------------------------
# Predictor grid
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PredictorPanel:
    """Daily forecasts from every grid setting for one region and origin.

    ``as_of`` is the first forecast day (the day after the last observation).
    """

    region_id: str
    as_of: dt.date
    predictors: np.ndarray
    grid_labels: tuple[tuple[float, int, float], ...]

    def __post_init__(self):
        p = np.array(self.predictors, dtype=float)
        if p.ndim != 2 or p.shape[0] != len(self.grid_labels):
            raise InvalidConfigError(
                f"predictor matrix {p.shape} does not match {len(self.grid_labels)} grid labels"
            )
        p.setflags(write=False)
        object.__setattr__(self, "predictors", p)
        object.__setattr__(self, "grid_labels", tuple(tuple(g) for g in self.grid_labels))

    def __len__(self) -> int:
        return self.predictors.shape[0]

    def weekly_targets(self, x: int) -> np.ndarray:
        return np.array([weekly_target_from_daily(row, x) for row in self.predictors])


def generate_predictor_grid(
    series: RegionSeries,
    alphas: Iterable[float] = DEFAULT_ALPHAS,
    lags: Iterable[int] = DEFAULT_LAGS,
    mus: Iterable[float] = DEFAULT_MUS,
    *,
    k: int = 3,
    J: int = 7,
    horizon_days: int = HORIZON_DAYS,
) -> PredictorPanel:
    """One daily forecast per ``(alpha, lag, mu)`` combination.

    Rows follow lexicographic order over the sorted grid values.
    """
    alphas, lags, mus = sorted(set(alphas)), sorted(set(lags)), sorted(set(mus))
    configs = [SikjalphaConfig(k, J, a, lag, m) for a, lag, m in itertools.product(alphas, lags, mus)]
    need = required_history(k, J, max(lags))
    if len(series) < need:
        raise InsufficientDataError(
            f"region {series.region_id}: predictor grid needs {need} days, {len(series)} available",
            required=need,
            available=len(series),
        )
    designs = {}
    for lag, m in itertools.product(lags, mus):
        train = _training_window(series, lag)
        designs[lag, m] = build_design(train, SikjalphaConfig(k, J, 1.0, lag, m))
    rows = np.empty((len(configs), horizon_days))
    for r, cfg in enumerate(configs):
        X, y = designs[cfg.lambda_lag, cfg.mu]
        beta = fit_weighted(X, y, cfg.alpha)
        rows[r] = _recurse(series.incident_hosp, beta, k, J, cfg.mu, series.population, horizon_days)
    return PredictorPanel(
        series.region_id,
        series.end + dt.timedelta(days=1),
        rows,
        tuple(c.label for c in configs),
    )


# --------------------------------------------------------------------------
# Trajectory sampler
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TrajectorySample:
    """Sampled weekly trajectories with their summary forecasts.

    ``trajectories`` has one row per sampled rate vector and one column per
    horizon week; ``settings`` gives the ``(lag, mu)`` that produced each row.
    """

    trajectories: np.ndarray
    settings: tuple[tuple[int, float], ...]
    forecasts: tuple[QuantileForecast, ...]

    @property
    def point(self) -> np.ndarray:
        return np.array([f.point for f in self.forecasts])


def sample_trajectories(
    series: RegionSeries,
    lags: Sequence[int] = DEFAULT_LAGS,
    mus: Sequence[float] = SAMPLER_MUS,
    n_samples: int = 10,
    seed=None,
    *,
    alpha: float = 0.98,
    level: float = 0.95,
    k: int = 3,
    J: int = 7,
    horizons: Sequence[int] = (1, 2, 3, 4),
    quantile_levels: Sequence[float] = QUANTILE_LEVELS,
) -> TrajectorySample:
    """Weekly forecast trajectories from rates drawn inside their confidence box.

    For each ``(lag, mu)`` setting, ``n_samples`` rate vectors are drawn with
    every coordinate uniform on its interval, and each is run forward.  The
    point forecast is the trajectory mean and quantiles are empirical.
    """
    if n_samples < 1:
        raise InvalidConfigError(f"n_samples must be at least 1, got {n_samples}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    horizon_days = 7 * max(horizons)
    rows, settings = [], []
    for lag, m in itertools.product(sorted(set(lags)), sorted(set(mus))):
        cfg = SikjalphaConfig(k, J, alpha, lag, m)
        need = required_history(k, J, lag)
        if len(series) < need:
            raise InsufficientDataError(
                f"region {series.region_id}: sampler needs {need} days, {len(series)} available",
                required=need,
                available=len(series),
            )
        X, y = build_design(_training_window(series, lag), cfg)
        beta = fit_weighted(X, y, alpha)
        box = beta_confidence(X, y, alpha, beta, level)
        draws = rng.uniform(box.lower, box.upper, size=(n_samples, k))
        for b in draws:
            daily = _recurse(series.incident_hosp, b, k, J, m, series.population, horizon_days)
            rows.append([weekly_target_from_daily(daily, x) for x in horizons])
            settings.append((lag, m))
    traj = np.array(rows)
    as_of = series.end + dt.timedelta(days=1)
    levels = np.asarray(quantile_levels, dtype=float)
    forecasts = []
    for j, x in enumerate(horizons):
        q = np.maximum.accumulate(np.quantile(traj[:, j], levels))
        forecasts.append(QuantileForecast(
            series.region_id, as_of, int(x), float(traj[:, j].mean()),
            tuple(zip(map(float, levels), map(float, q))),
        ))
    return TrajectorySample(traj, tuple(settings), tuple(forecasts))
