"""Influenza hospitalization forecasting with tree ensembles over SIkJalpha predictors."""

__version__ = "0.1.0"

from .core_data import (
    QUANTILE_LEVELS,
    EpiWeek,
    QuantileForecast,
    RegionSeries,
    adjust_for_reporting,
    aggregate_weekly,
    disaggregate_national,
    to_epiweek,
)
from .errors import (
    InsufficientDataError,
    InvalidConfigError,
    InvalidDataError,
    NoTrainingDataError,
    SikjForestError,
    UndefinedScoreError,
)
from .metrics import ScoredTarget, coverage, mae, summarize, wis
from .pipeline import (
    FeatureMode,
    GridSpec,
    Season,
    backtest,
    build_training_set,
    build_training_sets,
    forecast_current,
    mean_ensemble_baseline,
    train_horizon_models,
)
from .sikjalpha import (
    PredictorPanel,
    SikjalphaConfig,
    SikjalphaFit,
    build_design,
    fit_series,
    fit_weighted,
    forecast_daily,
    generate_predictor_grid,
    sample_trajectories,
    weekly_target_from_daily,
)
from .tree_ensemble import (
    forest_fit,
    forest_predict_mean,
    forest_predict_quantiles,
    lsboost_fit,
    lsboost_predict,
    tree_fit,
    tree_predict,
)
