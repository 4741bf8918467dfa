"""Fit SIkJalpha rates on one toy region and look at the predictor grid.

    python demos/01_fit_and_grid.py
"""
import datetime as dt

import numpy as np

from sikjforest.config import load_config, toy_config_path
from sikjforest.core_data import adjust_for_reporting
from sikjforest.io import ingest, read_populations
from sikjforest.sikjalpha import (SikjalphaConfig, beta_confidence, build_design, fit_series,
                                  forecast_daily, generate_predictor_grid)

cfg = load_config(toy_config_path())
history = ingest(cfg.data_path, cfg.schema, read_populations(cfg.populations_path))
series = adjust_for_reporting(history["36"])

# everything up to the Saturday before the forecast Sunday
as_of = dt.date(2022, 12, 18)
seen = series.window(start=cfg.season_of(as_of).start, end=as_of - dt.timedelta(days=1))
print(f"region {seen.region_id}: {len(seen)} days, {seen.incident_hosp[-7:].sum():.0f} last week")

config = SikjalphaConfig(k=3, J=7, alpha=0.98, mu=1 / 100)
fit = fit_series(seen, config)
X, y = build_design(seen, config)
box = beta_confidence(X, y, config.alpha, fit)
for i, (b, lo, hi) in enumerate(zip(fit.betas, box.lower, box.upper), start=1):
    print(f"beta_{i} = {b:.4f}  95% [{lo:.4f}, {hi:.4f}]")

daily = forecast_daily(fit, seen, 28)
print("weekly totals of the single fit:", np.round(daily.reshape(4, 7).sum(axis=1), 1))

# the full 5 x 2 x 3 grid, one 28-day trajectory per row
panel = generate_predictor_grid(seen)
print("grid:", panel.predictors.shape)
for x in (1, 4):
    w = panel.weekly_targets(x)
    print(f"{x}-week ahead: min {w.min():.0f}  mean {w.mean():.0f}  max {w.max():.0f}")

# truth, for comparison
for x in (1, 4):
    lo = as_of + dt.timedelta(days=7 * (x - 1))
    print(f"observed {x}-week ahead: {series.total(lo, lo + dt.timedelta(days=6)):.0f}")
