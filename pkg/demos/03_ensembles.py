"""Forest, boosted and mean ensembles at one forecast date.

    python demos/03_ensembles.py
"""
import datetime as dt

from sikjforest.config import load_config, toy_config_path
from sikjforest.core_data import adjust_for_reporting
from sikjforest.io import ingest, read_populations
from sikjforest.pipeline import build_training_sets, forecast_current, train_horizon_models, weekly_truth

cfg = load_config(toy_config_path())
raw = ingest(cfg.data_path, cfg.schema, read_populations(cfg.populations_path))
history = {r: adjust_for_reporting(s) for r, s in raw.items()}

as_of = dt.date(2023, 1, 15)
season_start = cfg.season_of(as_of).start
panels = {}  # shared predictor cache, reused by every call below

sets = build_training_sets(history, cfg.seasons, as_of=as_of, grid=cfg.grid, cache=panels)
print({x: len(s) for x, s in sets.items()}, "training rows per horizon")

forecasts = {"mean": forecast_current(None, history, as_of, season_start=season_start,
                                      grid=cfg.grid, cache=panels)}
for kind in ("forest", "lsboost"):
    models = train_horizon_models(sets, kind, cfg.ensemble_params(kind), seed=cfg.seed)
    forecasts[kind] = forecast_current(models, history, as_of, season_start=season_start,
                                       grid=cfg.grid, cache=panels)

print(f"{'region':>6} {'h':>2} {'truth':>8} {'mean':>8} {'forest':>8} {'lsboost':>8}")
for i, fc in enumerate(forecasts["forest"]):
    truth = weekly_truth(history[fc.region], as_of, fc.horizon)
    row = [forecasts[k][i].point for k in ("mean", "forest", "lsboost")]
    print(f"{fc.region:>6} {fc.horizon:>2} {truth:8.0f} " + " ".join(f"{v:8.0f}" for v in row))

# only the forest carries quantiles
fc = forecasts["forest"][0]
print("forest 90% interval, first row:", fc.quantile(0.05), fc.quantile(0.95))
print("lsboost quantiles:", forecasts["lsboost"][0].quantiles)
