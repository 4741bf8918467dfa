"""Feature-set ablation on the toy data: full vs predictors only vs data points only.

The toy seasons are synthetic, so the ordering here says nothing about real
surveillance data; it only shows how to run the comparison.

    python demos/06_toy_ablation.py
"""
from sikjforest.config import load_config, toy_config_path
from sikjforest.core_data import adjust_for_reporting
from sikjforest.io import ingest, read_populations
from sikjforest.metrics import summarize
from sikjforest.pipeline import FeatureMode, backtest, origins_in

cfg = load_config(toy_config_path())
raw = ingest(cfg.data_path, cfg.schema, read_populations(cfg.populations_path))
history = {r: adjust_for_reporting(s) for r, s in raw.items()}

season = cfg.season("2022-23")
origins = origins_in(season)[8:28:2]
cache = {}

scored = []
for mode in FeatureMode:
    scored += backtest(history, [s for s in cfg.seasons if s != season], season,
                       kind="forest", mode=mode, grid=cfg.grid, params=cfg.forest,
                       seed=cfg.seed, cache=cache, origins=origins)

table = summarize(scored)
print(table.pivot(index="model", columns="metric", values="value").round(3))
