"""Rolling-origin backtest over part of the toy 2022-23 season.

    python demos/04_backtest_scores.py
"""
from sikjforest.config import load_config, toy_config_path
from sikjforest.core_data import adjust_for_reporting
from sikjforest.io import ingest, read_populations
from sikjforest.metrics import summarize
from sikjforest.pipeline import backtest, origins_in

cfg = load_config(toy_config_path())
raw = ingest(cfg.data_path, cfg.schema, read_populations(cfg.populations_path))
history = {r: adjust_for_reporting(s) for r, s in raw.items()}

season = cfg.season("2022-23")
past = [s for s in cfg.seasons if s != season]
origins = origins_in(season)[8:24:2]
cache = {}

scored = []
for kind in ("mean", "forest"):
    scored += backtest(history, past, season, kind=kind, grid=cfg.grid,
                       params=cfg.ensemble_params(kind), seed=cfg.seed, cache=cache,
                       origins=origins)

table = summarize(scored, ["horizon"])
overall = table[table.group == "all"].pivot(index="model", columns="metric", values="value")
print(overall.round(3))

by_h = table[(table.metric == "wis") & (table.group != "all")]
print(by_h.pivot(index="group", columns="model", values="value").round(1))
