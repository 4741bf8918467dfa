"""Which predictors do the forests split on?

    python demos/05_split_stats.py
"""
import datetime as dt

from sikjforest.config import load_config, toy_config_path
from sikjforest.core_data import adjust_for_reporting
from sikjforest.io import ingest, read_populations
from sikjforest.pipeline import build_training_sets, train_horizon_models
from sikjforest.tree_ensemble import export_split_stats, feature_split_summary

cfg = load_config(toy_config_path())
raw = ingest(cfg.data_path, cfg.schema, read_populations(cfg.populations_path))
history = {r: adjust_for_reporting(s) for r, s in raw.items()}

sets = build_training_sets(history, cfg.seasons, as_of=dt.date(2023, 2, 5), grid=cfg.grid)
models = train_horizon_models(sets, "forest", cfg.forest, seed=cfg.seed)

for x in (1, 4):
    stats = export_split_stats(models[x])
    summary = feature_split_summary(stats)
    print(f"\n{x}-week-ahead forest: {len(stats)} internal nodes")
    print(summary.head(8).to_string(index=False))

    # root splits say which setting the trees trust first
    roots = stats[stats.depth == 0].feature.value_counts()
    print("most common root features:", {k: int(v) for k, v in roots.head(3).items()})
