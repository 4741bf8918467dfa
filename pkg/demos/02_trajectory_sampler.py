"""Quantile forecasts from rates sampled inside their confidence box.

    python demos/02_trajectory_sampler.py
"""
import datetime as dt

import numpy as np

from sikjforest.config import load_config, toy_config_path
from sikjforest.core_data import adjust_for_reporting
from sikjforest.io import ingest, read_populations
from sikjforest.sikjalpha import sample_trajectories

cfg = load_config(toy_config_path())
history = ingest(cfg.data_path, cfg.schema, read_populations(cfg.populations_path))
series = adjust_for_reporting(history["06"]).window(start=dt.date(2022, 7, 31),
                                                    end=dt.date(2022, 12, 10))

# 2 lags x 3 mus x 10 draws = 60 trajectories
out = sample_trajectories(series, seed=7)
print("trajectories:", out.trajectories.shape)

for fc in out.forecasts:
    q = dict(fc.quantiles)
    print(f"h{fc.horizon}: mean {fc.point:8.1f}   "
          f"50% [{q[0.25]:8.1f}, {q[0.75]:8.1f}]   90% [{q[0.05]:8.1f}, {q[0.95]:8.1f}]")

# spread by setting: mu mostly matters late in the wave
settings = np.array([m for _, m in out.settings])
for mu in sorted(set(settings)):
    rows = out.trajectories[settings == mu]
    print(f"mu=1/{1 / mu:.0f}: 4-week mean {rows[:, 3].mean():.1f}")
