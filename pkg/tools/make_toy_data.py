"""Regenerate the bundled toy dataset (3 regions, 2 synthetic seasons).

    python tools/make_toy_data.py

Each season is a seasonally forced renewal epidemic with susceptible
depletion; hospitalizations are a Poisson-thinned fraction of infections.
During part of the second season only a share of hospitals report, and the
reported counts are scaled down accordingly (``reporting_pct`` column).
"""
import csv
import datetime as dt
import json
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "sikjforest" / "data"
START = dt.date(2021, 8, 1)
END = dt.date(2023, 5, 27)
SEASONS = [
    {"name": "2021-22", "start": "2021-08-01", "end": "2022-07-30"},
    {"name": "2022-23", "start": "2022-07-31", "end": "2023-05-27"},
]
REGIONS = {
    # region: (population, per-season (R0, peak day offset, hosp ratio))
    "01": (5_024_279, [(1.05, 150, 0.011), (1.07, 130, 0.012)]),
    "06": (39_538_223, [(1.02, 170, 0.009), (1.04, 140, 0.010)]),
    "36": (20_201_249, [(1.08, 140, 0.010), (1.05, 150, 0.011)]),
}
NATIONAL = 331_449_281
REPORTING = (dt.date(2022, 10, 2), dt.date(2022, 11, 26))  # under-reporting span


def season_curve(rng, n_days, pop, r0, peak, ratio):
    gen = 7.0
    immune_naive = 0.15 * pop
    inf = np.zeros(n_days)
    inf[:7] = 50.0
    susceptible = immune_naive
    for t in range(7, n_days):
        forcing = 1.0 + 0.25 * np.cos(2 * np.pi * (t - peak) / 365.0)
        rt = r0 * forcing * susceptible / immune_naive
        inf[t] = rt / gen * inf[t - 7 : t].sum() * rng.lognormal(0.0, 0.05) + 5.0
        susceptible = max(susceptible - inf[t], 0.0)
    lagged = np.concatenate([np.zeros(5), inf[:-5]])
    return rng.poisson(ratio * lagged).astype(float)


def main():
    rng = np.random.default_rng(20221009)
    n_total = (END - START).days + 1
    rows = []
    for region, (pop, params) in REGIONS.items():
        series = []
        for season, (r0, peak, ratio) in zip(SEASONS, params):
            s0 = dt.date.fromisoformat(season["start"])
            s1 = dt.date.fromisoformat(season["end"])
            series.append(season_curve(rng, (s1 - s0).days + 1, pop, r0, peak, ratio))
        values = np.concatenate(series)
        assert values.size == n_total
        pct_by_week = {}
        for i, v in enumerate(values):
            day = START + dt.timedelta(days=i)
            pct = ""
            if REPORTING[0] <= day <= REPORTING[1]:
                week = day - dt.timedelta(days=(day.weekday() + 1) % 7)
                if week not in pct_by_week:
                    pct_by_week[week] = float(rng.choice([60, 70, 75, 80, 90]))
                pct = pct_by_week[week]
                v = np.round(v * pct / 100.0)
                pct = f"{pct:g}"
            rows.append((day.isoformat(), region, f"{v:g}", pct))

    OUT.mkdir(parents=True, exist_ok=True)
    with open(OUT / "toy_hosp.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "region_id", "value", "reporting_pct"])
        w.writerows(sorted(rows, key=lambda r: (r[1], r[0])))
    with open(OUT / "toy_populations.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["region_id", "population", "flusurv_member"])
        w.writerow(["US", NATIONAL, 0])
        for region, (pop, _) in REGIONS.items():
            w.writerow([region, pop, 1 if region != "06" else 0])
    config = {
        "data": {"path": "toy_hosp.csv", "schema": "daily_hosp",
                 "populations": "toy_populations.csv"},
        "seasons": SEASONS,
        "current_season": "2022-23",
        "grid": {"alphas": [0.90, 0.92, 0.94, 0.96, 0.98], "lags": [0, 7],
                 "mus": ["1/50", "1/100", "1/200"], "k": 3, "J": 7},
        "min_weeks": 4,
        "feature_mode": "full",
        "ensemble": "forest",
        "seed": 2022,
        "forest": {"n_trees": 56, "min_leaf": 5, "bootstrap": True},
        "lsboost": {"n_stages": 100, "learn_rate": 1.0, "max_depth": 3, "min_leaf": 5},
        "cache_dir": "sikjforest-cache",
        "output_dir": "sikjforest-output",
        "team": "SGroup-RandomForest",
        "adjust_reporting": True,
    }
    (OUT / "toy_config.json").write_text(json.dumps(config, indent=2) + "\n")


if __name__ == "__main__":
    main()
