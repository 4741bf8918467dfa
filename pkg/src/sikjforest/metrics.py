"""Point and probabilistic forecast scores."""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .errors import InvalidDataError, UndefinedScoreError

__all__ = [
    "ScoredTarget",
    "coverage",
    "interval_bounds",
    "mae",
    "score_frame",
    "summarize",
    "wis",
]


@dataclass(frozen=True)
class ScoredTarget:
    region: str
    week: dt.date
    horizon: int
    truth: float
    point: float
    quantiles: tuple[tuple[float, float], ...] | None = None
    model: str = ""


def mae(pairs: Iterable[tuple[float, float]]) -> float:
    """Mean absolute error over ``(truth, point)`` pairs."""
    arr = np.asarray(list(pairs), dtype=float)
    if arr.size == 0:
        raise UndefinedScoreError("MAE of an empty set of forecasts is undefined")
    return float(np.mean(np.abs(arr[:, 1] - arr[:, 0])))


def wis(truth: float, quantiles: Sequence[tuple[float, float]]) -> float:
    """Weighted interval score over ``(level, value)`` pairs.

    ``mean_k 2 * (1{y <= q_k} - tau_k) * (q_k - y)``, i.e. twice the mean
    pinball loss across the supplied quantiles.
    """
    q = np.asarray(quantiles, dtype=float)
    if q.ndim != 2 or q.shape[0] == 0:
        raise UndefinedScoreError("WIS needs at least one quantile")
    levels, values = q[:, 0], q[:, 1]
    if np.any(np.diff(levels) <= 0):
        raise InvalidDataError(f"quantile levels must be strictly increasing: {levels.tolist()}")
    below = (truth <= values).astype(float)
    return float(np.mean(2.0 * (below - levels) * (values - truth)))


def interval_bounds(quantiles: Sequence[tuple[float, float]], level: float) -> tuple[float, float]:
    """Values at the ``0.5 -/+ level/2`` quantiles of a central interval."""
    want = (0.5 - level / 2.0, 0.5 + level / 2.0)
    found = []
    for target in want:
        for lv, v in quantiles:
            if abs(lv - target) < 1e-9:
                found.append(v)
                break
        else:
            raise InvalidDataError(f"quantile level {target:g} required for {level:.0%} coverage is missing")
    return found[0], found[1]


def coverage(targets: Sequence[ScoredTarget], level: float) -> float:
    """Fraction of truths inside the central ``level`` interval."""
    if len(targets) == 0:
        raise UndefinedScoreError("coverage of an empty set of forecasts is undefined")
    inside = 0
    for t in targets:
        if t.quantiles is None:
            raise InvalidDataError(f"{t.region} {t.week} h{t.horizon}: no quantiles to score")
        lo, hi = interval_bounds(t.quantiles, level)
        inside += lo <= t.truth <= hi
    return inside / len(targets)


def score_frame(targets: Sequence[ScoredTarget]) -> pd.DataFrame:
    """Per-target scores: absolute error, WIS and 50%/90% interval hits."""
    rows = []
    for t in targets:
        row = dict(model=t.model, region=t.region, week=t.week, horizon=t.horizon,
                   truth=t.truth, point=t.point, mae=abs(t.point - t.truth),
                   wis=np.nan, cov50=np.nan, cov90=np.nan)
        if t.quantiles is not None:
            row["wis"] = wis(t.truth, t.quantiles)
            for name, level in (("cov50", 0.5), ("cov90", 0.9)):
                lo, hi = interval_bounds(t.quantiles, level)
                row[name] = float(lo <= t.truth <= hi)
        rows.append(row)
    return pd.DataFrame(rows, columns=["model", "region", "week", "horizon", "truth", "point",
                                       "mae", "wis", "cov50", "cov90"])


METRICS = ("mae", "wis", "cov50", "cov90")


def summarize(targets: Sequence[ScoredTarget], group_by: Sequence[str] = ()) -> pd.DataFrame:
    """Unweighted means of each metric, overall and per group.

    Returns a long table with columns ``(model, metric, group, value)``.  The
    overall rows carry ``group == "all"``; grouped rows carry
    ``"<key>=<value>"`` (joined with ``;`` for several keys).  Metrics that
    are undefined for a model (quantile scores of point-only ensembles) are
    omitted.
    """
    if len(targets) == 0:
        raise UndefinedScoreError("nothing to summarize")
    frame = score_frame(targets)
    out = []
    for model, mf in frame.groupby("model", sort=True):
        _append(out, model, "all", mf)
        if group_by:
            for key, gf in mf.groupby(list(group_by), sort=True):
                key = key if isinstance(key, tuple) else (key,)
                label = ";".join(f"{k}={_fmt(v)}" for k, v in zip(group_by, key))
                _append(out, model, label, gf)
    return pd.DataFrame(out, columns=["model", "metric", "group", "value"])


def _append(out, model, group, frame):
    for metric in METRICS:
        col = frame[metric]
        if col.notna().all():
            out.append((model, metric, group, float(col.mean())))


def _fmt(v):
    if isinstance(v, (dt.date, pd.Timestamp)):
        return v.isoformat()[:10]
    return str(v)
