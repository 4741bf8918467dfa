"""Run configuration read from a JSON file.

Relative input paths are resolved against the directory holding the config
file; ``cache_dir`` and ``output_dir`` against the working directory.  The
``SIKJFOREST_CACHE_DIR`` environment variable overrides ``cache_dir``.
"""
from __future__ import annotations

import datetime as dt
import json
import os
from dataclasses import dataclass, field, replace
from fractions import Fraction
from importlib import resources
from pathlib import Path

from .core_data import QUANTILE_LEVELS
from .errors import InvalidConfigError
from .pipeline import ENSEMBLE_KINDS, FeatureMode, GridSpec, Season

CACHE_ENV = "SIKJFOREST_CACHE_DIR"


@dataclass(frozen=True)
class RunConfig:
    data_path: Path
    schema: str
    populations_path: Path
    seasons: tuple[Season, ...]
    current_season: str
    column_map: dict = field(default_factory=dict)
    grid: GridSpec = GridSpec()
    min_weeks: int = 4
    feature_mode: FeatureMode = FeatureMode.FULL
    ensemble: str = "forest"
    seed: int = 0
    forest: dict = field(default_factory=dict)
    lsboost: dict = field(default_factory=dict)
    quantile_levels: tuple[float, ...] = QUANTILE_LEVELS
    cache_dir: Path = Path("cache")
    output_dir: Path = Path("output")
    team: str = "SGroup-RandomForest"
    adjust_reporting: bool = True

    def season(self, name: str | None = None) -> Season:
        name = name or self.current_season
        for s in self.seasons:
            if s.name == name:
                return s
        raise InvalidConfigError(f"unknown season {name!r}; have {[s.name for s in self.seasons]}")

    def season_of(self, date: dt.date) -> Season:
        for s in self.seasons:
            if s.contains(date):
                return s
        raise InvalidConfigError(f"{date} lies in no configured season")

    def ensemble_params(self, kind: str | None = None) -> dict:
        kind = kind or self.ensemble
        return dict(self.forest if kind == "forest" else self.lsboost if kind == "lsboost" else {})

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        if "feature_mode" in kw:
            kw["feature_mode"] = FeatureMode(kw["feature_mode"])
        if "ensemble" in kw and kw["ensemble"] not in ENSEMBLE_KINDS:
            raise InvalidConfigError(f"ensemble must be one of {ENSEMBLE_KINDS}")
        return replace(self, **kw)


def _number(v) -> float:
    # Allows "1/50" style fractions for readability in the config file.
    if isinstance(v, str):
        return float(Fraction(v))
    return float(v)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidConfigError(f"cannot read config {path}: {exc}") from None
    base = path.parent

    def rel(p):
        p = Path(p)
        return p if p.is_absolute() else base / p

    try:
        data = raw["data"]
        seasons = tuple(
            Season(s["name"], dt.date.fromisoformat(s["start"]), dt.date.fromisoformat(s["end"]))
            for s in raw["seasons"]
        )
        g = raw.get("grid", {})
        grid = GridSpec(
            alphas=tuple(_number(a) for a in g.get("alphas", GridSpec.alphas)),
            lags=tuple(int(x) for x in g.get("lags", GridSpec.lags)),
            mus=tuple(_number(m) for m in g.get("mus", GridSpec.mus)),
            k=int(g.get("k", 3)),
            J=int(g.get("J", 7)),
        )
        cfg = RunConfig(
            data_path=rel(data["path"]),
            schema=data.get("schema", "daily_hosp"),
            populations_path=rel(data["populations"]),
            column_map=dict(data.get("column_map", {})),
            seasons=seasons,
            current_season=raw.get("current_season", seasons[-1].name),
            grid=grid,
            min_weeks=int(raw.get("min_weeks", 4)),
            feature_mode=FeatureMode(raw.get("feature_mode", "full")),
            ensemble=raw.get("ensemble", "forest"),
            seed=int(raw.get("seed", 0)),
            forest=dict(raw.get("forest", {})),
            lsboost=dict(raw.get("lsboost", {})),
            quantile_levels=tuple(float(q) for q in raw.get("quantile_levels", QUANTILE_LEVELS)),
            cache_dir=Path(os.environ.get(CACHE_ENV) or raw.get("cache_dir", "cache")),
            output_dir=Path(raw.get("output_dir", "output")),
            team=raw.get("team", "SGroup-RandomForest"),
            adjust_reporting=bool(raw.get("adjust_reporting", True)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidConfigError(f"invalid config {path}: {exc!r}") from None
    if cfg.ensemble not in ENSEMBLE_KINDS:
        raise InvalidConfigError(f"ensemble must be one of {ENSEMBLE_KINDS}")
    cfg.season(cfg.current_season)
    return cfg


def toy_config_path() -> Path:
    """Path of the bundled toy configuration."""
    return Path(str(resources.files("sikjforest") / "data" / "toy_config.json"))
