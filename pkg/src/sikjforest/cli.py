"""Command-line driver for the weekly forecasting run.

Subcommands: ``prepare``, ``predictors``, ``train``, ``forecast``,
``evaluate``, ``backtest`` and ``validate``.  Every command reads a JSON run
configuration (the bundled toy configuration by default).
"""
from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import RunConfig, load_config, toy_config_path
from .core_data import adjust_for_reporting
from .errors import InvalidConfigError, SikjForestError
from .io import (
    PanelStore,
    ingest,
    read_populations,
    read_submission,
    validate_submission,
    write_series,
    write_submission,
)
from .metrics import ScoredTarget, score_frame, summarize
from .pipeline import (
    HORIZONS,
    backtest,
    build_training_sets,
    forecast_current,
    origins_in,
    populate_panels,
    train_horizon_models,
    weekly_truth,
)
from .tree_ensemble import export_split_stats, load_model, save_model

logger = logging.getLogger("sikjforest")

PREPARED = "prepared.csv"


# --------------------------------------------------------------------------
# Shared steps
# --------------------------------------------------------------------------

def _sunday(text: str) -> dt.date:
    try:
        d = dt.date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an ISO date: {text!r}") from None
    if d.weekday() != 6:
        raise argparse.ArgumentTypeError(f"{d} is not a Sunday; forecasts are anchored to Sundays")
    return d


def _require_as_of(args) -> dt.date:
    if args.as_of is None:
        raise InvalidConfigError(f"`{args.command}` needs --as-of DATE")
    return args.as_of


def prepare(cfg: RunConfig) -> dict:
    """Ingest the configured source, apply reporting adjustment and cache it."""
    pops = read_populations(cfg.populations_path)
    series = ingest(cfg.data_path, cfg.schema, pops, column_map=cfg.column_map)
    if cfg.adjust_reporting:
        series = {r: adjust_for_reporting(s) for r, s in series.items()}
    cfg.cache_dir.mkdir(parents=True, exist_ok=True)
    write_series(series, cfg.cache_dir / PREPARED)
    return series


def load_history(cfg: RunConfig) -> dict:
    path = cfg.cache_dir / PREPARED
    if not path.exists():
        logger.info("no prepared data in %s; running prepare", cfg.cache_dir)
        return prepare(cfg)
    return ingest(path, "daily_hosp", read_populations(cfg.populations_path))


def model_dir(cfg: RunConfig) -> Path:
    return cfg.cache_dir / "models" / f"{cfg.ensemble}-{cfg.feature_mode.value}"


def submission_path(cfg: RunConfig, as_of: dt.date) -> Path:
    return cfg.output_dir / f"{as_of.isoformat()}-{cfg.team}-{cfg.ensemble}-{cfg.feature_mode.value}.csv"


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def cmd_prepare(cfg, args) -> int:
    series = prepare(cfg)
    print(f"prepared {len(series)} region(s) -> {cfg.cache_dir / PREPARED}")
    return 0


def cmd_predictors(cfg, args) -> int:
    history = load_history(cfg)
    store = PanelStore(cfg.cache_dir)
    before = len(store)
    populate_panels(history, cfg.seasons, store, as_of=args.as_of, grid=cfg.grid,
                    min_weeks=cfg.min_weeks)
    written = store.flush()
    print(f"panel cache {store.path}: {before} cached, {written} appended")
    return 0


def cmd_train(cfg, args) -> int:
    as_of = _require_as_of(args)
    if cfg.ensemble == "mean":
        print("mean ensemble needs no training")
        return 0
    history = load_history(cfg)
    store = PanelStore(cfg.cache_dir)
    sets = build_training_sets(history, cfg.seasons, HORIZONS, cfg.feature_mode, as_of=as_of,
                               grid=cfg.grid, cache=store, min_weeks=cfg.min_weeks)
    store.flush()
    models = train_horizon_models(sets, cfg.ensemble, cfg.ensemble_params(), cfg.seed)
    out = model_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    for x, model in models.items():
        model.meta["as_of"] = as_of.isoformat()
        save_model(model, out / f"h{x}.npz")
        export_split_stats(model).to_csv(out / f"split_stats_h{x}.csv", index=False)
        print(f"h{x}: {len(sets[x])} rows, {len(model.trees)} trees -> {out / f'h{x}.npz'}")
    return 0


def cmd_forecast(cfg, args) -> int:
    as_of = _require_as_of(args)
    history = load_history(cfg)
    models = None
    if cfg.ensemble != "mean":
        mdir = model_dir(cfg)
        missing = [x for x in HORIZONS if not (mdir / f"h{x}.npz").exists()]
        if missing:
            raise InvalidConfigError(f"no trained models in {mdir}; run `train` first")
        models = {x: load_model(mdir / f"h{x}.npz") for x in HORIZONS}
        trained = {m.meta.get("as_of") for m in models.values()}
        if trained != {as_of.isoformat()}:
            logger.warning("models were trained as of %s, forecasting as of %s", trained, as_of)
    visible = {r: s.window(end=as_of - dt.timedelta(days=1)) for r, s in history.items()}
    store = PanelStore(cfg.cache_dir)
    forecasts = forecast_current(models, visible, as_of, cfg.feature_mode,
                                 season_start=cfg.season_of(as_of).start, grid=cfg.grid,
                                 cache=store, quantile_levels=cfg.quantile_levels,
                                 min_weeks=cfg.min_weeks)
    store.flush()
    if not forecasts:
        raise SikjForestError(f"no region had enough data to forecast as of {as_of}")
    path = args.output or submission_path(cfg, as_of)
    write_submission(forecasts, as_of, path, levels=cfg.quantile_levels,
                     point_only=cfg.ensemble == "lsboost")
    print(f"wrote {len(forecasts)} forecasts -> {path}")
    if cfg.ensemble != "lsboost":
        report = validate_submission(path, cfg.quantile_levels)
        print(report)
        return 0 if report.ok else 1
    return 0


def _score_submission(path, history, model_name) -> list[ScoredTarget]:
    out = []
    for fc in read_submission(path):
        series = history.get(fc.region)
        truth = None if series is None else weekly_truth(series, fc.forecast_date, fc.horizon)
        if truth is None:
            continue
        out.append(ScoredTarget(fc.region, fc.forecast_date, fc.horizon, truth, fc.point,
                                fc.quantiles, model_name))
    return out


def _report(scored, out_path: Path, group_by) -> None:
    table = summarize(scored, group_by)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(out_path, index=False)
    overall = table[table.group == "all"]
    for row in overall.itertuples():
        print(f"{row.model:<32} {row.metric:<6} {row.value:.6g}")
    print(f"score table -> {out_path}")


def cmd_evaluate(cfg, args) -> int:
    history = load_history(cfg)
    paths = args.submission or [submission_path(cfg, _require_as_of(args))]
    scored = []
    for p in paths:
        scored += _score_submission(p, history, Path(p).stem)
    if not scored:
        raise SikjForestError("no forecast target has observed truth yet")
    _report(scored, args.output or cfg.output_dir / "scores.csv", ["horizon"])
    return 0


def cmd_backtest(cfg, args) -> int:
    history = load_history(cfg)
    season = cfg.season(args.season)
    origins = origins_in(season)
    if args.as_of is not None:
        origins = [o for o in origins if o <= args.as_of]
    if args.max_origins:
        origins = origins[: args.max_origins]
    others = [s for s in cfg.seasons if s != season]
    store = PanelStore(cfg.cache_dir)
    scored = backtest(history, others, season, kind=cfg.ensemble, mode=cfg.feature_mode,
                      grid=cfg.grid, params=cfg.ensemble_params(), seed=cfg.seed, cache=store,
                      quantile_levels=cfg.quantile_levels, origins=origins,
                      min_weeks=cfg.min_weeks)
    store.flush()
    if not scored:
        raise SikjForestError(f"backtest over {season.name} produced no scored targets")
    stem = f"backtest-{season.name}-{cfg.ensemble}-{cfg.feature_mode.value}"
    out = args.output or cfg.output_dir / f"{stem}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    score_frame(scored).to_csv(out.with_name(out.stem + "-targets.csv"), index=False)
    _report(scored, out, ["horizon", "week"])
    return 0


def cmd_validate(cfg, args) -> int:
    ok = True
    for p in args.submission:
        report = validate_submission(p, cfg.quantile_levels)
        print(report)
        ok &= report.ok
    return 0 if ok else 1


# --------------------------------------------------------------------------
# Argument parsing
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None,
                        help="run configuration (JSON); defaults to the bundled toy dataset")
    common.add_argument("--as-of", type=_sunday, default=None, metavar="DATE",
                        help="forecast date (a Sunday); data up to the previous Saturday are used")
    common.add_argument("--mode", choices=["full", "predictors", "datapoints"], default=None,
                        help="feature set fed to the ensemble")
    common.add_argument("--ensemble", choices=["forest", "lsboost", "mean"], default=None)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--cache-dir", type=Path, default=None)
    common.add_argument("--output-dir", type=Path, default=None)
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="sikjforest", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    sub.add_parser("prepare", parents=[common], help="ingest, adjust for reporting, cache")
    sub.add_parser("predictors", parents=[common], help="build or extend the predictor-panel cache")
    sub.add_parser("train", parents=[common], help="train the per-horizon ensembles")
    p = sub.add_parser("forecast", parents=[common], help="write a submission file")
    p.add_argument("--output", type=Path, default=None)
    p = sub.add_parser("evaluate", parents=[common], help="score submission files against truth")
    p.add_argument("--submission", type=Path, action="append", default=None)
    p.add_argument("--output", type=Path, default=None)
    p = sub.add_parser("backtest", parents=[common], help="rolling evaluation over a season")
    p.add_argument("--season", default=None)
    p.add_argument("--max-origins", type=int, default=None)
    p.add_argument("--output", type=Path, default=None)
    p = sub.add_parser("validate", parents=[common], help="check submission files")
    p.add_argument("submission", type=Path, nargs="+")
    return parser


COMMANDS = {
    "prepare": cmd_prepare,
    "predictors": cmd_predictors,
    "train": cmd_train,
    "forecast": cmd_forecast,
    "evaluate": cmd_evaluate,
    "backtest": cmd_backtest,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config or toy_config_path())
        cfg = cfg.with_overrides(feature_mode=args.mode, ensemble=args.ensemble, seed=args.seed,
                                 cache_dir=args.cache_dir, output_dir=args.output_dir)
        return COMMANDS[args.command](cfg, args)
    except SikjForestError as exc:
        print(f"sikjforest {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
