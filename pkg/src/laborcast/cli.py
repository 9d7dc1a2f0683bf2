"""``laborcast`` command-line interface.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.

Output layout (all directories come from the ``[paths]`` config section)::

    raw_dir/<industry>.json            fetched monthly observations
    panel_dir/<industry>.csv           weekly panel
    panel_dir/all_industries.csv       every industry in one file
    checkpoint_dir/<industry>.ckpt     best-validation checkpoint
    checkpoint_dir/<industry>_train_log.csv
    report_dir/model_metrics.csv       per-industry MSE / MAE / SMAPE
    report_dir/baselines.csv           oracle and persistence errors
    report_dir/iehi.csv                IEHI scores, ranks, Spearman footer
    report_dir/forecasts.csv           next-horizon forecasts
    report_dir/plots/<industry>.csv    week_start, actual, predicted

Each command also writes ``run_config.ini`` (the resolved configuration)
next to its outputs.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from . import checkpoint as ckpt_io
from .baselines import BaselineRow, baseline_table_csv, oracle_baseline, persistence_baseline
from .config import PROFILES, RunConfig, load_config
from .data_pipeline.bls import (FixtureTransport, HttpTransport, Observation, SeriesRequest,
                                api_key_from_env, fetch_many)
from .data_pipeline.catalog import get_industry
from .data_pipeline.panel import TimeSeriesPanel, prepare_panel, read_panel_csv, write_panel_csv
from .data_pipeline.windows import WindowBatch, make_windows, window_count
from .errors import CheckpointError, ConfigError, DataError, LaborcastError
from .iehi import IEHIReport, compute_iehi, inputs_from_panel, validate_ranking
from .lstnet import forecast_change, init_params, predict
from .metrics import MetricReport, evaluate, metric_table_csv
from .training import Splits, build_splits, chronological_split, train

logger = logging.getLogger("laborcast")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2
CONFIG_ECHO = "run_config.ini"
COMBINED_PANEL = "all_industries.csv"
PLOT_SCHEMA = "# schema: laborcast.plot v1\n"
FORECAST_SCHEMA = "# schema: laborcast.forecast v1\n"
SUMMARY_SCHEMA = "# schema: laborcast.train_summary v1\n"


# ---------------------------------------------------------------------------
# small helpers


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def _echo_config(cfg: RunConfig, directory: Path) -> None:
    _write(directory / CONFIG_ECHO, cfg.to_ini())


def _selected(cfg: RunConfig, industry: str | None) -> list[str]:
    if not industry:
        return list(cfg.industries)
    try:
        return [get_industry(industry).slug]
    except KeyError as exc:
        raise ConfigError(f"unknown industry {industry!r}") from exc


def _panel_path(cfg: RunConfig, slug: str) -> Path:
    return cfg.panel_dir / f"{slug}.csv"


def _ckpt_path(cfg: RunConfig, slug: str) -> Path:
    return cfg.checkpoint_dir / f"{slug}.ckpt"


def load_panel(cfg: RunConfig, slug: str) -> TimeSeriesPanel:
    path = _panel_path(cfg, slug)
    if not path.exists():
        raise DataError(f"no panel for {slug} at {path}; run `laborcast fetch` (or `laborcast prepare`) first")
    return read_panel_csv(path)[slug]


def load_checkpoint(cfg: RunConfig, slug: str) -> ckpt_io.Checkpoint:
    path = _ckpt_path(cfg, slug)
    if not path.exists():
        raise CheckpointError(
            f"no checkpoint for {slug} at {path}; run `laborcast train --industry {slug}` "
            f"(or `laborcast train --all-industries`) first"
        )
    return ckpt_io.load(path)


def _csv(rows: Sequence[Sequence], header: Sequence[str], schema: str) -> str:
    buf = io.StringIO()
    buf.write(schema)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# fetch / prepare


def _raw_doc(slug: str, fetched: dict[str, list[Observation]]) -> dict:
    industry = get_industry(slug)
    series = {}
    for indicator, sid in industry.series_ids().items():
        series[indicator] = {"series_id": sid,
                             "observations": [[o.year, o.period, o.value] for o in fetched.get(sid, [])]}
    return {"industry": slug, "series": series}


def _panel_from_raw(cfg: RunConfig, doc: dict) -> TimeSeriesPanel:
    series = {name: [Observation(y, p, v) for y, p, v in entry["observations"]]
              for name, entry in doc["series"].items()}
    return prepare_panel(doc["industry"], series, cfg.start, cfg.end)


def _transport(cfg: RunConfig):
    if cfg.offline:
        if not cfg.fixture_dir.is_dir():
            raise ConfigError(f"offline mode but fixture directory {cfg.fixture_dir} does not exist")
        return FixtureTransport(cfg.fixture_dir), None
    key = api_key_from_env() or cfg.api_key
    if not key:
        raise ConfigError("no BLS API key: export BLS_API_KEY, set [data] api_key, "
                          "or pass --offline to use bundled fixtures")
    return HttpTransport(), key


def _summarize_panel(panel: TimeSeriesPanel) -> str:
    return f"{panel.industry}: {len(panel)} weekly rows, {int(panel.interpolated.sum())} interpolated cells"


def _write_panels(cfg: RunConfig, panels: list[TimeSeriesPanel], combined: bool) -> None:
    for panel in panels:
        write_panel_csv(_panel_path(cfg, panel.industry), panel)
        print(_summarize_panel(panel))
    if combined:
        write_panel_csv(cfg.panel_dir / COMBINED_PANEL, panels)
    _echo_config(cfg, cfg.panel_dir)


def cmd_fetch(cfg: RunConfig, args) -> int:
    transport, key = _transport(cfg)
    panels = []
    for slug in _selected(cfg, args.industry):
        ids = get_industry(slug).series_ids()
        reqs = [SeriesRequest(sid, cfg.start[0], cfg.end[0], key) for sid in ids.values()]
        fetched = fetch_many(reqs, transport, cfg.max_years, max_workers=1 if cfg.offline else 4,
                             min_interval=0.0 if cfg.offline else 0.25)
        doc = _raw_doc(slug, fetched)
        _write(cfg.raw_dir / f"{slug}.json", json.dumps(doc, sort_keys=True, indent=1) + "\n")
        panels.append(_panel_from_raw(cfg, doc))
    _write_panels(cfg, panels, combined=not args.industry)
    return EXIT_OK


def cmd_prepare(cfg: RunConfig, args) -> int:
    panels = []
    for slug in _selected(cfg, args.industry):
        path = cfg.raw_dir / f"{slug}.json"
        if not path.exists():
            raise DataError(f"no raw data for {slug} at {path}; run `laborcast fetch` first")
        panels.append(_panel_from_raw(cfg, json.loads(path.read_text())))
    _write_panels(cfg, panels, combined=not args.industry)
    return EXIT_OK


# ---------------------------------------------------------------------------
# train


@dataclass
class TrainSummary:
    industry: str
    train_windows: int
    val_windows: int
    test_windows: int
    best_epoch: int | None
    best_val_loss: float | None
    checkpoint_sha256: str


def _splits(cfg: RunConfig, panel: TimeSeriesPanel) -> Splits:
    m = cfg.model
    return build_splits(panel, m.window, m.horizon, m.target_index,
                        cfg.train.val_fraction, cfg.train.test_fraction)


def train_industry(cfg: RunConfig, slug: str, timing: bool = False) -> TrainSummary:
    panel = load_panel(cfg, slug)
    splits = _splits(cfg, panel)
    params = init_params(cfg.model, cfg.seed)
    best, log = train(params, cfg.model, splits.train, splits.val, cfg.train)
    meta = {"industry": slug, "seed": cfg.seed, "profile": cfg.profile,
            "best_epoch": log.best_epoch, "epochs": cfg.train.epochs}
    path = ckpt_io.save(_ckpt_path(cfg, slug), ckpt_io.Checkpoint(cfg.model, best, splits.train.stats, meta))
    _write(cfg.checkpoint_dir / f"{slug}_train_log.csv", log.to_csv(timing))
    best_val = None
    if log.best_epoch is not None:
        best_val = log.records[log.best_epoch - 1].val_loss
    return TrainSummary(slug, len(splits.train), len(splits.val), len(splits.test),
                        log.best_epoch, best_val, ckpt_io.file_digest(path))


def cmd_train(cfg: RunConfig, args) -> int:
    if args.all_industries and args.industry:
        raise ConfigError("use either --industry or --all-industries, not both")
    slugs = _selected(cfg, args.industry) if (args.industry or args.all_industries) else list(cfg.industries)
    workers = args.workers or cfg.workers
    if workers > 1 and len(slugs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            summaries = list(pool.map(train_industry, [cfg] * len(slugs), slugs, [args.timing] * len(slugs)))
    else:
        summaries = [train_industry(cfg, s, args.timing) for s in slugs]
    rows = []
    for s in summaries:
        val = "" if s.best_val_loss is None else repr(s.best_val_loss)
        rows.append([s.industry, s.train_windows, s.val_windows, s.test_windows,
                     "" if s.best_epoch is None else s.best_epoch, val, s.checkpoint_sha256])
        print(f"{s.industry}: best epoch {s.best_epoch}, val loss {val or '-'}, sha256 {s.checkpoint_sha256[:12]}")
    header = ["industry", "train_windows", "val_windows", "test_windows", "best_epoch",
              "best_val_loss", "checkpoint_sha256"]
    name = "train_summary.csv" if len(slugs) > 1 else f"{slugs[0]}_train_summary.csv"
    _write(cfg.checkpoint_dir / name, _csv(rows, header, SUMMARY_SCHEMA))
    _echo_config(cfg, cfg.checkpoint_dir)
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate / baselines / iehi / forecast


@dataclass
class Evaluation:
    industry: str
    panel: TimeSeriesPanel
    test: WindowBatch
    predictions: np.ndarray   # normalized changes, (N, h)
    report: MetricReport


def test_windows(cfg: RunConfig, panel: TimeSeriesPanel, ckpt: ckpt_io.Checkpoint) -> WindowBatch:
    """Test windows normalized with the checkpoint's stored statistics."""
    m = ckpt.config
    if window_count(len(panel), m.window, m.horizon) < 3:
        raise DataError(f"{panel.industry}: too few rows for window={m.window}, horizon={m.horizon}")
    batch = make_windows(panel, m.window, m.horizon, m.target_index, stats=ckpt.stats)
    _, _, test = chronological_split(batch, cfg.train.val_fraction, cfg.train.test_fraction,
                                     gap=m.window + m.horizon - 1)
    if len(test) == 0:
        raise DataError(f"{panel.industry}: no test windows")
    return test


def evaluate_industry(cfg: RunConfig, slug: str) -> Evaluation:
    ckpt = load_checkpoint(cfg, slug)
    panel = load_panel(cfg, slug)
    test = test_windows(cfg, panel, ckpt)
    preds = predict(test.inputs, ckpt.params, ckpt.config)
    return Evaluation(slug, panel, test, preds, evaluate(test.targets, preds, cfg.diagnostic))


def plot_csv(ev: Evaluation) -> str:
    """Step-1 employment level: actual versus anchor level plus predicted change."""
    stats, test = ev.test.stats, ev.test
    stamps = test.target_timestamps[:, 0]
    actual = test.anchor_levels + stats.denormalize_target(test.targets[:, 0])
    predicted = test.anchor_levels + stats.denormalize_target(ev.predictions[:, 0])
    rows = [[str(t), repr(float(a)), repr(float(p))] for t, a, p in zip(stamps, actual, predicted)]
    return _csv(rows, ["week_start", "actual", "predicted"], PLOT_SCHEMA)


def iehi_from_evaluations(evals: Sequence[Evaluation], cfg: RunConfig) -> IEHIReport:
    """IEHI over the test span: predicted step-1 change relative to the anchor level."""
    inputs = {}
    for ev in evals:
        test = ev.test
        trajectory = test.stats.denormalize_target(ev.predictions[:, 0]) / test.anchor_levels
        first = int(test.starts[0]) + test.window
        last = int(test.starts[-1]) + test.window + test.horizon
        inputs[ev.industry] = inputs_from_panel(ev.panel, trajectory, slice(first, last))
    report = compute_iehi(inputs, cfg.iehi_weights, cfg.iehi_window)
    report.error_scores = {ev.industry: ev.report.smape for ev in evals}
    report.validation = validate_ranking(report.ranks(), report.error_scores)
    return report


def _baseline_rows(evals: Sequence[Evaluation]) -> list[BaselineRow]:
    return [BaselineRow(ev.industry, oracle_baseline(ev.test).report(), persistence_baseline(ev.test).report())
            for ev in evals]


def cmd_evaluate(cfg: RunConfig, args) -> int:
    evals = [evaluate_industry(cfg, s) for s in _selected(cfg, args.industry)]
    out = cfg.report_dir
    _write(out / "model_metrics.csv",
           metric_table_csv({ev.industry: ev.report for ev in evals}, cfg.diagnostic))
    _write(out / "baselines.csv", baseline_table_csv(_baseline_rows(evals)))
    for ev in evals:
        _write(out / "plots" / f"{ev.industry}.csv", plot_csv(ev))
        print(f"{ev.industry}: SMAPE {ev.report.smape:.2f}%  MAE {ev.report.mae:.4f}  MSE {ev.report.mse:.4f}")
    if len(evals) >= 2:
        report = iehi_from_evaluations(evals, cfg)
        _write(out / "iehi.csv", report.to_csv())
        v = report.validation
        print(f"IEHI vs SMAPE: rho={v.rho:.4f} p={v.p_value:.3e}")
    else:
        print("IEHI skipped: ranking needs at least two industries")
    _echo_config(cfg, out)
    return EXIT_OK


def cmd_baselines(cfg: RunConfig, args) -> int:
    rows = []
    for slug in _selected(cfg, args.industry):
        test = _splits(cfg, load_panel(cfg, slug)).test
        if len(test) == 0:
            raise DataError(f"{slug}: no test windows")
        rows.append(BaselineRow(slug, oracle_baseline(test).report(), persistence_baseline(test).report()))
        print(f"{slug}: oracle RMSE {rows[-1].oracle.rmse:.4f}, persistence RMSE {rows[-1].persistence.rmse:.4f}")
    _write(cfg.report_dir / "baselines.csv", baseline_table_csv(rows))
    _echo_config(cfg, cfg.report_dir)
    return EXIT_OK


def reference_ranking(path: str | Path | None = None) -> tuple[dict[str, float], dict[str, float]]:
    """Load ``industry,smape_pct,iehi_rank`` rows; the bundled table when ``path`` is None."""
    if path is None:
        text = resources.files("laborcast").joinpath("fixtures/reference_ranking.csv").read_text()
    else:
        text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    smape, ranks = {}, {}
    for row in csv.DictReader(lines):
        smape[row["industry"]] = float(row["smape_pct"])
        ranks[row["industry"]] = float(row["iehi_rank"])
    return ranks, smape


def cmd_iehi(cfg: RunConfig, args) -> int:
    out = cfg.report_dir
    if args.reference is not None:
        ranks, smape = reference_ranking(args.reference or None)
        result = validate_ranking(ranks, smape)
        rows = [[name, f"{smape[name]:.2f}", f"{ranks[name]:g}"]
                for name in sorted(ranks, key=lambda n: (ranks[n], n))]
        text = _csv(rows, ["industry", "smape_pct", "iehi_rank"], "# schema: laborcast.iehi_reference v1\n")
        text += f"# spearman_rho,{result.rho:.6f}\n# p_value,{result.p_value:.6e}\n"
        _write(out / "iehi_reference.csv", text)
        print(f"rho={result.rho:.4f} p={result.p_value:.3e} (n={len(ranks)})")
    else:
        evals = [evaluate_industry(cfg, s) for s in _selected(cfg, args.industry)]
        if len(evals) < 2:
            raise ConfigError("IEHI ranking needs at least two industries")
        report = iehi_from_evaluations(evals, cfg)
        _write(out / "iehi.csv", report.to_csv())
        for r in sorted(report.rows, key=lambda r: (r.rank, r.industry)):
            print(f"{r.rank:>4g}  {r.industry:<26} {r.score:.4f}")
        print(f"IEHI vs SMAPE: rho={report.validation.rho:.4f} p={report.validation.p_value:.3e}")
    _echo_config(cfg, out)
    return EXIT_OK


def cmd_forecast(cfg: RunConfig, args) -> int:
    rows = []
    for slug in _selected(cfg, args.industry):
        ckpt = load_checkpoint(cfg, slug)
        fc = forecast_change(load_panel(cfg, slug), ckpt.params, ckpt.config, ckpt.stats)
        for step, (t, c, lv) in enumerate(zip(fc.timestamps, fc.changes, fc.levels), start=1):
            rows.append([slug, str(fc.anchor), step, str(t), repr(float(c)), repr(float(lv))])
        print(f"{slug}: level after {len(fc.levels)} weeks {fc.levels[-1]:.1f} (from {fc.levels[0] - fc.changes[0]:.1f})")
    header = ["industry", "anchor_week", "step", "week_start", "predicted_change", "predicted_level"]
    _write(cfg.report_dir / "forecasts.csv", _csv(rows, header, FORECAST_SCHEMA))
    _echo_config(cfg, cfg.report_dir)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    # SUPPRESS keeps a subcommand's unset flags from clobbering ones given before it
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="INI config file (profile defaults < file < flags)")
    common.add_argument("--profile", choices=PROFILES, help="hyperparameter profile")
    common.add_argument("--seed", type=int, help="random seed for initialization and shuffling")
    common.add_argument("--offline", action="store_true",
                        help="read BLS data from fixture files instead of the API")
    common.add_argument("-v", "--verbose", action="count")

    parser = argparse.ArgumentParser(prog="laborcast", parents=[common],
                                     description="Industry employment forecasting with LSTNet.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str, with_industry: bool = True) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text, parents=[common])
        if with_industry:
            p.add_argument("--industry", help="restrict to one industry (slug or name)")
        return p

    add("fetch", "download BLS series and write weekly panels")
    add("prepare", "rebuild weekly panels from the raw download cache")
    p = add("train", "train one checkpoint per industry")
    p.add_argument("--all-industries", action="store_true")
    p.add_argument("--workers", type=int, default=0, help="parallel industry workers")
    p.add_argument("--epochs", type=int, help="override training epochs")
    p.add_argument("--timing", action="store_true", help="record epoch wall time in the train log")
    p = add("evaluate", "score checkpoints and write metric, baseline, IEHI and plot tables")
    p.add_argument("--diagnostic", action="store_true", help="also report MAPE")
    add("baselines", "score oracle and persistence baselines")
    add("forecast", "forecast the next horizon from the latest window")
    p = add("iehi", "compute IEHI ranks and their correlation with SMAPE")
    p.add_argument("--reference", nargs="?", const="", default=None, metavar="CSV",
                   help="validate a published ranking table (bundled one when no path is given)")
    return parser


COMMANDS = {
    "fetch": cmd_fetch,
    "prepare": cmd_prepare,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "baselines": cmd_baselines,
    "forecast": cmd_forecast,
    "iehi": cmd_iehi,
}


def _overrides(args) -> dict[str, dict[str, str]]:
    out: dict[str, dict[str, str]] = {"run": {}, "training": {}}
    if getattr(args, "seed", None) is not None:
        out["run"]["seed"] = str(args.seed)
    if getattr(args, "offline", False):
        out["run"]["offline"] = "true"
    if getattr(args, "diagnostic", False):
        out["run"]["diagnostic"] = "true"
    if getattr(args, "epochs", None) is not None:
        out["training"]["epochs"] = str(args.epochs)
    return out


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    verbosity = min(getattr(args, "verbose", 0), 2)
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][verbosity],
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(getattr(args, "config", None), getattr(args, "profile", None), _overrides(args))
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LaborcastError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - keep the exit-code contract
        logger.debug("unhandled failure", exc_info=True)
        print(f"error: unexpected {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
