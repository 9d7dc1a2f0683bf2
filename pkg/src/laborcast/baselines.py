"""Persistence and oracle reference forecasts."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .data_pipeline.panel import TimeSeriesPanel
from .data_pipeline.windows import WindowBatch
from .errors import ContractError
from .metrics import MetricReport, evaluate
from .training import build_splits


def persistence_forecast(history, horizon: int) -> np.ndarray:
    """Repeat the last observed value ``horizon`` times."""
    history = np.asarray(history, dtype=np.float64).ravel()
    if history.size == 0:
        raise ContractError("persistence needs at least one observation")
    if horizon < 1:
        raise ContractError("horizon must be >= 1")
    return np.full(horizon, history[-1])


def oracle_forecast(future, horizon: int | None = None) -> np.ndarray:
    """Mean of the true future values, used for every step (non-causal)."""
    future = np.asarray(future, dtype=np.float64).ravel()
    if future.size == 0 or (horizon is not None and future.size != horizon):
        raise ContractError(f"oracle needs exactly {horizon} future values, got {future.size}")
    return np.full(future.size, future.mean())


@dataclass
class BaselineForecast:
    kind: str                # "persistence" or "oracle"
    predictions: np.ndarray  # (N, h)
    actuals: np.ndarray      # (N, h)

    def report(self) -> MetricReport:
        return evaluate(self.actuals, self.predictions)


def persistence_baseline(windows: WindowBatch) -> BaselineForecast:
    preds = np.repeat(windows.history[:, -1:], windows.horizon, axis=1)
    return BaselineForecast("persistence", preds, windows.targets.copy())


def oracle_baseline(windows: WindowBatch) -> BaselineForecast:
    means = windows.targets.mean(axis=1, keepdims=True)
    preds = np.repeat(means, windows.horizon, axis=1)
    return BaselineForecast("oracle", preds, windows.targets.copy())


@dataclass
class BaselineRow:
    industry: str
    oracle: MetricReport
    persistence: MetricReport


def run_baseline_suite(panels: Iterable[TimeSeriesPanel], window: int, horizon: int,
                       target_index: int = 0, val_fraction: float = 0.2,
                       test_fraction: float = 0.2) -> list[BaselineRow]:
    """Score both baselines on each panel's test windows.

    Windows come from :func:`build_splits`, the same path the model's
    evaluation uses.
    """
    rows = []
    for panel in panels:
        test = build_splits(panel, window, horizon, target_index, val_fraction, test_fraction).test
        if len(test) == 0:
            raise ContractError(f"{panel.industry}: no test windows (test_fraction={test_fraction})")
        rows.append(BaselineRow(panel.industry, oracle_baseline(test).report(),
                                persistence_baseline(test).report()))
    return rows


def baseline_table_csv(rows: list[BaselineRow]) -> str:
    buf = io.StringIO()
    buf.write("# schema: laborcast.baselines v1\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["industry", "oracle_rmse", "oracle_smape_pct", "persistence_rmse", "persistence_smape_pct"])
    for r in rows:
        w.writerow([r.industry, f"{r.oracle.rmse:.6f}", f"{r.oracle.smape:.4f}",
                    f"{r.persistence.rmse:.6f}", f"{r.persistence.smape:.4f}"])
    if rows:
        avg = lambda xs: float(np.mean(xs))  # noqa: E731
        w.writerow(["Average",
                    f"{avg([r.oracle.rmse for r in rows]):.6f}",
                    f"{avg([r.oracle.smape for r in rows]):.4f}",
                    f"{avg([r.persistence.rmse for r in rows]):.6f}",
                    f"{avg([r.persistence.smape for r in rows]):.4f}"])
    return buf.getvalue()
