"""Weekly per-industry panels built from monthly BLS observations.

Months are placed on a Monday-based weekly grid at their reference week, the
week containing the 12th of the month (the BLS survey reference period).
Weeks between two reference weeks are linearly interpolated.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..errors import DataError, InsufficientDataError
from .bls import Observation
from .catalog import INDICATORS

COUNT_COLUMNS = ("employees_k", "avg_hours", "avg_earnings", "openings_k", "hires_k", "separations_k")
RATE_COLUMNS = ("unemp_rate",)
PANEL_CSV_HEADER = ("week_start", "industry", *INDICATORS, "interpolated_mask")
PANEL_CSV_SCHEMA = "# schema: laborcast.panel v1\n"

WEEK = np.timedelta64(7, "D")


def reference_week(year: int, month: int) -> np.datetime64:
    """Monday of the week that contains the 12th of ``month``."""
    twelfth = dt.date(year, month, 12)
    return np.datetime64(twelfth - dt.timedelta(days=twelfth.weekday()), "D")


@dataclass
class WeeklySeries:
    timestamps: np.ndarray   # datetime64[D]
    values: np.ndarray       # NaN where no estimate exists
    is_anchor: np.ndarray    # True on reference weeks carrying a published value


@dataclass
class TimeSeriesPanel:
    """Seven weekly labor indicators for one industry."""

    industry: str
    timestamps: np.ndarray
    values: np.ndarray
    interpolated: np.ndarray

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype="datetime64[D]")
        self.values = np.asarray(self.values, dtype=np.float64)
        self.interpolated = np.asarray(self.interpolated, dtype=bool)
        n = len(self.timestamps)
        if self.values.shape != (n, len(INDICATORS)) or self.interpolated.shape != self.values.shape:
            raise DataError(
                f"panel {self.industry}: values {self.values.shape} / mask "
                f"{self.interpolated.shape} do not match {n} timestamps x {len(INDICATORS)} columns"
            )

    def __len__(self) -> int:
        return len(self.timestamps)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, INDICATORS.index(name)]

    def rows(self, start: int, stop: int) -> TimeSeriesPanel:
        return TimeSeriesPanel(self.industry, self.timestamps[start:stop],
                               self.values[start:stop], self.interpolated[start:stop])

    def audit(self) -> None:
        """Raise :class:`DataError` if any prepared-panel invariant fails."""
        problems = []
        if len(self) >= 2:
            steps = np.diff(self.timestamps)
            if np.any(steps != WEEK):
                problems.append("timestamps are not a gap-free weekly grid")
        for j, name in enumerate(INDICATORS):
            col = self.values[:, j]
            if np.any(~np.isfinite(col)):
                problems.append(f"{name} has missing cells")
                continue
            if name in COUNT_COLUMNS and np.any(col < 0):
                problems.append(f"{name} has negative values")
            if name in RATE_COLUMNS and np.any((col < 0) | (col > 100)):
                problems.append(f"{name} outside [0, 100]")
        if problems:
            raise DataError(f"panel {self.industry}: " + "; ".join(problems))


def interpolate_on_grid(anchor_index: Sequence[int], anchor_values: Sequence[float],
                        length: int) -> np.ndarray:
    """Piecewise-linear fill of a length-``length`` grid from sparse anchors.

    Anchor positions must be strictly increasing. Grid points outside the
    anchor range are NaN; anchor points carry their value unchanged.
    """
    idx = np.asarray(anchor_index, dtype=np.int64)
    vals = np.asarray(anchor_values, dtype=np.float64)
    if len(idx) < 2:
        raise InsufficientDataError("need at least two anchors to interpolate")
    if np.any(np.diff(idx) <= 0):
        raise DataError("anchor positions must be strictly increasing")
    grid = np.arange(length)
    out = np.full(length, np.nan)
    inside = (grid >= idx[0]) & (grid <= idx[-1])
    out[inside] = np.interp(grid[inside], idx, vals)
    out[idx] = vals
    return out


def interpolate_weekly(monthly: Sequence[Observation],
                       grid_start: np.datetime64 | None = None) -> WeeklySeries:
    """Turn ascending monthly observations into a weekly series.

    The grid starts at ``grid_start`` (default: reference week of the first
    month) and ends at the reference week of the last month. Segments that
    touch a month with a missing value stay NaN so :func:`repair_missing`
    can fill and flag them.
    """
    if len(monthly) < 2:
        raise InsufficientDataError(f"need at least two monthly points, got {len(monthly)}")
    weeks = np.array([reference_week(o.year, o.month) for o in monthly])
    if np.any(np.diff(weeks) <= np.timedelta64(0, "D")):
        raise DataError("monthly observations must be strictly time-ordered")
    start = weeks[0] if grid_start is None else np.datetime64(grid_start, "D")
    offsets = (weeks - start) // WEEK
    if offsets[0] < 0:
        raise DataError("grid starts after the first observation")
    length = int(offsets[-1]) + 1
    timestamps = start + np.arange(length) * WEEK

    values = np.full(length, np.nan)
    is_anchor = np.zeros(length, dtype=bool)
    for (a, obs_a), (b, obs_b) in zip(zip(offsets, monthly), zip(offsets[1:], monthly[1:])):
        if obs_a.value is None or obs_b.value is None:
            continue
        values[a:b + 1] = np.linspace(obs_a.value, obs_b.value, b - a + 1)
    for off, obs in zip(offsets, monthly):
        if obs.value is not None:
            values[off] = obs.value
            is_anchor[off] = True
    if is_anchor.sum() < 2:
        raise InsufficientDataError("fewer than two non-missing monthly values")
    return WeeklySeries(timestamps, values, is_anchor)


def _fill_column(col: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    missing = ~np.isfinite(col)
    if not missing.any():
        return col.copy(), missing
    valid = np.flatnonzero(~missing)
    filled = col.copy()
    # np.interp clamps to the end values, which is the nearest-valid fill
    filled[missing] = np.interp(np.flatnonzero(missing), valid, col[valid])
    return filled, missing


def repair_missing(panel: TimeSeriesPanel) -> TimeSeriesPanel:
    """Fill gaps: linear between valid neighbours, nearest value at the ends."""
    values = panel.values.copy()
    mask = panel.interpolated.copy()
    for j, name in enumerate(INDICATORS):
        col = values[:, j]
        if not np.isfinite(col).any():
            raise DataError(f"column {name!r} of {panel.industry} has no valid values")
        values[:, j], filled = _fill_column(col)
        mask[:, j] |= filled
    return TimeSeriesPanel(panel.industry, panel.timestamps, values, mask)


def month_range(start: tuple[int, int], end: tuple[int, int]) -> list[tuple[int, int]]:
    (y, m), out = start, []
    while (y, m) <= end:
        out.append((y, m))
        y, m = (y + 1, 1) if m == 12 else (y, m + 1)
    return out


def assemble_panel(industry: str, series: Mapping[str, Sequence[Observation]],
                   start: tuple[int, int], end: tuple[int, int]) -> TimeSeriesPanel:
    """Place each indicator's monthly series onto a shared weekly grid.

    ``series`` maps indicator column names to observations. The result may
    still contain NaN cells; pass it through :func:`repair_missing`.
    """
    months = month_range(start, end)
    if len(months) < 2:
        raise InsufficientDataError("data span covers fewer than two months")
    grid_start = reference_week(*months[0])
    length = int((reference_week(*months[-1]) - grid_start) // WEEK) + 1
    timestamps = grid_start + np.arange(length) * WEEK

    values = np.full((length, len(INDICATORS)), np.nan)
    interpolated = np.zeros_like(values, dtype=bool)
    wanted = set(months)
    for j, name in enumerate(INDICATORS):
        obs = [o for o in series.get(name, ()) if (o.year, o.month) in wanted]
        if len(obs) < 2:
            continue
        first_week = reference_week(obs[0].year, obs[0].month)
        weekly = interpolate_weekly(obs, grid_start=first_week)
        offset = int((first_week - grid_start) // WEEK)
        stop = offset + len(weekly.values)
        values[offset:stop, j] = weekly.values
        interpolated[offset:stop, j] = ~weekly.is_anchor & np.isfinite(weekly.values)
    return TimeSeriesPanel(industry, timestamps, values, interpolated)


def prepare_panel(industry: str, series: Mapping[str, Sequence[Observation]],
                  start: tuple[int, int], end: tuple[int, int]) -> TimeSeriesPanel:
    panel = repair_missing(assemble_panel(industry, series, start, end))
    panel.audit()
    return panel


# ---------------------------------------------------------------------------
# CSV persistence


def _mask_string(row: np.ndarray) -> str:
    return "".join("1" if flag else "0" for flag in row)


def _panel_rows(panel: TimeSeriesPanel):
    for ts, vals, mask in zip(panel.timestamps, panel.values, panel.interpolated):
        yield [str(ts), panel.industry, *(repr(float(v)) for v in vals), _mask_string(mask)]


def panel_to_csv(panels: Sequence[TimeSeriesPanel]) -> str:
    buf = io.StringIO()
    buf.write(PANEL_CSV_SCHEMA)
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PANEL_CSV_HEADER)
    for panel in panels:
        writer.writerows(_panel_rows(panel))
    return buf.getvalue()


def write_panel_csv(path: str | os.PathLike, panels: TimeSeriesPanel | Sequence[TimeSeriesPanel]) -> Path:
    if isinstance(panels, TimeSeriesPanel):
        panels = [panels]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(panel_to_csv(panels))
    return path


def read_panel_csv(path: str | os.PathLike) -> dict[str, TimeSeriesPanel]:
    """Load one or more industries from a panel CSV, keyed by industry."""
    grouped: dict[str, list[list[str]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader, None)
        if tuple(header or ()) != PANEL_CSV_HEADER:
            raise DataError(f"{path}: unexpected panel header {header}")
        for row in reader:
            grouped.setdefault(row[1], []).append(row)
    panels = {}
    for industry, rows in grouped.items():
        panels[industry] = TimeSeriesPanel(
            industry,
            np.array([r[0] for r in rows], dtype="datetime64[D]"),
            np.array([[float(v) for v in r[2:2 + len(INDICATORS)]] for r in rows]),
            np.array([[c == "1" for c in r[-1]] for r in rows], dtype=bool),
        )
    return panels
