"""BLS acquisition, weekly panel assembly, gap repair and windowing."""

from .bls import (
    FixtureTransport,
    HttpTransport,
    Observation,
    SeriesRequest,
    chunk_years,
    fetch_many,
    fetch_series,
    parse_response,
)
from .catalog import INDICATORS, INDUSTRIES, Industry, get_industry
from .panel import (
    TimeSeriesPanel,
    WeeklySeries,
    assemble_panel,
    interpolate_on_grid,
    interpolate_weekly,
    prepare_panel,
    read_panel_csv,
    reference_week,
    repair_missing,
    write_panel_csv,
)
from .windows import NormStats, WindowBatch, compute_stats, make_windows, reconstruct_levels, window_count

__all__ = [
    "FixtureTransport", "HttpTransport", "Observation", "SeriesRequest", "chunk_years",
    "fetch_many", "fetch_series", "parse_response", "INDICATORS", "INDUSTRIES", "Industry",
    "get_industry", "TimeSeriesPanel", "WeeklySeries", "assemble_panel", "interpolate_on_grid",
    "interpolate_weekly", "prepare_panel", "read_panel_csv", "reference_week", "repair_missing",
    "write_panel_csv", "NormStats", "WindowBatch", "compute_stats", "make_windows",
    "reconstruct_levels", "window_count",
]
