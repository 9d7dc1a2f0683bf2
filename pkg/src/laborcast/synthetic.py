"""Deterministic synthetic panels and BLS-shaped fixture documents."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .data_pipeline.catalog import INDICATORS, INDUSTRIES, Industry
from .data_pipeline.panel import WEEK, TimeSeriesPanel, month_range

# December 2024 sector snapshot: employees (K), avg hours, avg earnings ($),
# unemployment rate (%), openings, hires, separations (K)
DEC_2024_LEVELS = {
    "construction": (8289.0, 38.8, 38.94, 5.2, 205.0, 327.0, 268.0),
    "education_health": (26931.0, 32.9, 35.01, 2.7, 1518.0, 625.0, 677.0),
    "financial": (9206.0, 37.7, 46.37, 2.1, 390.0, 164.0, 168.0),
    "information": (2944.0, 36.9, 51.04, 3.9, 105.0, 50.0, 62.0),
    "leisure_hospitality": (16979.0, 25.5, 22.40, 5.4, 998.0, 675.0, 804.0),
    "manufacturing": (12760.0, 40.1, 34.54, 3.5, 398.0, 204.0, 249.0),
    "natural_resources": (624.0, 44.3, 39.95, 5.4, 21.0, 15.0, 23.0),
    "other_services": (6002.0, 32.0, 32.37, 3.8, 248.0, 188.0, 198.0),
    "professional_services": (22614.0, 36.3, 43.33, 3.7, 1276.0, 712.0, 937.0),
    "transportation_utilities": (29033.0, 34.0, 30.34, 4.3, 988.0, 913.0, 1117.0),
}


def seasonal_panel(industry: str, n_weeks: int = 900, seed: int = 0,
                   noise: float = 0.15, start: str = "2008-03-10") -> TimeSeriesPanel:
    """Weekly panel with trend, period-4 and period-26 cycles, and noise.

    The employment change series is ``trend + cycles + noise`` in units of
    0.1% of the base level, so the level is its cumulative sum. Other
    indicators co-move with the change series.
    """
    rng = np.random.default_rng(seed)
    base = np.array(DEC_2024_LEVELS.get(industry, DEC_2024_LEVELS["construction"]))
    t = np.arange(n_weeks)
    phase4, phase26 = rng.uniform(0, 2 * np.pi, 2)
    amp4, amp26 = rng.uniform(0.6, 1.2), rng.uniform(0.4, 1.0)
    trend = rng.uniform(-0.1, 0.3)
    signal = (trend + amp4 * np.sin(2 * np.pi * t / 4 + phase4)
              + amp26 * np.sin(2 * np.pi * t / 26 + phase26))
    change = signal + noise * rng.standard_normal(n_weeks)
    unit = base[0] * 1e-3
    employees = base[0] * 0.85 + unit * np.cumsum(change)

    def wiggle(level, scale, lag=0):
        driver = np.roll(signal, lag)
        return level * (1 + scale * driver / 3 + 0.01 * rng.standard_normal(n_weeks))

    values = np.column_stack([
        employees,
        wiggle(base[1], 0.01),
        base[2] * (0.8 + 0.2 * t / n_weeks) * (1 + 0.003 * rng.standard_normal(n_weeks)),
        np.clip(wiggle(base[3], -0.05, 2), 0.1, 30.0),
        wiggle(base[4], 0.08, 1),
        wiggle(base[5], 0.06),
        wiggle(base[6], 0.05, 3),
    ])
    timestamps = np.datetime64(start, "D") + WEEK * t
    return TimeSeriesPanel(industry, timestamps, values, np.zeros(values.shape, dtype=bool))


def random_walk_panel(industry: str = "construction", n_weeks: int = 600, seed: int = 0) -> TimeSeriesPanel:
    """Every column an independent Gaussian random walk around a positive level."""
    rng = np.random.default_rng(seed)
    steps = rng.standard_normal((n_weeks, len(INDICATORS)))
    values = 1000.0 + np.cumsum(steps, axis=0)
    values[:, INDICATORS.index("unemp_rate")] = 5.0 + 0.01 * np.cumsum(steps[:, 3])
    timestamps = np.datetime64("2010-01-04", "D") + WEEK * np.arange(n_weeks)
    return TimeSeriesPanel(industry, timestamps, values, np.zeros(values.shape, dtype=bool))


def synthetic_panels(n_weeks: int = 900, seed: int = 0, noise: float = 0.15) -> list[TimeSeriesPanel]:
    return [seasonal_panel(ind.slug, n_weeks, seed + 1000 * i, noise)
            for i, ind in enumerate(INDUSTRIES)]


# ---------------------------------------------------------------------------
# BLS fixture documents


def _monthly_paths(industry: Industry, months: list[tuple[int, int]], rng) -> dict[str, np.ndarray]:
    n = len(months)
    end = np.array(DEC_2024_LEVELS[industry.slug])
    t = np.arange(n)
    month_of_year = np.array([m for _, m in months])
    season = np.sin(2 * np.pi * (month_of_year - 3) / 12)
    growth = rng.uniform(0.0005, 0.002)
    # a 2020-style shock: sharp drop in April, partial recovery after
    shock = np.array([(-0.12 if (y, m) >= (2020, 4) else 0.0) * np.exp(-max(0, (y - 2020) * 12 + m - 4) / 8)
                      for y, m in months])
    emp_path = np.exp(growth * (t - (n - 1))) * (1 + 0.004 * season + shock
                                                 + 0.002 * rng.standard_normal(n).cumsum() / np.sqrt(n))
    emp = end[0] * emp_path / emp_path[-1]
    hours = end[1] * (1 + 0.01 * season + 0.004 * rng.standard_normal(n))
    earnings = end[2] * np.exp(0.0025 * (t - (n - 1))) * (1 + 0.002 * rng.standard_normal(n))
    unemp = np.clip(end[3] * (1 - 2.5 * shock + 0.08 * season + 0.05 * rng.standard_normal(n)), 0.3, 40)
    flows = [end[j] * (emp / end[0]) * (1 + 0.05 * season + 0.06 * rng.standard_normal(n))
             for j in (4, 5, 6)]
    return dict(zip(INDICATORS, [emp, hours, earnings, unemp, *flows]))


def fixture_documents(first_year: int = 2006, last_year: int = 2024, seed: int = 2024,
                      missing_rate: float = 0.01) -> dict[str, dict]:
    """One successful BLS response document per series id.

    A small fraction of values is published as "-" (missing) so panel
    repair is exercised.
    """
    rng = np.random.default_rng(seed)
    months = month_range((first_year, 1), (last_year, 12))
    docs = {}
    for industry in INDUSTRIES:
        paths = _monthly_paths(industry, months, rng)
        for indicator, sid in industry.series_ids().items():
            decimals = 1 if indicator in ("employees_k", "avg_hours", "unemp_rate") else 2
            if indicator in ("openings_k", "hires_k", "separations_k"):
                decimals = 0
            rows = []
            for (y, m), v in zip(months, paths[indicator]):
                keep = rng.random() >= missing_rate or (y, m) in (months[0], months[-1])
                rows.append({"year": str(y), "period": f"M{m:02d}",
                             "value": f"{v:.{decimals}f}" if keep else "-"})
            rows.reverse()
            rows[0]["latest"] = "true"
            docs[sid] = {"status": "REQUEST_SUCCEEDED", "responseTime": 0, "message": [],
                         "Results": {"series": [{"seriesID": sid, "data": rows}]}}
    return docs


def write_fixtures(root: str | Path, **kwargs) -> list[Path]:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    written = []
    for sid, doc in sorted(fixture_documents(**kwargs).items()):
        path = root / f"{sid}.json"
        path.write_text(json.dumps(doc, separators=(",", ":")) + "\n")
        written.append(path)
    return written
