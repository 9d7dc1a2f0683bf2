"""Industry Employment Health Index.

Each industry gets four raw signals:

* volatility: smoothed volatility of its predicted change trajectory
* separation: mean separation rate (separations / employees)
* hiring: smoothed volatility of the hire rate (hires / employees)
* trend: mean predicted change

Each signal is min-max scaled across industries so that 1 is the healthy end
(low volatility, low separations, steady hiring, growth), and the score is
their weighted sum. Rank 1 is the healthiest industry.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .data_pipeline.catalog import INDICATORS
from .data_pipeline.panel import TimeSeriesPanel
from .errors import ContractError, JoinError, RankingError
from .metrics import SpearmanResult, rankdata, spearman_rho

COMPONENTS = ("volatility", "separation", "hiring", "trend")
# +1: larger raw value is healthier, -1: smaller is healthier
POLARITY = {"volatility": -1, "separation": -1, "hiring": -1, "trend": 1}


@dataclass(frozen=True)
class IEHIWeights:
    volatility: float = 0.4
    separation: float = 0.25
    hiring: float = 0.2
    trend: float = 0.15

    def __post_init__(self):
        vals = self.as_dict().values()
        if min(vals) < 0:
            raise ContractError("IEHI weights must be non-negative")
        if abs(sum(vals) - 1.0) > 1e-9:
            raise ContractError(f"IEHI weights must sum to 1, got {sum(vals)}")

    def as_dict(self) -> dict[str, float]:
        return {c: getattr(self, c) for c in COMPONENTS}


@dataclass
class IEHIInputs:
    trajectory: np.ndarray        # predicted change trajectory
    separation_rate: np.ndarray   # separations / employees per period
    hire_rate: np.ndarray         # hires / employees per period

    def __post_init__(self):
        for name in ("trajectory", "separation_rate", "hire_rate"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).ravel()
            if arr.size == 0 or not np.all(np.isfinite(arr)):
                raise ContractError(f"IEHI input {name} must be non-empty and finite")
            setattr(self, name, arr)


def smoothed_volatility(trajectory, window: int = 12) -> float:
    """Mean of the rolling sample standard deviation over length-``window`` spans."""
    x = np.asarray(trajectory, dtype=np.float64).ravel()
    if window < 2 or x.size < window:
        raise ContractError(f"need trajectory length >= window >= 2, got {x.size} and {window}")
    spans = np.lib.stride_tricks.sliding_window_view(x, window)
    return float(spans.std(axis=1, ddof=1).mean())


def raw_components(inputs: IEHIInputs, window: int = 12) -> dict[str, float]:
    w = min(window, inputs.trajectory.size, inputs.hire_rate.size)
    return {
        "volatility": smoothed_volatility(inputs.trajectory, max(w, 2)),
        "separation": float(inputs.separation_rate.mean()),
        "hiring": smoothed_volatility(inputs.hire_rate, max(w, 2)),
        "trend": float(inputs.trajectory.mean()),
    }


def minmax_healthy(values: np.ndarray, polarity: int) -> np.ndarray:
    """Scale to [0, 1] with 1 at the healthy end; a constant column maps to 0.5."""
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.full(values.shape, 0.5)
    scaled = (values - lo) / (hi - lo)
    return scaled if polarity > 0 else 1.0 - scaled


def composite_scores(subscores: Mapping[str, np.ndarray], weights: Mapping[str, float]) -> np.ndarray:
    return sum(weights[c] * np.asarray(subscores[c]) for c in COMPONENTS)


def health_ranks(scores) -> np.ndarray:
    """Rank 1 for the highest score, averaged over ties."""
    return rankdata(-np.asarray(scores, dtype=np.float64))


@dataclass
class IEHIRow:
    industry: str
    score: float
    rank: float
    subscores: dict[str, float]
    raw: dict[str, float]


@dataclass
class IEHIReport:
    rows: list[IEHIRow]
    weights: IEHIWeights
    validation: SpearmanResult | None = None
    error_scores: dict[str, float] = field(default_factory=dict)

    def ranks(self) -> dict[str, float]:
        return {r.industry: r.rank for r in self.rows}

    def scores(self) -> dict[str, float]:
        return {r.industry: r.score for r in self.rows}

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# schema: laborcast.iehi v1\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["industry", "score", "rank", *(f"{c}_subscore" for c in COMPONENTS),
                    *(f"{c}_raw" for c in COMPONENTS), "smape_pct"])
        for r in sorted(self.rows, key=lambda r: (r.rank, r.industry)):
            smape = self.error_scores.get(r.industry)
            w.writerow([r.industry, f"{r.score:.6f}", f"{r.rank:g}",
                        *(f"{r.subscores[c]:.6f}" for c in COMPONENTS),
                        *(f"{r.raw[c]:.8g}" for c in COMPONENTS),
                        "" if smape is None else f"{smape:.4f}"])
        wd = self.weights.as_dict()
        buf.write("# weights: " + ", ".join(f"{c}={wd[c]:g}" for c in COMPONENTS) + "\n")
        if self.validation is not None:
            buf.write(f"# spearman_rho,{self.validation.rho:.6f}\n")
            buf.write(f"# p_value,{self.validation.p_value:.6e}\n")
        return buf.getvalue()


def score_raw(raw: Mapping[str, Mapping[str, float]], weights: IEHIWeights | None = None) -> IEHIReport:
    """Score industries from precomputed raw component values."""
    weights = weights or IEHIWeights()
    names = list(raw)
    if len(names) < 2:
        raise RankingError(f"ranking needs at least 2 industries, got {len(names)}")
    sub = {c: minmax_healthy(np.array([raw[n][c] for n in names], dtype=np.float64), POLARITY[c])
           for c in COMPONENTS}
    scores = composite_scores(sub, weights.as_dict())
    ranks = health_ranks(scores)
    rows = [IEHIRow(n, float(scores[i]), float(ranks[i]),
                    {c: float(sub[c][i]) for c in COMPONENTS},
                    {c: float(raw[n][c]) for c in COMPONENTS})
            for i, n in enumerate(names)]
    return IEHIReport(rows, weights)


def compute_iehi(inputs: Mapping[str, IEHIInputs], weights: IEHIWeights | None = None,
                 window: int = 12) -> IEHIReport:
    return score_raw({name: raw_components(inp, window) for name, inp in inputs.items()}, weights)


def inputs_from_panel(panel: TimeSeriesPanel, trajectory, rows: slice | None = None) -> IEHIInputs:
    """Derive separation and hire rates from a panel's (optionally sliced) rows."""
    block = panel.values if rows is None else panel.values[rows]
    emp = block[:, INDICATORS.index("employees_k")]
    return IEHIInputs(
        trajectory=np.asarray(trajectory, dtype=np.float64),
        separation_rate=block[:, INDICATORS.index("separations_k")] / emp,
        hire_rate=block[:, INDICATORS.index("hires_k")] / emp,
    )


def validate_ranking(iehi_ranks: Mapping[str, float], error_scores: Mapping[str, float]) -> SpearmanResult:
    """Spearman correlation between IEHI rank and forecast error per industry."""
    left, right = set(error_scores), set(iehi_ranks)
    if left != right:
        raise JoinError(left - right, right - left)
    names = sorted(left)
    return spearman_rho([iehi_ranks[n] for n in names], [error_scores[n] for n in names])
