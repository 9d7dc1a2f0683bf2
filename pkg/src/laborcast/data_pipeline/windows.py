"""Sliding windows over a prepared panel, with leakage-free z-scoring."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError, DegenerateFeatureError, InsufficientDataError
from .catalog import INDICATORS
from .panel import TimeSeriesPanel


@dataclass(frozen=True)
class NormStats:
    """Per-feature z-score statistics plus those of the target change series.

    ``span`` is the half-open row range the statistics were computed over.
    """

    feature_mean: tuple[float, ...]
    feature_std: tuple[float, ...]
    target_index: int
    target_mean: float
    target_std: float
    span: tuple[int, int]

    def normalize_features(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x) - np.array(self.feature_mean)) / np.array(self.feature_std)

    def normalize_target(self, y) -> np.ndarray:
        return (np.asarray(y, dtype=np.float64) - self.target_mean) / self.target_std

    def denormalize_target(self, z) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self.target_std + self.target_mean

    def to_dict(self) -> dict:
        return {
            "feature_mean": list(self.feature_mean),
            "feature_std": list(self.feature_std),
            "target_index": self.target_index,
            "target_mean": self.target_mean,
            "target_std": self.target_std,
            "span": list(self.span),
        }

    @classmethod
    def from_dict(cls, d: dict) -> NormStats:
        return cls(tuple(d["feature_mean"]), tuple(d["feature_std"]), int(d["target_index"]),
                   float(d["target_mean"]), float(d["target_std"]), tuple(d["span"]))


def compute_stats(panel: TimeSeriesPanel, target_index: int, span: tuple[int, int]) -> NormStats:
    start, stop = span
    if not 0 <= start < stop <= len(panel) or stop - start < 2:
        raise ContractError(f"statistics span {span} invalid for panel of length {len(panel)}")
    block = panel.values[start:stop]
    mean = block.mean(axis=0)
    std = block.std(axis=0)
    for j, s in enumerate(std):
        if not s > 0:
            raise DegenerateFeatureError(INDICATORS[j])
    changes = np.diff(block[:, target_index])
    t_std = float(changes.std())
    # a constant change series (linear level) stays representable
    if not t_std > 0:
        t_std = 1.0
    return NormStats(tuple(mean.tolist()), tuple(std.tolist()), target_index,
                     float(changes.mean()), t_std, (start, stop))


@dataclass
class WindowBatch:
    """Normalized model inputs with their h-step change targets.

    Window ``i`` reads panel rows ``starts[i] .. starts[i]+T-1`` and targets
    the changes at rows ``starts[i]+T .. starts[i]+T+h-1`` (change at row r
    is ``level[r] - level[r-1]``). ``history`` holds the normalized changes
    observed inside the input block (rows ``starts[i]+1 .. starts[i]+T-1``).
    """

    industry: str
    inputs: np.ndarray          # (N, T, F)
    targets: np.ndarray         # (N, h)
    history: np.ndarray         # (N, T-1)
    starts: np.ndarray          # (N,) first input row
    anchor_levels: np.ndarray   # (N,) raw target level at the last input row
    timestamps: np.ndarray      # panel timestamps, datetime64[D]
    stats: NormStats
    window: int
    horizon: int

    def __len__(self) -> int:
        return len(self.starts)

    def __getitem__(self, key) -> WindowBatch:
        if isinstance(key, (int, np.integer)):
            key = slice(key, key + 1) if key != -1 else slice(-1, None)
        return WindowBatch(self.industry, self.inputs[key], self.targets[key], self.history[key],
                           self.starts[key], self.anchor_levels[key], self.timestamps,
                           self.stats, self.window, self.horizon)

    @property
    def anchor_timestamps(self) -> np.ndarray:
        return self.timestamps[self.starts + self.window - 1]

    @property
    def target_timestamps(self) -> np.ndarray:
        offsets = self.starts[:, None] + self.window + np.arange(self.horizon)
        return self.timestamps[offsets]

    def input_rows(self, i: int) -> range:
        s = int(self.starts[i])
        return range(s, s + self.window)

    def target_rows(self, i: int) -> range:
        s = int(self.starts[i]) + self.window
        return range(s, s + self.horizon)


def window_count(length: int, window: int, horizon: int) -> int:
    return max(length - window - horizon + 1, 0)


def make_windows(panel: TimeSeriesPanel, window: int, horizon: int, target_index: int,
                 stats_span: tuple[int, int] | None = None,
                 stats: NormStats | None = None) -> WindowBatch:
    """Slide a length-``window`` block over ``panel`` with stride one.

    Normalization uses ``stats`` when given, otherwise statistics computed
    over ``stats_span`` (the whole panel if neither is given; callers that
    evaluate out of sample must restrict the span to training rows).
    """
    if window < 2 or horizon < 1:
        raise ContractError(f"need window >= 2 and horizon >= 1, got {window}, {horizon}")
    if not 0 <= target_index < len(INDICATORS):
        raise ContractError(f"target_index {target_index} out of range")
    n = window_count(len(panel), window, horizon)
    if n < 1:
        raise InsufficientDataError(
            f"panel {panel.industry} has {len(panel)} rows; need at least {window + horizon}"
        )
    if stats is None:
        stats = compute_stats(panel, target_index, stats_span or (0, len(panel)))

    features = stats.normalize_features(panel.values)
    level = panel.values[:, target_index]
    changes = np.concatenate([[np.nan], np.diff(level)])
    norm_changes = stats.normalize_target(changes)

    starts = np.arange(n)
    in_idx = starts[:, None] + np.arange(window)
    tgt_idx = starts[:, None] + window + np.arange(horizon)
    hist_idx = starts[:, None] + 1 + np.arange(window - 1)
    return WindowBatch(
        industry=panel.industry,
        inputs=features[in_idx],
        targets=norm_changes[tgt_idx],
        history=norm_changes[hist_idx],
        starts=starts,
        anchor_levels=level[starts + window - 1],
        timestamps=panel.timestamps.copy(),
        stats=stats,
        window=window,
        horizon=horizon,
    )


def reconstruct_levels(anchor_level: float, changes) -> np.ndarray:
    """Levels implied by cumulating raw changes from an anchor level."""
    return anchor_level + np.cumsum(np.asarray(changes, dtype=np.float64))
