"""Forecast error metrics and Spearman rank correlation."""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats as _stats

from .errors import ContractError, UndefinedCorrelationError


def _pair(actual, predicted) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(actual, dtype=np.float64).ravel()
    yhat = np.asarray(predicted, dtype=np.float64).ravel()
    if y.size == 0 or y.shape != yhat.shape:
        raise ContractError(f"need equal non-empty lengths, got {y.size} and {yhat.size}")
    return y, yhat


def smape(actual, predicted) -> float:
    """Symmetric MAPE in percent, within [0, 200].

    A term where actual and prediction are both exactly zero counts as zero
    error.
    """
    y, yhat = _pair(actual, predicted)
    denom = (np.abs(y) + np.abs(yhat)) / 2.0
    diff = np.abs(y - yhat)
    terms = np.divide(diff, denom, out=np.zeros_like(diff), where=denom > 0)
    return float(100.0 * terms.mean())


def rmse(actual, predicted) -> float:
    y, yhat = _pair(actual, predicted)
    return float(np.sqrt(np.mean((y - yhat) ** 2)))


def mae(actual, predicted) -> float:
    y, yhat = _pair(actual, predicted)
    return float(np.mean(np.abs(y - yhat)))


def mse(actual, predicted) -> float:
    y, yhat = _pair(actual, predicted)
    return float(np.mean((y - yhat) ** 2))


def mape(actual, predicted) -> float:
    """MAPE in percent over terms with nonzero actuals (diagnostic only)."""
    y, yhat = _pair(actual, predicted)
    keep = y != 0
    if not keep.any():
        raise ContractError("MAPE undefined: every actual value is zero")
    return float(100.0 * np.mean(np.abs((y[keep] - yhat[keep]) / y[keep])))


@dataclass(frozen=True)
class MetricReport:
    smape: float
    rmse: float
    mae: float
    n: int
    mape: float | None = None

    @property
    def mse(self) -> float:
        return self.rmse ** 2


def evaluate(actual, predicted, diagnostic: bool = False) -> MetricReport:
    y, yhat = _pair(actual, predicted)
    m = None
    if diagnostic:
        try:
            m = mape(y, yhat)
        except ContractError:
            m = float("nan")
    return MetricReport(smape(y, yhat), rmse(y, yhat), mae(y, yhat), int(y.size), m)


# ---------------------------------------------------------------------------
# ranks


def rankdata(values) -> np.ndarray:
    """1-based ranks, ties sharing the mean of the positions they span."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="mergesort")
    ranks = np.empty(len(v))
    sorted_v = v[order]
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and sorted_v[j + 1] == sorted_v[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


class SpearmanResult(NamedTuple):
    rho: float
    p_value: float


def _rank_pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ContractError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 3:
        raise ContractError(f"need at least 3 pairs, got {a.size}")
    ra, rb = rankdata(a), rankdata(b)
    if np.all(ra == ra[0]) or np.all(rb == rb[0]):
        raise UndefinedCorrelationError("rank variance is zero for a constant input")
    return ra, rb


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    dx, dy = x - x.mean(), y - y.mean()
    return float(np.dot(dx, dy) / math.sqrt(np.dot(dx, dx) * np.dot(dy, dy)))


def spearman_rho(a: Sequence[float], b: Sequence[float]) -> SpearmanResult:
    """Spearman's rho with average-rank ties and a two-sided t-test p-value."""
    ra, rb = _rank_pair(a, b)
    n = len(ra)
    rho = max(-1.0, min(1.0, _pearson(ra, rb)))
    if abs(rho) == 1.0:
        return SpearmanResult(rho, 0.0)
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    p = 2.0 * float(_stats.t.sf(abs(t), n - 2))
    return SpearmanResult(rho, p)


def spearman_tie_free(a, b) -> float:
    """The closed form 1 - 6*sum(d^2)/(n(n^2-1)); valid only without ties."""
    ra, rb = _rank_pair(a, b)
    n = len(ra)
    d2 = float(np.sum((ra - rb) ** 2))
    return 1.0 - 6.0 * d2 / (n * (n * n - 1))


def spearman_permutation_p(a, b, max_n: int = 10) -> float:
    """Exact two-sided p-value by enumerating every permutation of ``b``'s ranks."""
    ra, rb = _rank_pair(a, b)
    n = len(ra)
    if n > max_n:
        raise ContractError(f"exact enumeration limited to n <= {max_n}, got {n}")
    observed = abs(_pearson(ra, rb))
    dx = ra - ra.mean()
    dy = rb - rb.mean()
    scale = math.sqrt(np.dot(dx, dx) * np.dot(dy, dy))
    hits = total = 0
    perms = itertools.permutations(range(n))
    while True:
        block = np.fromiter(itertools.chain.from_iterable(itertools.islice(perms, 200_000)),
                            dtype=np.int64)
        if block.size == 0:
            break
        idx = block.reshape(-1, n)
        r = np.abs(dy[idx] @ dx) / scale
        hits += int(np.count_nonzero(r >= observed - 1e-12))
        total += len(idx)
    return hits / total


# ---------------------------------------------------------------------------
# tables

METRIC_TABLE_HEADER = ("industry", "mse", "mae", "smape_pct", "rmse", "n")


def metric_table_csv(reports: dict[str, MetricReport], diagnostic: bool = False) -> str:
    """Per-industry error table (MSE, MAE, SMAPE, plus RMSE and n)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    buf.write("# schema: laborcast.model_metrics v1\n")
    header = list(METRIC_TABLE_HEADER) + (["mape_pct"] if diagnostic else [])
    w.writerow(header)
    for industry, r in reports.items():
        row = [industry, f"{r.mse:.6f}", f"{r.mae:.6f}", f"{r.smape:.4f}", f"{r.rmse:.6f}", r.n]
        if diagnostic:
            row.append("" if r.mape is None else f"{r.mape:.4f}")
        w.writerow(row)
    return buf.getvalue()
