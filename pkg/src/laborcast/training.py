"""Mini-batch training of LSTNet with MSE loss and best-validation selection."""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Sequence, TypeVar

import numpy as np

from . import tensor_core as tc
from .data_pipeline.panel import TimeSeriesPanel
from .data_pipeline.windows import WindowBatch, make_windows, window_count
from .errors import ContractError, DataError, DimensionError, DivergenceError
from .lstnet import LSTNetConfig, LSTNetParams, forward, predict
from .tensor_core import Tensor

logger = logging.getLogger(__name__)

W = TypeVar("W")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    epochs: int = 100
    learning_rate: float = 0.001
    seed: int = 0
    val_fraction: float = 0.2
    test_fraction: float = 0.2
    optimizer: str = "adam"
    clip_norm: float | None = 10.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.batch_size < 1:
            raise ContractError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ContractError("epochs must be >= 0")
        if not self.learning_rate > 0:
            raise ContractError("learning_rate must be > 0")
        if min(self.val_fraction, self.test_fraction) < 0 or self.val_fraction + self.test_fraction >= 1:
            raise ContractError("need val_fraction, test_fraction >= 0 with sum < 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ContractError(f"unknown optimizer {self.optimizer!r}")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float | None
    seconds: float


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int | None = None
    clip_events: int = 0

    def __len__(self) -> int:
        return len(self.records)

    def losses(self) -> list[tuple[float, float | None]]:
        return [(r.train_loss, r.val_loss) for r in self.records]

    def to_csv(self, timing: bool = False) -> str:
        """Loss history. ``seconds`` is left blank unless ``timing``, so logs stay byte-stable."""
        buf = io.StringIO()
        buf.write("# schema: laborcast.train_log v1\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss", "seconds"])
        for r in self.records:
            w.writerow([r.epoch, repr(r.train_loss), "" if r.val_loss is None else repr(r.val_loss),
                        f"{r.seconds:.3f}" if timing else ""])
        if self.best_epoch is not None:
            buf.write(f"# best_epoch,{self.best_epoch}\n")
        return buf.getvalue()


def mse_loss(pred: Tensor, target) -> Tensor:
    target = target if isinstance(target, Tensor) else Tensor(target)
    if pred.shape != target.shape:
        raise DimensionError(f"mse_loss: prediction {pred.shape} vs target {target.shape}")
    if pred.size == 0:
        raise ContractError("mse_loss on empty tensors")
    diff = pred - target
    return tc.mean(diff * diff)


# ---------------------------------------------------------------------------
# splitting


def split_counts(n: int, val_fraction: float, test_fraction: float) -> tuple[int, int, int]:
    """Floor allocation: val and test get floor(n*fraction), train the rest."""
    n_val = math.floor(n * val_fraction + 1e-9)
    n_test = math.floor(n * test_fraction + 1e-9)
    return n - n_val - n_test, n_val, n_test


def chronological_split(windows: Sequence[W], val_fraction: float, test_fraction: float,
                        gap: int = 0) -> tuple[Sequence[W], Sequence[W], Sequence[W]]:
    """Cut time-ordered windows into contiguous train/val/test segments.

    Sizes follow :func:`split_counts`. ``gap`` windows are dropped from the
    end of a segment whenever a later segment follows it, so that with
    ``gap = T + h - 1`` no earlier window's targets reach into the next
    segment's inputs.
    """
    n = len(windows)
    if n < 3:
        raise DataError(f"need at least 3 windows to split, got {n}")
    n_train, n_val, n_test = split_counts(n, val_fraction, test_fraction)
    train_end = n_train - (gap if n_val + n_test else 0)
    val_end = n_train + n_val - (gap if n_val and n_test else 0)
    if train_end < 1:
        raise DataError(f"empty training split ({n} windows, gap {gap})")
    if n_val and val_end <= n_train:
        raise DataError(f"validation split emptied by gap {gap}")
    train = windows[:train_end]
    val = windows[n_train:val_end] if n_val else windows[n_train:n_train]
    test = windows[n_train + n_val:]
    return train, val, test


@dataclass
class Splits:
    train: WindowBatch
    val: WindowBatch
    test: WindowBatch


def build_splits(panel: TimeSeriesPanel, window: int, horizon: int, target_index: int,
                 val_fraction: float, test_fraction: float) -> Splits:
    """Window a panel with statistics taken from training rows only."""
    n = window_count(len(panel), window, horizon)
    if n < 3:
        raise DataError(f"{panel.industry}: {len(panel)} rows give {n} windows; need >= 3")
    gap = window + horizon - 1
    train_idx, _, _ = chronological_split(range(n), val_fraction, test_fraction, gap)
    # rows touched by training windows (inputs and targets)
    stats_span = (0, train_idx[-1] + window + horizon)
    batch = make_windows(panel, window, horizon, target_index, stats_span=stats_span)
    train, val, test = chronological_split(batch, val_fraction, test_fraction, gap)
    return Splits(train, val, test)


# ---------------------------------------------------------------------------
# optimizers


class SGD:
    def __init__(self, params: LSTNetParams, lr: float):
        self.params, self.lr = params, lr

    def step(self) -> None:
        for _, t in self.params:
            if t.grad is not None:
                t.data -= self.lr * t.grad


class Adam:
    def __init__(self, params: LSTNetParams, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params, self.lr = params, lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v.data) for k, v in params}
        self.v = {k: np.zeros_like(v.data) for k, v in params}

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params:
            g = p.grad
            if g is None:
                continue
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def clip_grad_norm(params: LSTNetParams, max_norm: float) -> float:
    """Rescale all grads so their global L2 norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    total = math.sqrt(sum(float(np.sum(t.grad * t.grad)) for _, t in params if t.grad is not None))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for _, t in params:
            if t.grad is not None:
                t.grad *= scale
    return total


def make_optimizer(params: LSTNetParams, cfg: TrainConfig):
    if cfg.optimizer == "sgd":
        return SGD(params, cfg.learning_rate)
    return Adam(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)


# ---------------------------------------------------------------------------
# training loop


def evaluate_loss(params: LSTNetParams, config: LSTNetConfig, windows: WindowBatch) -> float:
    pred = predict(windows.inputs, params, config)
    return float(np.mean((pred - windows.targets) ** 2))


def train(params: LSTNetParams, config: LSTNetConfig, train_windows: WindowBatch,
          val_windows: WindowBatch | None, cfg: TrainConfig) -> tuple[LSTNetParams, TrainLog]:
    """Fit ``params`` (a copy is trained) and return the best-validation copy.

    Batches are reshuffled each epoch with a generator seeded from
    ``cfg.seed``. Without validation windows the lowest training loss picks
    the epoch.
    """
    if len(train_windows) == 0:
        raise DataError("empty training split")
    params.audit(config)
    work = params.copy()
    for _, t in work:
        t.requires_grad = True
    best = params.copy()
    log = TrainLog()
    if cfg.epochs == 0:
        return best, log

    rng = np.random.default_rng(cfg.seed)
    opt = make_optimizer(work, cfg)
    has_val = val_windows is not None and len(val_windows) > 0
    best_score = math.inf
    last_finite: float | None = None
    n = len(train_windows)

    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            work.zero_grad()
            loss = mse_loss(forward(train_windows.inputs[idx], work, config),
                            train_windows.targets[idx])
            value = loss.item()
            if not math.isfinite(value):
                raise DivergenceError(epoch, last_finite)
            tc.backward(loss)
            if cfg.clip_norm is not None:
                norm = clip_grad_norm(work, cfg.clip_norm)
                if norm > cfg.clip_norm:
                    log.clip_events += 1
                    logger.debug("epoch %d: clipped gradient norm %.3g", epoch, norm)
            opt.step()
            total += value * len(idx)
        train_loss = total / n
        val_loss = evaluate_loss(work, config, val_windows) if has_val else None
        score = val_loss if has_val else train_loss
        if not math.isfinite(score):
            raise DivergenceError(epoch, last_finite)
        last_finite = train_loss
        log.records.append(EpochRecord(epoch, train_loss, val_loss, time.perf_counter() - t0))
        if score < best_score:
            best_score = score
            best = work.copy()
            log.best_epoch = epoch
        logger.info("epoch %d train %.5f val %s", epoch, train_loss,
                    "-" if val_loss is None else f"{val_loss:.5f}")
    if log.clip_events:
        logger.info("gradient clipping triggered on %d steps", log.clip_events)
    return best, log
