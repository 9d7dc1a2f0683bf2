"""LSTNet forward graph built on :mod:`laborcast.tensor_core`.

Layout of one forward pass for a batch ``x`` of shape ``(B, T, F)``::

    conv (C kernels of k x F) -> relu -> (B, L, C),  L = T - k + 1
      -> GRU over L steps                      -> (B, H)
      -> per skip length p: GRU over the last floor(L/p)*p frames,
         one sequence per phase                -> (B, p * S)
    dense([gru ∥ skips]) + AR(last hw target values)  -> (B, h)
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np

from . import tensor_core as tc
from .data_pipeline.panel import WEEK, TimeSeriesPanel
from .data_pipeline.windows import NormStats
from .errors import ContractError, DimensionError, InsufficientDataError
from .tensor_core import Tensor

logger = logging.getLogger(__name__)

GATES = ("z", "r", "n")


@dataclass(frozen=True)
class LSTNetConfig:
    window: int = 28
    features: int = 7
    conv_channels: int = 32
    conv_kernel: int = 6
    rnn_hidden: int = 100
    skip_lengths: tuple[int, ...] = (24,)
    skip_hidden: int = 5
    highway_window: int = 24
    horizon: int = 7
    target_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "skip_lengths", tuple(int(p) for p in self.skip_lengths))
        for name in ("window", "features", "conv_channels", "conv_kernel", "rnn_hidden", "horizon"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be >= 1")
        if self.conv_kernel > self.window:
            raise ContractError(f"conv_kernel {self.conv_kernel} exceeds window {self.window}")
        if not 0 <= self.highway_window <= self.window:
            raise ContractError(f"highway_window {self.highway_window} must lie in [0, window]")
        if not 0 <= self.target_index < self.features:
            raise ContractError(f"target_index {self.target_index} not below features {self.features}")
        if self.skip_lengths and (min(self.skip_lengths) < 1 or self.skip_hidden < 1):
            raise ContractError("skip lengths and skip_hidden must be >= 1")
        if len(set(self.skip_lengths)) != len(self.skip_lengths):
            raise ContractError(f"duplicate skip lengths {self.skip_lengths}")
        for p in self.skip_lengths:
            if p > self.conv_length:
                logger.warning(
                    "skip length %d exceeds conv output length %d; that branch is disabled",
                    p, self.conv_length,
                )

    @property
    def conv_length(self) -> int:
        return self.window - self.conv_kernel + 1

    @property
    def active_skips(self) -> tuple[int, ...]:
        """Skip lengths that fit at least one frame per phase."""
        return tuple(p for p in self.skip_lengths if p <= self.conv_length)

    @property
    def dense_inputs(self) -> int:
        return self.rnn_hidden + sum(p * self.skip_hidden for p in self.active_skips)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["skip_lengths"] = list(self.skip_lengths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> LSTNetConfig:
        return cls(**{**d, "skip_lengths": tuple(d.get("skip_lengths", ()))})


def param_shapes(config: LSTNetConfig) -> dict[str, tuple[int, ...]]:
    """Name -> shape of every learnable tensor, in canonical order."""
    c = config
    shapes: dict[str, tuple[int, ...]] = {
        "conv.weight": (c.conv_channels, c.conv_kernel, c.features),
        "conv.bias": (c.conv_channels,),
    }

    def gru(prefix: str, inp: int, hid: int):
        for g in GATES:
            shapes[f"{prefix}.W_{g}"] = (hid, inp)
            shapes[f"{prefix}.U_{g}"] = (hid, hid)
            shapes[f"{prefix}.b_{g}"] = (hid,)

    gru("gru", c.conv_channels, c.rnn_hidden)
    for p in c.active_skips:
        gru(f"skip{p}", c.conv_channels, c.skip_hidden)
    shapes["out.weight"] = (c.horizon, c.dense_inputs)
    shapes["out.bias"] = (c.horizon,)
    if c.highway_window > 0:
        shapes["ar.weight"] = (c.horizon, c.highway_window)
        shapes["ar.bias"] = (c.horizon,)
    return shapes


def param_count(config: LSTNetConfig) -> int:
    return int(sum(np.prod(s) for s in param_shapes(config).values()))


@dataclass
class LSTNetParams:
    tensors: dict[str, Tensor] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self.tensors.items())

    def __len__(self) -> int:
        return len(self.tensors)

    def names(self) -> list[str]:
        return list(self.tensors)

    def count(self) -> int:
        return int(sum(t.size for t in self.tensors.values()))

    def copy(self) -> LSTNetParams:
        return LSTNetParams({k: Tensor(v.data, requires_grad=v.requires_grad)
                             for k, v in self.tensors.items()})

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.tensors.items()}

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def audit(self, config: LSTNetConfig) -> None:
        expected = param_shapes(config)
        if list(expected) != list(self.tensors):
            raise DimensionError(
                f"parameter names {sorted(self.tensors)} do not match config {sorted(expected)}"
            )
        for name, shape in expected.items():
            if self.tensors[name].shape != shape:
                raise DimensionError(f"{name}: shape {self.tensors[name].shape}, expected {shape}")

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray]) -> LSTNetParams:
        return cls({k: Tensor(v, requires_grad=True) for k, v in arrays.items()})


def _fan_in(name: str, shape: tuple[int, ...]) -> int:
    if name == "conv.weight":
        return shape[1] * shape[2]
    return shape[-1]


def init_params(config: LSTNetConfig, seed: int) -> LSTNetParams:
    """Uniform(±1/sqrt(fan_in)) weights and zero biases, drawn in name order."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in param_shapes(config).items():
        if len(shape) == 1:
            data = np.zeros(shape)
        else:
            bound = 1.0 / np.sqrt(_fan_in(name, shape))
            data = rng.uniform(-bound, bound, size=shape)
        tensors[name] = Tensor(data, requires_grad=True)
    return LSTNetParams(tensors)


# ---------------------------------------------------------------------------
# GRU


def _gru_cell(params: LSTNetParams | dict, prefix: str) -> dict[str, Tensor]:
    get = params.__getitem__
    return {f"{kind}_{g}": get(f"{prefix}.{kind}_{g}") for kind in ("W", "U", "b") for g in GATES}


def _recurrent_maps(cell: dict[str, Tensor]) -> tuple[Tensor, Tensor, Tensor]:
    return tuple(tc.transpose(cell[f"U_{g}"]) for g in GATES)


def _gru_update(xz: Tensor, xr: Tensor, xn: Tensor, h: Tensor,
                maps: tuple[Tensor, Tensor, Tensor]) -> Tensor:
    """One GRU update from bias-inclusive input projections and U^T maps."""
    uz, ur, un = maps
    z = tc.sigmoid(xz + h @ uz)
    r = tc.sigmoid(xr + h @ ur)
    cand = tc.tanh(xn + (r * h) @ un)
    return (1.0 - z) * h + z * cand


def gru_step(x_t: Tensor, h_prev: Tensor, cell: dict[str, Tensor]) -> Tensor:
    """h_t = (1-z)*h_prev + z*tanh(W_n x + U_n (r*h_prev) + b_n).

    ``cell`` maps ``W_z, U_z, b_z, W_r, ...`` to tensors (input weights are
    ``hidden x in``). Accepts a single vector or a batch of row vectors.
    """
    x_t, h_prev = tc._as_tensor(x_t), tc._as_tensor(h_prev)
    single = x_t.ndim == 1
    if single:
        x_t = tc.reshape(x_t, (1, -1))
        h_prev = tc.reshape(h_prev, (1, -1))
    hid, inp = cell["W_z"].shape
    if x_t.shape[1] != inp or h_prev.shape != (x_t.shape[0], hid):
        raise DimensionError(
            f"gru_step: x {x_t.shape} / h {h_prev.shape} inconsistent with weights {hid}x{inp}"
        )
    proj = [tc.bias_add(x_t @ tc.transpose(cell[f"W_{g}"]), cell[f"b_{g}"]) for g in GATES]
    h = _gru_update(*proj, h_prev, _recurrent_maps(cell))
    return tc.reshape(h, (hid,)) if single else h


def run_gru(xs: Tensor, cell: dict[str, Tensor]) -> Tensor:
    """Run a GRU from a zero state over ``xs`` of shape (B, steps, in).

    Input projections for all steps are computed in one matmul per gate.
    Returns the final hidden state (B, hidden).
    """
    b, steps, inp = xs.shape
    hid = cell["W_z"].shape[0]
    flat = tc.reshape(xs, (b * steps, inp))
    projections = []
    for g in GATES:
        p = tc.bias_add(flat @ tc.transpose(cell[f"W_{g}"]), cell[f"b_{g}"])
        projections.append(tc.reshape(p, (b, steps, hid)))
    maps = _recurrent_maps(cell)
    h = tc.zeros((b, hid))
    for t in range(steps):
        h = _gru_update(*(tc.select(p, 1, t) for p in projections), h, maps)
    return h


def skip_frame_indices(length: int, p: int) -> list[list[int]]:
    """Conv-output positions fed to each phase of a period-``p`` skip GRU.

    Uses the last ``floor(length/p) * p`` frames; phase ``j`` sees every
    p-th frame starting at offset ``j`` within that tail.
    """
    n = length // p
    first = length - n * p
    return [[first + j + i * p for i in range(n)] for j in range(p)]


# ---------------------------------------------------------------------------
# forward


def _check_input(x, config: LSTNetConfig) -> tuple[Tensor, bool]:
    x = x if isinstance(x, Tensor) else Tensor(x)
    single = x.ndim == 2
    if single:
        x = tc.reshape(x, (1, *x.shape))
    if x.ndim != 3 or x.shape[1:] != (config.window, config.features):
        raise DimensionError(
            f"input shape {x.shape} does not match window {config.window} x features {config.features}"
        )
    return x, single


def conv_features(x: Tensor, params: LSTNetParams, config: LSTNetConfig) -> Tensor:
    b = x.shape[0]
    conv = tc.conv2d(tc.reshape(x, (b, 1, config.window, config.features)),
                     params["conv.weight"], params["conv.bias"])
    conv = tc.reshape(conv, (b, config.conv_channels, config.conv_length))
    return tc.relu(tc.permute(conv, (0, 2, 1)))


def skip_states(c: Tensor, p: int, params: LSTNetParams, config: LSTNetConfig) -> Tensor:
    """Final per-phase hidden states of the period-``p`` skip GRU, (B, p*S)."""
    b, length, ch = c.shape
    n = length // p
    tail = tc.narrow(c, 1, length - n * p, n * p)
    phases = tc.permute(tc.reshape(tail, (b, n, p, ch)), (0, 2, 1, 3))
    h = run_gru(tc.reshape(phases, (b * p, n, ch)), _gru_cell(params, f"skip{p}"))
    return tc.reshape(h, (b, p * config.skip_hidden))


def forward_components(x, params: LSTNetParams, config: LSTNetConfig) -> tuple[Tensor, Tensor | None]:
    """Return (neural head output, AR output or None), each (B, h)."""
    x, _ = _check_input(x, config)
    c = conv_features(x, params, config)
    parts = [run_gru(c, _gru_cell(params, "gru"))]
    parts += [skip_states(c, p, params, config) for p in config.active_skips]
    hidden = parts[0] if len(parts) == 1 else tc.concat(parts, axis=1)
    neural = tc.bias_add(hidden @ tc.transpose(params["out.weight"]), params["out.bias"])
    if config.highway_window == 0:
        return neural, None
    tail = tc.narrow(tc.select(x, 2, config.target_index), 1,
                     config.window - config.highway_window, config.highway_window)
    ar = tc.bias_add(tail @ tc.transpose(params["ar.weight"]), params["ar.bias"])
    return neural, ar


def forward(x, params: LSTNetParams, config: LSTNetConfig) -> Tensor:
    """Predict the next ``horizon`` normalized target changes.

    ``x`` is one window (T, F) or a batch (B, T, F); the output is (h,) or
    (B, h) accordingly.
    """
    single = (x.ndim if isinstance(x, Tensor) else np.ndim(x)) == 2
    neural, ar = forward_components(x, params, config)
    out = neural if ar is None else neural + ar
    return tc.reshape(out, (config.horizon,)) if single else out


def predict(inputs: np.ndarray, params: LSTNetParams, config: LSTNetConfig,
            batch_size: int = 512) -> np.ndarray:
    """Untracked batched forward over an (N, T, F) array."""
    frozen = LSTNetParams({k: Tensor(v.data) for k, v in params})
    outs = [forward(inputs[i:i + batch_size], frozen, config).data
            for i in range(0, len(inputs), batch_size)]
    return np.concatenate(outs) if outs else np.zeros((0, config.horizon))


@dataclass
class Forecast:
    industry: str
    anchor: np.datetime64
    timestamps: np.ndarray   # the h future weeks
    changes: np.ndarray      # denormalized target changes
    levels: np.ndarray       # anchor level cumulated with the changes


def forecast_change(panel: TimeSeriesPanel, params: LSTNetParams, config: LSTNetConfig,
                    stats: NormStats) -> Forecast:
    """Forecast the next ``horizon`` changes from the latest window of ``panel``."""
    if len(panel) < config.window:
        raise InsufficientDataError(
            f"{panel.industry}: {len(panel)} rows, need at least window={config.window}"
        )
    block = stats.normalize_features(panel.values[-config.window:])
    pred = predict(block[None], params, config)[0]
    changes = stats.denormalize_target(pred)
    anchor = panel.timestamps[-1]
    level = panel.values[-1, config.target_index]
    return Forecast(panel.industry, anchor, anchor + WEEK * np.arange(1, config.horizon + 1),
                    changes, level + np.cumsum(changes))
