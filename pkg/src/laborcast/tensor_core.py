"""Dense float64 tensors with reverse-mode automatic differentiation.

Only the primitives needed to express and train the LSTNet graph are
provided. Every op returns a new :class:`Tensor`; when any operand requires a
gradient the result remembers its parents and a local backward rule, and
:func:`backward` replays those rules over a topologically ordered
:class:`ComputationTape`.

Broadcasting is deliberately narrow: elementwise ops accept equal shapes or a
scalar operand, and :func:`bias_add` covers the one row-broadcast the model
needs.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError, DimensionError, WindowError

BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | _SliceGrad | None"]]


class _SliceGrad:
    """Gradient that is nonzero only on ``index`` of the parent.

    Lets slicing ops skip materialising a full-size zero array per use; the
    tape allocates one buffer per parent and scatters into it.
    """

    __slots__ = ("index", "value")

    def __init__(self, index, value: np.ndarray):
        self.index = index
        self.value = value


class Tensor:
    """A value-semantic float64 array, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad", "grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64, copy=True, order="C")
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def values(self) -> list[float]:
        """Row-major flat copy of the contents."""
        return self.data.ravel().tolist()

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def zeros(shape: Iterable[int], requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(tuple(shape)), requires_grad=requires_grad)


def ones(shape: Iterable[int], requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(tuple(shape)), requires_grad=requires_grad)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents: Sequence[Tensor], fn: BackwardFn, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = np.ascontiguousarray(data, dtype=np.float64)
    out.grad = None
    out.op = op
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = fn
    else:
        out._parents = ()
        out._backward = None
    return out


# ---------------------------------------------------------------------------
# tape and backward


class ComputationTape:
    """Operations reachable from a root tensor, in topological order.

    ``entries[i]`` never depends on ``entries[j]`` for ``j > i``, so walking
    the list backwards visits each recorded op once, after all its consumers.
    """

    def __init__(self, root: Tensor):
        self.root = root
        self.entries: list[Tensor] = []
        seen: set[int] = set()
        # iterative post-order DFS; recurrent graphs get deep
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                self.entries.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in reversed(node._parents):
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

    def __len__(self) -> int:
        return len(self.entries)

    def replay(self, seed: np.ndarray) -> int:
        """Propagate ``seed`` from the root back to every leaf.

        Returns the number of entries visited.
        """
        grads: dict[int, np.ndarray] = {id(self.root): seed}
        owned: set[int] = set()   # buffers allocated here, safe to mutate
        visited = 0
        for node in reversed(self.entries):
            visited += 1
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                # leaves own a private buffer; optimizers mutate it in place
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            node.grad = g if node.grad is None else node.grad + g
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if isinstance(pg, _SliceGrad):
                    buf = grads.get(key)
                    if buf is None:
                        buf = grads[key] = np.zeros(parent.shape)
                    elif key not in owned:
                        buf = grads[key] = buf.copy()
                    owned.add(key)
                    buf[pg.index] += pg.value
                elif key in grads:
                    grads[key] = grads[key] + pg
                    owned.add(key)
                else:
                    grads[key] = pg
        return visited


def backward(loss: Tensor) -> ComputationTape:
    """Populate ``.grad`` on every tracked tensor reachable from ``loss``.

    Gradients accumulate into existing buffers, so callers that step an
    optimizer should clear them between iterations.
    """
    if loss.size != 1:
        raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss is not connected to any tensor that requires grad")
    tape = ComputationTape(loss)
    tape.replay(np.ones_like(loss.data))
    return tape


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def fn(g):
        return (g @ bd.T if a.requires_grad else None,
                ad.T @ g if b.requires_grad else None)

    return _result(ad @ bd, (a, b), fn, "matmul")


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got shape {a.shape}")
    return _result(a.data.T, (a,), lambda g: (g.T,), "transpose")


def permute(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(a.ndim)):
        raise DimensionError(f"invalid permutation {axes} for shape {a.shape}")
    inverse = tuple(np.argsort(axes))
    return _result(np.transpose(a.data, axes), (a,),
                   lambda g: (np.transpose(g, inverse),), "permute")


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    original = a.shape
    try:
        data = a.data.reshape(tuple(shape))
    except ValueError as exc:
        raise DimensionError(f"cannot reshape {original} to {tuple(shape)}") from exc
    return _result(data, (a,), lambda g: (g.reshape(original),), "reshape")


def select(a: Tensor, axis: int, index: int) -> Tensor:
    """Pick one position along ``axis``, dropping that axis."""
    idx = [slice(None)] * a.ndim
    idx[axis] = index
    idx = tuple(idx)
    return _result(a.data[idx], (a,), lambda g: (_SliceGrad(idx, g),), "select")


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice ``[start, start+length)`` along ``axis``."""
    shape = a.shape
    if start < 0 or length < 0 or start + length > shape[axis]:
        raise DimensionError(f"narrow({axis}, {start}, {length}) out of range for {shape}")
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    return _result(a.data[idx], (a,), lambda g: (_SliceGrad(idx, g),), "narrow")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ContractError("concat of an empty sequence")
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"concat shape mismatch along axis {axis}: {shapes}") from exc
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def fn(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result(data, tensors, fn, "concat")


def conv2d(input: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """Valid cross-correlation along time with full-width kernels.

    ``input`` is ``(1, T, F)`` for a single sample or ``(N, 1, T, F)`` for a
    batch; ``kernels`` is ``(C, k, F)`` and ``bias`` is ``(C,)``. The output
    is ``(C, T-k+1, 1)`` or ``(N, C, T-k+1, 1)`` respectively: because every
    kernel spans all F features, the feature axis collapses to width 1.
    """
    if input.ndim == 3 and input.shape[0] == 1:
        batched = False
        x = input.data
    elif input.ndim == 4 and input.shape[1] == 1:
        batched = True
        x = input.data[:, 0]
    else:
        raise DimensionError(f"conv2d input must be (1,T,F) or (N,1,T,F), got {input.shape}")
    if kernels.ndim != 3 or bias.shape != (kernels.shape[0],):
        raise DimensionError(f"conv2d kernels {kernels.shape} / bias {bias.shape} inconsistent")
    n, t, f = x.shape
    c, k, kf = kernels.shape
    if kf != f:
        raise DimensionError(f"kernel width {kf} must equal feature count {f} (input {input.shape})")
    if k > t:
        raise WindowError(f"kernel length {k} exceeds sequence length {t}")
    length = t - k + 1

    # (n, L, F, k) -> (n, L, k, F) -> (n*L, k*F)
    cols = sliding_window_view(x, k, axis=1).transpose(0, 1, 3, 2).reshape(n * length, k * f)
    w = kernels.data.reshape(c, k * f)
    out = cols @ w.T + bias.data                      # (n*L, C)
    out = out.reshape(n, length, c).transpose(0, 2, 1)[..., None]
    if not batched:
        out = out[0]

    def fn(g):
        gt = (g if batched else g[None]).reshape(n, c, length).transpose(0, 2, 1).reshape(n * length, c)
        g_input = g_kernels = g_bias = None
        if kernels.requires_grad:
            g_kernels = (gt.T @ cols).reshape(c, k, f)
        if bias.requires_grad:
            g_bias = gt.sum(axis=0)
        if input.requires_grad:
            gcols = (gt @ w).reshape(n, length, k, f)
            gx = np.zeros((n, t, f))
            for j in range(k):
                gx[:, j:j + length, :] += gcols[:, :, j, :]
            g_input = gx[:, None] if batched else gx
        return g_input, g_kernels, g_bias

    return _result(out, (input, kernels, bias), fn, "conv2d")


# ---------------------------------------------------------------------------
# elementwise


def _binary_operands(a, b, name: str) -> tuple[Tensor, Tensor]:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape and a.ndim != 0 and b.ndim != 0:
        raise DimensionError(f"{name}: incompatible shapes {a.shape} and {b.shape}")
    return a, b


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    return np.asarray(g.sum()) if shape == () and g.shape != () else g


def add(a, b) -> Tensor:
    a, b = _binary_operands(a, b, "add")

    def fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.data + b.data, (a, b), fn, "add")


def sub(a, b) -> Tensor:
    a, b = _binary_operands(a, b, "sub")

    def fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result(a.data - b.data, (a, b), fn, "sub")


def mul(a, b) -> Tensor:
    a, b = _binary_operands(a, b, "mul")
    ad, bd = a.data, b.data

    def fn(g):
        return (_unbroadcast(g * bd, a.shape) if a.requires_grad else None,
                _unbroadcast(g * ad, b.shape) if b.requires_grad else None)

    return _result(ad * bd, (a, b), fn, "mul")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _result(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def sigmoid(a: Tensor) -> Tensor:
    s = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _result(s, (a,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    return _result(t, (a,), lambda g: (g * (1.0 - t * t),), "tanh")


_ELEMENTWISE = {
    "add": add, "sub": sub, "mul": mul,
    "relu": relu, "sigmoid": sigmoid, "tanh": tanh,
}


def elementwise(name: str, *operands) -> Tensor:
    """Dispatch a named pointwise op (``add``, ``mul``, ``sigmoid`` ...)."""
    try:
        op = _ELEMENTWISE[name]
    except KeyError:
        raise ContractError(f"unknown elementwise op {name!r}") from None
    return op(*operands)


def bias_add(x: Tensor, b: Tensor) -> Tensor:
    """Add a vector along the last axis of ``x``."""
    if b.ndim != 1 or x.ndim < 1 or x.shape[-1] != b.shape[0]:
        raise DimensionError(f"bias_add: bias {b.shape} does not match trailing axis of {x.shape}")
    lead = tuple(range(x.ndim - 1))
    return _result(x.data + b.data, (x, b),
                   lambda g: (g, g.sum(axis=lead) if lead else g), "bias_add")


# ---------------------------------------------------------------------------
# reductions


def sum(a: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    shape = a.shape
    return _result(np.asarray(a.data.sum()), (a,),
                   lambda g: (np.full(shape, np.asarray(g).item()),), "sum")


def mean(a: Tensor) -> Tensor:
    shape, n = a.shape, a.size
    return _result(np.asarray(a.data.mean()), (a,),
                   lambda g: (np.full(shape, np.asarray(g).item() / n),), "mean")
