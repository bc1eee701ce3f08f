"""Dense tensors with reverse-mode automatic differentiation.

Every value flowing through the model is a :class:`Tensor`: a contiguous
numpy array plus an optional gradient buffer and an optional trace entry
linking it to the operation and inputs that produced it.  Operations build
the trace only while gradient recording is enabled (see :func:`no_grad`)
and at least one input participates in differentiation.

Float32 is the working precision; a float64 mode (used by the
finite-difference gradient checks) is entered with :func:`dtype_scope`.
Broadcasting is deliberately restricted: each operation documents the
exact shape combinations it accepts and rejects everything else.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "tensor",
    "no_grad",
    "grad_enabled",
    "dtype_scope",
    "default_dtype",
    "make_rng",
    "add",
    "sub",
    "mul",
    "matmul",
    "transpose",
    "reshape",
    "sigmoid",
    "softmax_rows",
    "log_softmax_rows",
    "concat_last_dim",
    "slice_cols",
    "take_rows",
    "tile_rows",
    "embedding_lookup",
    "dropout",
    "conv1d_dilated",
    "sum_all",
    "mean_all",
    "linear",
]

_STATE = {"grad": True, "dtype": np.float32}


class ShapeError(ValueError):
    """Raised when operands do not match an operation's documented shapes."""


def default_dtype():
    return _STATE["dtype"]


@contextlib.contextmanager
def dtype_scope(dt):
    """Temporarily switch the dtype used for newly created tensors."""
    prev = _STATE["dtype"]
    _STATE["dtype"] = np.dtype(dt).type
    try:
        yield
    finally:
        _STATE["dtype"] = prev


@contextlib.contextmanager
def no_grad():
    """Disable trace recording; forward results are identical."""
    prev = _STATE["grad"]
    _STATE["grad"] = False
    try:
        yield
    finally:
        _STATE["grad"] = prev


def grad_enabled() -> bool:
    return _STATE["grad"]


def make_rng(seed: int) -> np.random.Generator:
    """Named project-wide RNG: PCG64 behind numpy's Generator front end.

    All stochastic behaviour (init, dropout, shuffling, synthetic data)
    draws from generators produced here, so a seed pins every run.
    """
    return np.random.Generator(np.random.PCG64(seed))


class Tensor:
    """A dense array with optional gradient tracking.

    `data` is always a contiguous numpy array.  `grad` stays ``None`` until
    a backward pass reaches this tensor; repeated backward passes accumulate
    into it (call :meth:`zero_grad` between steps).  `trace` is ``None`` for
    leaves and a ``(op_name, parents)`` pair for derived values.
    """

    __slots__ = ("data", "grad", "requires_grad", "_op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.ascontiguousarray(data, dtype=dtype or default_dtype())
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._op = None
        self._parents = ()
        self._backward = None

    # -- introspection -------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def trace(self):
        if self._op is None:
            return None
        return (self._op, self._parents)

    def __repr__(self):
        op = f", op={self._op}" if self._op else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{op})"

    # -- gradients -----------------------------------------------------

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Reverse-mode sweep from a scalar.

        Gradients sum into `.grad` of every tensor reachable through the
        trace; a second backward without `zero_grad` accumulates further.
        """
        if self.shape != ():
            raise ShapeError(f"backward requires a scalar, got shape {self.shape}")
        order = _toposort(self)
        self.grad = _accum(self.grad, np.ones((), dtype=self.data.dtype))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar (thin wrappers over module functions) -----------

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def _toposort(root: Tensor) -> list:
    # Iterative DFS; parent order is the recorded order, so the sweep is
    # deterministic for a fixed graph.
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def _accum(buf, delta):
    if buf is None:
        return np.array(delta, copy=True)
    buf += delta
    return buf


def _result(data, op: str, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._op = None
    out._parents = ()
    out._backward = None
    track = _STATE["grad"] and any(p.requires_grad for p in parents)
    out.requires_grad = track
    if track:
        out._op = op
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------
# elementwise / linear algebra
# ---------------------------------------------------------------------


def add(a: Tensor, b) -> Tensor:
    """Addition.  Accepted forms: same shape; [n,c] + [c] (per-row bias);
    tensor + python scalar.  Anything else raises :class:`ShapeError`."""
    if isinstance(b, (int, float)):
        a = _as_tensor(a)
        data = a.data + a.data.dtype.type(b)

        def bw(g):
            a.grad = _accum(a.grad, g)

        return _result(data, "add", (a,), bw)

    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape == b.shape:
        def bw(g):
            if a.requires_grad:
                a.grad = _accum(a.grad, g)
            if b.requires_grad:
                b.grad = _accum(b.grad, g)

        return _result(a.data + b.data, "add", (a, b), bw)
    if a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        def bw(g):
            if a.requires_grad:
                a.grad = _accum(a.grad, g)
            if b.requires_grad:
                b.grad = _accum(b.grad, g.sum(axis=0))

        return _result(a.data + b.data, "add_bias", (a, b), bw)
    raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")


def sub(a: Tensor, b) -> Tensor:
    if isinstance(b, (int, float)):
        return add(a, -b)
    return add(a, mul(b, -1.0))


def mul(a: Tensor, b) -> Tensor:
    """Elementwise product: same shape, or tensor * python scalar."""
    if isinstance(b, (int, float)):
        a = _as_tensor(a)
        s = a.data.dtype.type(b)

        def bw(g):
            a.grad = _accum(a.grad, g * s)

        return _result(a.data * s, "scale", (a,), bw)

    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}")

    def bw(g):
        if a.requires_grad:
            a.grad = _accum(a.grad, g * b.data)
        if b.requires_grad:
            b.grad = _accum(b.grad, g * a.data)

    return _result(a.data * b.data, "mul", (a, b), bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Strict 2-D matrix product [p,q] @ [q,r] -> [p,r]."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def bw(g):
        if a.requires_grad:
            a.grad = _accum(a.grad, g @ b.data.T)
        if b.requires_grad:
            b.grad = _accum(b.grad, a.data.T @ g)

    return _result(a.data @ b.data, "matmul", (a, b), bw)


def transpose(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose expects 2-D, got {a.shape}")

    def bw(g):
        a.grad = _accum(a.grad, g.T)

    return _result(np.ascontiguousarray(a.data.T), "transpose", (a,), bw)


def reshape(a: Tensor, shape) -> Tensor:
    a = _as_tensor(a)
    data = a.data.reshape(shape)

    def bw(g):
        a.grad = _accum(a.grad, g.reshape(a.shape))

    return _result(np.ascontiguousarray(data), "reshape", (a,), bw)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Row scores x @ weight.T + bias for weight of shape [out, in]."""
    return add(matmul(x, transpose(weight)), bias)


# ---------------------------------------------------------------------
# nonlinearities
# ---------------------------------------------------------------------


def sigmoid(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    x = a.data
    # Split by sign so exp never overflows for large |x|.
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)

    def bw(g):
        a.grad = _accum(a.grad, g * y * (1.0 - y))

    return _result(y, "sigmoid", (a,), bw)


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax of a 2-D tensor; every output row sums to 1."""
    a = _as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"softmax_rows expects 2-D, got {a.shape}")
    z = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)

    def bw(g):
        dot = (g * y).sum(axis=1, keepdims=True)
        a.grad = _accum(a.grad, y * (g - dot))

    return _result(y, "softmax_rows", (a,), bw)


def log_softmax_rows(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"log_softmax_rows expects 2-D, got {a.shape}")
    m = a.data.max(axis=1, keepdims=True)
    z = a.data - m
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    y = z - lse
    p = np.exp(y)

    def bw(g):
        a.grad = _accum(a.grad, g - p * g.sum(axis=1, keepdims=True))

    return _result(y, "log_softmax_rows", (a,), bw)


# ---------------------------------------------------------------------
# shape manipulation / gathering
# ---------------------------------------------------------------------


def concat_last_dim(*tensors: Tensor) -> Tensor:
    """Concatenate 1-D or 2-D tensors along their last axis.

    All inputs must share ndim and, for 2-D, the row count.
    """
    ts = [_as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat_last_dim needs at least one input")
    nd = ts[0].ndim
    if nd not in (1, 2) or any(t.ndim != nd for t in ts):
        raise ShapeError("concat_last_dim: inputs must all be 1-D or all 2-D")
    if nd == 2 and any(t.shape[0] != ts[0].shape[0] for t in ts):
        raise ShapeError("concat_last_dim: row counts differ")
    data = np.concatenate([t.data for t in ts], axis=-1)
    widths = [t.shape[-1] for t in ts]
    offsets = np.cumsum([0] + widths)

    def bw(g):
        for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                piece = g[..., lo:hi]
                t.grad = _accum(t.grad, piece)

    return _result(data, "concat", ts, bw)


def slice_cols(a: Tensor, lo: int, hi: int) -> Tensor:
    a = _as_tensor(a)
    if a.ndim != 2 or not (0 <= lo <= hi <= a.shape[1]):
        raise ShapeError(f"slice_cols: bad range [{lo}:{hi}] for shape {a.shape}")

    def bw(g):
        full = np.zeros_like(a.data)
        full[:, lo:hi] = g
        a.grad = _accum(a.grad, full)

    return _result(np.ascontiguousarray(a.data[:, lo:hi]), "slice_cols", (a,), bw)


def take_rows(table: Tensor, ids) -> Tensor:
    """Gather rows: table [V, d] indexed by integer ids [n] -> [n, d].

    Backward scatter-adds, so repeated ids accumulate their gradients.
    """
    table = _as_tensor(table)
    idx = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2 or idx.ndim != 1:
        raise ShapeError(f"take_rows: table {table.shape}, ids {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexError("take_rows: id out of range")

    def bw(g):
        dT = np.zeros_like(table.data)
        np.add.at(dT, idx, g)
        table.grad = _accum(table.grad, dT)

    return _result(table.data[idx].copy(), "take_rows", (table,), bw)


embedding_lookup = take_rows


def tile_rows(a: Tensor, n: int) -> Tensor:
    """Repeat a 1-D vector [c] as n identical rows -> [n, c]."""
    a = _as_tensor(a)
    if a.ndim != 1:
        raise ShapeError(f"tile_rows expects 1-D, got {a.shape}")

    def bw(g):
        a.grad = _accum(a.grad, g.sum(axis=0))

    return _result(np.tile(a.data, (n, 1)), "tile_rows", (a,), bw)


# ---------------------------------------------------------------------
# regularization
# ---------------------------------------------------------------------


def dropout(a: Tensor, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: zero entries with probability `rate`, scale the
    survivors by 1/(1-rate).  Identity when not training or rate == 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    a = _as_tensor(a)
    if not training or rate == 0.0:
        return a
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    keep = (rng.random(a.shape) >= rate).astype(a.data.dtype)
    scale = a.data.dtype.type(1.0 / (1.0 - rate))
    mask = keep * scale

    def bw(g):
        a.grad = _accum(a.grad, g * mask)

    return _result(a.data * mask, "dropout", (a,), bw)


# ---------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------


def _conv_windows(x_pad: np.ndarray, n: int, k_s: int, dilation: int) -> np.ndarray:
    idx = np.arange(n)[:, None] + np.arange(k_s)[None, :] * dilation
    return x_pad[idx]  # [n, k_s, c_in]


def conv1d_dilated(x: Tensor, kernel: Tensor, bias: Tensor, dilation: int) -> Tensor:
    """Length-preserving dilated 1-D convolution over a token sequence.

    x [n, c_in], kernel [c_out, c_in, k_s], bias [c_out] -> [n, c_out];
    the input is zero-padded by dilation*(k_s-1)/2 on each side, which
    requires odd k_s.  out[i, o] = bias[o] + sum_{j,c} kernel[o,c,j] *
    padded[i + j*dilation, c].
    """
    x, kernel, bias = _as_tensor(x), _as_tensor(kernel), _as_tensor(bias)
    if x.ndim != 2 or kernel.ndim != 3 or bias.ndim != 1:
        raise ShapeError(
            f"conv1d_dilated: x {x.shape}, kernel {kernel.shape}, bias {bias.shape}"
        )
    n, c_in = x.shape
    c_out, kc_in, k_s = kernel.shape
    if n < 1:
        raise ShapeError("conv1d_dilated: empty input")
    if kc_in != c_in or bias.shape[0] != c_out:
        raise ShapeError(
            f"conv1d_dilated: channel mismatch x {x.shape}, kernel {kernel.shape}"
        )
    if k_s % 2 == 0:
        raise ValueError(f"conv1d_dilated: kernel size must be odd, got {k_s}")
    if dilation < 1:
        raise ValueError(f"conv1d_dilated: dilation must be >= 1, got {dilation}")

    pad = dilation * (k_s - 1) // 2
    x_pad = np.zeros((n + 2 * pad, c_in), dtype=x.data.dtype)
    x_pad[pad : pad + n] = x.data
    win = _conv_windows(x_pad, n, k_s, dilation)  # [n, k_s, c_in]
    out = np.tensordot(win, kernel.data, axes=([1, 2], [2, 1])) + bias.data

    def bw(g):
        if bias.requires_grad:
            bias.grad = _accum(bias.grad, g.sum(axis=0))
        if kernel.requires_grad:
            dk = np.tensordot(g, win, axes=([0], [0]))  # [c_out, k_s, c_in]
            kernel.grad = _accum(kernel.grad, dk.transpose(0, 2, 1))
        if x.requires_grad:
            dwin = np.tensordot(g, kernel.data, axes=([1], [0]))  # [n, c_in, k_s]
            dpad = np.zeros_like(x_pad)
            for j in range(k_s):
                dpad[j * dilation : j * dilation + n] += dwin[:, :, j]
            x.grad = _accum(x.grad, dpad[pad : pad + n])

    return _result(np.ascontiguousarray(out), "conv1d_dilated", (x, kernel, bias), bw)


# ---------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------


def sum_all(a: Tensor) -> Tensor:
    a = _as_tensor(a)

    def bw(g):
        a.grad = _accum(a.grad, np.full(a.shape, g, dtype=a.data.dtype))

    return _result(a.data.sum(dtype=a.data.dtype), "sum", (a,), bw)


def mean_all(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    return mul(sum_all(a), 1.0 / a.size)
