"""Dense tensors with reverse-mode automatic differentiation.

Everything is backed by numpy arrays. Forward ops executed inside a
``Tape`` context are recorded; ``Tape.backward(loss)`` replays the
recorded backward rules in reverse order and accumulates gradients into
``Tensor.grad``. Outside a tape, ops run plain numpy (inference mode).

Default precision is float32; gradient checking switches to float64 via
``set_default_dtype`` (or the ``float64`` context manager).
"""

from __future__ import annotations

import contextlib
import math

import numpy as np


class ShapeError(ValueError):
    """Raised when tensor shapes are incompatible for an operation."""


class NumericError(ArithmeticError):
    """Raised when a non-finite value is detected where one is not allowed."""


_DEFAULT_DTYPE = np.float32


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype!r}")
    _DEFAULT_DTYPE = dtype


def default_dtype():
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def float64():
    """Temporarily switch new tensors to 64-bit (for gradient checks)."""
    prev = _DEFAULT_DTYPE
    set_default_dtype(np.float64)
    try:
        yield
    finally:
        set_default_dtype(prev)


class Tensor:
    """A dense real-valued array plus an optional gradient of the same shape."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.asarray(data, dtype=dtype or _DEFAULT_DTYPE)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; scalars and arrays are wrapped as constant tensors.
    def __add__(self, other):
        return add(self, _as_tensor(other, like=self))

    def __radd__(self, other):
        return add(_as_tensor(other, like=self), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other, like=self))

    def __rsub__(self, other):
        return sub(_as_tensor(other, like=self), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other, like=self))

    def __rmul__(self, other):
        return mul(_as_tensor(other, like=self), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else _DEFAULT_DTYPE
    return Tensor(np.asarray(x, dtype=dtype))


class Tape:
    """Ordered record of forward operations for one backward pass.

    Each entry is (output, inputs, backward_rule); entries are appended in
    execution order, so the list is topologically sorted and the backward
    pass can visit it once, in reverse.
    """

    def __init__(self):
        self._ops: list[tuple[Tensor, tuple[Tensor, ...], object]] = []

    def __len__(self) -> int:
        return len(self._ops)

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPE_STACK.pop()

    def backward(self, loss: Tensor) -> None:
        """Populate ``grad`` on every requires_grad tensor reachable from loss.

        Repeated calls (without zeroing) accumulate.
        """
        if loss.data.size != 1:
            raise ShapeError(f"backward requires a scalar loss, got shape {loss.shape}")
        pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        owners: dict[int, Tensor] = {id(loss): loss}
        for out, inputs, rule in reversed(self._ops):
            g = pending.pop(id(out), None)
            if g is None:
                continue
            out.grad = g if out.grad is None else out.grad + g
            for t, gt in zip(inputs, rule(g)):
                if gt is None or not t.requires_grad:
                    continue
                key = id(t)
                if key in pending:
                    pending[key] = pending[key] + gt
                else:
                    pending[key] = gt
                    owners[key] = t
        for key, g in pending.items():
            t = owners[key]
            t.grad = g if t.grad is None else t.grad + g


_TAPE_STACK: list[Tape] = []


def _record(out: Tensor, inputs: tuple[Tensor, ...], rule) -> Tensor:
    if _TAPE_STACK and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        _TAPE_STACK[-1]._ops.append((out, inputs, rule))
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum grad down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# Elementwise and linear-algebra primitives
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data)

    def rule(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _record(out, (a, b), rule)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data - b.data)

    def rule(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _record(out, (a, b), rule)


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data)
    return _record(out, (a,), lambda g: (-g,))


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data * b.data)
    ad, bd = a.data, b.data

    def rule(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _record(out, (a, b), rule)


def square(a: Tensor) -> Tensor:
    out = Tensor(a.data * a.data)
    ad = a.data
    return _record(out, (a,), lambda g: (2.0 * ad * g,))


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    out = Tensor(t)
    return _record(out, (a,), lambda g: (g * (1.0 - t * t),))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; supports stacked leading batch dimensions."""
    ad, bd = a.data, b.data
    if ad.ndim < 2 or bd.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {ad.shape} and {bd.shape}")
    if ad.shape[-1] != bd.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {ad.shape} x {bd.shape}")
    fold = bd.ndim == 2 and ad.ndim > 2  # one big GEMM instead of a stacked loop
    if fold:
        k, n = bd.shape
        out_data = (ad.reshape(-1, k) @ bd).reshape(ad.shape[:-1] + (n,))
    else:
        out_data = np.matmul(ad, bd)
    out = Tensor(out_data)

    def rule(g):
        if fold:
            k, n = bd.shape
            g2 = g.reshape(-1, n)
            ga = (g2 @ bd.T).reshape(ad.shape)
            gb = ad.reshape(-1, k).T @ g2
        else:
            ga = _unbroadcast(np.matmul(g, bd.swapaxes(-1, -2)), ad.shape)
            gb = _unbroadcast(np.matmul(ad.swapaxes(-1, -2), g), bd.shape)
        return ga, gb

    return _record(out, (a, b), rule)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    orig = a.data.shape
    out = Tensor(a.data.reshape(shape))
    return _record(out, (a,), lambda g: (g.reshape(orig),))


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = Tensor(a.data.transpose(axes))
    return _record(out, (a,), lambda g: (g.transpose(inv),))


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = tuple(tensors)
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def rule(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record(out, tensors, rule)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))
    shape = a.data.shape

    def rule(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _record(out, (a,), rule)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), _as_tensor(1.0 / n, like=a))


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row gather: out[..., :] = table[ids[...], :]."""
    ids = np.asarray(ids)
    out = Tensor(table.data[ids])
    shape = table.data.shape

    def rule(g):
        gt = np.zeros(shape, dtype=g.dtype)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, shape[-1]))
        return (gt,)

    return _record(out, (table,), rule)


def gather_rows(x: Tensor, row_ids: np.ndarray) -> Tensor:
    """Pick one time-step per batch element: (B, T, d), (B,) -> (B, d)."""
    row_ids = np.asarray(row_ids)
    batch = np.arange(x.data.shape[0])
    out = Tensor(x.data[batch, row_ids])
    shape = x.data.shape

    def rule(g):
        gx = np.zeros(shape, dtype=g.dtype)
        gx[batch, row_ids] = g
        return (gx,)

    return _record(out, (x,), rule)


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)
    out = Tensor(a.data[idx])
    shape = a.data.shape

    def rule(g):
        gx = np.zeros(shape, dtype=g.dtype)
        gx[idx] = g
        return (gx,)

    return _record(out, (a,), rule)


def select_index(x: Tensor, ids: np.ndarray) -> Tensor:
    """out[i] = x[i, ids[i]] for a 2-d tensor."""
    ids = np.asarray(ids)
    rows = np.arange(x.data.shape[0])
    out = Tensor(x.data[rows, ids])
    shape = x.data.shape

    def rule(g):
        gx = np.zeros(shape, dtype=g.dtype)
        gx[rows, ids] = g
        return (gx,)

    return _record(out, (x,), rule)


# ---------------------------------------------------------------------------
# Fused neural-net ops (bespoke backward rules, finite-difference checked)
# ---------------------------------------------------------------------------


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    m = x.data.max(axis=axis, keepdims=True)
    if not np.isfinite(m).all():
        raise NumericError("softmax input contains NaN or +inf")
    e = np.exp(x.data - m)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y)

    def rule(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    return _record(out, (x,), rule)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    m = x.data.max(axis=axis, keepdims=True)
    if not np.isfinite(m).all():
        raise NumericError("log_softmax input contains NaN or +inf")
    shifted = x.data - m
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - lse
    out = Tensor(y)

    def rule(g):
        return (g - np.exp(y) * g.sum(axis=axis, keepdims=True),)

    return _record(out, (x,), rule)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    if eps <= 0:
        raise ValueError("layer_norm eps must be positive")
    d = x.data.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor(xhat * gain.data + bias.data)
    gd = gain.data

    def rule(g):
        dxhat = g * gd
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        axes = tuple(range(g.ndim - 1))
        dgain = (g * xhat).sum(axis=axes)
        dbias = g.sum(axis=axes)
        return dx, dgain, dbias

    return _record(out, (x, gain, bias), rule)


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x: Tensor) -> Tensor:
    """GELU activation, tanh approximation.

    The local derivative is computed alongside the forward value with
    in-place updates; the backward rule is then a single multiply.
    """
    xd = x.data
    x2 = xd * xd
    t = x2 * xd
    t *= 0.044715
    t += xd
    t *= _GELU_C
    np.tanh(t, out=t)
    dy = 1.0 + t
    dy *= 0.5  # 0.5 (1 + t)
    y = xd * dy
    t *= t
    np.subtract(1.0, t, out=t)  # 1 - t^2
    x2 *= 0.134145
    x2 += 1.0
    x2 *= 0.5 * _GELU_C
    x2 *= xd
    x2 *= t  # 0.5 x (1 - t^2) dinner
    dy += x2
    out = Tensor(y)
    return _record(out, (x,), lambda g: (g * dy,))


_MASK_CACHE: dict[tuple[int, int], np.ndarray] = {}


def _causal_mask(t: int, dtype) -> np.ndarray:
    key = (t, np.dtype(dtype).num)
    mask = _MASK_CACHE.get(key)
    if mask is None:
        mask = np.triu(np.full((t, t), -np.inf, dtype=dtype), k=1)
        _MASK_CACHE[key] = mask
    return mask


def causal_self_attention(
    x: Tensor,
    n_heads: int,
    wq: Tensor,
    bq: Tensor,
    wk: Tensor,
    bk: Tensor,
    wv: Tensor,
    bv: Tensor,
    wo: Tensor,
    bo: Tensor,
    return_weights: bool = False,
):
    """Multi-head causal self-attention over the last two axes (..., T, d).

    Position t attends to positions <= t only. Output shape equals input
    shape. Composed from recorded primitives, so it is differentiable.
    """
    d = x.data.shape[-1]
    if d % n_heads != 0:
        raise ShapeError(f"hidden size {d} not divisible by n_heads {n_heads}")
    hd = d // n_heads
    t = x.data.shape[-2]
    lead = x.data.shape[:-2]

    q = add(matmul(x, wq), bq)
    k = add(matmul(x, wk), bk)
    v = add(matmul(x, wv), bv)

    def split_heads(z):
        z = reshape(z, lead + (t, n_heads, hd))
        perm = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
        return transpose(z, perm)  # (..., H, T, hd)

    qh, kh, vh = split_heads(q), split_heads(k), split_heads(v)
    kt = transpose(kh, tuple(range(kh.ndim - 2)) + (kh.ndim - 1, kh.ndim - 2))
    scores = mul(matmul(qh, kt), _as_tensor(1.0 / math.sqrt(hd), like=x))
    scores = add(scores, Tensor(_causal_mask(t, x.data.dtype)))
    attn = softmax(scores, axis=-1)
    ctx = matmul(attn, vh)  # (..., H, T, hd)
    perm_back = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
    ctx = transpose(ctx, perm_back)
    ctx = reshape(ctx, lead + (t, d))
    out = add(matmul(ctx, wo), bo)
    if return_weights:
        return out, attn.data.copy()
    return out
