"""Reverse-mode autodiff over dense numpy arrays.

Just enough machinery for an attention encoder plus contrastive losses:
a Tensor wrapper, a Tape recording executed primitives, and fused
forward/backward implementations of the handful of ops the model needs.
Ops run at whatever float width their inputs carry; gradient checking is
only reliable at 64-bit, training runs 32-bit.

A Tape is entered as a context manager and is thread-local, so
independent tapes may run concurrently on different threads. Gradients
accumulate (+=) into `.grad`, both across multiple uses of a tensor
inside one tape and across backward calls of several tapes; the caller
owns zeroing.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not agree."""


class Tensor:
    """Dense value plus an optional same-shape gradient buffer."""

    __slots__ = ("data", "grad")

    def __init__(self, data, dtype=None):
        self.data = np.asarray(data, dtype=dtype)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"


def value(t: Tensor) -> float:
    """Scalar payload of a one-element tensor."""
    if t.data.size != 1:
        raise TypeError(f"value() needs one element, got shape {t.data.shape}")
    return float(t.data.item())


_STATE = threading.local()


def _stack() -> list:
    stack = getattr(_STATE, "stack", None)
    if stack is None:
        stack = _STATE.stack = []
    return stack


def current_tape() -> "Tape | None":
    stack = _stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered record of executed primitives for one forward pass.

    backward() replays the record in exact reverse execution order.
    Without an active tape, ops still compute forward values (inference
    mode) and record nothing.
    """

    def __init__(self):
        self._nodes: list[tuple[Tensor, Callable[[np.ndarray], None]]] = []

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> bool:
        _stack().pop()
        return False

    def __len__(self) -> int:
        return len(self._nodes)

    def backward(self, loss: Tensor) -> None:
        if loss.data.size != 1:
            raise ShapeError("backward needs a scalar loss")
        loss.grad = np.ones_like(loss.data)
        for out, bwd in reversed(self._nodes):
            if out.grad is not None:
                bwd(out.grad)


def _record(out: Tensor, bwd: Callable[[np.ndarray], None]) -> None:
    tape = current_tape()
    if tape is not None:
        tape._nodes.append((out, bwd))


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to the original operand shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def lookup(table: Tensor, ids) -> Tensor:
    """Row gather; backward scatter-adds into the looked-up rows only."""
    idx = np.asarray(ids, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.data.shape[0]):
        raise IndexError(f"lookup id out of range [0, {table.data.shape[0]})")
    out = Tensor(table.data[idx])

    def bwd(g):
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        np.add.at(table.grad, idx, g)

    _record(out, bwd)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data)

    def bwd(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    _record(out, bwd)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data - b.data)

    def bwd(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    _record(out, bwd)
    return out


def scale(a: Tensor, c: float) -> Tensor:
    out = Tensor(a.data * a.data.dtype.type(c))

    def bwd(g):
        _accum(a, g * a.data.dtype.type(c))

    _record(out, bwd)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product with numpy broadcasting on leading axes."""
    if a.data.shape[-1] != b.data.shape[-2 if b.data.ndim > 1 else 0]:
        raise ShapeError(f"matmul {a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data)

    def bwd(g):
        ga = g @ np.swapaxes(b.data, -1, -2) if b.data.ndim > 1 else np.outer(g, b.data)
        gb = np.swapaxes(a.data, -1, -2) @ g
        _accum(a, _unbroadcast(ga, a.data.shape))
        _accum(b, _unbroadcast(gb, b.data.shape))

    _record(out, bwd)
    return out


def linear(x: Tensor, w: Tensor, bias: Tensor) -> Tensor:
    """Affine map on the last axis: x @ w + bias."""
    if x.data.shape[-1] != w.data.shape[0] or w.data.shape[1] != bias.data.shape[0]:
        raise ShapeError(
            f"linear shapes x={x.data.shape} w={w.data.shape} bias={bias.data.shape}"
        )
    out = Tensor(x.data @ w.data + bias.data)

    def bwd(g):
        _accum(x, g @ w.data.T)
        x2d = x.data.reshape(-1, x.data.shape[-1])
        g2d = g.reshape(-1, g.shape[-1])
        _accum(w, x2d.T @ g2d)
        _accum(bias, g2d.sum(axis=0))

    _record(out, bwd)
    return out


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0))

    def bwd(g):
        _accum(x, g * (x.data > 0))

    _record(out, bwd)
    return out


def softmax_lastdim(x: Tensor) -> Tensor:
    """Max-subtracted softmax over the last axis; rejects NaN input."""
    if np.isnan(x.data).any():
        raise ValueError("softmax input contains NaN")
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(y)

    def bwd(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        _accum(x, y * (g - dot))

    _record(out, bwd)
    return out


def layer_norm(x: Tensor, gain: Tensor, shift: Tensor, eps: float = 1e-5) -> Tensor:
    """Zero-mean unit-variance per last-dim position, then affine."""
    d = x.data.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + x.data.dtype.type(eps))
    xhat = xc * inv
    out = Tensor(xhat * gain.data + shift.data)

    def bwd(g):
        dxhat = g * gain.data
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        _accum(x, inv * (dxhat - m1 - xhat * m2))
        axes = tuple(range(g.ndim - 1))
        _accum(gain, (g * xhat).sum(axis=axes))
        _accum(shift, g.sum(axis=axes))

    _record(out, bwd)
    return out


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """softmax(q k^T / sqrt(d)) v over the last two axes, no masking."""
    if not (q.data.shape == k.data.shape == v.data.shape):
        raise ShapeError(
            f"attention shapes differ: {q.data.shape} {k.data.shape} {v.data.shape}"
        )
    d = q.data.shape[-1]
    inv = q.data.dtype.type(1.0 / np.sqrt(d))
    scores = (q.data @ np.swapaxes(k.data, -1, -2)) * inv
    scores = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    attn = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(attn @ v.data)

    def bwd(g):
        _accum(v, np.swapaxes(attn, -1, -2) @ g)
        d_attn = g @ np.swapaxes(v.data, -1, -2)
        d_scores = attn * (d_attn - (d_attn * attn).sum(axis=-1, keepdims=True))
        d_scores *= inv
        _accum(q, d_scores @ k.data)
        _accum(k, np.swapaxes(d_scores, -1, -2) @ q.data)

    _record(out, bwd)
    return out


def reshape(x: Tensor, shape) -> Tensor:
    out = Tensor(x.data.reshape(shape))

    def bwd(g):
        _accum(x, g.reshape(x.data.shape))

    _record(out, bwd)
    return out


def transpose(x: Tensor, axes) -> Tensor:
    out = Tensor(np.transpose(x.data, axes))
    inverse = np.argsort(axes)

    def bwd(g):
        _accum(x, np.transpose(g, inverse))

    _record(out, bwd)
    return out


def row(x: Tensor, i: int) -> Tensor:
    out = Tensor(x.data[i].copy())

    def bwd(g):
        buf = np.zeros_like(x.data)
        buf[i] = g
        _accum(x, buf)

    _record(out, bwd)
    return out


def concat(parts: Sequence[Tensor]) -> Tensor:
    out = Tensor(np.concatenate([p.data for p in parts]))
    sizes = [p.data.shape[0] for p in parts]

    def bwd(g):
        start = 0
        for p, n in zip(parts, sizes):
            _accum(p, g[start : start + n])
            start += n

    _record(out, bwd)
    return out


def logsumexp(x: Tensor) -> Tensor:
    """Stable log-sum-exp of a 1-d tensor, scalar output."""
    m = x.data.max()
    e = np.exp(x.data - m)
    s = e.sum()
    out = Tensor(np.asarray(m + np.log(s), dtype=x.data.dtype))

    def bwd(g):
        _accum(x, g * (e / s))

    _record(out, bwd)
    return out


def softplus(x: Tensor) -> Tensor:
    """log(1 + e^x), overflow-safe via logaddexp."""
    out = Tensor(np.logaddexp(x.data.dtype.type(0), x.data))

    def bwd(g):
        # sigmoid without exp overflow for large negative inputs
        v = x.data
        sig = np.empty_like(v)
        pos = v >= 0
        sig[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
        ev = np.exp(v[~pos])
        sig[~pos] = ev / (1.0 + ev)
        _accum(x, g * sig)

    _record(out, bwd)
    return out


def tsum(x: Tensor) -> Tensor:
    out = Tensor(np.asarray(x.data.sum(), dtype=x.data.dtype))

    def bwd(g):
        _accum(x, np.broadcast_to(g, x.data.shape))

    _record(out, bwd)
    return out


# ---------------------------------------------------------------------------
# finite-difference gradient checker
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    entries_checked: int

    def ok(self, tol: float) -> bool:
        return self.max_rel_error < tol


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[tuple[str, Tensor]],
    tol: float = 1e-4,
    step: float = 1e-5,
) -> GradCheckReport:
    """Compare backward gradients of scalar f() against central differences.

    f rebuilds its forward pass on every call, reading the current values
    of `params`. Relative error uses max(|analytic|, |numeric|, 1) as the
    denominator so near-zero gradients are compared absolutely.
    """
    for _, p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = f()
    tape.backward(loss)
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in params
    }

    max_rel = 0.0
    worst = ""
    checked = 0
    for name, p in params:
        flat = p.data.reshape(-1)
        an = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = float(f().data)
            flat[i] = orig - step
            f_minus = float(f().data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            rel = abs(an[i] - numeric) / max(abs(an[i]), abs(numeric), 1.0)
            checked += 1
            if rel > max_rel:
                max_rel = rel
                worst = f"{name}[{i}]"
    return GradCheckReport(max_rel_error=max_rel, worst_param=worst, entries_checked=checked)
