"""Reverse-mode automatic differentiation over dense float64 arrays.

A small define-by-run tape sized for the recurrent actor/critic networks
used in this package. Every operation takes `Tensor` operands, computes
its result eagerly with numpy and, when gradient recording is enabled,
registers a backward closure. Calling :func:`backward` on a scalar root
walks the recorded graph once in reverse topological order and
accumulates gradients into the `.grad` slot of every tensor that has
`requires_grad` set.

All values are float64. Ops support exactly the shapes the networks
need (2-D matmul, elementwise ops with trailing-axis broadcasting);
anything fancier is out of scope.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

_GRAD_STACK = [True]


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (forward passes only)."""
    _GRAD_STACK.append(False)
    try:
        yield
    finally:
        _GRAD_STACK.pop()


def grad_enabled() -> bool:
    return _GRAD_STACK[-1]


class Tensor:
    """A float64 array with an optional gradient slot and tape hooks."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_bw")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._bw: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return self.data.item()

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Thin operator sugar over the module-level ops.
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


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def node(data: np.ndarray, parents: Sequence[Tensor], bw: Callable[[np.ndarray], None]) -> Tensor:
    """Create an op output, wiring it into the tape when recording is on.

    `bw` receives the output gradient and must call :func:`accumulate`
    on each parent it contributes to.
    """
    out = Tensor(data)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._bw = bw
    return out


def accumulate(t: Tensor, g: np.ndarray) -> None:
    """Add `g` into `t.grad` if `t` participates in differentiation."""
    if t.requires_grad:
        t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to `shape` (inverse of numpy broadcasting)."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# Primitive operations
# ---------------------------------------------------------------------------

def add(x, y) -> Tensor:
    x, y = as_tensor(x), as_tensor(y)
    out = x.data + y.data

    def bw(g):
        accumulate(x, _unbroadcast(g, x.data.shape))
        accumulate(y, _unbroadcast(g, y.data.shape))

    return node(out, (x, y), bw)


def sub(x, y) -> Tensor:
    x, y = as_tensor(x), as_tensor(y)
    out = x.data - y.data

    def bw(g):
        accumulate(x, _unbroadcast(g, x.data.shape))
        accumulate(y, _unbroadcast(-g, y.data.shape))

    return node(out, (x, y), bw)


def mul(x, y) -> Tensor:
    x, y = as_tensor(x), as_tensor(y)
    xd, yd = x.data, y.data
    out = xd * yd

    def bw(g):
        accumulate(x, _unbroadcast(g * yd, xd.shape))
        accumulate(y, _unbroadcast(g * xd, yd.shape))

    return node(out, (x, y), bw)


def matmul(x: Tensor, y: Tensor) -> Tensor:
    xd, yd = x.data, y.data
    out = xd @ yd

    def bw(g):
        accumulate(x, g @ yd.T)
        accumulate(y, xd.T @ g)

    return node(out, (x, y), bw)


def sigmoid(x: Tensor) -> Tensor:
    s = 1.0 / (1.0 + np.exp(-x.data))

    def bw(g):
        accumulate(x, g * s * (1.0 - s))

    return node(s, (x,), bw)


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)

    def bw(g):
        accumulate(x, g * (1.0 - t * t))

    return node(t, (x,), bw)


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    mask = x.data >= 0.0
    out = np.where(mask, x.data, slope * x.data)

    def bw(g):
        accumulate(x, np.where(mask, g, slope * g))

    return node(out, (x,), bw)


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis, max-subtracted for overflow safety."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        accumulate(x, (g - dot) * y)

    return node(y, (x,), bw)


def concat(parts: Iterable[Tensor], axis: int = -1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        for p, piece in zip(parts, np.split(g, splits, axis=axis)):
            accumulate(p, piece)

    return node(out, tuple(parts), bw)


def reduce_sum(x: Tensor, axis: int | None = None) -> Tensor:
    out = x.data.sum(axis=axis)

    def bw(g):
        if axis is None:
            accumulate(x, np.broadcast_to(g, x.data.shape).copy())
        else:
            accumulate(x, np.broadcast_to(np.expand_dims(g, axis), x.data.shape).copy())

    return node(out, (x,), bw)


def reduce_mean(x: Tensor, axis: int | None = None) -> Tensor:
    count = x.data.size if axis is None else x.data.shape[axis]
    out = x.data.mean(axis=axis)

    def bw(g):
        if axis is None:
            accumulate(x, np.broadcast_to(g / count, x.data.shape).copy())
        else:
            accumulate(x, np.broadcast_to(np.expand_dims(g, axis) / count, x.data.shape).copy())

    return node(out, (x,), bw)


def gru_cell(
    x: Tensor,
    h: Tensor,
    wz: Tensor, uz: Tensor, bz: Tensor,
    wr: Tensor, ur: Tensor, br: Tensor,
    wc: Tensor, uc: Tensor, bc: Tensor,
) -> Tensor:
    """One gated-recurrent-unit step, fused into a single tape node.

    Gates: update z, reset r, candidate c; new state h' = (1-z)*c + z*h
    (z near 1 keeps the previous state). x is (B, Din), h is (B, H).
    The backward closure implements the full chain rule by hand; it is
    covered by the finite-difference check suite.
    """
    xd, hd = x.data, h.data
    z = 1.0 / (1.0 + np.exp(-(xd @ wz.data + hd @ uz.data + bz.data)))
    r = 1.0 / (1.0 + np.exp(-(xd @ wr.data + hd @ ur.data + br.data)))
    rh = r * hd
    c = np.tanh(xd @ wc.data + rh @ uc.data + bc.data)
    out = (1.0 - z) * c + z * hd

    def bw(g):
        dz = g * (hd - c)
        dc = g * (1.0 - z)
        dh = g * z

        dac = dc * (1.0 - c * c)
        accumulate(wc, xd.T @ dac)
        accumulate(uc, rh.T @ dac)
        accumulate(bc, dac.sum(axis=0))
        drh = dac @ uc.data.T
        dr = drh * hd
        dh = dh + drh * r
        dx = dac @ wc.data.T

        dar = dr * r * (1.0 - r)
        accumulate(wr, xd.T @ dar)
        accumulate(ur, hd.T @ dar)
        accumulate(br, dar.sum(axis=0))
        dh = dh + dar @ ur.data.T
        dx = dx + dar @ wr.data.T

        daz = dz * z * (1.0 - z)
        accumulate(wz, xd.T @ daz)
        accumulate(uz, hd.T @ daz)
        accumulate(bz, daz.sum(axis=0))
        dh = dh + daz @ uz.data.T
        dx = dx + daz @ wz.data.T

        accumulate(x, dx)
        accumulate(h, dh)

    return node(out, (x, h, wz, uz, bz, wr, ur, br, wc, uc, bc), bw)


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------

def backward(root: Tensor) -> None:
    """Populate `.grad` on every tensor the scalar `root` depends on.

    The graph is consumed: tape hooks are cleared so a second call on
    the same root is a no-op rather than a double accumulation.
    """
    if root.data.size != 1:
        raise ValueError("backward root must be a scalar")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            topo.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        for p in t._parents:
            if id(p) not in seen:
                stack.append((p, False))

    root.grad = np.ones_like(root.data)
    for t in reversed(topo):
        if t._bw is not None and t.grad is not None:
            t._bw(t.grad)
        t._parents = ()
        t._bw = None


# ---------------------------------------------------------------------------
# Finite-difference checking
# ---------------------------------------------------------------------------

def numeric_gradient(f: Callable[[], float], array: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of `f()` w.r.t. `array`, perturbed in place."""
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + eps
        hi = f()
        flat[i] = keep - eps
        lo = f()
        flat[i] = keep
        gflat[i] = (hi - lo) / (2.0 * eps)
    return grad


def check_gradients(
    build: Callable[[], Tensor],
    params: Sequence[Tensor],
    rtol: float = 1e-4,
    atol: float = 1e-8,
    eps: float = 1e-5,
) -> float:
    """Compare tape gradients of `build()` against central differences.

    Returns the worst elementwise discrepancy scaled by the allclose
    bound; raises AssertionError when any element is out of tolerance.
    """
    for p in params:
        p.grad = None
    out = build()
    backward(out)
    worst = 0.0
    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        numeric = numeric_gradient(lambda: build().item(), p.data, eps=eps)
        bound = atol + rtol * np.maximum(np.abs(analytic), np.abs(numeric))
        err = np.abs(analytic - numeric)
        worst = max(worst, float((err / bound).max()) if err.size else 0.0)
        if not np.all(err <= bound):
            idx = np.unravel_index(int((err / bound).argmax()), err.shape)
            raise AssertionError(
                f"gradient mismatch at {idx}: analytic={analytic[idx]!r} "
                f"numeric={numeric[idx]!r}"
            )
    return worst
