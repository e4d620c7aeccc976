"""Dense float64 tensors with reverse-mode automatic differentiation.

Deliberately small: exactly the operations the networks and losses in this
project need, recorded on a dynamic tape and replayed in reverse for
gradients. Everything is double precision and single threaded, so gradient
checks can run at tight tolerances and training is bit-reproducible.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DimensionError

_grad_enabled = True


class no_grad:
    """Context manager that suspends tape recording."""

    def __enter__(self):
        global _grad_enabled
        self._saved = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._saved
        return False


def _broadcast_shape(a_shape, b_shape):
    try:
        return np.broadcast_shapes(a_shape, b_shape)
    except ValueError:
        raise DimensionError(f"shapes {a_shape} and {b_shape} do not broadcast") from None


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """An n-dimensional float64 array plus an optional gradient buffer.

    Values are treated as immutable once created; only the trainer mutates
    parameter ``data`` in place, between tape builds. Operations record
    backward closures when any input has ``requires_grad``, so calling
    ``backward()`` on a scalar result accumulates ``grad`` on every
    reachable ``requires_grad`` ancestor.
    """

    __slots__ = ("data", "grad", "requires_grad", "_prev", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        # Leaves created with requires_grad start with an all-zero buffer so
        # "never touched by backward" reads as a zero gradient.
        self.grad = np.zeros_like(arr) if self.requires_grad else None
        self._prev: tuple = ()
        self._backward = None

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _scalar_err(self)

    def __array__(self, dtype=None):
        return self.data if dtype is None else self.data.astype(dtype)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # -- gradient bookkeeping ------------------------------------------------

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0.0)
        elif self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self) -> None:
        """Accumulate gradients of this scalar into all requires_grad ancestors.

        Leaf gradients accumulate across calls (backward is additive);
        interior nodes hold the gradient of the most recent call only, so
        repeated backward passes over a shared subgraph never re-propagate
        stale values.
        """
        if self.data.size != 1:
            raise ContractError("backward() requires a scalar loss")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            # reversed so children are visited left-to-right: the traversal
            # order (and hence float accumulation order) is deterministic
            for child in reversed(node._prev):
                if id(child) not in seen:
                    stack.append((child, False))
        for node in topo:
            if node._backward is not None:
                node.grad = None
        _accum(self, np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward()

    # -- arithmetic ------------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_coerce(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tmean(self, axis=axis, keepdims=keepdims)

    def abs(self) -> "Tensor":
        return tabs(self)

    def relu(self) -> "Tensor":
        return relu(self)

    def sqrt(self) -> "Tensor":
        return sqrt(self)


def _scalar_err(t):
    raise ContractError(f"expected a scalar tensor, got shape {t.shape}")


def _coerce(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=np.float64))


def _node(data: np.ndarray, prev: tuple, backward) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = True
    out.grad = None
    out._prev = prev
    out._backward = backward
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        # first accumulation: adopt fresh buffers, copy views
        if g.base is None and g.flags.owndata and g.shape == t.data.shape:
            t.grad = g
        else:
            t.grad = np.array(g)
    else:
        t.grad += g


def _record(data: np.ndarray, inputs: Sequence[Tensor], backward_factory) -> Tensor:
    """Wrap ``data`` as a tensor, recording a backward closure if needed."""
    if not _grad_enabled:
        return Tensor(data)
    tracked = tuple(t for t in inputs if t.requires_grad)
    if not tracked:
        return Tensor(data)
    out = _node(data, tracked, None)
    out._backward = backward_factory(out)
    return out


# -- elementwise operations ----------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.shape != b.shape:
        _broadcast_shape(a.shape, b.shape)
    data = a.data + b.data

    def factory(out):
        def bw():
            g = out.grad
            if a.requires_grad:
                _accum(a, _unbroadcast(g, a.shape))
            if b.requires_grad:
                _accum(b, _unbroadcast(g, b.shape))
        return bw

    return _record(data, (a, b), factory)


def sub(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.shape != b.shape:
        _broadcast_shape(a.shape, b.shape)
    data = a.data - b.data

    def factory(out):
        def bw():
            g = out.grad
            if a.requires_grad:
                _accum(a, _unbroadcast(g, a.shape))
            if b.requires_grad:
                _accum(b, _unbroadcast(-g, b.shape))
        return bw

    return _record(data, (a, b), factory)


def mul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.shape != b.shape:
        _broadcast_shape(a.shape, b.shape)
    data = a.data * b.data

    def factory(out):
        def bw():
            g = out.grad
            if a.requires_grad:
                _accum(a, _unbroadcast(g * b.data, a.shape))
            if b.requires_grad:
                _accum(b, _unbroadcast(g * a.data, b.shape))
        return bw

    return _record(data, (a, b), factory)


def div(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.shape != b.shape:
        _broadcast_shape(a.shape, b.shape)
    data = a.data / b.data

    def factory(out):
        def bw():
            g = out.grad
            if a.requires_grad:
                _accum(a, _unbroadcast(g / b.data, a.shape))
            if b.requires_grad:
                _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))
        return bw

    return _record(data, (a, b), factory)


def neg(a) -> Tensor:
    a = _coerce(a)
    data = -a.data

    def factory(out):
        def bw():
            _accum(a, -out.grad)
        return bw

    return _record(data, (a,), factory)


def power(a, p) -> Tensor:
    a = _coerce(a)
    p = float(p)
    data = a.data ** p

    def factory(out):
        def bw():
            _accum(a, out.grad * p * a.data ** (p - 1.0))
        return bw

    return _record(data, (a,), factory)


_ELEMENTWISE = {"add": add, "sub": sub, "mul": mul, "div": div}


def elementwise(op_kind: str, a, b) -> Tensor:
    """Dispatch a named binary elementwise op (operands broadcastable)."""
    try:
        op = _ELEMENTWISE[op_kind]
    except KeyError:
        raise ContractError(f"unknown elementwise op {op_kind!r}") from None
    return op(a, b)


# -- nonlinearities and reductions ----------------------------------------------


def relu(a) -> Tensor:
    a = _coerce(a)
    data = np.maximum(a.data, 0.0)

    def factory(out):
        def bw():
            # subgradient 0 at exactly 0
            _accum(a, out.grad * (a.data > 0.0))
        return bw

    return _record(data, (a,), factory)


def tabs(a) -> Tensor:
    a = _coerce(a)
    data = np.abs(a.data)

    def factory(out):
        def bw():
            _accum(a, out.grad * np.sign(a.data))
        return bw

    return _record(data, (a,), factory)


def sqrt(a) -> Tensor:
    a = _coerce(a)
    if np.any(a.data < 0.0):
        raise ContractError("sqrt of a negative entry")
    data = np.sqrt(a.data)

    def factory(out):
        def bw():
            # subgradient 0 at exactly 0 (mirrors the relu convention)
            safe = np.where(data > 0.0, data, 1.0)
            _accum(a, np.where(data > 0.0, 0.5 * out.grad / safe, 0.0))
        return bw

    return _record(data, (a,), factory)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _coerce(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def factory(out):
        def bw():
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            _accum(a, np.broadcast_to(g, a.shape).copy())
        return bw

    return _record(np.asarray(data), (a,), factory)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _coerce(a)
    count = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / float(count))


def matmul(a, b) -> Tensor:
    """Matrix product for 1D @ 2D and 2D @ 2D operands."""
    a, b = _coerce(a), _coerce(b)
    if b.ndim != 2 or a.ndim not in (1, 2):
        raise DimensionError(f"matmul supports 1D/2D @ 2D, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def factory(out):
        def bw():
            g = out.grad
            if a.requires_grad:
                _accum(a, g @ b.data.T)
            if b.requires_grad:
                if a.ndim == 1:
                    _accum(b, np.outer(a.data, g))
                else:
                    _accum(b, a.data.T @ g)
        return bw

    return _record(data, (a, b), factory)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    """Concatenate along an axis; the exact inverse of :func:`narrow`."""
    tensors = [_coerce(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    ax = axis if axis >= 0 else data.ndim + axis
    sizes = [t.shape[ax] for t in tensors]

    def factory(out):
        def bw():
            g = out.grad
            offset = 0
            index = [slice(None)] * g.ndim
            for t, n in zip(tensors, sizes):
                index[ax] = slice(offset, offset + n)
                if t.requires_grad:
                    _accum(t, g[tuple(index)])
                offset += n
        return bw

    return _record(data, tensors, factory)


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    """Slice ``length`` entries starting at ``start`` along ``axis``."""
    a = _coerce(a)
    ax = axis if axis >= 0 else a.ndim + axis
    if start < 0 or start + length > a.shape[ax]:
        raise DimensionError(f"narrow [{start}:{start + length}] out of range for axis {ax} of {a.shape}")
    index = [slice(None)] * a.ndim
    index[ax] = slice(start, start + length)
    index = tuple(index)
    data = a.data[index].copy()

    def factory(out):
        def bw():
            g = np.zeros_like(a.data)
            g[index] = out.grad
            _accum(a, g)
        return bw

    return _record(data, (a,), factory)


# -- channel statistics -----------------------------------------------------------


def channel_mean(x) -> Tensor:
    """Per-channel mean of an [H, W, C] feature map."""
    x = _coerce(x)
    if x.ndim != 3:
        raise DimensionError(f"expected [H, W, C], got {x.shape}")
    hw = x.shape[0] * x.shape[1]
    data = x.data.mean(axis=(0, 1))

    def factory(out):
        def bw():
            _accum(x, np.broadcast_to(out.grad / hw, x.shape).copy())
        return bw

    return _record(data, (x,), factory)


def channel_std(x) -> Tensor:
    """Per-channel population standard deviation of an [H, W, C] feature map.

    Uses the 1/(H*W) normalization. The gradient at an exactly-constant
    channel (sigma == 0) is defined as 0.
    """
    x = _coerce(x)
    if x.ndim != 3:
        raise DimensionError(f"expected [H, W, C], got {x.shape}")
    hw = x.shape[0] * x.shape[1]
    mu = x.data.mean(axis=(0, 1))
    dev = x.data - mu
    sigma = np.sqrt((dev * dev).mean(axis=(0, 1)))

    def factory(out):
        def bw():
            safe = np.where(sigma > 0.0, sigma, 1.0)
            scale = np.where(sigma > 0.0, out.grad / (hw * safe), 0.0)
            _accum(x, dev * scale)
        return bw

    return _record(sigma, (x,), factory)


def channel_stats(x) -> tuple[Tensor, Tensor]:
    """Per-channel (mean, population std) of an [H, W, C] feature map."""
    return channel_mean(x), channel_std(x)


# -- verification oracle ------------------------------------------------------------


def finite_difference_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-6) -> float:
    """Compare the analytic gradient of scalar-valued ``f`` at ``x`` against
    central differences; returns the max relative error over entries.

    The numeric side never touches the tape, so it stays an independent
    oracle for the backward pass.
    """
    if eps <= 0.0:
        raise ContractError("eps must be positive")
    seed = Tensor(np.array(x.data, dtype=np.float64, copy=True), requires_grad=True)
    out = f(seed)
    if out.data.size != 1:
        raise ContractError("finite_difference_check requires a scalar-valued function")
    out.backward()
    analytic = seed.grad.reshape(-1).copy()

    base = x.data.reshape(-1).copy()
    numeric = np.empty_like(base)
    for i in range(base.size):
        for sign, slot in ((+1.0, 0), (-1.0, 1)):
            bumped = base.copy()
            bumped[i] += sign * eps
            val = f(Tensor(bumped.reshape(x.shape))).item()
            if slot == 0:
                hi = val
            else:
                lo = val
        numeric[i] = (hi - lo) / (2.0 * eps)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
