"""Reverse-mode differentiation over a small set of numpy primitives.

A :class:`GradientTape` records every primitive applied to :class:`Tensor`
operands while it is active; :meth:`GradientTape.gradient` then replays the
adjoint of each record once, in reverse order (the forward execution order
is a topological order, so a single reverse sweep visits every node exactly
once).

The op functions below accept plain ndarrays as well: with no Tensor
involved they just compute the numpy result, which lets the same model code
serve both inference and training.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A float array plus a slot in the tape's adjoint bookkeeping.

    float32 values are kept as float32 (the conv head's fast path);
    everything else is coerced to float64.
    """

    __slots__ = ("value",)
    __array_ufunc__ = None  # keep numpy from absorbing Tensor operands

    def __init__(self, value):
        value = np.asarray(value)
        if value.dtype != np.float32 and value.dtype != np.float64:
            value = value.astype(np.float64)
        self.value = value

    @property
    def shape(self):
        return self.value.shape

    def item(self):
        return float(self.value)

    def __repr__(self):
        return f"Tensor(shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, reciprocal(other))
        return mul(self, 1.0 / np.asarray(other, dtype=np.float64))

    def __rtruediv__(self, other):
        return mul(reciprocal(self), other)


class GradientTape:
    """Wengert list: (output, inputs, adjoint) triples in execution order."""

    current = None

    def __init__(self):
        self._records = []

    def __enter__(self):
        if GradientTape.current is not None:
            raise RuntimeError("gradient tapes do not nest")
        GradientTape.current = self
        return self

    def __exit__(self, *exc):
        GradientTape.current = None
        return False

    def gradient(self, loss: Tensor, sources):
        """Gradients of a scalar ``loss`` w.r.t. each tensor in ``sources``.

        Sources that the loss does not depend on get exact zeros.
        """
        if loss.value.ndim != 0:
            raise ValueError("loss must be a scalar tensor")
        grads = {id(loss): np.ones_like(loss.value)}
        for out, inputs, backward in reversed(self._records):
            g_out = grads.get(id(out))
            if g_out is None:
                continue
            for tensor, g in zip(inputs, backward(g_out)):
                if g is None:
                    continue
                g = _unbroadcast(np.asarray(g), tensor.value.shape)
                acc = grads.get(id(tensor))
                grads[id(tensor)] = g if acc is None else acc + g
        return [grads.get(id(s), np.zeros_like(s.value)) for s in sources]


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def primitive(value, inputs, backward) -> Tensor:
    """Create an output tensor and record its adjoint on the active tape.

    ``backward(grad_out)`` must return one gradient (or None) per input,
    before unbroadcasting.  This is the extension point for fused ops such
    as the compiled sequence kernels and the convolution.
    """
    out = Tensor(value)
    tape = GradientTape.current
    if tape is not None:
        tape._records.append((out, tuple(inputs), backward))
    return out


def _binary(a, b, value_fn, backward_fn):
    if not isinstance(a, Tensor) and not isinstance(b, Tensor):
        return value_fn(np.asarray(a, float), np.asarray(b, float))
    a, b = _wrap(a), _wrap(b)
    av, bv = a.value, b.value
    return primitive(value_fn(av, bv), (a, b), lambda g: backward_fn(g, av, bv))


def add(a, b):
    return _binary(a, b, lambda x, y: x + y, lambda g, x, y: (g, g))


def sub(a, b):
    return _binary(a, b, lambda x, y: x - y, lambda g, x, y: (g, -g))


def mul(a, b):
    return _binary(a, b, lambda x, y: x * y, lambda g, x, y: (g * y, g * x))


def reciprocal(x):
    if not isinstance(x, Tensor):
        return 1.0 / np.asarray(x, float)
    inv = 1.0 / x.value
    return primitive(inv, (x,), lambda g: (-g * inv * inv,))


def logistic(x):
    """Numerically safe 1 / (1 + exp(-x)) on ndarrays (saturates to 0/1)."""
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


def sigmoid(x):
    if not isinstance(x, Tensor):
        return logistic(x)
    s = logistic(x.value)
    return primitive(s, (x,), lambda g: (g * s * (1.0 - s),))


def tanh(x):
    if not isinstance(x, Tensor):
        return np.tanh(np.asarray(x, float))
    t = np.tanh(x.value)
    return primitive(t, (x,), lambda g: (g * (1.0 - t * t),))


def concat_last(a, b):
    """Concatenate along the last axis."""
    if not isinstance(a, Tensor) and not isinstance(b, Tensor):
        return np.concatenate([a, b], axis=-1)
    a, b = _wrap(a), _wrap(b)
    k = a.value.shape[-1]
    value = np.concatenate([a.value, b.value], axis=-1)
    return primitive(value, (a, b),
                     lambda g: (g[..., :k], g[..., k:]))


def take_last(x, idx):
    """Gather ``x[..., idx]`` for an integer index array ``idx``."""
    idx = np.asarray(idx)
    if not isinstance(x, Tensor):
        return np.asarray(x, float)[..., idx]
    xv = x.value

    def backward(g):
        gx = np.zeros_like(xv)
        np.add.at(gx, (Ellipsis, idx), g)
        return (gx,)

    return primitive(xv[..., idx], (x,), backward)


def index_last(x, i: int):
    """Select a single slice ``x[..., i]``."""
    if not isinstance(x, Tensor):
        return np.asarray(x, float)[..., i]
    xv = x.value

    def backward(g):
        gx = np.zeros_like(xv)
        gx[..., i] = g
        return (gx,)

    return primitive(xv[..., i], (x,), backward)


def slice_last(x, start: int):
    """Drop the first ``start`` entries of the last axis."""
    if not isinstance(x, Tensor):
        return np.asarray(x, float)[..., start:]
    xv = x.value

    def backward(g):
        gx = np.zeros_like(xv)
        gx[..., start:] = g
        return (gx,)

    return primitive(xv[..., start:], (x,), backward)


def segment_sum_last(values, ptr):
    """Sum runs of the last axis delimited by the offset table ``ptr``.

    Segment k covers ``values[..., ptr[k]:ptr[k+1]]``; empty segments sum
    to zero.  Computed as differences of an inclusive prefix sum, which is
    deterministic and vectorizes over any leading batch axes.
    """
    ptr = np.asarray(ptr)

    def seg(v):
        c = np.cumsum(v, axis=-1, dtype=np.float64)
        c = np.concatenate([np.zeros(v.shape[:-1] + (1,)), c], axis=-1)
        return c[..., ptr[1:]] - c[..., ptr[:-1]]

    if not isinstance(values, Tensor):
        return seg(np.asarray(values, float))
    counts = np.diff(ptr)
    return primitive(seg(values.value), (values,),
                     lambda g: (np.repeat(g, counts, axis=-1),))


def reshape(x, shape):
    if not isinstance(x, Tensor):
        return np.reshape(np.asarray(x, float), shape)
    old = x.value.shape
    return primitive(x.value.reshape(shape), (x,),
                     lambda g: (g.reshape(old),))


def matmul(a, b):
    """``a @ b`` for ``a`` of rank 2 or 3 and ``b`` of rank 2."""
    if not isinstance(a, Tensor) and not isinstance(b, Tensor):
        return np.asarray(a, float) @ np.asarray(b, float)
    a, b = _wrap(a), _wrap(b)
    av, bv = a.value, b.value
    if bv.ndim != 2 or av.ndim not in (2, 3):
        raise ValueError("matmul supports (.., M, K) @ (K, N) only")

    def backward(g):
        ga = g @ bv.T
        if av.ndim == 3:
            gb = np.einsum("bmk,bmn->kn", av, g)
        else:
            gb = av.T @ g
        return (ga, gb)

    return primitive(av @ bv, (a, b), backward)


def mean_all(x):
    if not isinstance(x, Tensor):
        return np.asarray(x, float).mean()
    n = x.value.size
    return primitive(x.value.mean(), (x,),
                     lambda g: (np.full(x.value.shape, float(g) / n),))


def sum_all(x):
    if not isinstance(x, Tensor):
        return np.asarray(x, float).sum()
    return primitive(x.value.sum(), (x,),
                     lambda g: (np.full(x.value.shape, float(g)),))


def value_of(x):
    """The plain ndarray behind either a Tensor or an array."""
    return x.value if isinstance(x, Tensor) else np.asarray(x, float)
