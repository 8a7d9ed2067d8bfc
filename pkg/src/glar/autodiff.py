"""A small reverse-mode autodiff tape over 2-D float64 numpy arrays.

Only the operations the model needs are provided: affine maps, row gathers
and segment sums for message passing, concatenation, sigmoid / log-sigmoid,
elementwise arithmetic and reductions. Leaf values, pass outputs passed
through ``check_finite`` and every accumulated leaf gradient are checked
for NaN/Inf.
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .exceptions import NumericError, ShapeError


def _check_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {what}")


class Tensor:
    __slots__ = ("values", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, values, requires_grad=False, name=None, _parents=(), _backward=None, _check=True):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got shape {arr.shape}")
        if _check:
            _check_finite(arr, name or "tensor")
        self.values = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.values.shape

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape})"

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if not self.requires_grad:
            return
        _check_finite(g, f"gradient of {self.name or 'tensor'}")
        self.grad = g.copy() if self.grad is None else self.grad + g

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into every leaf with ``requires_grad``."""
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            stack.extend((p, False) for p in node._parents if p.requires_grad)
        seed = np.ones_like(self.values) if grad is None else np.asarray(grad, dtype=np.float64)
        grads = {id(self): seed}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._accumulate(g)
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(values, parents, backward, name=None):
    # intermediate values are not checked; NaN/Inf surface at the pass output or in leaf gradients
    req = any(p.requires_grad for p in parents)
    return Tensor(values, requires_grad=req, name=name, _check=False,
                  _parents=tuple(parents) if req else (), _backward=backward if req else None)


def check_finite(t: Tensor, what="forward output") -> Tensor:
    _check_finite(t.values, what)
    return t


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    return g


def _check_broadcast(a, b, op):
    for da, db in zip(a.shape, b.shape):
        if da != db and da != 1 and db != 1:
            raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "add")
    return _node(a.values + b.values, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "sub")
    return _node(a.values - b.values, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    """Elementwise product with row/column broadcasting."""
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "mul")
    av, bv = a.values, b.values
    return _node(av * bv, (a, b),
                 lambda g: (_unbroadcast(g * bv, a.shape), _unbroadcast(g * av, b.shape)))


def one_minus(a):
    return _node(1.0 - a.values, (a,), lambda g: (-g,))


def scale(a, c: float):
    return _node(a.values * c, (a,), lambda g: (g * c,))


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    av, bv = a.values, b.values
    return _node(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def linear(x, W, b=None):
    """``x @ W + b`` with ``b`` broadcast over rows."""
    y = matmul(x, W)
    if b is None:
        return y
    if b.shape != (1, W.shape[1]):
        raise ShapeError(f"linear: bias shape {b.shape} does not match output width {W.shape[1]}")
    return add(y, b)


def concat(tensors: Sequence[Tensor], axis=1):
    tensors = [_as_tensor(t) for t in tensors]
    other = 1 - axis
    if len({t.shape[other] for t in tensors}) > 1:
        raise ShapeError(f"concat: mismatched shapes {[t.shape for t in tensors]}")
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _node(np.concatenate([t.values for t in tensors], axis=axis), tensors, backward)


def sigmoid(x):
    y = expit(x.values)
    return _node(y, (x,), lambda g: (g * y * (1.0 - y),))


def log_sigmoid(x):
    v = x.values
    y = -np.logaddexp(0.0, -v)
    s = np.exp(y)
    return _node(y, (x,), lambda g: (g * (1.0 - s),))


def log(x):
    v = x.values
    if np.any(v <= 0):
        raise NumericError("log of a non-positive value")
    return _node(np.log(v), (x,), lambda g: (g / v,))


def sum(x, axis=None):  # noqa: A001 - mirrors numpy
    v = x.values
    if axis is None:
        return _node(v.sum().reshape(1, 1), (x,), lambda g: (np.broadcast_to(g, v.shape).copy(),))
    out = v.sum(axis=axis, keepdims=True)
    return _node(out, (x,), lambda g: (np.broadcast_to(g, v.shape).copy(),))


def mean(x, axis=0):
    n = x.shape[axis] if axis is not None else x.values.size
    return scale(sum(x, axis=axis), 1.0 / n)


def slice_rows(x, start, stop):
    """Rows ``start:stop`` of ``x`` (typically a block of a weight matrix)."""
    def backward(g):
        full = np.zeros_like(x.values)
        full[start:stop] = g
        return (full,)

    return _node(x.values[start:stop], (x,), backward)


def spmm(S, x):
    """Constant sparse (or dense) matrix ``S`` times tensor ``x``."""
    if S.shape[1] != x.shape[0]:
        raise ShapeError(f"spmm: {S.shape} @ {x.shape}")
    St = S.T
    return _node(np.asarray(S @ x.values), (x,), lambda g: (np.asarray(St @ g),))


def _scatter_matrix(index, n):
    # one entry per row of the (m, n) selection matrix, built directly in CSR form
    index = np.asarray(index, dtype=np.int64)
    m = len(index)
    return sp.csr_matrix((np.ones(m), index, np.arange(m + 1)), shape=(m, n)).T


def gather(x, index):
    """Rows ``x[index]``."""
    index = np.asarray(index, dtype=np.int64)
    n = x.shape[0]
    if len(index) and (index.min() < 0 or index.max() >= n):
        raise IndexError("gather index out of range")

    def backward(g):
        return (np.asarray(_scatter_matrix(index, n) @ g),)

    return _node(x.values[index], (x,), backward)


def segment_sum(x, segments, n_segments):
    """Row ``s`` of the output is the sum of rows ``i`` of ``x`` with ``segments[i] == s``."""
    segments = np.asarray(segments, dtype=np.int64)
    if len(segments) != x.shape[0]:
        raise ShapeError("segment ids must match the number of rows")
    out = np.asarray(_scatter_matrix(segments, n_segments) @ x.values).reshape(n_segments, x.shape[1])
    return _node(out, (x,), lambda g: (g[segments],))


def edge_sum(weights, rows, cols, x, n_rows):
    """``out[i] = sum of weights[e] * x[cols[e]]`` over edges ``e`` with ``rows[e] == i``.

    Equal to ``segment_sum(mul(gather(x, cols), weights), rows, n_rows)``
    without materializing the per-edge rows in the forward pass.
    """
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    if weights.shape != (len(rows), 1) or len(cols) != len(rows):
        raise ShapeError("edge_sum: one weight, row and column per edge")
    if len(cols) and (cols.min() < 0 or cols.max() >= x.shape[0] or rows.min() < 0 or rows.max() >= n_rows):
        raise IndexError("edge_sum index out of range")
    S = sp.csr_matrix((weights.values[:, 0], (rows, cols)), shape=(n_rows, x.shape[0]))
    xv = x.values

    def backward(g):
        if xv.shape[0] <= xv.shape[1]:
            # few distinct columns: score every (row, column) pair once
            gw = (g @ xv.T)[rows, cols][:, None]
        else:
            gw = np.einsum("ij,ij->i", g[rows], xv[cols])[:, None]
        return gw, np.asarray(S.T @ g)

    return _node(np.asarray(S @ xv), (weights, x), backward)


def segment_mean(x, segments, n_segments):
    """Segment average; empty segments give zero rows."""
    counts = np.bincount(np.asarray(segments, dtype=np.int64), minlength=n_segments).astype(np.float64)
    inv = np.divide(1.0, counts, out=np.zeros_like(counts), where=counts > 0)[:, None]
    return mul(segment_sum(x, segments, n_segments), Tensor(inv))


def glorot(fan_in, fan_out, rng: np.random.Generator, name=None) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=(fan_in, fan_out)), requires_grad=True, name=name)


def zeros(rows, cols, name=None) -> Tensor:
    return Tensor(np.zeros((rows, cols)), requires_grad=True, name=name)


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    first_moment: List[np.ndarray] = field(default_factory=list)
    second_moment: List[np.ndarray] = field(default_factory=list)


class Adam:
    """Adam with bias correction; ``step`` zeroes gradients afterwards."""

    def __init__(self, params: Iterable[Tensor], learning_rate=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.params = list(params)
        self.state = AdamState(learning_rate, beta1, beta2, epsilon, 0,
                               [np.zeros_like(p.values) for p in self.params],
                               [np.zeros_like(p.values) for p in self.params])

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        st = self.state
        st.step += 1
        b1, b2 = st.beta1, st.beta2
        c1, c2 = 1.0 - b1 ** st.step, 1.0 - b2 ** st.step
        for p, m, v in zip(self.params, st.first_moment, st.second_moment):
            g = p.grad if p.grad is not None else np.zeros_like(p.values)
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.values -= st.learning_rate * (m / c1) / (np.sqrt(v / c2) + st.epsilon)
        _check_finite_params(self.params)
        self.zero_grad()


def _check_finite_params(params):
    for p in params:
        _check_finite(p.values, p.name or "parameter")


def numeric_gradient(f: Callable[[], float], param: Tensor, h=1e-5) -> np.ndarray:
    """Central finite differences of the scalar ``f()`` w.r.t. ``param.values``."""
    grad = np.zeros_like(param.values)
    it = np.nditer(param.values, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = param.values[idx]
        param.values[idx] = old + h
        fp = f()
        param.values[idx] = old - h
        fm = f()
        param.values[idx] = old
        grad[idx] = (fp - fm) / (2 * h)
    return grad


def relative_error(a, b, floor=1e-8) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))
