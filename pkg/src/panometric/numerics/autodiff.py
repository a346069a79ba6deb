"""A small tape-based reverse-mode differentiation core over numpy arrays.

Every differentiable operation appends a node to the :class:`Tape` of its
inputs. :meth:`Tape.backward` walks the tape in reverse recording order, which
is a reverse topological order, and visits each node once.

    tape = Tape()
    w = tape.param(np.ones(3))
    loss = (w * w).sum()
    tape.backward(loss)
    w.grad  # array([2., 2., 2.])
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

LEAKY_SLOPE = 0.01


class Tape:
    def __init__(self):
        self.nodes: list[Var] = []

    def param(self, value) -> "Var":
        """A leaf that accumulates gradient."""
        return Var(np.array(value, dtype=float), tape=self, requires_grad=True)

    def const(self, value) -> "Var":
        return Var(np.asarray(value, dtype=float))

    def backward(self, out: "Var") -> None:
        if out.value.size != 1:
            raise ValueError("backward needs a scalar output")
        out.grad = np.ones_like(out.value)
        for node in reversed(self.nodes):
            if node._grad is None:
                continue
            grads = node.backward_fn(node._grad)
            for parent, g in zip(node.parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                g = _unbroadcast(g, parent.value.shape)
                if parent._grad is None:
                    parent._grad = np.array(g, dtype=float)
                else:
                    parent._grad = parent._grad + g
            # the graph is single-use; dropping it frees saved activations
            node.parents = ()
            node.backward_fn = None
        self.nodes.clear()

    def zero_grad(self) -> None:
        for node in self.nodes:
            node._grad = None


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


class Var:
    __slots__ = ("value", "tape", "requires_grad", "parents", "backward_fn", "_grad")
    # make ndarray operators defer to ours instead of building object arrays
    __array_ufunc__ = None

    def __init__(self, value, tape: Tape | None = None, requires_grad: bool = False,
                 parents: Sequence["Var"] = (), backward_fn: Callable | None = None):
        self.value = value
        self.tape = tape
        self.requires_grad = requires_grad
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self._grad = None

    @property
    def grad(self) -> np.ndarray:
        """Accumulated gradient; exact zeros when nothing reached this node."""
        if self._grad is None:
            return np.zeros_like(self.value)
        return self._grad

    @grad.setter
    def grad(self, g):
        self._grad = g

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(shape={self.value.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Var):
            raise TypeError("division by a Var is not supported")
        return mul(self, 1.0 / other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return vsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return reshape(self, shape)

    def __getitem__(self, index):
        return getitem(self, index)


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(np.asarray(x, dtype=float))


def _record(value, parents, backward_fn) -> Var:
    tape = next((p.tape for p in parents if p.tape is not None), None)
    needs = any(p.requires_grad for p in parents)
    out = Var(value, tape=tape, requires_grad=needs,
              parents=parents if needs else (), backward_fn=backward_fn if needs else None)
    if needs:
        tape.nodes.append(out)
    return out


def add(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    return _record(a.value + b.value, (a, b), lambda g: (g, g))


def sub(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    return _record(a.value - b.value, (a, b), lambda g: (g, -g))


def mul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    av, bv = a.value, b.value
    return _record(av * bv, (a, b), lambda g: (g * bv, g * av))


def square(a) -> Var:
    a = as_var(a)
    av = a.value
    return _record(av * av, (a,), lambda g: (2.0 * av * g,))


def matmul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    av, bv = a.value, b.value
    if av.ndim < 2 or bv.ndim < 2:
        raise ValueError("matmul operands must be at least 2-D")

    def back(g):
        return g @ np.swapaxes(bv, -1, -2), np.swapaxes(av, -1, -2) @ g

    return _record(av @ bv, (a, b), back)


def affine(x, W, b) -> Var:
    """``x @ W + b`` with the weight on the right."""
    return add(matmul(x, W), b)


def vsum(a, axis=None, keepdims=False) -> Var:
    a = as_var(a)
    shape = a.value.shape

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return _record(np.sum(a.value, axis=axis, keepdims=keepdims), (a,), back)


def mean(a, axis=None, keepdims=False) -> Var:
    a = as_var(a)
    if axis is None:
        count = a.value.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.value.shape[k] for k in axes]))
    return mul(vsum(a, axis, keepdims), 1.0 / count)


def reshape(a, shape) -> Var:
    a = as_var(a)
    old = a.value.shape
    return _record(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a, axes=None) -> Var:
    a = as_var(a)
    if axes is None:
        axes = tuple(reversed(range(a.value.ndim)))
    inverse = tuple(np.argsort(axes))
    return _record(np.transpose(a.value, axes), (a,), lambda g: (np.transpose(g, inverse),))


def getitem(a, index) -> Var:
    a = as_var(a)
    shape = a.value.shape

    def back(g):
        out = np.zeros(shape)
        np.add.at(out, index, g)
        return (out,)

    return _record(a.value[index], (a,), back)


def concat(parts: Sequence, axis: int = -1) -> Var:
    parts = [as_var(p) for p in parts]
    sizes = [p.value.shape[axis] for p in parts]
    cuts = np.cumsum(sizes)[:-1]
    return _record(np.concatenate([p.value for p in parts], axis=axis), tuple(parts),
                   lambda g: tuple(np.split(g, cuts, axis=axis)))


def leaky_relu(a, slope: float = LEAKY_SLOPE) -> Var:
    a = as_var(a)
    factor = np.where(a.value > 0, 1.0, slope)
    return _record(a.value * factor, (a,), lambda g: (g * factor,))


def l2_normalize(a, axis: int = -1, eps: float = 1e-12) -> Var:
    a = as_var(a)
    norm = np.sqrt(np.sum(a.value ** 2, axis=axis, keepdims=True))
    norm = np.maximum(norm, eps)
    y = a.value / norm

    def back(g):
        return ((g - y * np.sum(g * y, axis=axis, keepdims=True)) / norm,)

    return _record(y, (a,), back)


def dot(a, b, axis: int = -1) -> Var:
    return vsum(mul(a, b), axis=axis)


def stop_gradient(a) -> Var:
    """Pass the value through and block every gradient upstream of it."""
    a = as_var(a)
    return Var(a.value)


def grad_check(f: Callable[[Sequence[Var]], Var], params: Sequence[np.ndarray],
               eps: float = 1e-6) -> float:
    """Max relative error between tape gradients and central finite differences.

    ``f`` receives one :class:`Var` per entry of ``params`` and returns a
    scalar. The relative error of each parameter array is
    ``max|analytic - numeric| / max(max|analytic|, max|numeric|, 1e-10)``.
    """
    if not 1e-6 <= eps <= 1e-3:
        raise ValueError(f"eps must lie in [1e-6, 1e-3], got {eps}")
    params = [np.array(p, dtype=float) for p in params]
    tape = Tape()
    vars_ = [tape.param(p) for p in params]
    tape.backward(f(vars_))
    analytic = [v.grad for v in vars_]

    worst = 0.0
    for k, p in enumerate(params):
        numeric = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            shifted = [q.copy() for q in params]
            shifted[k][idx] = p[idx] + eps
            hi = float(f([Var(q) for q in shifted]).value)
            shifted[k][idx] = p[idx] - eps
            lo = float(f([Var(q) for q in shifted]).value)
            numeric[idx] = (hi - lo) / (2 * eps)
        if not (np.all(np.isfinite(analytic[k])) and np.all(np.isfinite(numeric))):
            raise FloatingPointError(f"non-finite gradient for parameter {k}")
        denom = max(np.max(np.abs(analytic[k]), initial=0.0),
                    np.max(np.abs(numeric), initial=0.0), 1e-10)
        worst = max(worst, float(np.max(np.abs(analytic[k] - numeric), initial=0.0) / denom))
    return worst
