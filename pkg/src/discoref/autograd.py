"""Minimal reverse-mode autodiff over float64 numpy arrays.

A :class:`Tensor` wraps a value and, when any input requires gradients,
a closure that maps the output cotangent to input cotangents. Calling
:func:`backward` on a scalar walks the tape once, iteratively, and
accumulates ``grad`` on every gradient-requiring node it reaches.

Domain modules add fused operations with hand-written backward rules
through :func:`custom`; everything here keeps tapes small by dropping
parent links as soon as no parent requires gradients.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor", "param", "constant", "custom", "backward", "zero_grads",
    "add", "sub", "mul", "div", "neg", "matmul", "matvec", "vecmat", "dot",
    "transpose", "reshape", "rows", "row", "gather", "segment", "concat",
    "stack_rows", "tensor_sum", "tanh", "sigmoid", "relu", "exp", "log",
    "numeric_gradient", "relative_error",
]


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, value, requires_grad: bool = False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._vjp = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.value.shape}{flag})"

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

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def param(value) -> Tensor:
    return Tensor(value, requires_grad=True)


def constant(value) -> Tensor:
    return Tensor(value)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def custom(value, parents, vjp) -> Tensor:
    """Tape node with a hand-written backward rule.

    ``vjp(g)`` must return one cotangent per parent, aligned by
    position; entries for parents that do not require gradients are
    ignored and may be None.
    """
    out = Tensor(value)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


def _topo(root: Tensor) -> list[Tensor]:
    """Reverse-topological order, iterative to survive deep tapes."""
    ordered: list[Tensor] = []
    visited = {id(root)}
    stack = [(root, iter(root._parents))]
    while stack:
        node, parents = stack[-1]
        pushed = False
        for p in parents:
            if id(p) not in visited:
                visited.add(id(p))
                stack.append((p, iter(p._parents)))
                pushed = True
                break
        if not pushed:
            ordered.append(node)
            stack.pop()
    ordered.reverse()
    return ordered


def backward(root: Tensor) -> None:
    """Accumulate gradients of a scalar into every reachable node's ``grad``."""
    if root.value.shape != ():
        raise ValueError("backward expects a scalar tensor")
    if not root.requires_grad:
        return
    pending: dict[int, np.ndarray] = {id(root): np.ones(())}
    for node in _topo(root):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        node.grad = g if node.grad is None else node.grad + g
        if node._vjp is None:
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            held = pending.get(id(parent))
            pending[id(parent)] = pg if held is None else held + pg


def zero_grads(tensors) -> None:
    for t in tensors:
        t.grad = None


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    return custom(a.value + b.value, (a, b),
                  lambda g: (_unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape)))


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    return custom(a.value - b.value, (a, b),
                  lambda g: (_unbroadcast(g, a.value.shape), _unbroadcast(-g, b.value.shape)))


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    return custom(a.value * b.value, (a, b),
                  lambda g: (_unbroadcast(g * b.value, a.value.shape),
                             _unbroadcast(g * a.value, b.value.shape)))


def div(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    return custom(a.value / b.value, (a, b),
                  lambda g: (_unbroadcast(g / b.value, a.value.shape),
                             _unbroadcast(-g * a.value / (b.value * b.value), b.value.shape)))


def neg(a) -> Tensor:
    a = _wrap(a)
    return custom(-a.value, (a,), lambda g: (-g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return custom(a.value @ b.value, (a, b),
                  lambda g: (g @ b.value.T, a.value.T @ g))


def matvec(a: Tensor, x: Tensor) -> Tensor:
    return custom(a.value @ x.value, (a, x),
                  lambda g: (np.outer(g, x.value), a.value.T @ g))


def vecmat(x: Tensor, a: Tensor) -> Tensor:
    return custom(x.value @ a.value, (x, a),
                  lambda g: (a.value @ g, np.outer(x.value, g)))


def dot(x: Tensor, y: Tensor) -> Tensor:
    return custom(x.value @ y.value, (x, y),
                  lambda g: (g * y.value, g * x.value))


def transpose(a: Tensor) -> Tensor:
    return custom(a.value.T, (a,), lambda g: (g.T,))


def reshape(a: Tensor, shape) -> Tensor:
    return custom(a.value.reshape(shape), (a,), lambda g: (g.reshape(a.value.shape),))


def rows(a: Tensor, indices) -> Tensor:
    """Gather rows of a 2-D tensor; repeated indices accumulate on backward."""
    idx = np.asarray(indices, dtype=np.intp)

    def vjp(g):
        out = np.zeros_like(a.value)
        np.add.at(out, idx, g)
        return (out,)

    return custom(a.value[idx], (a,), vjp)


def row(a: Tensor, i: int) -> Tensor:
    def vjp(g):
        out = np.zeros_like(a.value)
        out[i] = g
        return (out,)

    return custom(a.value[i], (a,), vjp)


def gather(a: Tensor, indices) -> Tensor:
    """Gather elements of a 1-D tensor."""
    idx = np.asarray(indices, dtype=np.intp)

    def vjp(g):
        out = np.zeros_like(a.value)
        np.add.at(out, idx, g)
        return (out,)

    return custom(a.value[idx], (a,), vjp)


def segment(a: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous 1-D slice a[start:stop]."""

    def vjp(g):
        out = np.zeros_like(a.value)
        out[start:stop] = g
        return (out,)

    return custom(a.value[start:stop], (a,), vjp)


def concat(parts, axis: int = 0) -> Tensor:
    parts = [_wrap(p) for p in parts]
    sizes = [p.value.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        slicer = [slice(None)] * g.ndim
        outs = []
        for k in range(len(parts)):
            slicer[axis] = slice(offsets[k], offsets[k + 1])
            outs.append(g[tuple(slicer)])
        return outs

    return custom(np.concatenate([p.value for p in parts], axis=axis), parts, vjp)


def stack_rows(parts) -> Tensor:
    """Stack 1-D tensors into a 2-D tensor, one per row."""
    parts = list(parts)
    return custom(np.stack([p.value for p in parts], axis=0), parts,
                  lambda g: [g[k] for k in range(len(parts))])


def tensor_sum(a: Tensor, axis: int | None = None) -> Tensor:
    if axis is None:
        return custom(a.value.sum(), (a,), lambda g: (np.broadcast_to(g, a.value.shape).copy(),))

    def vjp(g):
        return (np.broadcast_to(np.expand_dims(g, axis), a.value.shape).copy(),)

    return custom(a.value.sum(axis=axis), (a,), vjp)


def tanh(a) -> Tensor:
    a = _wrap(a)
    v = np.tanh(a.value)
    return custom(v, (a,), lambda g: (g * (1.0 - v * v),))


def sigmoid(a) -> Tensor:
    a = _wrap(a)
    z = np.exp(-np.abs(a.value))
    v = np.where(a.value >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    return custom(v, (a,), lambda g: (g * v * (1.0 - v),))


def relu(a) -> Tensor:
    a = _wrap(a)
    return custom(np.maximum(a.value, 0.0), (a,), lambda g: (g * (a.value > 0),))


def exp(a) -> Tensor:
    a = _wrap(a)
    v = np.exp(a.value)
    return custom(v, (a,), lambda g: (g * v,))


def log(a) -> Tensor:
    a = _wrap(a)
    return custom(np.log(a.value), (a,), lambda g: (g / a.value,))


def numeric_gradient(f, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function at ``x`` (mutated in place, restored)."""
    g = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        where = it.multi_index
        saved = x[where]
        x[where] = saved + eps
        f_plus = f(x)
        x[where] = saved - eps
        f_minus = f(x)
        x[where] = saved
        g[where] = (f_plus - f_minus) / (2.0 * eps)
    return g


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(1.0, float(np.max(np.abs(a)) if a.size else 0.0), float(np.max(np.abs(b)) if b.size else 0.0))
    diff = float(np.max(np.abs(a - b))) if a.size else 0.0
    return diff / scale
