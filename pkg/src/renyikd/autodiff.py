"""A small eager reverse-mode autodiff engine over float64 numpy arrays.

Every op computes its value immediately and stores a closure that maps the
upstream gradient to one gradient per parent. :func:`backward` walks the
graph in reverse topological order from a scalar root.

Teacher-side tensors enter as leaves with ``requires_grad=False``; any node
whose parents are all non-differentiable is itself non-differentiable and is
skipped during the backward pass.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf

from .errors import ContractError, DegenerateInputError, NumericError, ShapeError
from .tensor import NORM_FLOOR

_ids = itertools.count()

LN_EPS = 1e-5


class Node:
    __slots__ = ("value", "op", "parents", "requires_grad", "_vjp", "_id", "name")

    def __init__(self, value, op="leaf", parents=(), vjp=None, requires_grad=False, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.op = op
        self.parents: tuple[Node, ...] = tuple(parents)
        self.requires_grad = bool(requires_grad)
        self._vjp = vjp
        self._id = next(_ids)
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def is_leaf(self):
        return not self.parents

    def item(self) -> float:
        return float(self.value)

    def __repr__(self):
        tag = self.name or self.op
        return f"Node({tag}, shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, scale(as_node(other), -1.0))

    def __rsub__(self, other):
        return add(as_node(other), scale(self, -1.0))

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul_elementwise(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)


def leaf(value, requires_grad=True, name=None) -> Node:
    value = np.array(value, dtype=np.float64)
    if not np.all(np.isfinite(value)):
        raise DegenerateInputError("leaf value contains non-finite entries")
    return Node(value, requires_grad=requires_grad, name=name)


def constant(value, name=None) -> Node:
    """A detached leaf: never receives a gradient."""
    return leaf(value, requires_grad=False, name=name)


def as_node(x) -> Node:
    return x if isinstance(x, Node) else constant(x)


def _record(op: str, value, parents: Sequence[Node], vjp: Callable) -> Node:
    rg = any(p.requires_grad for p in parents)
    return Node(value, op=op, parents=parents, vjp=vjp if rg else None, requires_grad=rg)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _swap(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2)


# ---------------------------------------------------------------- ops


def matmul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    if a.value.ndim < 2 or b.value.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2 operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    try:
        value = np.matmul(a.value, b.value)
    except ValueError as exc:
        raise ShapeError(str(exc)) from exc

    def vjp(g):
        ga = _unbroadcast(np.matmul(g, _swap(b.value)), a.shape)
        gb = _unbroadcast(np.matmul(_swap(a.value), g), b.shape)
        return ga, gb

    return _record("matmul", value, (a, b), vjp)


def transpose(a) -> Node:
    """Swap the last two axes."""
    a = as_node(a)
    if a.value.ndim < 2:
        raise ShapeError(f"transpose needs rank >= 2, got {a.shape}")
    return _record("transpose", _swap(a.value).copy(), (a,), lambda g: (_swap(g),))


def reshape(a, shape) -> Node:
    a = as_node(a)
    try:
        value = a.value.reshape(shape)
    except ValueError as exc:
        raise ShapeError(str(exc)) from exc
    return _record("reshape", value, (a,), lambda g: (g.reshape(a.shape),))


def add(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    try:
        value = a.value + b.value
    except ValueError as exc:
        raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}") from exc
    return _record("add", value, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def scale(a, c: float) -> Node:
    a = as_node(a)
    c = float(c)
    return _record("scale", a.value * c, (a,), lambda g: (g * c,))


def mul_elementwise(a, b) -> Node:
    """Broadcasting elementwise product."""
    a, b = as_node(a), as_node(b)
    try:
        value = a.value * b.value
    except ValueError as exc:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}") from exc

    def vjp(g):
        return _unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)

    return _record("mul_elementwise", value, (a, b), vjp)


def hadamard(*mats) -> Node:
    """Elementwise product of equally shaped matrices (no broadcasting)."""
    nodes = [as_node(m) for m in mats]
    if not nodes:
        raise ContractError("hadamard needs at least one operand")
    shape = nodes[0].shape
    for n in nodes[1:]:
        if n.shape != shape:
            raise ShapeError(f"hadamard operands differ in shape: {shape} vs {n.shape}")
    vals = [n.value for n in nodes]
    value = np.prod(np.stack(vals), axis=0)

    def vjp(g):
        out = []
        for i in range(len(vals)):
            rest = np.ones_like(g)
            for j, v in enumerate(vals):
                if j != i:
                    rest = rest * v
            out.append(g * rest)
        return tuple(out)

    return _record("hadamard", value, tuple(nodes), vjp)


def divide(a, b) -> Node:
    """Broadcasting elementwise quotient a / b."""
    a, b = as_node(a), as_node(b)
    if np.any(b.value == 0):
        raise NumericError("division by zero")
    value = a.value / b.value

    def vjp(g):
        return (
            _unbroadcast(g / b.value, a.shape),
            _unbroadcast(-g * a.value / b.value**2, b.shape),
        )

    return _record("divide", value, (a, b), vjp)


def divide_scalar(a, s) -> Node:
    """a / s where s is a scalar node."""
    a, s = as_node(a), as_node(s)
    if s.value.size != 1:
        raise ShapeError(f"divide_scalar needs a scalar divisor, got shape {s.shape}")
    sv = float(s.value)
    if sv == 0.0:
        raise NumericError("division by zero")
    value = a.value / sv

    def vjp(g):
        gs = -np.sum(g * a.value) / sv**2
        return g / sv, np.reshape(gs, s.shape)

    return _record("divide_scalar", value, (a, s), vjp)


def sum_(a, axis=None) -> Node:
    a = as_node(a)
    value = np.sum(a.value, axis=axis)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _record("sum", value, (a,), vjp)


def mean(a, axis=None) -> Node:
    a = as_node(a)
    count = a.value.size if axis is None else a.shape[axis]
    return scale(sum_(a, axis=axis), 1.0 / count)


def sigmoid(a) -> Node:
    a = as_node(a)
    x = a.value
    # split by sign so exp never overflows
    ex = np.exp(-np.abs(x))
    value = np.where(x >= 0, 1.0 / (1.0 + ex), ex / (1.0 + ex))
    return _record("sigmoid", value, (a,), lambda g: (g * value * (1.0 - value),))


def softplus(a) -> Node:
    """log(1 + exp(x)), overflow-safe."""
    a = as_node(a)
    x = a.value
    value = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    ex = np.exp(-np.abs(x))
    sig = np.where(x >= 0, 1.0 / (1.0 + ex), ex / (1.0 + ex))
    return _record("softplus", value, (a,), lambda g: (g * sig,))


def gelu(a) -> Node:
    """Exact (erf) GELU."""
    a = as_node(a)
    x = a.value
    cdf = 0.5 * (1.0 + erf(x / math.sqrt(2.0)))
    pdf = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return _record("gelu", x * cdf, (a,), lambda g: (g * (cdf + x * pdf),))


def layernorm(x, gain, bias, eps: float = LN_EPS) -> Node:
    """Normalise over the last axis: gain * (x - mean) / sqrt(var + eps) + bias, biased variance."""
    x, gain, bias = as_node(x), as_node(gain), as_node(bias)
    D = x.shape[-1]
    if gain.shape != (D,) or bias.shape != (D,):
        raise ShapeError(f"layernorm gain/bias must have shape ({D},), got {gain.shape}, {bias.shape}")
    mu = x.value.mean(axis=-1, keepdims=True)
    xc = x.value - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    value = gain.value * xhat + bias.value

    def vjp(g):
        gxhat = g * gain.value
        # three-term formula: (1/sigma) * (gxhat - mean(gxhat) - xhat * mean(gxhat * xhat))
        gx = inv * (
            gxhat
            - gxhat.mean(axis=-1, keepdims=True)
            - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True)
        )
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _record("layernorm", value, (x, gain, bias), vjp)


def l2norm_rows(a) -> Node:
    """Scale every row of a 2-D matrix to unit Euclidean norm."""
    a = as_node(a)
    if a.value.ndim != 2:
        raise ShapeError(f"l2norm_rows expects a 2-D matrix, got {a.shape}")
    norms = np.sqrt(np.einsum("ij,ij->i", a.value, a.value))[:, None]
    if np.any(norms <= NORM_FLOOR):
        raise DegenerateInputError("l2norm_rows: a row has (near) zero norm")
    y = a.value / norms

    def vjp(g):
        return ((g - y * np.sum(g * y, axis=1, keepdims=True)) / norms,)

    return _record("l2norm_rows", y, (a,), vjp)


def frobenius_sq(a) -> Node:
    a = as_node(a)
    return _record("frobenius_sq", np.sum(a.value * a.value), (a,), lambda g: (2.0 * g * a.value,))


def log2_scalar(a) -> Node:
    a = as_node(a)
    if a.value.size != 1:
        raise ShapeError(f"log2_scalar needs a scalar, got shape {a.shape}")
    v = float(a.value)
    if not v > 0.0:
        raise NumericError(f"log2 of non-positive value {v}")
    return _record("log2_scalar", np.log2(a.value), (a,), lambda g: (g / (a.value * math.log(2.0)),))


def trace_normalize(a) -> Node:
    """A / tr(A) for a square matrix."""
    a = as_node(a)
    if a.value.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"trace_normalize needs a square matrix, got {a.shape}")
    t = float(np.trace(a.value))
    if not t > 1e-300:
        raise DegenerateInputError(f"trace_normalize: non-positive trace {t}")
    value = a.value / t

    def vjp(g):
        return (g / t - np.sum(g * a.value) / t**2 * np.eye(a.shape[0]),)

    return _record("trace_normalize", value, (a,), vjp)


# ---------------------------------------------------------------- backward


def _toposort(root: Node) -> list[Node]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if node._id in seen:
            continue
        seen.add(node._id)
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and p._id not in seen:
                stack.append((p, False))
    return order


def backward(root: Node) -> dict[Node, np.ndarray]:
    """Gradients of scalar ``root`` w.r.t. every reachable leaf with ``requires_grad``.

    Returns a dict keyed by leaf node. Leaves that do not require grad are
    absent, as are leaves the root does not depend on.
    """
    if root.value.size != 1 or root.value.ndim > 1:
        raise ContractError(f"backward needs a scalar root, got shape {root.shape}")
    grads: dict[int, np.ndarray] = {}
    leaves: dict[Node, np.ndarray] = {}
    if not root.requires_grad:
        return leaves
    grads[root._id] = np.ones_like(root.value)
    for node in reversed(_toposort(root)):
        g = grads.pop(node._id, None)
        if g is None:
            continue
        if node.is_leaf:
            leaves[node] = np.asarray(g, dtype=np.float64).reshape(node.shape)
            continue
        for parent, pg in zip(node.parents, node._vjp(g)):
            if not parent.requires_grad:
                continue
            pg = np.asarray(pg, dtype=np.float64).reshape(parent.shape)
            if parent._id in grads:
                grads[parent._id] = grads[parent._id] + pg
            else:
                grads[parent._id] = pg
    return leaves


def grad_of(fn: Callable[..., Node], *arrays) -> tuple[float, list[np.ndarray]]:
    """Evaluate ``fn`` on fresh leaves built from ``arrays`` and return (value, grads)."""
    nodes = [leaf(a) for a in arrays]
    out = fn(*nodes)
    g = backward(out)
    return out.item(), [g.get(n, np.zeros_like(n.value)) for n in nodes]


def finite_diff_check(f: Callable[[np.ndarray], float], x, step: float = 1e-6, grad=None) -> float:
    """Max relative error between an analytic gradient and central differences.

    ``f`` maps a float64 array to a scalar. If ``grad`` is None, ``f`` is
    re-evaluated on a leaf node and differentiated with :func:`backward`,
    so ``f`` must then be written in terms of autodiff ops.
    """
    if step <= 0:
        raise ContractError("step must be positive")
    x = np.array(x, dtype=np.float64)
    if grad is None:
        node = leaf(x)
        out = as_node(f(node))
        grad = backward(out).get(node, np.zeros_like(x))
    analytic = np.asarray(grad, dtype=np.float64)

    def value(arr):
        v = f(arr)
        v = float(v.value) if isinstance(v, Node) else float(v)
        if not math.isfinite(v):
            raise NumericError("function returned a non-finite value during finite differencing")
        return v

    numeric = np.zeros_like(x)
    flat, nflat = x.reshape(-1), numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = value(x)
        flat[i] = orig - step
        fm = value(x)
        flat[i] = orig
        nflat[i] = (fp - fm) / (2.0 * step)
    return relative_error(analytic, numeric)


def relative_error(analytic, numeric) -> float:
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    if analytic.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))


def parameters(nodes: Iterable[Node]) -> list[Node]:
    return [n for n in nodes if n.requires_grad]
