"""Dense float64 tensors with reverse-mode differentiation.

A :class:`Tensor` is both a value and a node of the expression graph.  Every
operation below returns a new tensor; operands are never mutated (the
underlying arrays are flagged read-only).  Calling :func:`backward` on a
scalar output computes fresh gradients for every node that requires one, so
repeated calls on the same graph give identical, not accumulated, results.

Broadcasting is deliberately narrow.  The only implicit broadcast is the
bias form of ``add``/``sub``: the right operand may have the trailing shape of
the left operand (optionally with leading singleton axes), e.g. a ``1 x n``
row added to every row of an ``m x n`` tensor.  Everything else has to be
spelled out, typically with :func:`einsum`.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, EmptyInputError

__all__ = [
    "Tensor",
    "tensor",
    "as_tensor",
    "add",
    "sub",
    "mul",
    "scale",
    "sigmoid",
    "tanh",
    "relu",
    "matmul",
    "einsum",
    "softmax_rows",
    "concat",
    "mean_rows",
    "mean",
    "sum_all",
    "reshape",
    "transpose",
    "index_axis",
    "slice_axis",
    "backward",
    "finite_difference_grad",
    "max_relative_error",
]


def _frozen(array) -> np.ndarray:
    out = np.asarray(array, dtype=np.float64)
    if out.flags.writeable:
        out = out.view()
        out.flags.writeable = False
    return out


class Tensor:
    """Immutable float64 array that records how it was computed."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False, *, _parents=(), _vjp=None, op: str = "leaf"):
        self.data = _frozen(data)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.op = op
        self._parents: tuple[Tensor, ...] = _parents
        # maps output gradient -> tuple of parent gradients (None where not needed)
        self._vjp = _vjp

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return np.array(self.data)

    def item(self) -> float:
        if self.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(as_tensor(other, like=self), self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other, like=self), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(as_tensor(other), self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(data, requires_grad: bool = False) -> Tensor:
    """Build a leaf tensor from a copy of ``data``."""
    return Tensor(np.array(data, dtype=np.float64), requires_grad=requires_grad)


def as_tensor(value, like: Tensor | None = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    if isinstance(value, (int, float)) and like is not None:
        return Tensor(np.full(like.shape, float(value)))
    return Tensor(np.array(value, dtype=np.float64))


def _node(data: np.ndarray, parents: Sequence[Tensor], vjp: Callable, op: str) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, _parents=tuple(parents), _vjp=vjp, op=op)
    return Tensor(data, op=op)


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def _broadcast_axes(a_shape, b_shape) -> tuple[int, ...] | None:
    """Leading axes of ``a`` that a bias-shaped ``b`` repeats over, or None."""
    if a_shape == b_shape:
        return ()
    if len(b_shape) > len(a_shape):
        return None
    for k in range(len(b_shape), -1, -1):
        lead, tail = b_shape[:len(b_shape) - k], b_shape[len(b_shape) - k:]
        if all(s == 1 for s in lead) and tuple(tail) == tuple(a_shape[len(a_shape) - k:]):
            return tuple(range(len(a_shape) - k))
    return None


def _bias_operands(a: Tensor, b: Tensor, name: str) -> tuple[tuple[int, ...], np.ndarray]:
    axes = _broadcast_axes(a.shape, b.shape)
    if axes is None:
        raise DimensionError(f"{name}: shapes {a.shape} and {b.shape} do not agree")
    bd = b.data.reshape(a.shape[len(axes):]) if axes else b.data
    return axes, bd


def _reduce_to(g: np.ndarray, axes: tuple[int, ...], shape) -> np.ndarray:
    if axes:
        g = g.sum(axis=axes)
    return g.reshape(shape)


def add(a, b) -> Tensor:
    """Elementwise sum; ``b`` may be a bias row repeated over leading axes of ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    axes, bd = _bias_operands(a, b, "add")
    b_shape = b.shape
    return _node(a.data + bd, (a, b), lambda g: (g, _reduce_to(g, axes, b_shape)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    axes, bd = _bias_operands(a, b, "sub")
    b_shape = b.shape
    return _node(a.data - bd, (a, b), lambda g: (g, -_reduce_to(g, axes, b_shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"mul: shapes {a.shape} and {b.shape} do not agree")
    ad, bd = a.data, b.data
    return _node(ad * bd, (a, b), lambda g: (g * bd, g * ad), "mul")


def scale(a: Tensor, c: float) -> Tensor:
    return _node(a.data * c, (a,), lambda g: (g * c,), "scale")


def sigmoid(a: Tensor) -> Tensor:
    # tanh form never overflows
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _node(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _node(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _node(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


# ---------------------------------------------------------------------------
# products and reshaping
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    """Matrix product of two 2-D tensors."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} do not agree")
    ad, bd = a.data, b.data
    return _node(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g), "matmul")


def _parse_einsum(subscripts: str, n: int) -> tuple[list[str], str]:
    if "->" not in subscripts or "." in subscripts:
        raise ContractError(f"einsum: explicit output without ellipsis required, got {subscripts!r}")
    lhs, out = subscripts.replace(" ", "").split("->")
    ins = lhs.split(",")
    if len(ins) != n:
        raise ContractError(f"einsum: {len(ins)} subscripts for {n} operands")
    return ins, out


def _contract(spec: str, *arrays: np.ndarray) -> np.ndarray:
    """``np.einsum`` with two-operand contractions routed through batched matmul."""
    if len(arrays) != 2:
        return np.einsum(spec, *arrays, optimize=len(arrays) > 2)
    lhs, out = spec.split("->")
    sa, sb = lhs.split(",")
    a, b = arrays
    # indices private to one operand and absent from the output are summed first
    for sub_, other in ((sa, sb), (sb, sa)):
        private = [i for i, ch in enumerate(sub_) if ch not in other and ch not in out]
        if private:
            if sub_ is sa:
                a = a.sum(axis=tuple(private))
                sa = "".join(ch for ch in sa if ch in sb or ch in out)
            else:
                b = b.sum(axis=tuple(private))
                sb = "".join(ch for ch in sb if ch in sa or ch in out)
    batch = [ch for ch in out if ch in sa and ch in sb]
    left = [ch for ch in out if ch in sa and ch not in sb]
    right = [ch for ch in out if ch in sb and ch not in sa]
    summed = [ch for ch in sa if ch in sb and ch not in out]
    size = {ch: n for ch, n in zip(sa, a.shape)}
    size.update({ch: n for ch, n in zip(sb, b.shape)})

    def prod(chars):
        return math.prod(size[c] for c in chars)

    am = a.transpose([sa.index(c) for c in batch + left + summed]).reshape(
        prod(batch), prod(left), prod(summed))
    bm = b.transpose([sb.index(c) for c in batch + summed + right]).reshape(
        prod(batch), prod(summed), prod(right))
    res = np.matmul(am, bm).reshape([size[c] for c in batch + left + right])
    order = batch + left + right
    return res.transpose([order.index(c) for c in out])


def einsum(subscripts: str, *operands) -> Tensor:
    """Differentiable ``numpy.einsum`` with an explicit output.

    Every index of an operand must also appear in the output or in another
    operand (otherwise its gradient would need an implicit broadcast).
    """
    ops = [as_tensor(o) for o in operands]
    ins, out = _parse_einsum(subscripts, len(ops))
    sizes: dict[str, int] = {}
    for sub_, t in zip(ins, ops):
        if len(sub_) != t.ndim or len(set(sub_)) != len(sub_):
            raise DimensionError(f"einsum: subscript {sub_!r} does not fit shape {t.shape}")
        for ch, dim in zip(sub_, t.shape):
            if sizes.setdefault(ch, dim) != dim:
                raise DimensionError(
                    f"einsum {subscripts!r}: index {ch!r} has sizes {sizes[ch]} and {dim} "
                    f"(shapes {[o.shape for o in ops]})")
    for i, sub_ in enumerate(ins):
        others = set(out).union(*[set(s) for j, s in enumerate(ins) if j != i])
        if not set(sub_) <= others:
            raise ContractError(f"einsum: operand {i} sums over a private index in {subscripts!r}")
    datas = [o.data for o in ops]
    value = _contract(f"{','.join(ins)}->{out}", *datas)

    def vjp(g):
        grads = []
        for i, (sub_, t) in enumerate(zip(ins, ops)):
            if not t.requires_grad:
                grads.append(None)
                continue
            rest = [s for j, s in enumerate(ins) if j != i]
            spec = ",".join([out] + rest) + "->" + sub_
            grads.append(_contract(spec, g, *[d for j, d in enumerate(datas) if j != i]))
        return tuple(grads)

    return _node(value, ops, vjp, "einsum")


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"reshape: cannot view {old} as {tuple(shape)}") from exc
    return _node(out, (a,), lambda g: (g.reshape(old),), "reshape")


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    axes = tuple(range(a.ndim))[::-1] if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _node(a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),), "transpose")


def index_axis(a: Tensor, i: int, axis: int = 0) -> Tensor:
    """Slice ``a`` at position ``i`` of ``axis``, dropping that axis."""
    shape = a.shape
    ax = axis % a.ndim

    def vjp(g):
        full = np.zeros(shape)
        idx = [slice(None)] * len(shape)
        idx[ax] = i
        full[tuple(idx)] = g
        return (full,)

    return _node(np.take(a.data, i, axis=ax), (a,), vjp, "index_axis")


def slice_axis(a: Tensor, start: int, stop: int, axis: int = -1) -> Tensor:
    """Contiguous slice ``start:stop`` along ``axis``."""
    shape = a.shape
    ax = axis % a.ndim
    idx = [slice(None)] * len(shape)
    idx[ax] = slice(start, stop)
    idx = tuple(idx)

    def vjp(g):
        full = np.zeros(shape)
        full[idx] = g
        return (full,)

    return _node(a.data[idx], (a,), vjp, "slice_axis")


def concat(tensors: Iterable, axis: int = 0) -> Tensor:
    """Join tensors along ``axis``; empty (size 0) operands are allowed."""
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise EmptyInputError("concat: nothing to concatenate")
    ref = ts[0]
    ax = axis % ref.ndim if ref.ndim else 0
    for t in ts[1:]:
        if t.ndim != ref.ndim or any(
                i != ax and s != r for i, (s, r) in enumerate(zip(t.shape, ref.shape))):
            raise DimensionError(
                f"concat along axis {axis}: shapes {[x.shape for x in ts]} do not agree")
    bounds = np.cumsum([t.shape[ax] for t in ts])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _node(np.concatenate([t.data for t in ts], axis=ax), ts, vjp, "concat")


# ---------------------------------------------------------------------------
# reductions and normalisation
# ---------------------------------------------------------------------------

def softmax_rows(a: Tensor) -> Tensor:
    """Softmax over the last axis, stabilised by subtracting the row maximum."""
    x = a.data
    z = np.exp(x - x.max(axis=-1, keepdims=True))
    out = z / z.sum(axis=-1, keepdims=True)

    def vjp(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _node(out, (a,), vjp, "softmax_rows")


def mean_rows(a: Tensor) -> Tensor:
    """Mean over the first axis of a 2-D tensor, keeping it as a ``1 x n`` row."""
    if a.ndim != 2:
        raise DimensionError(f"mean_rows expects a 2-D tensor, got shape {a.shape}")
    return mean(a, axis=0, keepdims=True)


def mean(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    m = a.shape[axis]
    if m == 0:
        raise EmptyInputError(f"mean over empty axis {axis} of shape {a.shape}")
    shape = a.shape

    def vjp(g):
        g = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g / m, shape),)

    return _node(a.data.mean(axis=axis, keepdims=keepdims), (a,), vjp, "mean")


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _node(np.array(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, shape),), "sum")


# ---------------------------------------------------------------------------
# differentiation
# ---------------------------------------------------------------------------

def _topological(output: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(output, False)]
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(output: Tensor) -> None:
    """Reverse-mode sweep from a scalar ``output``.

    Sets ``.grad`` on every node that requires a gradient.  Gradients are
    recomputed from scratch, so calling this twice yields the same values.
    """
    if output.size != 1:
        raise ContractError(f"backward needs a scalar output, got shape {output.shape}")
    if not output.requires_grad:
        return
    order = _topological(output)
    grads: dict[int, np.ndarray] = {id(output): np.ones(output.shape)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            g = np.zeros(node.shape)
        node.grad = np.array(g, dtype=np.float64).reshape(node.shape)
        if node._vjp is None:
            continue
        for parent, pg in zip(node._parents, node._vjp(node.grad)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = np.asarray(pg)


def finite_difference_grad(f: Callable[[np.ndarray], float], x, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x``."""
    if h <= 0:
        raise ContractError("finite_difference_grad: step h must be positive")
    base = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    grad = np.zeros_like(base)
    flat = base.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = float(f(base.copy()))
        flat[i] = orig - h
        down = float(f(base.copy()))
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max_i |a_i - n_i| / max(1, |a_i|, |n_i|)."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
    return float(np.max(np.abs(a - n) / denom))
