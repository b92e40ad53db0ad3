"""Minimal dense-tensor reverse-mode autodiff over float64 numpy arrays.

Every differentiable quantity lives in a Tensor node. Ops build an acyclic
graph; backward() walks it once in reverse topological order and adds this
pass's gradient into each node's persistent .grad accumulator, so calling
backward twice without zeroing yields exactly twice the gradient.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    pass


class DomainError(ValueError):
    pass


class Tensor:
    """A node in the computation graph.

    data and grad are float64 ndarrays of identical shape. vjp, when set,
    maps the incoming gradient to a tuple of gradients for `parents`.
    """

    __slots__ = ("data", "grad", "parents", "vjp")

    def __init__(self, data, parents=(), vjp=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = np.zeros_like(self.data)
        self.parents = tuple(parents)
        self.vjp = vjp

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, leaf={self.vjp is None})"

    # Operator sugar; full signatures live in the module-level functions.
    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return Tensor(out, (a, b), vjp)


def sub(a, b):
    return add(a, scale(as_tensor(b), -1.0))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}")

    def vjp(g):
        return (_unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape))

    return Tensor(out, (a, b), vjp)


def scale(a, c):
    a = as_tensor(a)
    c = float(c)

    def vjp(g):
        return (g * c,)

    return Tensor(a.data * c, (a,), vjp)


def matmul(a, b):
    """Matrix product for 1-D/2-D operands, mirroring numpy @ semantics."""
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    if ad.ndim not in (1, 2) or bd.ndim not in (1, 2):
        raise ShapeError(f"matmul: only 1-D/2-D supported, got {a.shape} @ {b.shape}")
    if ad.shape[-1] != (bd.shape[0] if bd.ndim > 1 else bd.shape[0]):
        raise ShapeError(f"matmul: inner dimensions disagree, {a.shape} @ {b.shape}")
    out = ad @ bd

    def vjp(g):
        if ad.ndim == 2 and bd.ndim == 2:
            return g @ bd.T, ad.T @ g
        if ad.ndim == 1 and bd.ndim == 2:
            return bd @ g, np.outer(ad, g)
        if ad.ndim == 2 and bd.ndim == 1:
            return np.outer(g, bd), ad.T @ g
        # 1-D @ 1-D -> scalar
        return g * bd, g * ad

    return Tensor(out, (a, b), vjp)


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)

    def vjp(g):
        return (g * (1.0 - out * out),)

    return Tensor(out, (a,), vjp)


def sigmoid(a):
    a = as_tensor(a)
    out = 1.0 / (1.0 + np.exp(-a.data))

    def vjp(g):
        return (g * out * (1.0 - out),)

    return Tensor(out, (a,), vjp)


def relu(a):
    a = as_tensor(a)
    out = np.maximum(a.data, 0.0)

    def vjp(g):
        return (g * (a.data > 0.0),)

    return Tensor(out, (a,), vjp)


def log(a):
    a = as_tensor(a)

    def vjp(g):
        return (g / a.data,)

    return Tensor(np.log(a.data), (a,), vjp)


def softmax(a, tau=1.0, axis=-1):
    """Temperature softmax along `axis`, stabilized by max subtraction."""
    a = as_tensor(a)
    if tau <= 0:
        raise DomainError(f"softmax temperature must be positive, got {tau}")
    if a.data.size == 0:
        raise DomainError("softmax over an empty tensor")
    z = a.data / tau
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot) / tau,)

    return Tensor(out, (a,), vjp)


def concat(a, b, axis=-1):
    """Concatenation along `axis` (last by default)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != b.data.ndim:
        raise ShapeError(f"concat: rank mismatch {a.shape} vs {b.shape}")
    ax = axis % max(a.data.ndim, 1) if a.data.ndim else 0
    for d in range(a.data.ndim):
        if d != ax and a.data.shape[d] != b.data.shape[d]:
            raise ShapeError(f"concat: shapes {a.shape} and {b.shape} differ off-axis")
    split = a.data.shape[ax] if a.data.ndim else 0
    out = np.concatenate([a.data, b.data], axis=ax)

    def vjp(g):
        return np.split(g, [split], axis=ax)

    return Tensor(out, (a, b), vjp)


def stack_rows(rows):
    """Stack a list of 1-D tensors of equal width into an n-by-d matrix."""
    if not rows:
        raise DomainError("stack_rows needs at least one row")
    rows = [as_tensor(r) for r in rows]
    width = rows[0].data.shape
    for r in rows:
        if r.data.shape != width:
            raise ShapeError("stack_rows: ragged row widths")
    out = np.stack([r.data for r in rows])

    def vjp(g):
        return tuple(g[i] for i in range(len(rows)))

    return Tensor(out, tuple(rows), vjp)


def slice_cols(a, lo, hi):
    a = as_tensor(a)
    out = a.data[..., lo:hi]

    def vjp(g):
        full = np.zeros_like(a.data)
        full[..., lo:hi] = g
        return (full,)

    return Tensor(out, (a,), vjp)


def row(a, i):
    """Select row i of a 2-D tensor as a 1-D tensor."""
    a = as_tensor(a)

    def vjp(g):
        full = np.zeros_like(a.data)
        full[i] = g
        return (full,)

    return Tensor(a.data[i], (a,), vjp)


def flip_rows(a):
    a = as_tensor(a)

    def vjp(g):
        return (g[::-1],)

    return Tensor(a.data[::-1].copy(), (a,), vjp)


def dropout(a, mask):
    """Elementwise product with an externally drawn mask (plain ndarray).

    The caller bakes the 1/keep_prob rescale into the mask, so an all-ones
    mask is the identity.
    """
    a = as_tensor(a)
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != a.data.shape:
        raise ShapeError(f"dropout: mask shape {mask.shape} != tensor {a.shape}")

    def vjp(g):
        return (g * mask,)

    return Tensor(a.data * mask, (a,), vjp)


def embedding_lookup(table, ids):
    """Gather rows `ids` from an embedding matrix; backward scatter-adds."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.intp)
    if ids.ndim != 1:
        raise ShapeError("embedding_lookup expects a flat id list")

    def vjp(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, g)
        return (full,)

    return Tensor(table.data[ids], (table,), vjp)


def gather(a, idx):
    """Pick element idx of a 1-D tensor as a scalar tensor."""
    a = as_tensor(a)
    idx = int(idx)

    def vjp(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return (full,)

    return Tensor(a.data[idx], (a,), vjp)


def tsum(a):
    a = as_tensor(a)

    def vjp(g):
        return (np.full_like(a.data, float(g)),)

    return Tensor(a.data.sum(), (a,), vjp)


def mean_rows(a):
    """Mean across rows of an n-by-d matrix, yielding a d-vector."""
    a = as_tensor(a)
    if a.data.ndim != 2 or a.data.shape[0] == 0:
        raise ShapeError(f"mean_rows expects a non-empty 2-D tensor, got {a.shape}")
    n = a.data.shape[0]

    def vjp(g):
        return (np.tile(g / n, (n, 1)),)

    return Tensor(a.data.mean(axis=0), (a,), vjp)


def weighted_sum_rows(weights, mat):
    """weightsᵀ·mat for a 1-D weight vector over the rows of mat."""
    return matmul(weights, mat)


def mean_scalars(scalars):
    """Mean of a list of scalar tensors."""
    if not scalars:
        raise DomainError("mean_scalars of an empty list")
    total = scalars[0]
    for s in scalars[1:]:
        total = add(total, s)
    return scale(total, 1.0 / len(scalars))


def _topo_order(root):
    """Iterative post-order DFS: parents before children in the result."""
    order, visited = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order


def backward(root):
    """Accumulate d(root)/d(node) into every reachable node's .grad.

    The per-pass gradient is kept separate from the persistent accumulator,
    so repeated calls add independent passes (twice => exactly 2x).
    """
    root = as_tensor(root)
    if root.data.size != 1:
        raise DomainError(f"backward root must be scalar, got shape {root.shape}")
    order = _topo_order(root)
    delta = {id(root): np.ones_like(root.data)}
    for node in reversed(order):
        g = delta.pop(id(node), None)
        if g is None:
            continue
        node.grad = node.grad + g
        if node.vjp is None:
            continue
        for parent, gp in zip(node.parents, node.vjp(g)):
            key = id(parent)
            if key in delta:
                delta[key] = delta[key] + gp
            else:
                delta[key] = gp


def graph_tensors(root):
    """All tensors reachable from root (graph inspection / zeroing)."""
    return _topo_order(as_tensor(root))
