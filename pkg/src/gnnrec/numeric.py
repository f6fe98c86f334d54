"""Minimal reverse-mode tape over float64 numpy arrays.

Every differentiable quantity is a :class:`Node` holding a value and, after
a backward pass, a gradient of the same shape.  Trainable leaves are
:class:`Parameter` objects whose gradients persist and accumulate additively
across backward passes until explicitly zeroed.  Ops build the tape as a DAG
of nodes; :func:`backward` replays it in reverse topological order.

The op set is exactly what the recommender needs: dense affine maps, the
usual activations, softmax, concatenation, and a family of batched "segment"
ops (softmax / weighted sum / elementwise max within contiguous groups of
rows) that let a whole propagation layer run as a handful of large numpy
calls instead of a Python loop per node.

All values are float64.  Forward ops are pure; gradient accumulation into a
Parameter is single-writer.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .errors import DataError, DimensionError, DivergedError, SnapshotError

Array = np.ndarray


class Node:
    """One tape entry: a value, its gradient slot, and a backward rule."""

    __slots__ = ("value", "grad", "_parents", "_backward")

    def __init__(self, value: Array, parents: tuple = ()):
        self.value = value
        self.grad: Array | None = None
        self._parents = parents
        self._backward: Callable[[Array], None] | None = None

    @property
    def shape(self) -> tuple:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Node(shape={self.value.shape})"


class Parameter(Node):
    """A named trainable leaf; grad is pre-allocated and zeroed."""

    __slots__ = ("name",)

    def __init__(self, value: Array, name: str):
        value = np.asarray(value, dtype=np.float64)
        super().__init__(value)
        self.grad = np.zeros_like(value)
        self.name = name

    def zero_grad(self) -> None:
        self.grad.fill(0.0)

    def __repr__(self) -> str:
        return f"Parameter({self.name}, shape={self.value.shape})"


def as_node(x) -> Node:
    """Wrap a raw array/scalar as a constant leaf; pass Nodes through."""
    if isinstance(x, Node):
        return x
    return Node(np.asarray(x, dtype=np.float64))


def _accum(node: Node, g: Array) -> None:
    # first touch copies (callers may reuse g's buffer); later touches add
    if node.grad is None:
        node.grad = np.array(g, dtype=np.float64)
        if node.grad.shape != node.value.shape:
            node.grad = np.broadcast_to(g, node.value.shape).astype(np.float64)
    else:
        node.grad += g


def backward(root: Node) -> None:
    """Accumulate d(root)/d(leaf) into every reachable node's grad."""
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
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
            if id(p) not in seen:
                stack.append((p, False))
    _accum(root, np.ones_like(root.value))
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# elementwise / dense ops
# ---------------------------------------------------------------------------


def add(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    if a.value.shape != b.value.shape:
        raise DimensionError(f"add: shapes {a.value.shape} vs {b.value.shape}")
    out = Node(a.value + b.value, (a, b))

    def bw(g):
        _accum(a, g)
        _accum(b, g)

    out._backward = bw
    return out


def scale(x, c: float) -> Node:
    x = as_node(x)
    out = Node(x.value * c, (x,))
    out._backward = lambda g: _accum(x, g * c)
    return out


def one_minus(x) -> Node:
    x = as_node(x)
    out = Node(1.0 - x.value, (x,))
    out._backward = lambda g: _accum(x, -g)
    return out


def affine(w, x, b) -> Node:
    """w @ x + b for a 1-D x, or x @ w.T + b row-wise for a 2-D x."""
    w, x, b = as_node(w), as_node(x), as_node(b)
    if w.value.ndim != 2 or b.value.ndim != 1:
        raise DimensionError("affine: w must be 2-D and b 1-D")
    d_out, d_in = w.value.shape
    if b.value.shape[0] != d_out or x.value.shape[-1] != d_in:
        raise DimensionError(
            f"affine: w {w.value.shape}, x {x.value.shape}, b {b.value.shape}"
        )
    if x.value.ndim == 1:
        out = Node(w.value @ x.value + b.value, (w, x, b))

        def bw(g):
            _accum(w, np.outer(g, x.value))
            _accum(x, w.value.T @ g)
            _accum(b, g)

    elif x.value.ndim == 2:
        out = Node(x.value @ w.value.T + b.value, (w, x, b))

        def bw(g):
            _accum(w, g.T @ x.value)
            _accum(x, g @ w.value)
            _accum(b, g.sum(axis=0))

    else:
        raise DimensionError("affine: x must be 1-D or 2-D")
    out._backward = bw
    return out


def relu(x) -> Node:
    x = as_node(x)
    out = Node(np.maximum(x.value, 0.0), (x,))
    out._backward = lambda g: _accum(x, g * (x.value > 0.0))
    return out


def leaky_relu(x, slope: float = 0.01) -> Node:
    x = as_node(x)
    out = Node(np.where(x.value > 0.0, x.value, slope * x.value), (x,))
    out._backward = lambda g: _accum(x, g * np.where(x.value > 0.0, 1.0, slope))
    return out


def sigmoid(x) -> Node:
    """Overflow-safe logistic function, elementwise."""
    x = as_node(x)
    s = expit(x.value)
    out = Node(np.asarray(s), (x,))
    out._backward = lambda g: _accum(x, g * s * (1.0 - s))
    return out


def softmax(x) -> Node:
    """Max-subtracted stable softmax of a non-empty 1-D vector."""
    x = as_node(x)
    if x.value.ndim != 1:
        raise DimensionError("softmax: expected a 1-D vector")
    if x.value.size == 0:
        raise DataError("softmax of an empty vector is undefined")
    e = np.exp(x.value - x.value.max())
    s = e / e.sum()
    out = Node(s, (x,))

    def bw(g):
        _accum(x, s * (g - np.dot(g, s)))

    out._backward = bw
    return out


def concat(a, b) -> Node:
    """Join two vectors end to end (or two row batches side by side)."""
    a, b = as_node(a), as_node(b)
    if a.value.ndim != b.value.ndim or a.value.ndim not in (1, 2):
        raise DimensionError("concat: operands must both be 1-D or both 2-D")
    axis = a.value.ndim - 1
    if axis == 1 and a.value.shape[0] != b.value.shape[0]:
        raise DimensionError("concat: row counts differ")
    na = a.value.shape[axis]
    out = Node(np.concatenate([a.value, b.value], axis=axis), (a, b))

    def bw(g):
        if axis == 0:
            _accum(a, g[:na])
            _accum(b, g[na:])
        else:
            _accum(a, g[:, :na])
            _accum(b, g[:, na:])

    out._backward = bw
    return out


def dot(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    if a.value.shape != b.value.shape or a.value.ndim != 1:
        raise DimensionError("dot: expected two equal-length vectors")
    out = Node(np.asarray(np.dot(a.value, b.value)), (a, b))

    def bw(g):
        _accum(a, g * b.value)
        _accum(b, g * a.value)

    out._backward = bw
    return out


def stack(scalars: Sequence[Node]) -> Node:
    """Collect scalar nodes into one 1-D vector node."""
    nodes = [as_node(s) for s in scalars]
    if not nodes:
        raise DataError("stack of zero scalars")
    out = Node(np.array([float(n.value) for n in nodes]), tuple(nodes))

    def bw(g):
        for i, n in enumerate(nodes):
            _accum(n, g[i])

    out._backward = bw
    return out


def weighted_sum(xs: Sequence[Node], w) -> Node:
    """sum_i w[i] * xs[i] for equal-length vectors xs.

    Weights may be a Node (gradients flow into them) or a plain array
    (treated as constants).
    """
    nodes = [as_node(x) for x in xs]
    if not nodes:
        raise DataError("weighted_sum of zero vectors")
    w_node = w if isinstance(w, Node) else None
    wv = w.value if w_node is not None else np.asarray(w, dtype=np.float64)
    if wv.shape != (len(nodes),):
        raise DimensionError(f"weighted_sum: {len(nodes)} vectors, weights {wv.shape}")
    acc = wv[0] * nodes[0].value
    for i in range(1, len(nodes)):
        acc = acc + wv[i] * nodes[i].value
    parents = tuple(nodes) + ((w_node,) if w_node is not None else ())
    out = Node(acc, parents)

    def bw(g):
        for i, n in enumerate(nodes):
            _accum(n, wv[i] * g)
        if w_node is not None:
            _accum(w_node, np.array([np.dot(n.value, g) for n in nodes]))

    out._backward = bw
    return out


def max_elements(xs: Sequence[Node]) -> Node:
    """Elementwise max over equal-length vectors; grad goes to the first argmax."""
    nodes = [as_node(x) for x in xs]
    if not nodes:
        raise DataError("max_elements of zero vectors")
    stacked = np.stack([n.value for n in nodes])
    am = np.argmax(stacked, axis=0)
    out = Node(stacked[am, np.arange(stacked.shape[1])], tuple(nodes))

    def bw(g):
        for i, n in enumerate(nodes):
            _accum(n, g * (am == i))

    out._backward = bw
    return out


def log(x) -> Node:
    x = as_node(x)
    out = Node(np.log(x.value), (x,))
    out._backward = lambda g: _accum(x, g / x.value)
    return out


def clip(x, lo: float, hi: float) -> Node:
    """Clamp values into [lo, hi]; gradient passes only through unclamped entries."""
    x = as_node(x)
    inside = (x.value > lo) & (x.value < hi)
    out = Node(np.clip(x.value, lo, hi), (x,))
    out._backward = lambda g: _accum(x, g * inside)
    return out


def total(x) -> Node:
    """Sum of all elements, as a scalar node."""
    x = as_node(x)
    out = Node(np.asarray(x.value.sum()), (x,))
    out._backward = lambda g: _accum(x, np.broadcast_to(g, x.value.shape).copy())
    return out


def l2sq(x) -> Node:
    """Squared L2 norm of all elements, as a scalar node."""
    x = as_node(x)
    out = Node(np.asarray((x.value * x.value).sum()), (x,))
    out._backward = lambda g: _accum(x, 2.0 * g * x.value)
    return out


# ---------------------------------------------------------------------------
# row-batched ops
# ---------------------------------------------------------------------------


def row(p, i: int) -> Node:
    """Single row of a 2-D node; gradient lands on that row only."""
    p = as_node(p)
    if p.value.ndim != 2:
        raise DimensionError("row: expected a 2-D node")
    if not 0 <= i < p.value.shape[0]:
        raise IndexError(f"row {i} out of range [0, {p.value.shape[0]})")
    out = Node(p.value[i].copy(), (p,))

    def bw(g):
        if p.grad is None:
            p.grad = np.zeros_like(p.value)
        p.grad[i] += g

    out._backward = bw
    return out


def gather_rows(p, idx) -> Node:
    """Rows p[idx] as an (m, d) node; backward scatter-adds into p."""
    p = as_node(p)
    idx = np.asarray(idx, dtype=np.intp)
    out = Node(p.value[idx], (p,))

    def bw(g):
        if p.grad is None:
            p.grad = np.zeros_like(p.value)
        np.add.at(p.grad, idx, g)

    out._backward = bw
    return out


def rows_dot(x, y) -> Node:
    """Per-row dot product of two (m, d) nodes, giving an (m,) node."""
    x, y = as_node(x), as_node(y)
    if x.value.shape != y.value.shape or x.value.ndim != 2:
        raise DimensionError("rows_dot: expected two equal-shape 2-D nodes")
    out = Node(np.einsum("ij,ij->i", x.value, y.value), (x, y))

    def bw(g):
        _accum(x, g[:, None] * y.value)
        _accum(y, g[:, None] * x.value)

    out._backward = bw
    return out


def matvec(x, w) -> Node:
    """x @ w for a 2-D x and 1-D w, giving an (m,) node."""
    x, w = as_node(x), as_node(w)
    if x.value.ndim != 2 or w.value.ndim != 1 or x.value.shape[1] != w.value.shape[0]:
        raise DimensionError(f"matvec: x {x.value.shape}, w {w.value.shape}")
    out = Node(x.value @ w.value, (x, w))

    def bw(g):
        _accum(x, np.outer(g, w.value))
        _accum(w, x.value.T @ g)

    out._backward = bw
    return out


def add_scalar(x, s) -> Node:
    """Broadcast-add a scalar node onto a node of any shape."""
    x, s = as_node(x), as_node(s)
    if s.value.ndim != 0:
        raise DimensionError("add_scalar: s must be 0-D")
    out = Node(x.value + s.value, (x, s))

    def bw(g):
        _accum(x, g)
        _accum(s, np.asarray(g.sum()))

    out._backward = bw
    return out


def mask_rows(x, mask) -> Node:
    """Zero out rows of a 2-D node where the constant mask is falsy."""
    x = as_node(x)
    m = np.asarray(mask, dtype=np.float64)
    if x.value.ndim != 2 or m.shape != (x.value.shape[0],):
        raise DimensionError(f"mask_rows: x {x.value.shape}, mask {m.shape}")
    out = Node(x.value * m[:, None], (x,))
    out._backward = lambda g: _accum(x, g * m[:, None])
    return out


def _check_segments(seg_ids: Array, m: int, n_segments: int) -> Array:
    seg = np.asarray(seg_ids, dtype=np.intp)
    if seg.shape != (m,):
        raise DimensionError(f"segment ids {seg.shape} for {m} rows")
    if m and (seg.min() < 0 or seg.max() >= n_segments):
        raise DimensionError("segment id out of range")
    return seg


def segment_softmax(scores, seg_ids, n_segments: int) -> Node:
    """Softmax of an (m,) score node within each segment."""
    scores = as_node(scores)
    seg = _check_segments(seg_ids, scores.value.shape[0], n_segments)
    mx = np.full(n_segments, -np.inf)
    np.maximum.at(mx, seg, scores.value)
    e = np.exp(scores.value - mx[seg])
    sums = np.zeros(n_segments)
    np.add.at(sums, seg, e)
    s = e / sums[seg]
    out = Node(s, (scores,))

    def bw(g):
        sdot = np.zeros(n_segments)
        np.add.at(sdot, seg, s * g)
        _accum(scores, s * (g - sdot[seg]))

    out._backward = bw
    return out


def segment_weighted_rows(x, w, seg_ids, n_segments: int) -> Node:
    """out[s] = sum over rows i in segment s of w[i] * x[i].

    x is (m, d); w is an (m,) node or constant array; result is
    (n_segments, d) with zero rows for empty segments.
    """
    x = as_node(x)
    m, d = x.value.shape
    seg = _check_segments(seg_ids, m, n_segments)
    w_node = w if isinstance(w, Node) else None
    wv = w.value if w_node is not None else np.asarray(w, dtype=np.float64)
    if wv.shape != (m,):
        raise DimensionError(f"segment weights {wv.shape} for {m} rows")
    acc = np.zeros((n_segments, d))
    np.add.at(acc, seg, wv[:, None] * x.value)
    parents = (x,) + ((w_node,) if w_node is not None else ())
    out = Node(acc, parents)

    def bw(g):
        gseg = g[seg]
        _accum(x, wv[:, None] * gseg)
        if w_node is not None:
            _accum(w_node, np.einsum("ij,ij->i", x.value, gseg))

    out._backward = bw
    return out


def segment_max_rows(x, seg_ids, n_segments: int) -> Node:
    """Elementwise max of x's rows within each contiguous segment.

    Requires seg_ids sorted ascending.  Empty segments yield zero rows;
    gradient flows to the first row attaining each per-column max.
    """
    x = as_node(x)
    m, d = x.value.shape
    seg = _check_segments(seg_ids, m, n_segments)
    if m and np.any(np.diff(seg) < 0):
        raise DimensionError("segment_max_rows: seg_ids must be sorted")
    acc = np.full((n_segments, d), -np.inf)
    np.maximum.at(acc, seg, x.value)
    acc[np.isneginf(acc)] = 0.0
    starts = np.searchsorted(seg, np.arange(n_segments), side="left")
    ends = np.searchsorted(seg, np.arange(n_segments), side="right")
    out = Node(acc, (x,))

    def bw(g):
        gx = np.zeros_like(x.value)
        cols = np.arange(d)
        for s in range(n_segments):
            lo, hi = starts[s], ends[s]
            if lo == hi:
                continue
            am = np.argmax(x.value[lo:hi], axis=0)
            np.add.at(gx, (lo + am, cols), g[s])
        _accum(x, gx)

    out._backward = bw
    return out


# ---------------------------------------------------------------------------
# initialization, gradient checking, tensor snapshots
# ---------------------------------------------------------------------------


def xavier_uniform(shape: tuple, rng: np.random.Generator) -> Array:
    """Uniform(-b, b) with b = sqrt(6 / (fan_in + fan_out))."""
    if len(shape) == 2:
        fan_out, fan_in = shape
    elif len(shape) == 1:
        fan_out, fan_in = 1, shape[0]
    else:
        raise DimensionError(f"xavier_uniform: unsupported shape {shape}")
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def grad_check(
    f: Callable[[], Node], params: Sequence[Parameter], epsilon: float = 1e-5
) -> float:
    """Max relative error between analytic and central-difference gradients.

    f must rebuild its tape on every call and return a scalar node whose
    value depends on the current contents of params.
    """
    if not 1e-7 <= epsilon <= 1e-4:
        raise ValueError(f"epsilon {epsilon} outside [1e-7, 1e-4]")
    for p in params:
        p.zero_grad()
    out = f()
    if not np.isfinite(out.value):
        raise DivergedError("grad_check: function value is not finite")
    backward(out)
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.value.reshape(-1)
        aflat = a.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            f_plus = float(f().value)
            flat[i] = orig - epsilon
            f_minus = float(f().value)
            flat[i] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise DivergedError("grad_check: perturbed value is not finite")
            numeric = (f_plus - f_minus) / (2.0 * epsilon)
            denom = max(abs(aflat[i]), abs(numeric), 1e-8)
            worst = max(worst, abs(aflat[i] - numeric) / denom)
    return worst


_TENSOR_MAGIC = b"TENSORS v1\n"


def save_tensors(dest, tensors: dict[str, Array]) -> None:
    """Write named float64 tensors: text header, then raw little-endian data."""
    own = isinstance(dest, (str, bytes)) or hasattr(dest, "__fspath__")
    fh = open(dest, "wb") if own else dest
    try:
        fh.write(_TENSOR_MAGIC)
        fh.write(f"{len(tensors)}\n".encode())
        for name, arr in tensors.items():
            if " " in name or "\n" in name:
                raise SnapshotError(f"illegal tensor name {name!r}")
            arr = np.asarray(arr, dtype=np.float64)
            dims = " ".join(str(d) for d in arr.shape)
            fh.write(f"{name} {arr.ndim}{' ' + dims if dims else ''}\n".encode())
        for arr in tensors.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    finally:
        if own:
            fh.close()


def load_tensors(src) -> dict[str, Array]:
    own = isinstance(src, (str, bytes)) or hasattr(src, "__fspath__")
    fh = open(src, "rb") if own else src
    try:
        if fh.readline() != _TENSOR_MAGIC:
            raise SnapshotError("not a tensor snapshot (bad magic)")
        try:
            count = int(fh.readline())
        except ValueError as exc:
            raise SnapshotError("bad tensor count") from exc
        shapes: list[tuple[str, tuple[int, ...]]] = []
        for _ in range(count):
            parts = fh.readline().decode().split()
            if len(parts) < 2:
                raise SnapshotError("truncated tensor header")
            name, ndim = parts[0], int(parts[1])
            dims = tuple(int(d) for d in parts[2 : 2 + ndim])
            if len(dims) != ndim:
                raise SnapshotError(f"bad shape line for tensor {name!r}")
            shapes.append((name, dims))
        tensors: dict[str, Array] = {}
        for name, dims in shapes:
            n = int(np.prod(dims)) if dims else 1
            buf = fh.read(8 * n)
            if len(buf) != 8 * n:
                raise SnapshotError(f"truncated data for tensor {name!r}")
            tensors[name] = np.frombuffer(buf, dtype="<f8").reshape(dims).copy()
        return tensors
    finally:
        if own:
            fh.close()
