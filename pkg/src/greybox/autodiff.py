"""Minimal reverse-mode automatic differentiation over dense float64 tensors.

A Tensor wraps a numpy array and remembers how it was produced; calling
``backward`` on a scalar root walks the recorded graph in reverse creation
order and accumulates gradients into every reachable tensor that requires
them. Ops cover exactly what the classifiers, the generator and the loss
terms need; everything is CPU, float64 and single-threaded.
"""

from __future__ import annotations

import hashlib
import itertools
from contextlib import contextmanager

import numpy as np

LOG_EPS = 1e-12          # floor for every log argument
UNIFORM_EPS = 1e-12      # clamp for uniforms feeding the double-log
NEG_INF = -1e30          # "masked out" logit value; exp underflows to exactly 0


class ShapeError(ValueError):
    """Raised when operand shapes do not conform."""


class Rng:
    """Seeded random stream. Identical seed => identical sample stream."""

    def __init__(self, seed):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def child(self, tag) -> "Rng":
        """Derive an independent, reproducible sub-stream keyed by `tag`."""
        digest = hashlib.sha256(f"{self.seed}/{tag}".encode()).digest()
        return Rng(int.from_bytes(digest[:8], "little"))

    def uniform(self, size=None, low=0.0, high=1.0):
        return self._gen.uniform(low, high, size)

    def normal(self, size=None, scale=1.0):
        return self._gen.normal(0.0, scale, size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n):
        return self._gen.permutation(n)

    def choice(self, seq):
        return seq[int(self._gen.integers(0, len(seq)))]


_ids = itertools.count()
_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (inference fast path)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_id")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad) and _grad_enabled
        self._parents = ()
        self._backward = None
        self._id = next(_ids)

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"

    # operator sugar; scalars are lifted to constant tensors
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __neg__(self):
        return mul(self, _lift(-1.0))

    def __getitem__(self, key):
        return slice_(self, key)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])


def _lift(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward):
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _accum(t: Tensor, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g, shape):
    """Sum `g` down to `shape` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def backward(root: Tensor):
    """Backpropagate from a scalar root; returns {leaf tensor: gradient}.

    Gradients sum across fan-out. Nodes are visited exactly once, in
    reverse creation order (a valid topological order since parents are
    always created before their children).
    """
    if root.data.size != 1:
        raise ShapeError(f"backward root must be scalar, got shape {root.data.shape}")
    nodes = []
    seen = set()
    stack = [root]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        nodes.append(node)
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append(p)
    nodes.sort(key=lambda t: t._id, reverse=True)
    root.grad = np.ones_like(root.data)
    for node in nodes:
        if node._backward is not None:
            node._backward()
    return {n: n.grad for n in nodes if n._backward is None and n.requires_grad}


# ---------------------------------------------------------------------------
# elementwise ops

def _check_broadcast(a, b, opname):
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise ShapeError(
            f"{opname}: shapes {a.data.shape} and {b.data.shape} do not broadcast"
        ) from None


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "add")
    out_data = a.data + b.data

    def back():
        _accum(a, _unbroadcast(out.grad, a.data.shape))
        _accum(b, _unbroadcast(out.grad, b.data.shape))

    out = _node(out_data, (a, b), back)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "sub")
    out_data = a.data - b.data

    def back():
        _accum(a, _unbroadcast(out.grad, a.data.shape))
        _accum(b, _unbroadcast(-out.grad, b.data.shape))

    out = _node(out_data, (a, b), back)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "multiply")
    out_data = a.data * b.data

    def back():
        _accum(a, _unbroadcast(out.grad * b.data, a.data.shape))
        _accum(b, _unbroadcast(out.grad * a.data, b.data.shape))

    out = _node(out_data, (a, b), back)
    return out


def div(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "divide")
    out_data = a.data / b.data

    def back():
        _accum(a, _unbroadcast(out.grad / b.data, a.data.shape))
        _accum(b, _unbroadcast(-out.grad * a.data / (b.data * b.data), b.data.shape))

    out = _node(out_data, (a, b), back)
    return out


def pow_(a: Tensor, p: float) -> Tensor:
    out_data = a.data ** p

    def back():
        _accum(a, out.grad * p * a.data ** (p - 1.0))

    out = _node(out_data, (a,), back)
    return out


def clamp_min(a: Tensor, m: float) -> Tensor:
    out_data = np.maximum(a.data, m)

    def back():
        _accum(a, out.grad * (a.data > m))

    out = _node(out_data, (a,), back)
    return out


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)

    def back():
        _accum(a, out.grad * (1.0 - out.data * out.data))

    out = _node(out_data, (a,), back)
    return out


def sigmoid(a: Tensor) -> Tensor:
    out_data = 1.0 / (1.0 + np.exp(-a.data))

    def back():
        _accum(a, out.grad * out.data * (1.0 - out.data))

    out = _node(out_data, (a,), back)
    return out


def relu(a: Tensor) -> Tensor:
    out_data = np.maximum(a.data, 0.0)

    def back():
        _accum(a, out.grad * (a.data > 0.0))

    out = _node(out_data, (a,), back)
    return out


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def back():
        _accum(a, out.grad * out.data)

    out = _node(out_data, (a,), back)
    return out


def log(a: Tensor) -> Tensor:
    """Natural log with arguments floored at LOG_EPS (flat gradient below)."""
    clamped = np.maximum(a.data, LOG_EPS)
    out_data = np.log(clamped)

    def back():
        _accum(a, out.grad / clamped * (a.data > LOG_EPS))

    out = _node(out_data, (a,), back)
    return out


# ---------------------------------------------------------------------------
# structural ops

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """a @ b where b is 2-D and a is 2-D or 3-D (contraction on a's last axis)."""
    if b.data.ndim != 2 or a.data.ndim < 2:
        raise ShapeError(f"matmul: unsupported ranks {a.data.shape} @ {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[0]:
        raise ShapeError(
            f"matmul: inner dimensions differ, {a.data.shape} @ {b.data.shape}"
        )
    out_data = a.data @ b.data

    def back():
        _accum(a, out.grad @ b.data.T)
        k = a.data.shape[-1]
        _accum(b, a.data.reshape(-1, k).T @ out.grad.reshape(-1, b.data.shape[1]))

    out = _node(out_data, (a, b), back)
    return out


def concat(tensors, axis=0) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def back():
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * out.grad.ndim
            idx[axis] = slice(lo, hi)
            _accum(t, out.grad[tuple(idx)])

    out = _node(out_data, tuple(tensors), back)
    return out


def slice_(a: Tensor, key) -> Tensor:
    out_data = a.data[key]

    def back():
        g = np.zeros_like(a.data)
        g[key] += out.grad
        _accum(a, g)

    out = _node(out_data, (a,), back)
    return out


def reshape(a: Tensor, shape) -> Tensor:
    out_data = a.data.reshape(shape)

    def back():
        _accum(a, out.grad.reshape(a.data.shape))

    out = _node(out_data, (a,), back)
    return out


def take_rows(matrix: Tensor, ids) -> Tensor:
    """Embedding lookup: gather rows of a (V, d) matrix by integer ids."""
    ids = np.asarray(ids)
    out_data = matrix.data[ids]

    def back():
        g = np.zeros_like(matrix.data)
        np.add.at(g, ids, out.grad)
        _accum(matrix, g)

    out = _node(out_data, (matrix,), back)
    return out


def unfold(a: Tensor, width: int) -> Tensor:
    """Sliding windows over axis 1: (B, T, d) -> (B, T-width+1, width*d)."""
    bsz, tlen, dim = a.data.shape
    if width > tlen:
        raise ShapeError(f"unfold: width {width} exceeds sequence length {tlen}")
    n = tlen - width + 1
    out_data = np.empty((bsz, n, width * dim))
    for i in range(width):
        out_data[:, :, i * dim:(i + 1) * dim] = a.data[:, i:i + n, :]

    def back():
        g = np.zeros_like(a.data)
        for i in range(width):
            g[:, i:i + n, :] += out.grad[:, :, i * dim:(i + 1) * dim]
        _accum(a, g)

    out = _node(out_data, (a,), back)
    return out


# ---------------------------------------------------------------------------
# reductions

def sum_(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def back():
        g = out.grad
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.data.shape).copy())

    out = _node(out_data, (a,), back)
    return out


def mean_(a: Tensor, axis=None, keepdims=False) -> Tensor:
    count = a.data.size if axis is None else a.data.shape[axis]
    return mul(sum_(a, axis=axis, keepdims=keepdims), _lift(1.0 / count))


def max_(a: Tensor, axis, keepdims=False) -> Tensor:
    out_data = a.data.max(axis=axis, keepdims=keepdims)

    def back():
        g = out.grad
        full = out_data
        if not keepdims:
            g = np.expand_dims(g, axis)
            full = np.expand_dims(out_data, axis)
        mask = (a.data == full)
        _accum(a, g * mask)

    out = _node(out_data, (a,), back)
    return out


# ---------------------------------------------------------------------------
# probability ops

def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis."""
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=-1, keepdims=True)

    def back():
        s = out.data
        inner = (out.grad * s).sum(axis=-1, keepdims=True)
        _accum(a, s * (out.grad - inner))

    out = _node(out_data, (a,), back)
    return out


def log_softmax(a: Tensor) -> Tensor:
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out_data = shifted - lse

    def back():
        s = np.exp(out.data)
        _accum(a, out.grad - s * out.grad.sum(axis=-1, keepdims=True))

    out = _node(out_data, (a,), back)
    return out


def masked_softmax(a: Tensor, valid) -> Tensor:
    """Softmax over the last axis restricted to `valid` positions.

    Invalid positions get weight exactly 0 and receive zero gradient.
    """
    valid = np.asarray(valid, dtype=bool)
    if valid.shape != a.data.shape:
        raise ShapeError(f"masked_softmax: mask {valid.shape} vs data {a.data.shape}")
    if not valid.any(axis=-1).all():
        raise ShapeError("masked_softmax: a row has no valid positions")
    neg = np.where(valid, a.data, -np.inf)
    shifted = neg - neg.max(axis=-1, keepdims=True)
    e = np.where(valid, np.exp(np.where(valid, shifted, 0.0)), 0.0)
    out_data = e / e.sum(axis=-1, keepdims=True)

    def back():
        s = out.data
        inner = (out.grad * s).sum(axis=-1, keepdims=True)
        _accum(a, s * (out.grad - inner))

    out = _node(out_data, (a,), back)
    return out


def cross_entropy(probs: Tensor, target) -> Tensor:
    """-sum(target * log probs) over the last axis; target is a distribution."""
    t = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=np.float64)
    if t.shape != probs.data.shape:
        raise ShapeError(f"cross_entropy: target {t.shape} vs probs {probs.data.shape}")
    if np.any(t < -1e-9) or np.any(np.abs(t.sum(axis=-1) - 1.0) > 1e-6):
        raise ValueError("cross_entropy: target rows must be probability distributions")
    return -sum_(mul(log(probs), _lift(t)), axis=-1)


def cosine(u: Tensor, v: Tensor) -> Tensor:
    """Cosine similarity of two 1-D vectors (0 when either norm vanishes)."""
    if u.data.ndim != 1 or v.data.ndim != 1 or u.data.shape != v.data.shape:
        raise ShapeError(f"cosine: need equal 1-D vectors, got {u.data.shape}, {v.data.shape}")
    return rowwise_cosine(reshape(u, (1, -1)), reshape(v, (1, -1)))[0]


def rowwise_cosine(a: Tensor, b: Tensor) -> Tensor:
    """Cosine similarity row-by-row for two (N, d) tensors -> (N,)."""
    dot = sum_(mul(a, b), axis=-1)
    na = pow_(clamp_min(sum_(mul(a, a), axis=-1), 1e-24), 0.5)
    nb = pow_(clamp_min(sum_(mul(b, b), axis=-1), 1e-24), 0.5)
    return div(div(dot, na), nb)


def gumbel_softmax(logits: Tensor, tau: float, rng: Rng) -> Tensor:
    """softmax((logits + g)/tau) with g = -log(-log(u)), u ~ U(0,1)."""
    if tau <= 0:
        raise ValueError(f"gumbel_softmax: tau must be positive, got {tau}")
    u = rng.uniform(size=logits.data.shape)
    u = np.clip(u, UNIFORM_EPS, 1.0 - UNIFORM_EPS)
    noise = -np.log(-np.log(u))
    return softmax(mul(add(logits, _lift(noise)), _lift(1.0 / tau)))


def one_hot(ids, depth: int):
    """Constant one-hot rows as a plain float64 array."""
    ids = np.asarray(ids)
    out = np.zeros(ids.shape + (depth,))
    np.put_along_axis(out, ids[..., None], 1.0, axis=-1)
    return out


# ---------------------------------------------------------------------------
# optimizer

class Adam:
    """Adam with the standard defaults; skips tensors that don't require grad."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = [p for p in params if p.requires_grad]
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self._m, self._v):
            if p.grad is None:
                continue
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad * p.grad
            p.data -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
