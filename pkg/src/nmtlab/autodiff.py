"""Reverse-mode automatic differentiation over dense float64 arrays.

A Tensor wraps a numpy array plus an optional gradient of the same shape.
Every primitive records one backward closure on the active Tape; graphs are
rebuilt per sentence because RNN unrolling depends on sentence length, so
recording must stay cheap (one closure, one list append).

Conventions:

* Everything is 64-bit: gradient checks against central finite differences
  are the backbone of the test suite and need the headroom.
* Gradients accumulate with ``+=``. Callers reset parameter grads between
  optimizer steps; parameters are shared across time steps, so several tape
  entries may feed the same grad buffer.
* Ops never mutate input arrays. Tensors can therefore be shared between
  decoding hypotheses, and model snapshots are plain dict copies.
* With no active Tape, ops run forward-only. Decoding and the
  finite-difference probes in the gradient checker rely on this.
"""

import numpy as np

from .errors import ContractError, ShapeError

_ACTIVE = None  # innermost recording Tape, or None


class Tensor:
    """Dense float64 array with an optional same-shape gradient slot."""

    __slots__ = ("data", "grad", "requires")

    def __init__(self, data, requires=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires = requires

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data)

    def reset_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires={self.requires})"


class Tape:
    """Ordered record of primitive applications, used as a context manager.

    Ops are appended in execution order, which is automatically a
    topological order of the forward graph.
    """

    __slots__ = ("ops", "_prev")

    def __init__(self):
        self.ops = []
        self._prev = None

    def __enter__(self):
        global _ACTIVE
        self._prev = _ACTIVE
        _ACTIVE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE
        _ACTIVE = self._prev
        self._prev = None
        return False

    def clear_grads(self):
        """Drop the gradient of every tensor produced on this tape."""
        for out, _ in self.ops:
            out.grad = None

    def __len__(self):
        return len(self.ops)


def constant(values):
    """Tensor that never receives a gradient (masks, position indices...)."""
    return Tensor(values, requires=False)


def parameter(values):
    """Tensor that accumulates gradients during backward."""
    return Tensor(values, requires=True)


def zeros(shape):
    return Tensor(np.zeros(shape), requires=False)


def _accum(t, g):
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _push(out, back):
    out.requires = True
    _ACTIVE.ops.append((out, back))


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b):
    """Matrix product; either operand may be 1-D (treated as a vector).

    Backward: a.grad += g @ b^T and b.grad += a^T @ g, specialized for the
    vector cases.
    """
    ad, bd = a.data, b.data
    if ad.ndim not in (1, 2) or bd.ndim not in (1, 2) or ad.shape[-1] != bd.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {ad.shape} x {bd.shape}")
    out = Tensor(np.asarray(ad @ bd))
    if _ACTIVE is not None and (a.requires or b.requires):
        def back(g, a=a, b=b, ad=ad, bd=bd):
            if a.requires:
                if ad.ndim == 2 and bd.ndim == 2:
                    _accum(a, g @ bd.T)
                elif ad.ndim == 2:            # (m,k) @ (k,) -> (m,)
                    _accum(a, np.outer(g, bd))
                elif bd.ndim == 2:            # (k,) @ (k,n) -> (n,)
                    _accum(a, bd @ g)
                else:                          # dot product -> scalar
                    _accum(a, g * bd)
            if b.requires:
                if ad.ndim == 2 and bd.ndim == 2:
                    _accum(b, ad.T @ g)
                elif ad.ndim == 2:
                    _accum(b, ad.T @ g)
                elif bd.ndim == 2:
                    _accum(b, np.outer(ad, g))
                else:
                    _accum(b, g * ad)
        _push(out, back)
    return out


def transpose(a):
    ad = a.data
    if ad.ndim != 2:
        raise ShapeError(f"transpose: need a matrix, got shape {ad.shape}")
    out = Tensor(ad.T.copy())
    if _ACTIVE is not None and a.requires:
        def back(g, a=a):
            _accum(a, g.T)
        _push(out, back)
    return out


# ---------------------------------------------------------------------------
# elementwise


def _check_same_shape(name, ad, bd):
    if ad.shape != bd.shape:
        raise ShapeError(f"{name}: shapes differ {ad.shape} vs {bd.shape}")


def add(a, b):
    _check_same_shape("add", a.data, b.data)
    out = Tensor(a.data + b.data)
    if _ACTIVE is not None and (a.requires or b.requires):
        def back(g, a=a, b=b):
            if a.requires:
                _accum(a, g)
            if b.requires:
                _accum(b, g)
        _push(out, back)
    return out


def sub(a, b):
    _check_same_shape("sub", a.data, b.data)
    out = Tensor(a.data - b.data)
    if _ACTIVE is not None and (a.requires or b.requires):
        def back(g, a=a, b=b):
            if a.requires:
                _accum(a, g)
            if b.requires:
                _accum(b, -g)
        _push(out, back)
    return out


def hadamard(a, b):
    """Pointwise product."""
    _check_same_shape("hadamard", a.data, b.data)
    out = Tensor(a.data * b.data)
    if _ACTIVE is not None and (a.requires or b.requires):
        def back(g, a=a, b=b, ad=a.data, bd=b.data):
            if a.requires:
                _accum(a, g * bd)
            if b.requires:
                _accum(b, g * ad)
        _push(out, back)
    return out


def scale(a, s):
    """Multiply by a python scalar."""
    s = float(s)
    out = Tensor(a.data * s)
    if _ACTIVE is not None and a.requires:
        def back(g, a=a, s=s):
            _accum(a, g * s)
        _push(out, back)
    return out


def affine(a, s, t):
    """Pointwise s*x + t for python scalars s, t."""
    s, t = float(s), float(t)
    out = Tensor(a.data * s + t)
    if _ACTIVE is not None and a.requires:
        def back(g, a=a, s=s):
            _accum(a, g * s)
        _push(out, back)
    return out


def neg(a):
    return scale(a, -1.0)


def add_rowvec(m, v):
    """Add a vector to every row of a matrix. Backward sums over rows."""
    md, vd = m.data, v.data
    if md.ndim != 2 or vd.ndim != 1 or md.shape[1] != vd.shape[0]:
        raise ShapeError(f"add_rowvec: shapes {md.shape} and {vd.shape}")
    out = Tensor(md + vd)
    if _ACTIVE is not None and (m.requires or v.requires):
        def back(g, m=m, v=v):
            if m.requires:
                _accum(m, g)
            if v.requires:
                _accum(v, g.sum(axis=0))
        _push(out, back)
    return out


def maximum(a, b):
    """Pointwise max; ties route the gradient to the first argument."""
    _check_same_shape("maximum", a.data, b.data)
    out = Tensor(np.maximum(a.data, b.data))
    if _ACTIVE is not None and (a.requires or b.requires):
        mask = a.data >= b.data
        def back(g, a=a, b=b, mask=mask):
            if a.requires:
                _accum(a, g * mask)
            if b.requires:
                _accum(b, g * ~mask)
        _push(out, back)
    return out


# ---------------------------------------------------------------------------
# nonlinearities


def sigmoid(x):
    """1/(1+e^-x), computed via tanh so both tails saturate cleanly."""
    y = 0.5 * (np.tanh(0.5 * x.data) + 1.0)
    out = Tensor(y)
    if _ACTIVE is not None and x.requires:
        def back(g, x=x, y=y):
            _accum(x, g * y * (1.0 - y))
        _push(out, back)
    return out


logistic = sigmoid


def tanh(x):
    y = np.tanh(x.data)
    out = Tensor(y)
    if _ACTIVE is not None and x.requires:
        def back(g, x=x, y=y):
            _accum(x, g * (1.0 - y * y))
        _push(out, back)
    return out


def exp(x):
    y = np.exp(x.data)
    out = Tensor(y)
    if _ACTIVE is not None and x.requires:
        def back(g, x=x, y=y):
            _accum(x, g * y)
        _push(out, back)
    return out


def log(x):
    """Natural log; domain is strictly positive entries."""
    out = Tensor(np.log(x.data))
    if _ACTIVE is not None and x.requires:
        def back(g, x=x, xd=x.data):
            _accum(x, g / xd)
        _push(out, back)
    return out


def clamp_min(x, floor):
    """max(x, floor); entries at or above the floor pass gradient through."""
    floor = float(floor)
    out = Tensor(np.maximum(x.data, floor))
    if _ACTIVE is not None and x.requires:
        mask = x.data >= floor
        def back(g, x=x, mask=mask):
            _accum(x, g * mask)
        _push(out, back)
    return out


def softmax_vec(e):
    """Probability vector exp(e_j)/sum_k exp(e_k), max-subtracted for
    stability; invariant under adding a constant to all entries."""
    ed = e.data
    if ed.ndim != 1 or ed.shape[0] < 1:
        raise ShapeError(f"softmax_vec: need a nonempty vector, got shape {ed.shape}")
    shifted = ed - ed.max()
    ex = np.exp(shifted)
    y = ex / ex.sum()
    out = Tensor(y)
    if _ACTIVE is not None and e.requires:
        def back(g, e=e, y=y):
            _accum(e, y * (g - np.dot(g, y)))
        _push(out, back)
    return out


def normalize_sum(x):
    """x / sum(x) for nonnegative x with positive sum (pre-softmaxed or
    otherwise nonnegative scores)."""
    xd = x.data
    s = xd.sum()
    if not s > 0.0:
        raise ContractError("normalize_sum: entries must sum to a positive value")
    y = xd / s
    out = Tensor(y)
    if _ACTIVE is not None and x.requires:
        def back(g, x=x, y=y, s=s):
            _accum(x, (g - np.dot(g, y)) / s)
        _push(out, back)
    return out


# ---------------------------------------------------------------------------
# shape ops


def concat(parts):
    """Join vectors end to end. Backward splits the gradient."""
    parts = list(parts)
    if not parts:
        raise ShapeError("concat: no parts")
    for p in parts:
        if p.data.ndim != 1:
            raise ShapeError(f"concat: only vectors supported, got shape {p.data.shape}")
    out = Tensor(np.concatenate([p.data for p in parts]))
    if _ACTIVE is not None and any(p.requires for p in parts):
        sizes = [p.data.shape[0] for p in parts]
        def back(g, parts=parts, sizes=sizes):
            o = 0
            for p, n in zip(parts, sizes):
                if p.requires:
                    _accum(p, g[o:o + n])
                o += n
        _push(out, back)
    return out


def stack_rows(parts):
    """Stack equal-length vectors into a matrix, one per row."""
    parts = list(parts)
    if not parts:
        raise ShapeError("stack_rows: no parts")
    n = parts[0].data.shape[0]
    for p in parts:
        if p.data.ndim != 1 or p.data.shape[0] != n:
            raise ShapeError(
                f"stack_rows: rows must be equal-length vectors, got {p.data.shape} vs ({n},)")
    out = Tensor(np.stack([p.data for p in parts]))
    if _ACTIVE is not None and any(p.requires for p in parts):
        def back(g, parts=parts):
            for i, p in enumerate(parts):
                if p.requires:
                    _accum(p, g[i])
        _push(out, back)
    return out


def take_row(m, i):
    """Row i of a matrix as a vector (embedding lookup)."""
    md = m.data
    if md.ndim != 2:
        raise ShapeError(f"take_row: need a matrix, got shape {md.shape}")
    i = int(i)
    out = Tensor(md[i].copy())
    if _ACTIVE is not None and m.requires:
        def back(g, m=m, i=i):
            if m.grad is None:
                m.grad = np.zeros_like(m.data)
            m.grad[i] += g
        _push(out, back)
    return out


def pick(x, i):
    """Entry i of a vector as a scalar tensor."""
    xd = x.data
    if xd.ndim != 1:
        raise ShapeError(f"pick: need a vector, got shape {xd.shape}")
    i = int(i)
    out = Tensor(np.asarray(xd[i]))
    if _ACTIVE is not None and x.requires:
        def back(g, x=x, i=i):
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            x.grad[i] += g
        _push(out, back)
    return out


def padded_window(x, center, width):
    """Zero-padded slice x[center-r : center+r+1] of an odd width 2r+1."""
    xd = x.data
    if xd.ndim != 1:
        raise ShapeError(f"padded_window: need a vector, got shape {xd.shape}")
    if width % 2 != 1 or width < 1:
        raise ContractError(f"padded_window: width must be odd and positive, got {width}")
    n = xd.shape[0]
    r = width // 2
    lo = center - r
    src_lo, src_hi = max(lo, 0), min(center + r + 1, n)
    buf = np.zeros(width)
    buf[src_lo - lo:src_hi - lo] = xd[src_lo:src_hi]
    out = Tensor(buf)
    if _ACTIVE is not None and x.requires:
        def back(g, x=x, lo=lo, src_lo=src_lo, src_hi=src_hi):
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            x.grad[src_lo:src_hi] += g[src_lo - lo:src_hi - lo]
        _push(out, back)
    return out


def scalar_expand(s, n):
    """Broadcast a scalar tensor to a length-n vector."""
    sd = s.data
    if sd.size != 1:
        raise ShapeError(f"scalar_expand: need a scalar, got shape {sd.shape}")
    out = Tensor(np.full(n, float(sd)))
    if _ACTIVE is not None and s.requires:
        def back(g, s=s):
            _accum(s, np.asarray(g.sum()))
        _push(out, back)
    return out


# ---------------------------------------------------------------------------
# reductions


def vsum(x):
    """Sum of all entries as a scalar tensor."""
    out = Tensor(np.asarray(x.data.sum()))
    if _ACTIVE is not None and x.requires:
        def back(g, x=x):
            _accum(x, g + np.zeros_like(x.data))
        _push(out, back)
    return out


def l2norm(x):
    """Euclidean norm; the gradient at the origin is defined as zero."""
    xd = x.data
    val = float(np.sqrt(np.dot(xd.ravel(), xd.ravel())))
    out = Tensor(np.asarray(val))
    if _ACTIVE is not None and x.requires:
        def back(g, x=x, xd=xd, val=val):
            denom = val if val > 1e-12 else 1.0
            _accum(x, (float(g) / denom) * xd)
        _push(out, back)
    return out


# ---------------------------------------------------------------------------
# reverse pass


def backward(loss, tape):
    """Fill grads of everything reachable from a scalar loss.

    Seeds loss.grad with 1 (accumulating, like every other grad) and walks
    the tape in reverse. Entries whose output never received a gradient are
    dead branches and are skipped.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward: loss must be scalar, got shape {loss.data.shape}")
    _accum(loss, np.ones_like(loss.data))
    for out, back in reversed(tape.ops):
        if out.grad is not None:
            back(out.grad)
