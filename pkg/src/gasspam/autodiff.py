"""Dense tensors with a define-by-run tape for reverse-mode differentiation.

Operations executed inside ``with Tape() as tape:`` are recorded when at least
one input requires a gradient; ``backward(tape, loss)`` then walks the tape in
reverse.  Outside a tape nothing is recorded, which makes inference over frozen
parameters reentrant.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import sparse


class ShapeError(ValueError):
    pass


class EmptyNeighborhoodError(ValueError):
    pass


class SequenceTooShortError(ValueError):
    pass


class TrainingAborted(RuntimeError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind not in "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(other, mul(self, -1.0))

    def __neg__(self):
        return mul(self, -1.0)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)


@dataclass
class TapeNode:
    out: Tensor
    parents: tuple
    backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class Tape:
    """Ordered record of operations; parents always precede their consumers."""

    nodes: list[TapeNode] = field(default_factory=list)

    def __enter__(self):
        _stack().append(self)
        return self

    def __exit__(self, *exc):
        _stack().pop()
        return False

    def record(self, out: Tensor, parents, backward_fn):
        self.nodes.append(TapeNode(out, tuple(parents), backward_fn))


_local = threading.local()


def _stack() -> list[Tape]:
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


def active_tape() -> Tape | None:
    stack = _stack()
    return stack[-1] if stack else None


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if dtype is None:
        arr = np.asarray(x)
        dtype = arr.dtype if arr.dtype.kind == "f" else np.float64
    return Tensor(np.asarray(x, dtype=dtype))


def _result(data: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
    needs = any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs)
    tape = active_tape()
    if needs and tape is not None:
        tape.record(out, parents, backward_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    return as_tensor(a), as_tensor(b)


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    sa, sb = a.shape, b.shape
    return _result(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    ad, bd = a.data, b.data
    return _result(
        ad * bd, (a, b), lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape))
    )


def relu(x: Tensor) -> Tensor:
    keep = x.data > 0
    return _result(np.where(keep, x.data, 0).astype(x.dtype), (x,), lambda g: (g * keep,))


def sigmoid(x: Tensor) -> Tensor:
    y = _stable_sigmoid(x.data)
    return _result(y, (x,), lambda g: (g * y * (1 - y),))


def _stable_sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def where_mask(mask: np.ndarray, x: Tensor) -> Tensor:
    """Zero every position where ``mask`` is False (broadcast over trailing axes).

    Uses selection rather than multiplication so NaN/inf garbage is discarded.
    """
    m = np.asarray(mask, dtype=bool)
    while m.ndim < x.ndim:
        m = m[..., None]
    zero = np.zeros((), dtype=x.dtype)
    return _result(np.where(m, x.data, zero), (x,), lambda g: (np.where(m, g, zero),))


# ---------------------------------------------------------------- reductions / shape


def sum_all(x: Tensor) -> Tensor:
    shape = x.shape
    return _result(np.asarray(x.data.sum(), dtype=x.dtype), (x,), lambda g: (np.broadcast_to(g, shape).copy(),))


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size
    shape = x.shape
    return _result(
        np.asarray(x.data.mean(), dtype=x.dtype), (x,), lambda g: (np.full(shape, g / n, dtype=x.dtype),)
    )


def dot(a: Tensor, b: Tensor) -> Tensor:
    """Inner product of two equal-shape tensors, returned as a scalar."""
    if a.shape != b.shape:
        raise ShapeError(f"dot: shapes {a.shape} and {b.shape} differ")
    ad, bd = a.data, b.data
    return _result(np.asarray((ad * bd).sum(), dtype=ad.dtype), (a, b), lambda g: (g * bd, g * ad))


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return _result(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    ax = axis % xs[0].ndim
    sizes = [x.shape[ax] for x in xs]
    bounds = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _result(np.concatenate([x.data for x in xs], axis=ax), xs, back)


def take_rows(x: Tensor, index) -> Tensor:
    """Gather rows of ``x`` (first axis) by an integer array of any shape."""
    idx = np.asarray(index, dtype=np.int64)
    shape = x.shape

    def back(g):
        return (scatter_rows(idx.reshape(-1), g.reshape((-1,) + shape[1:]), shape[0]),)

    return _result(x.data[idx], (x,), back)


def scatter_rows(idx: np.ndarray, rows: np.ndarray, n: int) -> np.ndarray:
    """Sum ``rows[k]`` into output row ``idx[k]`` (sequential, so deterministic)."""
    tail = rows.shape[1:]
    width = int(np.prod(tail, dtype=np.int64))
    if len(idx) == 0 or width == 0:
        return np.zeros((n,) + tail, dtype=rows.dtype)
    if np.bincount(idx, minlength=n).max() <= 1:
        out = np.zeros((n,) + tail, dtype=rows.dtype)
        out[idx] = rows
        return out
    onehot = sparse.csr_matrix(
        (np.ones(len(idx), dtype=rows.dtype), (idx, np.arange(len(idx)))), shape=(n, len(idx))
    )
    return np.asarray(onehot @ rows.reshape(len(idx), width)).reshape((n,) + tail)


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    """``x[start:stop]`` along the first axis."""
    shape = x.shape

    def back(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[start:stop] = g
        return (full,)

    return _result(x.data[start:stop], (x,), back)


# ---------------------------------------------------------------- linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a @ b`` where ``b`` is a matrix and ``a`` has any number of leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 2 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data

    def back(g):
        ga = g @ bd.T
        a2 = ad.reshape(-1, ad.shape[-1])
        gb = a2.T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return _result(ad @ bd, (a, b), back)


def batch_dot(q: Tensor, k: Tensor) -> Tensor:
    """Row-wise dot products: q (N, D), k (N, M, D) -> (N, M)."""
    if q.ndim != 2 or k.ndim != 3 or q.shape[0] != k.shape[0] or q.shape[1] != k.shape[2]:
        raise ShapeError(f"batch_dot: incompatible shapes {q.shape} and {k.shape}")
    qd, kd = q.data, k.data

    def back(g):
        return np.einsum("nm,nmd->nd", g, kd), g[:, :, None] * qd[:, None, :]

    return _result(np.einsum("nd,nmd->nm", qd, kd), (q, k), back)


def weighted_sum(w: Tensor, v: Tensor) -> Tensor:
    """w (N, M), v (N, M, D) -> (N, D) = sum_m w[n, m] v[n, m]."""
    if w.ndim != 2 or v.ndim != 3 or w.shape != v.shape[:2]:
        raise ShapeError(f"weighted_sum: incompatible shapes {w.shape} and {v.shape}")
    wd, vd = w.data, v.data

    def back(g):
        return np.einsum("nd,nmd->nm", g, vd), wd[:, :, None] * g[:, None, :]

    return _result(np.einsum("nm,nmd->nd", wd, vd), (w, v), back)


def masked_mean(x: Tensor, mask) -> Tensor:
    """Mean over axis 1 restricted to valid slots; rows without any slot give zeros."""
    m = np.asarray(mask, dtype=bool)
    counts = m.sum(axis=1)
    denom = np.maximum(counts, 1).astype(x.dtype)[:, None]
    zero = np.zeros((), dtype=x.dtype)
    sel = np.where(m[..., None], x.data, zero)
    out = sel.sum(axis=1) / denom

    def back(g):
        return (np.where(m[..., None], (g / denom)[:, None, :], zero),)

    return _result(out, (x,), back)


# ---------------------------------------------------------------- attention / pooling


def masked_softmax(scores, mask=None, allow_empty: bool = False) -> Tensor:
    """Softmax along the last axis ignoring masked-out positions.

    Masked positions get weight exactly 0.  A row with no valid position raises
    ``EmptyNeighborhoodError`` unless ``allow_empty``, in which case it is all zeros.
    """
    scores = as_tensor(scores)
    s = scores.data
    m = np.ones(s.shape, dtype=bool) if mask is None else np.broadcast_to(np.asarray(mask, dtype=bool), s.shape)
    any_valid = m.any(axis=-1, keepdims=True)
    if not allow_empty and not any_valid.all():
        raise EmptyNeighborhoodError("masked_softmax: every position is masked")
    neg = np.array(-np.inf, dtype=s.dtype)
    masked = np.where(m, s, neg)
    top = np.where(any_valid, masked.max(axis=-1, keepdims=True), 0)
    e = np.where(m, np.exp(np.where(m, s - top, 0)), 0).astype(s.dtype)
    z = e.sum(axis=-1, keepdims=True)
    w = e / np.where(z > 0, z, 1)

    def back(g):
        inner = (g * w).sum(axis=-1, keepdims=True)
        return (w * (g - inner),)

    return _result(w, (scores,), back)


def conv_maxpool(x: Tensor, filters: Tensor, bias: Tensor, n_valid=None) -> Tensor:
    """Batched valid 1-D convolution over positions, max over time, then ReLU.

    x: (B, T, d); filters: (w, d, f); bias: (f,).  ``n_valid[b]`` is the number of
    leading window positions that count for sequence ``b`` (defaults to all).
    ReLU commutes with the max, so it is applied after pooling.
    """
    B, T, d = x.shape
    w, d2, f = filters.shape
    if d2 != d:
        raise ShapeError(f"conv_maxpool: sequence dim {d} vs filter dim {d2}")
    if T < w:
        raise SequenceTooShortError(f"sequence length {T} shorter than filter width {w}")
    P = T - w + 1
    nv = np.full(B, P, dtype=np.int64) if n_valid is None else np.asarray(n_valid, dtype=np.int64)
    if np.any(nv < 1) or np.any(nv > P):
        raise ShapeError("conv_maxpool: n_valid must lie in [1, T - w + 1]")
    windows = np.lib.stride_tricks.sliding_window_view(x.data, w, axis=1)  # (B, P, d, w)
    cols = np.ascontiguousarray(windows.transpose(0, 1, 3, 2)).reshape(B * P, w * d)
    fmat = filters.data.reshape(w * d, f)
    act = (cols @ fmat).reshape(B, P, f)
    valid = np.arange(P)[None, :] < nv[:, None]
    act = np.where(valid[:, :, None], act, -np.inf)
    arg = act.argmax(axis=1)  # (B, f)
    pooled = np.take_along_axis(act, arg[:, None, :], axis=1)[:, 0, :] + bias.data
    keep = pooled > 0
    out = np.where(keep, pooled, 0).astype(x.dtype)

    def back(g):
        gp = g * keep  # (B, f)
        gb = gp.sum(axis=0)
        dense = np.zeros((B, P, f), dtype=g.dtype)
        np.put_along_axis(dense, arg[:, None, :], gp[:, None, :], axis=1)
        dense = dense.reshape(B * P, f)
        gf = (cols.T @ dense).reshape(w, d, f)
        gcols = (dense @ fmat.T).reshape(B, P, w, d)
        gx = np.zeros((B, T, d), dtype=g.dtype)
        for j in range(w):
            gx[:, j : j + P, :] += gcols[:, :, j, :]
        return gx, gf, gb

    return _result(out, (x, filters, bias), back)


def embed_conv_maxpool(table: Tensor, ids, filters: Tensor, bias: Tensor, n_valid=None, pad_id: int = 0) -> Tensor:
    """:func:`conv_maxpool` applied to ``table[ids]`` with the PAD row read as zero.

    Rows are processed in groups of equal ``n_valid`` so short sequences never
    pay for the longest one.  The backward pass only touches the argmax window
    of each (sequence, filter): gradients are accumulated per vocabulary row.
    """
    ids = np.asarray(ids, dtype=np.int64)
    B, T = ids.shape
    w, d, f = filters.shape
    if table.shape[1] != d:
        raise ShapeError(f"embed_conv_maxpool: table dim {table.shape[1]} vs filter dim {d}")
    if T < w:
        raise SequenceTooShortError(f"sequence length {T} shorter than filter width {w}")
    P = T - w + 1
    nv = np.full(B, P, dtype=np.int64) if n_valid is None else np.asarray(n_valid, dtype=np.int64)
    if np.any(nv < 1) or np.any(nv > P):
        raise ShapeError("embed_conv_maxpool: n_valid must lie in [1, T - w + 1]")
    tab = table.data
    fmat = filters.data.reshape(w * d, f)
    recording = active_tape() is not None and (table.requires_grad or filters.requires_grad or bias.requires_grad)
    best = np.empty((B, f), dtype=np.result_type(tab.dtype, fmat.dtype))
    arg = np.zeros((B, f), dtype=np.int64) if recording else None
    groups, inverse = np.unique(nv, return_inverse=True)
    for k, Pk in enumerate(groups):
        rows = np.flatnonzero(inverse == k)
        sub = ids[rows, : Pk + w - 1]
        x = tab[sub]
        x[sub == pad_id] = 0
        windows = np.lib.stride_tricks.sliding_window_view(x, w, axis=1)  # (b, Pk, d, w)
        cols = np.ascontiguousarray(windows.transpose(0, 1, 3, 2)).reshape(len(rows) * Pk, w * d)
        act = (cols @ fmat).reshape(len(rows), Pk, f)
        top = act.max(axis=1)
        best[rows] = top
        if recording:
            a = np.zeros((len(rows), f), dtype=np.int64)
            for p in range(Pk - 1, -1, -1):  # first position attaining the max
                a[act[:, p] == top] = p
            arg[rows] = a
    pooled = best + bias.data
    keep = pooled > 0
    out = np.where(keep, pooled, 0).astype(tab.dtype)

    def back(g):
        gp = (g * keep).astype(tab.dtype)
        uniq, inv = np.unique(ids, return_inverse=True)
        inv = inv.reshape(ids.shape)
        U = len(uniq)
        taps = np.arange(w)[:, None, None]
        tok = inv[np.arange(B)[None, :, None], arg[None] + taps]  # (w, B, f)
        flat = ((taps * U + tok) * f + np.arange(f)).reshape(-1)
        ge = np.bincount(flat, weights=np.broadcast_to(gp, (w, B, f)).reshape(-1), minlength=w * U * f)
        ge = ge.reshape(w, U, f).astype(tab.dtype)
        ge[:, uniq == pad_id] = 0
        rows = tab[uniq]
        gfil = np.stack([rows.T @ ge[j] for j in range(w)])
        gtab = None
        if table.requires_grad:
            gtab = np.zeros_like(tab)
            gtab[uniq] = sum(ge[j] @ filters.data[j].T for j in range(w))
        return gtab, gfil, gp.sum(axis=0)

    return _result(out, (table, filters, bias), back)


def seq_conv_maxpool(seq: Tensor, filter_bank: Tensor, bias: Tensor, n_valid: int | None = None) -> Tensor:
    """Single-sequence form of :func:`conv_maxpool`: (n, d) -> (f,)."""
    x = reshape(seq, (1,) + seq.shape)
    out = conv_maxpool(x, filter_bank, bias, None if n_valid is None else [n_valid])
    return reshape(out, (filter_bank.shape[2],))


# ---------------------------------------------------------------- losses


def bce_with_logits(logits: Tensor, targets, pos_weight: float = 1.0) -> Tensor:
    """Mean weighted binary cross-entropy on raw logits (numerically stable)."""
    z = logits.data
    y = np.asarray(targets, dtype=z.dtype).reshape(z.shape)
    wts = np.where(y > 0.5, pos_weight, 1.0).astype(z.dtype)
    # -[y log s(z) + (1-y) log(1-s(z))] = softplus(z) - y z
    softplus = np.maximum(z, 0) + np.log1p(np.exp(-np.abs(z)))
    n = z.size
    loss = (wts * (softplus - y * z)).sum() / n
    s = _stable_sigmoid(z)

    def back(g):
        return (g * wts * (s - y) / n,)

    return _result(np.asarray(loss, dtype=z.dtype), (logits,), back)


# ---------------------------------------------------------------- backward


def backward(tape: Tape, loss: Tensor, wrt: Iterable[Tensor] | None = None) -> dict[Tensor, np.ndarray]:
    """Propagate d(loss)/d(.) through ``tape``.

    Returns a gradient for every leaf tensor with ``requires_grad`` reached by the
    tape, plus zeros for members of ``wrt`` that the loss never touched.  Leaf
    gradients are also stored on ``tensor.grad``.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be a scalar, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    produced = {id(node.out) for node in tape.nodes}
    leaves: dict[int, Tensor] = {}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        parent_grads = node.backward_fn(g)
        for p, pg in zip(node.parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = np.asarray(pg, dtype=p.dtype).reshape(p.shape)
            if key not in produced:
                leaves[key] = p
    out: dict[Tensor, np.ndarray] = {}
    for key, t in leaves.items():
        t.grad = grads[key]
        out[t] = t.grad
    if id(loss) not in produced and loss.requires_grad:
        loss.grad = np.ones_like(loss.data)
        out[loss] = loss.grad
    for t in wrt or ():
        if t not in out:
            t.grad = np.zeros_like(t.data)
            out[t] = t.grad
    return out


def finite_diff_check(fn: Callable[[Tensor], Tensor], point, h: float = 1e-5) -> float:
    """Max over coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|)."""
    x = Tensor(np.array(as_tensor(point).data, dtype=np.float64), requires_grad=True)
    with Tape() as tape:
        loss = fn(x)
    analytic = backward(tape, loss, wrt=[x])[x].reshape(-1)
    flat = x.data.reshape(-1)
    numeric = np.empty_like(flat)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        up = float(fn(Tensor(x.data.copy())).data)
        flat[k] = orig - h
        down = float(fn(Tensor(x.data.copy())).data)
        flat[k] = orig
        numeric[k] = (up - down) / (2 * h)
    scale = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / scale)) if flat.size else 0.0


def check_param_gradients(
    loss_fn: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-5, max_coords: int | None = None, seed: int = 0
) -> float:
    """Finite-difference check of ``loss_fn`` against every tensor in ``params``.

    ``params`` are perturbed in place and restored.  With ``max_coords`` only a
    seeded random subset of coordinates per tensor is probed.
    """
    with Tape() as tape:
        loss = loss_fn()
    analytic = backward(tape, loss, wrt=params)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in params:
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        ga = analytic[p].reshape(-1)
        for k in coords:
            orig = flat[k]
            flat[k] = orig + h
            up = float(loss_fn().data)
            flat[k] = orig - h
            down = float(loss_fn().data)
            flat[k] = orig
            num = (up - down) / (2 * h)
            err = abs(ga[k] - num) / max(1.0, abs(ga[k]), abs(num))
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------- optimizer


@dataclass
class OptimizerState:
    lr: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: OptimizerState) -> None:
    """One bias-corrected Adam update, in place.  Missing gradients count as zero."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            bad = int(np.size(g) - np.isfinite(g).sum())
            raise TrainingAborted(f"non-finite gradient for {name!r} ({bad} entries) at step {state.step + 1}")
    state.step += 1
    t = state.step
    c1 = 1 - state.beta1**t
    c2 = 1 - state.beta2**t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        if m.shape != p.shape:
            raise ShapeError(f"optimizer state for {name!r} has shape {m.shape}, parameter {p.shape}")
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * (g * g)
        p.data -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype)
