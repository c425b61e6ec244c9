"""Tape-based reverse-mode autodiff over dense float64 matrices.

Everything is a 2-D numpy array. A Tensor wraps one value; ops optionally
record a backward closure on a Tape. Running with tape=None gives a plain
numpy forward pass (used for inference), with identical numerics.

The primitive set is closed: matmul, add (with row broadcast), scale, relu,
row softmax, row layer-norm, embedding lookup, transpose/reshape, row/column
slicing and concatenation, row mean, and mean-square loss. Each primitive's
backward is validated against central finite differences in the test suite.

Only tensors reachable from a parameter (requires_grad) carry gradients:
ops on pure constants record nothing, and backward closures skip untracked
inputs, so constants such as positional tables or loss targets cost nothing.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

Array = np.ndarray


class NumericsError(ValueError):
    """Invalid argument to a numerics operation."""


class DeterminismError(RuntimeError):
    """A loss function returned different values for identical inputs."""


def as_matrix(x, name: str = "input") -> Array:
    """Coerce to a C-contiguous float64 2-D array, rejecting non-finite data."""
    a = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise NumericsError(f"{name} must be 1-D or 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericsError(f"{name} contains non-finite entries")
    return a


class Tape:
    """Ordered record of backward closures, replayed in exact reverse order."""

    def __init__(self) -> None:
        self._ops: list[Callable[[], None]] = []

    def record(self, backward: Callable[[], None]) -> None:
        self._ops.append(backward)

    def backward(self, loss: "Tensor") -> None:
        if loss.value.shape != (1, 1):
            raise NumericsError(f"backward expects a scalar loss, got {loss.value.shape}")
        loss.grad = np.ones((1, 1))
        for op in reversed(self._ops):
            op()


class Tensor:
    """A 2-D float64 value plus an accumulated gradient of the same shape."""

    __slots__ = ("value", "grad", "track")

    def __init__(self, value, requires_grad: bool = False) -> None:
        self.value = as_matrix(value)
        # Registered parameters start with a zero grad so unused ones stay zero.
        self.grad: Array | None = np.zeros_like(self.value) if requires_grad else None
        self.track = requires_grad

    @classmethod
    def _wrap(cls, value: Array, track: bool) -> "Tensor":
        # Internal fast path for op results: value is already a fresh,
        # contiguous float64 2-D array, so skip validation.
        t = cls.__new__(cls)
        t.value = value
        t.grad = None
        t.track = track
        return t

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def accumulate(self, g: Array) -> None:
        if self.grad is None:
            self.grad = np.array(g)
        else:
            self.grad += g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.value.shape})"


def _rec(tape: Tape | None, out: Tensor, backward: Callable[[], None]) -> None:
    if tape is not None and out.track:
        tape.record(backward)


def matmul(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    av, bv = a.value, b.value
    if av.shape[1] != bv.shape[0]:
        raise NumericsError(f"matmul shape mismatch {av.shape} @ {bv.shape}")
    out = Tensor._wrap(av @ bv, a.track or b.track)

    def backward() -> None:
        g = out.grad
        if a.track:
            a.accumulate(g @ bv.T)
        if b.track:
            b.accumulate(av.T @ g)
    _rec(tape, out, backward)
    return out


def add(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    """Elementwise add; b may be a 1xC row vector broadcast over a's rows."""
    av, bv = a.value, b.value
    row_broadcast = bv.shape[0] == 1 and av.shape[0] != 1 and bv.shape[1] == av.shape[1]
    if not row_broadcast and av.shape != bv.shape:
        raise NumericsError(f"add shape mismatch {av.shape} + {bv.shape}")
    out = Tensor._wrap(av + bv, a.track or b.track)

    def backward() -> None:
        g = out.grad
        if a.track:
            a.accumulate(g)
        if b.track:
            b.accumulate(g.sum(axis=0, keepdims=True) if row_broadcast else g)
    _rec(tape, out, backward)
    return out


def scale(a: Tensor, s: float, tape: Tape | None = None) -> Tensor:
    s = float(s)
    out = Tensor._wrap(a.value * s, a.track)

    def backward() -> None:
        a.accumulate(out.grad * s)
    _rec(tape, out, backward)
    return out


def relu(a: Tensor, tape: Tape | None = None) -> Tensor:
    mask = a.value > 0.0
    out = Tensor._wrap(np.where(mask, a.value, 0.0), a.track)

    def backward() -> None:
        a.accumulate(out.grad * mask)
    _rec(tape, out, backward)
    return out


def softmax_rows(a: Tensor, tape: Tape | None = None) -> Tensor:
    out = Tensor._wrap(_softmax_raw(a.value), a.track)

    def backward() -> None:
        p = out.value
        g = out.grad
        dot = np.sum(g * p, axis=1, keepdims=True)
        a.accumulate(p * (g - dot))
    _rec(tape, out, backward)
    return out


def layer_norm_rows(a: Tensor, gain: Tensor, bias: Tensor,
                    tape: Tape | None = None, eps: float = 1e-5) -> Tensor:
    av = a.value
    mu = av.mean(axis=1, keepdims=True)
    var = av.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (av - mu) * inv
    out = Tensor._wrap(xhat * gain.value + bias.value,
                       a.track or gain.track or bias.track)

    def backward() -> None:
        g = out.grad
        if gain.track:
            gain.accumulate((g * xhat).sum(axis=0, keepdims=True))
        if bias.track:
            bias.accumulate(g.sum(axis=0, keepdims=True))
        if a.track:
            gx = g * gain.value
            # d/dx of (x - mu) * inv with mu, inv functions of the row
            term = gx - gx.mean(axis=1, keepdims=True) \
                - xhat * (gx * xhat).mean(axis=1, keepdims=True)
            a.accumulate(term * inv)
    _rec(tape, out, backward)
    return out


def embed(table: Tensor, ids: Sequence[int], tape: Tape | None = None) -> Tensor:
    idx = np.asarray(list(ids), dtype=np.int64)
    if idx.ndim != 1 or idx.size == 0:
        raise NumericsError("embed expects a non-empty 1-D id list")
    if idx.min() < 0 or idx.max() >= table.value.shape[0]:
        raise NumericsError("embed id out of range")
    out = Tensor._wrap(table.value[idx], table.track)

    def backward() -> None:
        g = np.zeros_like(table.value)
        np.add.at(g, idx, out.grad)
        table.accumulate(g)
    _rec(tape, out, backward)
    return out


def transpose(a: Tensor, tape: Tape | None = None) -> Tensor:
    out = Tensor._wrap(a.value.T.copy(), a.track)

    def backward() -> None:
        a.accumulate(out.grad.T)
    _rec(tape, out, backward)
    return out


def reshape(a: Tensor, rows: int, cols: int, tape: Tape | None = None) -> Tensor:
    if rows * cols != a.value.size:
        raise NumericsError(f"reshape {a.value.shape} -> ({rows},{cols}) changes size")
    out = Tensor._wrap(a.value.reshape(rows, cols).copy(), a.track)

    def backward() -> None:
        a.accumulate(out.grad.reshape(a.value.shape))
    _rec(tape, out, backward)
    return out


def slice_rows(a: Tensor, i0: int, i1: int, tape: Tape | None = None) -> Tensor:
    out = Tensor._wrap(a.value[i0:i1].copy(), a.track)

    def backward() -> None:
        if a.grad is None:
            a.grad = np.zeros_like(a.value)
        a.grad[i0:i1] += out.grad
    _rec(tape, out, backward)
    return out


def slice_cols(a: Tensor, j0: int, j1: int, tape: Tape | None = None) -> Tensor:
    out = Tensor._wrap(a.value[:, j0:j1].copy(), a.track)

    def backward() -> None:
        if a.grad is None:
            a.grad = np.zeros_like(a.value)
        a.grad[:, j0:j1] += out.grad
    _rec(tape, out, backward)
    return out


def concat_rows(parts: Sequence[Tensor], tape: Tape | None = None) -> Tensor:
    out = Tensor._wrap(np.concatenate([p.value for p in parts], axis=0),
                       any(p.track for p in parts))

    def backward() -> None:
        i = 0
        for p in parts:
            n = p.value.shape[0]
            if p.track:
                p.accumulate(out.grad[i:i + n])
            i += n
    _rec(tape, out, backward)
    return out


def concat_cols(parts: Sequence[Tensor], tape: Tape | None = None) -> Tensor:
    out = Tensor._wrap(np.concatenate([p.value for p in parts], axis=1),
                       any(p.track for p in parts))

    def backward() -> None:
        j = 0
        for p in parts:
            n = p.value.shape[1]
            if p.track:
                p.accumulate(out.grad[:, j:j + n])
            j += n
    _rec(tape, out, backward)
    return out


def mean_rows(a: Tensor, tape: Tape | None = None) -> Tensor:
    n = a.value.shape[0]
    out = Tensor._wrap(a.value.mean(axis=0, keepdims=True), a.track)

    def backward() -> None:
        a.accumulate(np.broadcast_to(out.grad / n, a.value.shape))
    _rec(tape, out, backward)
    return out


def multihead_attention(q: Tensor, k: Tensor, v: Tensor, heads: int,
                        tape: Tape | None = None) -> tuple[Tensor, Array]:
    """Fused scaled dot-product attention over column-split heads.

    Queries (M, C) attend to keys/values (Mk, C); each head h uses columns
    [h*dh, (h+1)*dh) with scale 1/sqrt(dh). Returns the concatenated head
    outputs (M, C) and the per-head attention probabilities (heads, M, Mk).
    Equivalent to slicing columns per head, softmax(q_h k_h^T / sqrt(dh)) v_h,
    and concatenating, but runs as batched 3-D products with one backward.
    """
    m_q, c = q.value.shape
    m_k = k.value.shape[0]
    if c % heads != 0:
        raise NumericsError(f"width {c} not divisible by {heads} heads")
    if k.value.shape[1] != c or v.value.shape != k.value.shape:
        raise NumericsError("key/value shapes must match and share query width")
    dh = c // heads
    inv = 1.0 / np.sqrt(dh)

    def split(mat: Array, rows: int) -> Array:
        return mat.reshape(rows, heads, dh).transpose(1, 0, 2)

    qh = split(q.value, m_q)
    kh = split(k.value, m_k)
    vh = split(v.value, m_k)
    scores = qh @ kh.transpose(0, 2, 1) * inv
    shifted = scores - scores.max(axis=2, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=2, keepdims=True)
    out_h = probs @ vh                                   # (heads, M, dh)
    out = Tensor._wrap(np.ascontiguousarray(out_h.transpose(1, 0, 2)).reshape(m_q, c),
                       q.track or k.track or v.track)

    def backward() -> None:
        gh = out.grad.reshape(m_q, heads, dh).transpose(1, 0, 2)
        if v.track:
            gv = probs.transpose(0, 2, 1) @ gh
            v.accumulate(np.ascontiguousarray(gv.transpose(1, 0, 2)).reshape(m_k, c))
        ga = gh @ vh.transpose(0, 2, 1)
        gs = probs * (ga - np.sum(ga * probs, axis=2, keepdims=True))
        if q.track:
            gq = gs @ kh * inv
            q.accumulate(np.ascontiguousarray(gq.transpose(1, 0, 2)).reshape(m_q, c))
        if k.track:
            gk = gs.transpose(0, 2, 1) @ qh * inv
            k.accumulate(np.ascontiguousarray(gk.transpose(1, 0, 2)).reshape(m_k, c))
    _rec(tape, out, backward)
    return out, probs


def mse(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    if a.value.shape != b.value.shape:
        raise NumericsError(f"mse shape mismatch {a.value.shape} vs {b.value.shape}")
    diff = a.value - b.value
    n = diff.size
    out = Tensor._wrap(np.array([[np.mean(diff * diff)]]), a.track or b.track)

    def backward() -> None:
        g = out.grad[0, 0] * 2.0 / n
        if a.track:
            a.accumulate(g * diff)
        if b.track:
            b.accumulate(-g * diff)
    _rec(tape, out, backward)
    return out


def _softmax_raw(a: Array) -> Array:
    shifted = a - a.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax(rows: Array) -> Array:
    """Numerically stable row softmax of a plain array (max-subtraction)."""
    return _softmax_raw(as_matrix(rows, "softmax input"))


def grad_check(loss_fn: Callable[[dict[str, Tensor], "Tape | None"], Tensor],
               params: dict[str, Array],
               epsilon: float = 1e-5,
               max_coords_per_param: int = 16,
               seed: int = 0) -> float:
    """Max relative error between tape gradients and central differences.

    loss_fn(params, tape) must build a scalar Tensor from the given parameter
    Tensors, recording on the tape when one is supplied. Coordinates are
    subsampled per parameter when larger than max_coords_per_param.
    """
    if not 1e-7 <= epsilon <= 1e-4:
        raise NumericsError(f"epsilon {epsilon} outside [1e-7, 1e-4]")

    def evaluate(raw: dict[str, Array]) -> float:
        tensors = {k: Tensor(v) for k, v in raw.items()}
        return float(loss_fn(tensors, None).value[0, 0])

    base = {k: as_matrix(v, k).copy() for k, v in params.items()}
    if evaluate(base) != evaluate(base):
        raise DeterminismError("loss function is not deterministic")

    tape = Tape()
    tensors = {k: Tensor(v, requires_grad=True) for k, v in base.items()}
    loss = loss_fn(tensors, tape)
    tape.backward(loss)

    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, value in base.items():
        flat_n = value.size
        if flat_n <= max_coords_per_param:
            coords = np.arange(flat_n)
        else:
            coords = rng.choice(flat_n, size=max_coords_per_param, replace=False)
        analytic = tensors[name].grad.reshape(-1)
        for c in coords:
            perturbed = {k: v for k, v in base.items()}
            plus = value.copy().reshape(-1)
            plus[c] += epsilon
            perturbed[name] = plus.reshape(value.shape)
            f_plus = evaluate(perturbed)
            minus = value.copy().reshape(-1)
            minus[c] -= epsilon
            perturbed[name] = minus.reshape(value.shape)
            f_minus = evaluate(perturbed)
            numeric = (f_plus - f_minus) / (2.0 * epsilon)
            denom = max(abs(analytic[c]), abs(numeric), 1e-12)
            worst = max(worst, abs(analytic[c] - numeric) / denom)
    return worst
