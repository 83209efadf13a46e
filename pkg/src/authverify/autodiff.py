"""Dense float64 tensors with reverse-mode automatic differentiation.

Every op records a backward rule on its output, so any scalar built from
tensors can be differentiated with ``backward()``. The op set is exactly
what a hierarchical recurrent attention model needs: matrix products,
elementwise maps, concatenation, embedding lookup, sliding windows,
softmax, and max-over-time pooling. Everything is float64 and CPU-only.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import DimensionError, DomainError, EvaluationError

_GRAD_ENABLED = True


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable recording of backward rules inside the block."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """A dense float64 array, optionally wired into a gradient graph.

    ``grad`` is populated by ``backward()`` and always matches ``data``
    in shape. Tensors created by ops keep references to their parents
    and a backward rule; leaves have neither.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _make(data: np.ndarray, parents: Sequence[Tensor],
          backward: Callable[[np.ndarray], None]) -> Tensor:
    """Wrap an op result, recording the backward rule if grad is live."""
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad:
        if t.grad is None:
            t.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            t.grad += g


class GradientTape:
    """The ops behind one output tensor, in topological order.

    ``nodes[i]`` lists its inputs among ``nodes[:i]`` (or leaves), so
    replaying the tape in reverse propagates gradients from the root to
    every reachable tensor with ``requires_grad``.
    """

    def __init__(self, root: Tensor):
        self.nodes: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            t, expanded = stack.pop()
            if expanded:
                self.nodes.append(t)
                continue
            if id(t) in seen or t._backward is None:
                continue
            seen.add(id(t))
            stack.append((t, True))
            for p in t._parents:
                stack.append((p, False))

    def replay_backward(self) -> None:
        for t in reversed(self.nodes):
            if t.grad is not None:
                t._backward(t.grad)  # type: ignore[misc]


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every tensor the scalar ``loss`` depends on."""
    if loss.data.size != 1:
        raise DimensionError(f"backward needs a scalar, got shape {loss.shape}")
    if not np.isfinite(loss.data):
        raise EvaluationError("backward on non-finite loss")
    loss.grad = np.ones_like(loss.data)
    GradientTape(loss).replay_backward()


# ---------------------------------------------------------------------------
# ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product. Supports (m,k)@(k,n), (m,k)@(k,), and (k,)@(k,n)."""
    ad, bd = a.data, b.data
    inner_a = ad.shape[-1]
    inner_b = bd.shape[0]
    if inner_a != inner_b or ad.ndim > 2 or bd.ndim > 2 or ad.ndim == 0 or bd.ndim == 0:
        raise DimensionError(f"matmul shapes {ad.shape} and {bd.shape} do not agree")
    out = ad @ bd

    def rule(g: np.ndarray) -> None:
        if ad.ndim == 2 and bd.ndim == 2:
            _accumulate(a, g @ bd.T)
            _accumulate(b, ad.T @ g)
        elif bd.ndim == 1:  # (m,k)@(k,)
            _accumulate(a, np.outer(g, bd))
            _accumulate(b, ad.T @ g)
        else:  # (k,)@(k,n)
            _accumulate(a, bd @ g)
            _accumulate(b, np.outer(ad, g))

    return _make(out, (a, b), rule)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise DimensionError(f"add shapes {a.shape} and {b.shape} differ")
    def rule(g: np.ndarray) -> None:
        _accumulate(a, g)
        _accumulate(b, g)
    return _make(a.data + b.data, (a, b), rule)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise DimensionError(f"sub shapes {a.shape} and {b.shape} differ")
    def rule(g: np.ndarray) -> None:
        _accumulate(a, g)
        _accumulate(b, -g)
    return _make(a.data - b.data, (a, b), rule)


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise DimensionError(f"hadamard shapes {a.shape} and {b.shape} differ")
    def rule(g: np.ndarray) -> None:
        _accumulate(a, g * b.data)
        _accumulate(b, g * a.data)
    return _make(a.data * b.data, (a, b), rule)


def scale(a: Tensor, c: float) -> Tensor:
    def rule(g: np.ndarray) -> None:
        _accumulate(a, g * c)
    return _make(a.data * c, (a,), rule)


def tanh_map(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    def rule(g: np.ndarray) -> None:
        _accumulate(a, g * (1.0 - out * out))
    return _make(out, (a,), rule)


def sigmoid_map(a: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-a.data))
    def rule(g: np.ndarray) -> None:
        _accumulate(a, g * out * (1.0 - out))
    return _make(out, (a,), rule)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    def rule(g: np.ndarray) -> None:
        _accumulate(a, g * mask)
    return _make(np.where(mask, a.data, 0.0), (a,), rule)


def square(a: Tensor) -> Tensor:
    def rule(g: np.ndarray) -> None:
        _accumulate(a, g * 2.0 * a.data)
    return _make(a.data * a.data, (a,), rule)


def sqrt(a: Tensor) -> Tensor:
    """Elementwise square root; subgradient 0 at exactly 0."""
    if np.any(a.data < 0):
        raise DomainError("sqrt of negative value")
    out = np.sqrt(a.data)
    def rule(g: np.ndarray) -> None:
        safe = np.where(out > 0, out, 1.0)
        _accumulate(a, np.where(out > 0, g * 0.5 / safe, 0.0))
    return _make(out, (a,), rule)


def sum_all(a: Tensor) -> Tensor:
    def rule(g: np.ndarray) -> None:
        _accumulate(a, np.full_like(a.data, float(g)))
    return _make(np.asarray(a.data.sum()), (a,), rule)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise DimensionError(f"transpose expects a 2-D tensor, got shape {a.shape}")
    def rule(g: np.ndarray) -> None:
        _accumulate(a, g.T)
    return _make(a.data.T, (a,), rule)


def flatten(a: Tensor) -> Tensor:
    shape = a.data.shape
    def rule(g: np.ndarray) -> None:
        _accumulate(a, g.reshape(shape))
    return _make(a.data.reshape(-1), (a,), rule)


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    """Join two matrices with equal row counts side by side."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[0] != b.data.shape[0]:
        raise DimensionError(f"concat_cols shapes {a.shape} and {b.shape} do not agree")
    split = a.data.shape[1]
    def rule(g: np.ndarray) -> None:
        _accumulate(a, g[:, :split])
        _accumulate(b, g[:, split:])
    return _make(np.concatenate([a.data, b.data], axis=1), (a, b), rule)


def lstm_cell(w: Tensor, b: Tensor, z: Tensor, h_prev: Tensor, c_prev: Tensor) -> Tensor:
    """One fused LSTM cell step; returns hidden and memory states stacked as [h; c].

    ``w`` is the packed gate matrix (4*state rows, gate order input/forget/
    output/candidate) acting on the joined [z; h_prev] vector, ``b`` the
    packed bias. Fusing the cell keeps the gradient graph small; the
    backward rule is the closed-form cell derivative.
    """
    state = h_prev.data.shape[0]
    z_dim = z.data.shape[0]
    if w.data.shape != (4 * state, z_dim + state) or b.data.shape != (4 * state,) \
            or c_prev.data.shape != (state,):
        raise DimensionError(
            f"lstm_cell shapes w={w.shape}, b={b.shape}, z={z.shape}, "
            f"h={h_prev.shape}, c={c_prev.shape} do not agree")
    zh = np.concatenate([z.data, h_prev.data])
    pre = w.data @ zh + b.data
    gi = 1.0 / (1.0 + np.exp(-pre[:state]))
    gf = 1.0 / (1.0 + np.exp(-pre[state:2 * state]))
    go = 1.0 / (1.0 + np.exp(-pre[2 * state:3 * state]))
    gg = np.tanh(pre[3 * state:])
    c = gf * c_prev.data + gi * gg
    tc = np.tanh(c)
    h = go * tc

    def rule(g: np.ndarray) -> None:
        dh, dc_direct = g[:state], g[state:]
        dc = dh * go * (1.0 - tc * tc) + dc_direct
        dpre = np.concatenate([
            dc * gg * gi * (1.0 - gi),
            dc * c_prev.data * gf * (1.0 - gf),
            dh * tc * go * (1.0 - go),
            dc * gi * (1.0 - gg * gg),
        ])
        _accumulate(w, np.outer(dpre, zh))
        _accumulate(b, dpre)
        dzh = w.data.T @ dpre
        _accumulate(z, dzh[:z_dim])
        _accumulate(h_prev, dzh[z_dim:])
        _accumulate(c_prev, dc * gf)

    return _make(np.concatenate([h, c]), (w, b, z, h_prev, c_prev), rule)


def slice1d(a: Tensor, lo: int, hi: int) -> Tensor:
    """Contiguous slice of a 1-D tensor."""
    if a.data.ndim != 1:
        raise DimensionError(f"slice1d expects a 1-D tensor, got shape {a.shape}")
    if not 0 <= lo < hi <= a.data.shape[0]:
        raise DomainError(f"slice [{lo}:{hi}] out of range for length {a.data.shape[0]}")
    def rule(g: np.ndarray) -> None:
        if a.requires_grad:
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            a.grad[lo:hi] += g
    return _make(a.data[lo:hi], (a,), rule)


def concat(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate 1-D tensors into one longer vector."""
    if not parts:
        raise DomainError("concat of zero tensors")
    for p in parts:
        if p.data.ndim != 1:
            raise DimensionError(f"concat expects 1-D tensors, got shape {p.shape}")
    sizes = [p.data.shape[0] for p in parts]
    offsets = np.cumsum([0] + sizes)
    def rule(g: np.ndarray) -> None:
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            _accumulate(p, g[lo:hi])
    return _make(np.concatenate([p.data for p in parts]), parts, rule)


def stack_rows(rows: Sequence[Tensor]) -> Tensor:
    """Stack equal-length 1-D tensors into a (T, D) matrix."""
    if not rows:
        raise DomainError("stack_rows of zero tensors")
    width = rows[0].data.shape[0] if rows[0].data.ndim == 1 else None
    for r in rows:
        if r.data.ndim != 1 or r.data.shape[0] != width:
            raise DimensionError("stack_rows needs equal-length 1-D tensors")
    def rule(g: np.ndarray) -> None:
        for i, r in enumerate(rows):
            _accumulate(r, g[i])
    return _make(np.stack([r.data for r in rows]), rows, rule)


def affine_rows(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Rowwise affine map: (P, K) inputs against w (D, K) and b (D,) -> (P, D)."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[1] \
            or b.data.shape != (w.data.shape[0],):
        raise DimensionError(
            f"affine_rows shapes {x.shape}, {w.shape}, {b.shape} do not agree")
    out = x.data @ w.data.T + b.data
    def rule(g: np.ndarray) -> None:
        _accumulate(x, g @ w.data)
        _accumulate(w, g.T @ x.data)
        _accumulate(b, g.sum(axis=0))
    return _make(out, (x, w, b), rule)


def gather_row(table: Tensor, idx: int) -> Tensor:
    """One row of a 2-D table as a 1-D vector; backward scatter-adds."""
    if table.data.ndim != 2:
        raise DimensionError(f"gather_row expects a 2-D table, got {table.shape}")
    def rule(g: np.ndarray) -> None:
        if table.requires_grad:
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            table.grad[idx] += g
    return _make(table.data[idx], (table,), rule)


def gather_rows(table: Tensor, ids: Sequence[int]) -> Tensor:
    """Select rows of a 2-D table; backward scatter-adds into the table."""
    if table.data.ndim != 2:
        raise DimensionError(f"gather_rows expects a 2-D table, got {table.shape}")
    idx = np.asarray(ids, dtype=np.intp)
    def rule(g: np.ndarray) -> None:
        if table.requires_grad:
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            np.add.at(table.grad, idx, g)
    return _make(table.data[idx], (table,), rule)


def sliding_windows(rows: Tensor, width: int) -> Tensor:
    """All length-``width`` windows of the rows of a (L, D) matrix.

    Output row i is rows[i] .. rows[i+width-1] laid side by side, giving
    shape (L - width + 1, width * D). Requires L >= width.
    """
    if rows.data.ndim != 2:
        raise DimensionError(f"sliding_windows expects (L, D), got {rows.shape}")
    length = rows.data.shape[0]
    dim = rows.data.shape[1]
    positions = length - width + 1
    if width < 1 or positions < 1:
        raise DomainError(f"window width {width} exceeds sequence length {length}")
    out = np.concatenate([rows.data[i:i + positions] for i in range(width)], axis=1)
    def rule(g: np.ndarray) -> None:
        if rows.requires_grad:
            if rows.grad is None:
                rows.grad = np.zeros_like(rows.data)
            for i in range(width):
                rows.grad[i:i + positions] += g[:, i * dim:(i + 1) * dim]
    return _make(out, (rows,), rule)


def softmax(v: Tensor) -> Tensor:
    """Stable softmax of a 1-D vector (max subtracted before exp)."""
    if v.data.ndim != 1 or v.data.shape[0] == 0:
        raise DomainError(f"softmax needs a nonempty vector, got shape {v.shape}")
    shifted = v.data - v.data.max()
    e = np.exp(shifted)
    out = e / e.sum()
    def rule(g: np.ndarray) -> None:
        _accumulate(v, out * (g - float(g @ out)))
    return _make(out, (v,), rule)


def max_over_time(m: Tensor) -> tuple[Tensor, np.ndarray]:
    """Columnwise max of a (T, D) matrix with the winning row per column.

    Ties go to the lowest row index; backward routes gradient only to the
    winning entries.
    """
    if m.data.ndim != 2 or m.data.shape[0] == 0:
        raise DomainError(f"max_over_time needs a nonempty (T, D) matrix, got {m.shape}")
    argmax = m.data.argmax(axis=0)  # np.argmax takes the first (lowest) maximum
    cols = np.arange(m.data.shape[1])
    def rule(g: np.ndarray) -> None:
        if m.requires_grad:
            if m.grad is None:
                m.grad = np.zeros_like(m.data)
            np.add.at(m.grad, (argmax, cols), g)
    return _make(m.data[argmax, cols], (m,), rule), argmax


# ---------------------------------------------------------------------------
# gradient checking


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` must build a scalar from ``x``. Error per coordinate is
    |analytic - numeric| / max(1, |analytic|).
    """
    if not 1e-7 <= eps <= 1e-3:
        raise DomainError(f"eps {eps} outside [1e-7, 1e-3]")
    x.requires_grad = True
    x.zero_grad()
    y = f(x)
    if y.data.size != 1 or not np.isfinite(y.data):
        raise EvaluationError(f"f(x) must be a finite scalar, got {y.data!r}")
    backward(y)
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()

    numeric = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    num_flat = numeric.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(f(x).data)
            flat[i] = orig - eps
            lo = float(f(x).data)
            flat[i] = orig
            num_flat[i] = (hi - lo) / (2.0 * eps)
    rel = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))
    return float(rel.max())


def finite_difference_grads(loss_fn: Callable[[], Tensor], params: Sequence[Tensor],
                            eps: float = 1e-5) -> list[np.ndarray]:
    """Central-difference gradients of ``loss_fn()`` w.r.t. each parameter.

    One independent oracle for whole-model checks: perturbs every
    coordinate of every parameter in place and re-evaluates the loss.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise DomainError(f"eps {eps} outside [1e-7, 1e-3]")
    grads = []
    with no_grad():
        for p in params:
            g = np.zeros_like(p.data)
            flat = p.data.reshape(-1)
            g_flat = g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                hi = float(loss_fn().data)
                flat[i] = orig - eps
                lo = float(loss_fn().data)
                flat[i] = orig
                g_flat[i] = (hi - lo) / (2.0 * eps)
            grads.append(g)
    return grads
