"""Dense 2-D tensors with reverse-mode automatic differentiation.

Values are 64-bit floats in row-major numpy arrays. Differentiation is
define-by-run: while a :class:`Tape` is active (``with Tape() as tape:``),
every operation appends itself to the tape in execution order, which is by
construction a topological order. ``tape.backward(loss)`` then replays the
recorded operations exactly once each, in reverse, accumulating gradients
into the ``grad`` slot of every tensor the tape touched. Tensors are
treated as immutable after construction except for ``grad`` (the optimizer
mutates parameter values only between tapes).

Outside any tape, all operations run eagerly and record nothing, which is
what evaluation and finite-difference probes use. Active tapes are tracked
per thread, so independent training runs may proceed in parallel threads.
"""

from __future__ import annotations

import threading
from typing import Callable

import numpy as np

from .errors import ContractError, DomainError, ShapeError

_tls = threading.local()


def _tape_stack() -> list:
    stack = getattr(_tls, "stack", None)
    if stack is None:
        stack = []
        _tls.stack = stack
    return stack


def _active_tape():
    stack = getattr(_tls, "stack", None)
    return stack[-1] if stack else None


class Tape:
    """Recorded list of operations (a Wengert list) for one forward pass.

    Rebuilt per forward pass; the recording order doubles as the
    topological order, so backward is a single reverse sweep.
    """

    __slots__ = ("_ops",)

    def __init__(self):
        # each entry: (output, inputs tuple, backward rule)
        self._ops: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _tape_stack().pop()

    def __len__(self) -> int:
        return len(self._ops)

    def backward(self, loss: "Tensor") -> None:
        """Accumulate d(loss)/d(tensor) into ``grad`` for every tensor on the tape.

        The loss must be a 1x1 tensor produced on this tape. Leaves that do
        not feed the loss end up with zero gradients. Gradients add across
        fan-out; each recorded operation's rule runs exactly once, in reverse
        recording order (rules whose output received no gradient are skipped,
        which is equivalent to propagating their zeros).

        Rule convention: a backward rule may return the incoming gradient
        array itself (the engine copies it before storing), or fresh arrays
        whose ownership passes to the engine; it must never return the same
        fresh array for two different inputs.
        """
        if loss.values.shape != (1, 1):
            raise ContractError(
                f"backward needs a scalar 1x1 loss, got shape {loss.values.shape}"
            )
        if loss.tape is not self:
            raise ContractError("loss tensor was not produced on this tape")
        for out, inputs, _rule in self._ops:
            out.grad = None
            for t in inputs:
                t.grad = None
        loss.grad = np.ones((1, 1))
        for out, inputs, rule in reversed(self._ops):
            g = out.grad
            if g is None:
                continue
            grads = rule(g)
            for t, gt in zip(inputs, grads):
                if gt is None:
                    continue
                if t.grad is None:
                    t.grad = gt.copy() if gt is g else gt
                else:
                    t.grad += gt
        for out, inputs, _rule in self._ops:
            if out.grad is None:
                out.grad = np.zeros_like(out.values)
            for t in inputs:
                if t.grad is None:
                    t.grad = np.zeros_like(t.values)


class Tensor:
    """Dense 2-D float64 array with an optional gradient slot.

    1-D input is promoted to a single row; scalars to 1x1. ``tape`` and
    ``op_index`` locate the producing operation on the active tape (both
    ``None`` for leaves).
    """

    __slots__ = ("values", "grad", "tape", "op_index")

    def __init__(self, values):
        if isinstance(values, Tensor):
            values = values.values
        arr = np.array(values, dtype=np.float64, order="C")
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got shape {arr.shape}")
        self.values = arr
        self.grad: np.ndarray | None = None
        self.tape = None
        self.op_index: int | None = None

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def item(self) -> float:
        if self.values.shape != (1, 1):
            raise ContractError(f"item() needs a 1x1 tensor, got {self.values.shape}")
        return float(self.values[0, 0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.values.shape}, values={self.values!r})"

    # arithmetic operators; scalars are plain floats, not implicit tensors
    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return add_scalar(self, float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return sub(self, other)
        return add_scalar(self, -float(other))

    def __rsub__(self, other):
        return add_scalar(neg(self), float(other))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    # method aliases for the functional ops
    def relu(self) -> "Tensor":
        return relu(self)

    def sigmoid(self) -> "Tensor":
        return sigmoid(self)

    def softmax(self) -> "Tensor":
        return softmax(self)

    def exp(self) -> "Tensor":
        return exp(self)

    def log(self) -> "Tensor":
        return log(self)

    def clip(self, lo: float, hi: float) -> "Tensor":
        return clip(self, lo, hi)

    def square(self) -> "Tensor":
        return square(self)

    def mean(self) -> "Tensor":
        return reduce_mean(self)

    def sum(self) -> "Tensor":
        return reduce_sum(self)


def _record(out: Tensor, inputs: tuple[Tensor, ...], rule: Callable) -> Tensor:
    tape = _active_tape()
    if tape is not None:
        out.tape = tape
        out.op_index = len(tape._ops)
        tape._ops.append((out, inputs, rule))
    return out


def _wrap(values: np.ndarray) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.values = values
    out.grad = None
    out.tape = None
    out.op_index = None
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; backward is out_grad @ b^T and a^T @ out_grad."""
    av, bv = a.values, b.values
    if av.shape[1] != bv.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {av.shape} @ {bv.shape}")
    out = _wrap(av @ bv)

    def rule(g):
        return g @ bv.T, av.T @ g

    return _record(out, (a, b), rule)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; a 1xN second operand broadcasts over rows (bias add)."""
    av, bv = a.values, b.values
    if av.shape == bv.shape:
        out = _wrap(av + bv)

        def rule(g):
            return g, g

    elif bv.shape == (1, av.shape[1]):
        out = _wrap(av + bv)

        def rule(g):
            return g, g.sum(axis=0, keepdims=True)

    else:
        raise ShapeError(f"add shapes disagree: {av.shape} + {bv.shape}")
    return _record(out, (a, b), rule)


def sub(a: Tensor, b: Tensor) -> Tensor:
    av, bv = a.values, b.values
    if av.shape != bv.shape:
        raise ShapeError(f"sub shapes disagree: {av.shape} - {bv.shape}")
    out = _wrap(av - bv)

    def rule(g):
        return g, -g

    return _record(out, (a, b), rule)


def mul(a: Tensor, b: Tensor) -> Tensor:
    av, bv = a.values, b.values
    if av.shape != bv.shape:
        raise ShapeError(f"mul shapes disagree: {av.shape} * {bv.shape}")
    out = _wrap(av * bv)

    def rule(g):
        return g * bv, g * av

    return _record(out, (a, b), rule)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    out = _wrap(a.values * c)

    def rule(g):
        return (g * c,)

    return _record(out, (a,), rule)


def add_scalar(a: Tensor, c: float) -> Tensor:
    out = _wrap(a.values + float(c))

    def rule(g):
        return (g,)

    return _record(out, (a,), rule)


def neg(a: Tensor) -> Tensor:
    return scale(a, -1.0)


def relu(x: Tensor) -> Tensor:
    """max(0, x); the subgradient at exactly 0 is 0."""
    mask = x.values > 0.0
    out = _wrap(np.where(mask, x.values, 0.0))

    def rule(g):
        return (g * mask,)

    return _record(out, (x,), rule)


def sigmoid(x: Tensor) -> Tensor:
    """1/(1+e^-x), evaluated per sign so |x| up to ~1e3 stays finite."""
    v = x.values
    s = np.empty_like(v)
    pos = v >= 0.0
    s[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    s[~pos] = ev / (1.0 + ev)
    out = _wrap(s)

    def rule(g):
        return (g * s * (1.0 - s),)

    return _record(out, (x,), rule)


def softmax(x: Tensor) -> Tensor:
    """Row-wise softmax, shifted by the row max for stability."""
    v = x.values
    e = np.exp(v - v.max(axis=1, keepdims=True))
    s = e / e.sum(axis=1, keepdims=True)
    out = _wrap(s)

    def rule(g):
        return (s * (g - (g * s).sum(axis=1, keepdims=True)),)

    return _record(out, (x,), rule)


def exp(x: Tensor) -> Tensor:
    ev = np.exp(x.values)
    out = _wrap(ev)

    def rule(g):
        return (g * ev,)

    return _record(out, (x,), rule)


def log(x: Tensor) -> Tensor:
    """Natural log; inputs must be strictly positive (clip first if unsure)."""
    v = x.values
    if v.size and v.min() <= 0.0:
        raise DomainError(f"log needs strictly positive inputs, min was {v.min()}")
    out = _wrap(np.log(v))

    def rule(g):
        return (g / v,)

    return _record(out, (x,), rule)


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp into [lo, hi]; gradient passes through where x is inside the range."""
    if not lo < hi:
        raise DomainError(f"clip needs lo < hi, got [{lo}, {hi}]")
    v = x.values
    mask = (v >= lo) & (v <= hi)
    out = _wrap(np.clip(v, lo, hi))

    def rule(g):
        return (g * mask,)

    return _record(out, (x,), rule)


def square(x: Tensor) -> Tensor:
    v = x.values
    out = _wrap(v * v)

    def rule(g):
        return (2.0 * v * g,)

    return _record(out, (x,), rule)


def reduce_mean(x: Tensor) -> Tensor:
    """Mean of all elements as a 1x1 tensor; backward spreads grad/(rows*cols)."""
    v = x.values
    if v.size == 0:
        raise DomainError("reduce_mean of an empty tensor")
    out = _wrap(np.array([[v.mean()]]))
    inv = 1.0 / v.size

    def rule(g):
        return (np.full_like(v, g[0, 0] * inv),)

    return _record(out, (x,), rule)


def reduce_sum(x: Tensor) -> Tensor:
    """Sum of all elements as a 1x1 tensor."""
    v = x.values
    if v.size == 0:
        raise DomainError("reduce_sum of an empty tensor")
    out = _wrap(np.array([[v.sum()]]))

    def rule(g):
        return (np.full_like(v, g[0, 0]),)

    return _record(out, (x,), rule)


def mean_exp_scale(x: Tensor, c: float) -> Tensor:
    """mean(exp(c * x)) as a single 1x1-producing operation.

    Fuses the scale, exponential, and mean so kernel-matrix reductions touch
    the large array a minimal number of times; backward is (g c / size) e^(cx).
    """
    v = x.values
    if v.size == 0:
        raise DomainError("mean_exp_scale of an empty tensor")
    c = float(c)
    e = v * c
    np.exp(e, out=e)
    out = _wrap(np.array([[e.mean()]]))
    coeff = c / v.size

    def rule(g):
        return ((float(g[0, 0]) * coeff) * e,)

    return _record(out, (x,), rule)


def pairwise_sq_dists(a: Tensor, b: Tensor) -> Tensor:
    """All squared Euclidean distances between rows of a [n x d] and b [m x d].

    Forward uses the expansion |u-v|^2 = |u|^2 + |v|^2 - 2 u.v; the backward
    rule is the hand-derived gradient of sum(G * D).
    """
    av, bv = a.values, b.values
    if av.shape[1] != bv.shape[1]:
        raise ShapeError(
            f"pairwise_sq_dists feature dims disagree: {av.shape} vs {bv.shape}"
        )
    if av.shape[0] == 0 or bv.shape[0] == 0:
        raise DomainError("pairwise_sq_dists needs nonempty batches")
    aa = (av * av).sum(axis=1, keepdims=True)
    bb = (bv * bv).sum(axis=1, keepdims=True)
    # build -2 a b^T in place, then add the squared norms row/column-wise
    d = av @ bv.T
    d *= -2.0
    d += aa
    d += bb.T
    out = _wrap(d)

    def rule(g):
        da = 2.0 * (g.sum(axis=1, keepdims=True) * av - g @ bv)
        db = 2.0 * (g.sum(axis=0)[:, None] * bv - g.T @ av)
        return da, db

    return _record(out, (a, b), rule)


def backward(loss: Tensor, tape: Tape) -> None:
    """Functional form of :meth:`Tape.backward`."""
    tape.backward(loss)


def check_gradients(
    f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5
) -> float:
    """Compare analytic gradients of a scalar function against central differences.

    Returns the max over elements of |analytic - numeric| / max(1, |analytic|),
    with numeric = (f(x + eps e_i) - f(x - eps e_i)) / (2 eps). ``f`` must be
    deterministic; it is re-evaluated 2 times per element.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise DomainError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    with Tape() as tape:
        loss = f(x)
    tape.backward(loss)
    analytic = x.grad.copy()

    flat = x.values.reshape(-1)
    numeric = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        with Tape():
            hi = f(x).values[0, 0]
        flat[i] = orig - eps
        with Tape():
            lo = f(x).values[0, 0]
        flat[i] = orig
        numeric[i] = (hi - lo) / (2.0 * eps)
    numeric = numeric.reshape(x.values.shape)
    denom = np.maximum(1.0, np.abs(analytic))
    return float((np.abs(analytic - numeric) / denom).max())
