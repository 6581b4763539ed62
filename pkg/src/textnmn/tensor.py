"""Dense double-precision tensors with tape-based reverse-mode differentiation.

Every operation below computes its result eagerly. When a :class:`Tape` is
active on the current thread the application is also recorded, so that
:func:`backward` can walk the records in reverse and :meth:`Tape.replay` can
recompute the forward pass from the leaf values.

    >>> x = Tensor([3.0], requires_grad=True)
    >>> with Tape() as tape:
    ...     loss = scale(mul(x, x), 0.5)
    >>> backward(loss, tape)
    >>> x.grad
    array([3.])
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy.special import expit


class Tensor:
    """A row-major float64 array with an optional gradient slot."""

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class Record:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    forward: Callable[..., np.ndarray]
    backward: Callable[..., tuple]


@dataclass
class Tape:
    """Ordered log of primitive applications; confined to one thread."""

    records: list[Record] = field(default_factory=list)
    _ids: dict[int, int] = field(default_factory=dict, repr=False)
    _keep: list[Tensor] = field(default_factory=list, repr=False)

    def node_id(self, t: Tensor) -> int:
        key = id(t)
        if key not in self._ids:
            self._ids[key] = len(self._ids)
            self._keep.append(t)
        return self._ids[key]

    def record(self, rec: Record) -> None:
        for t in rec.inputs:
            self.node_id(t)
        self.node_id(rec.output)
        self.records.append(rec)

    def edges(self) -> list[tuple[str, tuple[int, ...], int]]:
        """(op, input node ids, output node id) per record, in tape order."""
        return [
            (r.op, tuple(self._ids[id(t)] for t in r.inputs), self._ids[id(r.output)])
            for r in self.records
        ]

    def replay(self) -> None:
        """Recompute every recorded output in place from the current leaf values."""
        for r in self.records:
            r.output.data = r.forward(*[t.data for t in r.inputs])

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc):
        popped = _stack().pop()
        assert popped is self


_local = threading.local()


def _stack() -> list:
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


def current_tape() -> Tape | None:
    s = _stack()
    return s[-1] if s else None


class no_tape:
    """Suspend recording on this thread (used for finite-difference probes)."""

    def __enter__(self):
        self._saved = list(_stack())
        _stack().clear()

    def __exit__(self, *exc):
        _stack().extend(self._saved)


def _apply(op: str, fwd, bwd, *inputs) -> Tensor:
    tensors = tuple(as_tensor(x) for x in inputs)
    out = Tensor.__new__(Tensor)
    out.data = fwd(*[t.data for t in tensors])
    out.requires_grad = False
    out.grad = None
    out.name = None
    tape = current_tape()
    if tape is not None:
        tape.record(Record(op, tensors, out, fwd, bwd))
    return out


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# -- elementwise ----------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("add", a, b)
    return _apply("add", np.add, lambda g, x, y, out: (g, g), a, b)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("sub", a, b)
    return _apply("sub", np.subtract, lambda g, x, y, out: (g, -g), a, b)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("mul", a, b)
    return _apply("mul", np.multiply, lambda g, x, y, out: (g * y, g * x), a, b)


def elementwise_binary(op: str, a, b) -> Tensor:
    if op == "add":
        return add(a, b)
    if op == "mul":
        return mul(a, b)
    raise ValueError(f"unknown elementwise op {op!r}")


def scale(x, c: float) -> Tensor:
    c = float(c)
    return _apply("scale", lambda v: v * c, lambda g, v, out: (g * c,), x)


def add_const(x, c: float) -> Tensor:
    c = float(c)
    return _apply("add_const", lambda v: v + c, lambda g, v, out: (g,), x)


def div_scalar(x, s) -> Tensor:
    """x / s for a single-element tensor s."""
    s = as_tensor(s)
    if s.size != 1:
        raise ValueError(f"div_scalar: divisor must have one element, got {s.shape}")

    def bwd(g, v, d, out):
        return g / d[0], np.array([-np.sum(g * v) / (d[0] * d[0])])

    return _apply("div_scalar", lambda v, d: v / d[0], bwd, x, s)


def mul_rows(m, v) -> Tensor:
    """Scale every row of an (n, k) matrix elementwise by a length-k vector."""
    m, v = as_tensor(m), as_tensor(v)
    if m.data.ndim != 2 or v.shape != (m.shape[1],):
        raise ValueError(f"mul_rows: cannot broadcast {v.shape} over rows of {m.shape}")
    return _apply(
        "mul_rows",
        lambda a, b: a * b[None, :],
        lambda g, a, b, out: (g * b[None, :], np.sum(g * a, axis=0)),
        m, v,
    )


# -- activations ----------------------------------------------------------

def relu(x) -> Tensor:
    # subgradient at 0 is 0
    return _apply("relu", lambda v: np.maximum(v, 0.0), lambda g, v, out: (g * (v > 0),), x)


def sigmoid(x) -> Tensor:
    return _apply("sigmoid", expit, lambda g, v, out: (g * out * (1.0 - out),), x)


def tanh(x) -> Tensor:
    return _apply("tanh", np.tanh, lambda g, v, out: (g * (1.0 - out * out),), x)


_ACTIVATIONS = {"relu": relu, "sigmoid": sigmoid, "tanh": tanh}


def activation(kind: str, x) -> Tensor:
    try:
        return _ACTIVATIONS[kind](x)
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None


# -- linear algebra -------------------------------------------------------

def matvec(w, x, b=None) -> Tensor:
    """W @ x (+ b) for W of shape (m, n) and x of shape (n,)."""
    w, x = as_tensor(w), as_tensor(x)
    if w.data.ndim != 2 or x.data.ndim != 1 or w.shape[1] != x.shape[0]:
        raise ValueError(f"matvec: cannot apply {w.shape} to {x.shape}")
    out = _apply(
        "matvec",
        lambda a, v: a @ v,
        lambda g, a, v, out: (np.outer(g, v), a.T @ g),
        w, x,
    )
    if b is not None:
        b = as_tensor(b)
        if b.shape != (w.shape[0],):
            raise ValueError(f"matvec: bias shape {b.shape} does not match {w.shape[0]} rows")
        out = add(out, b)
    return out


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return _apply("matmul", np.matmul, lambda g, x, y, out: (g @ y.T, x.T @ g), a, b)


def transpose(x) -> Tensor:
    return _apply("transpose", lambda v: v.T.copy(), lambda g, v, out: (g.T.copy(),), x)


# -- reductions, reshaping, indexing --------------------------------------

def sum_all(x) -> Tensor:
    return _apply(
        "sum",
        lambda v: np.array([v.sum()]),
        lambda g, v, out: (np.full(v.shape, g[0]),),
        x,
    )


def reshape(x, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    return _apply(
        "reshape",
        lambda v: v.reshape(shape).copy(),
        lambda g, v, out: (g.reshape(v.shape),),
        x,
    )


def take(x, index) -> Tensor:
    """Gather rows of x along axis 0; an int index drops that axis."""
    idx = index if isinstance(index, (int, np.integer)) else np.asarray(index, dtype=np.int64)

    def bwd(g, v, out):
        full = np.zeros_like(v)
        np.add.at(full, idx, g)
        return (full,)

    return _apply("take", lambda v: v[idx].copy(), bwd, x)


def concat(tensors: Sequence) -> Tensor:
    """Join 1-d tensors end to end."""
    parts = [as_tensor(t) for t in tensors]
    if any(p.data.ndim != 1 for p in parts):
        raise ValueError("concat joins 1-d tensors only")
    cuts = np.cumsum([p.size for p in parts])[:-1]
    return _apply(
        "concat",
        lambda *vs: np.concatenate(vs),
        lambda g, *rest: tuple(np.split(g, cuts)),
        *parts,
    )


def stack(tensors: Sequence) -> Tensor:
    """Stack equal-length 1-d tensors into the rows of a matrix."""
    parts = [as_tensor(t) for t in tensors]
    return _apply(
        "stack",
        lambda *vs: np.stack(vs),
        lambda g, *rest: tuple(g[i] for i in range(len(parts))),
        *parts,
    )


# -- probability ----------------------------------------------------------

def masked_softmax(scores, mask: Sequence[bool] | None = None) -> Tensor:
    """Softmax over the positions where ``mask`` is true; the rest are exactly 0."""
    scores = as_tensor(scores)
    if scores.data.ndim != 1:
        raise ValueError(f"masked_softmax expects a vector, got {scores.shape}")
    keep = np.ones(scores.size, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if keep.shape != scores.shape:
        raise ValueError(f"mask length {keep.size} does not match scores {scores.shape}")
    if not keep.any():
        raise ValueError("masked_softmax: every position is masked")

    def fwd(s):
        out = np.zeros_like(s)
        z = s[keep] - np.max(s[keep])
        e = np.exp(z)
        out[keep] = e / e.sum()
        return out

    def bwd(g, s, p):
        return (p * (g - np.dot(g, p)),)

    return _apply("masked_softmax", fwd, bwd, scores)


def softmax(scores) -> Tensor:
    return masked_softmax(scores, None)


def neg_log_prob(dist, target: int, floor: float = 1e-12) -> Tensor:
    """-log(max(dist[target], floor)) as a one-element tensor."""
    target = int(target)

    def fwd(p):
        return np.array([-np.log(max(p[target], floor))])

    def bwd(g, p, out):
        full = np.zeros_like(p)
        if p[target] > floor:
            full[target] = -g[0] / p[target]
        return (full,)

    return _apply("neg_log_prob", fwd, bwd, dist)


# -- differentiation ------------------------------------------------------

def backward(loss: Tensor, tape: Tape, params: Iterable[Tensor] = ()) -> None:
    """Write d(loss)/d(t) into ``t.grad`` for every requires_grad leaf on the tape.

    Tensors in ``params`` that the loss does not reach get a zero gradient.
    """
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if id(loss) not in tape._ids:
        raise ValueError("loss was not produced on this tape")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for rec in reversed(tape.records):
        g = grads.pop(id(rec.output), None)
        if g is None:
            continue
        in_grads = rec.backward(g, *[t.data for t in rec.inputs], rec.output.data)
        for t, gi in zip(rec.inputs, in_grads):
            if gi is None:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = np.asarray(gi, dtype=np.float64).reshape(t.shape)
    for t in params:
        t.grad = np.zeros_like(t.data)
    for t in tape._keep:
        if t.requires_grad:
            g = grads.get(id(t))
            t.grad = np.zeros_like(t.data) if g is None else g.copy()


class GradientCheckError(ValueError):
    pass


def gradient_check(
    f: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    epsilon: float = 1e-6,
) -> float:
    """Max relative error between tape gradients and central differences.

    The error per entry is |analytic - numeric| / max(1, |analytic|, |numeric|).
    ``f`` must be deterministic and read the tensors in ``params``.
    """
    if not 1e-7 <= epsilon <= 1e-4:
        raise ValueError(f"epsilon {epsilon} outside [1e-7, 1e-4]")
    tensors = dict(params.items())
    for t in tensors.values():
        t.requires_grad = True
    with Tape() as tape:
        loss = f()
    backward(loss, tape, tensors.values())
    worst = 0.0
    with no_tape():
        for name, t in tensors.items():
            analytic = t.grad.reshape(-1)
            flat = t.data.reshape(-1)
            if not np.all(np.isfinite(analytic)):
                raise GradientCheckError(f"non-finite analytic gradient in {name}")
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + epsilon
                up = f().item()
                flat[i] = orig - epsilon
                down = f().item()
                flat[i] = orig
                numeric = (up - down) / (2 * epsilon)
                if not np.isfinite(numeric):
                    raise GradientCheckError(f"non-finite numeric gradient in {name}[{i}]")
                a = analytic[i]
                err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
                worst = max(worst, err)
    return worst
