"""Reverse-mode gradient engine over float64 ndarrays.

A ``Tape`` records primitive operations in creation order, which is already
a topological order, so one reverse sweep propagates gradients with each
node visited exactly once. Operands may be ``Node`` instances or plain
arrays/floats; plain values are captured as constants without tape entries.
Tapes are rebuilt per forward pass and must not be shared across threads.

Kink-bearing primitives (relu, abs, clamp) record their smallest distance
to a non-differentiable point so finite-difference checks can skip
unreliable components.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteValueError


class Node:
    __slots__ = ("tape", "value", "grad", "op", "index", "_parents", "_backward")

    def __init__(self, tape, value, op, index):
        self.tape = tape
        self.value = value
        self.grad = None
        self.op = op
        self.index = index
        self._parents = ()
        self._backward = None

    def add_grad(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g

    def __repr__(self):
        return f"Node#{self.index}({self.op}, shape={np.shape(self.value)})"


class Tape:
    def __init__(self, check_finite: bool = True):
        self.nodes: list[Node] = []
        self.check_finite = check_finite
        self.kink_distance = math.inf

    def _register(self, value, op) -> Node:
        value = np.asarray(value, dtype=float)
        node = Node(self, value, op, len(self.nodes))
        if self.check_finite and not np.all(np.isfinite(value)):
            raise NonFiniteValueError(
                f"non-finite value produced by node #{node.index} ({op})"
            )
        self.nodes.append(node)
        return node

    def param(self, value) -> Node:
        return self._register(value, "param")

    def note_kink(self, distance: float):
        if distance < self.kink_distance:
            self.kink_distance = distance

    def backward(self, loss: Node) -> None:
        """Seed d(loss)/d(loss)=1 and sweep the tape once in reverse."""
        if loss.tape is not self:
            raise ValueError("loss node belongs to a different tape")
        if loss.value.size != 1:
            raise ValueError(f"loss must be scalar, got shape {loss.value.shape}")
        loss.grad = np.ones_like(loss.value)
        for node in reversed(self.nodes):
            if node.grad is not None and node._backward is not None:
                node._backward(node.grad)


def _val(x):
    return x.value if isinstance(x, Node) else np.asarray(x, dtype=float)


def _make(op, value, backward_pairs):
    """backward_pairs: ((operand, fn g -> contribution), ...); constants are
    dropped. With no Node operand at all the op const-folds: the plain
    ndarray result is returned and nothing is recorded, which lets the same
    forward code run with any subset of parameters held fixed."""
    pairs = tuple((p, fn) for p, fn in backward_pairs if isinstance(p, Node))
    if not pairs:
        return np.asarray(value, dtype=float)
    tape = pairs[0][0].tape
    node = tape._register(value, op)
    if pairs:
        node._parents = tuple(p for p, _ in pairs)

        def _backward(g):
            for parent, fn in pairs:
                parent.add_grad(fn(g))

        node._backward = _backward
    return node


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(
        i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1
    )
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---- arithmetic -------------------------------------------------------------

def add(a, b):
    av, bv = _val(a), _val(b)
    return _make(
        "add",
        av + bv,
        ((a, lambda g: _unbroadcast(g, av.shape)), (b, lambda g: _unbroadcast(g, bv.shape))),
    )


def sub(a, b):
    av, bv = _val(a), _val(b)
    return _make(
        "sub",
        av - bv,
        ((a, lambda g: _unbroadcast(g, av.shape)), (b, lambda g: _unbroadcast(-g, bv.shape))),
    )


def mul(a, b):
    av, bv = _val(a), _val(b)
    return _make(
        "mul",
        av * bv,
        (
            (a, lambda g: _unbroadcast(g * bv, av.shape)),
            (b, lambda g: _unbroadcast(g * av, bv.shape)),
        ),
    )


def div(a, b):
    av, bv = _val(a), _val(b)
    return _make(
        "div",
        av / bv,
        (
            (a, lambda g: _unbroadcast(g / bv, av.shape)),
            (b, lambda g: _unbroadcast(-g * av / (bv * bv), bv.shape)),
        ),
    )


def neg(a):
    av = _val(a)
    return _make("neg", -av, ((a, lambda g: -g),))


def power(a, exponent: float):
    av = _val(a)
    return _make(
        "power",
        av ** exponent,
        ((a, lambda g: g * exponent * av ** (exponent - 1)),),
    )


def matmul(a, b):
    """2-D @ 2-D or 2-D @ 1-D."""
    av, bv = _val(a), _val(b)
    value = av @ bv
    if bv.ndim == 1:
        pairs = (
            (a, lambda g: np.outer(g, bv) if av.ndim == 2 else g * bv),
            (b, lambda g: av.T @ g),
        )
    else:
        pairs = ((a, lambda g: g @ bv.T), (b, lambda g: av.T @ g))
    return _make("matmul", value, pairs)


def affine(x, w, bias):
    """x @ w + bias, fused."""
    xv, wv, bv = _val(x), _val(w), _val(bias)
    return _make(
        "affine",
        xv @ wv + bv,
        (
            (x, lambda g: g @ wv.T),
            (w, lambda g: xv.T @ g),
            (bias, lambda g: _unbroadcast(g, bv.shape)),
        ),
    )


# ---- nonlinearities ---------------------------------------------------------

def relu(a):
    av = _val(a)
    if isinstance(a, Node) and av.size:
        a.tape.note_kink(float(np.min(np.abs(av))))
    return _make("relu", np.maximum(av, 0.0), ((a, lambda g: g * (av > 0.0)),))


def tanh(a):
    av = _val(a)
    t = np.tanh(av)
    return _make("tanh", t, ((a, lambda g: g * (1.0 - t * t)),))


def exp(a):
    av = _val(a)
    e = np.exp(av)
    return _make("exp", e, ((a, lambda g: g * e),))


def sin(a):
    av = _val(a)
    return _make("sin", np.sin(av), ((a, lambda g: g * np.cos(av)),))


def absolute(a):
    av = _val(a)
    if isinstance(a, Node) and av.size:
        a.tape.note_kink(float(np.min(np.abs(av))))
    return _make("abs", np.abs(av), ((a, lambda g: g * np.sign(av)),))


def clamp(a, lo: float, hi: float):
    av = _val(a)
    if isinstance(a, Node) and av.size:
        a.tape.note_kink(
            float(min(np.min(np.abs(av - lo)), np.min(np.abs(av - hi))))
        )
    inside = (av > lo) & (av < hi)
    return _make("clamp", np.clip(av, lo, hi), ((a, lambda g: g * inside),))


# ---- reductions and plumbing ------------------------------------------------

def reduce_sum(a, axis=None):
    av = _val(a)

    def back(g):
        if axis is None:
            return np.broadcast_to(g, av.shape).copy()
        return np.broadcast_to(np.expand_dims(g, axis), av.shape).copy()

    return _make("sum", np.sum(av, axis=axis), ((a, back),))


def reduce_mean(a, axis=None):
    av = _val(a)
    count = av.size if axis is None else av.shape[axis]

    def back(g):
        if axis is None:
            return np.broadcast_to(g / count, av.shape).copy()
        return np.broadcast_to(np.expand_dims(g, axis) / count, av.shape).copy()

    return _make("mean", np.mean(av, axis=axis), ((a, back),))


def reshape(a, shape):
    av = _val(a)
    return _make("reshape", av.reshape(shape), ((a, lambda g: g.reshape(av.shape)),))


def gather_cols(a, idx):
    """(n, k) -> (n, len(idx)); repeated indices accumulate on backward."""
    av = _val(a)
    idx = np.asarray(idx, dtype=np.intp)

    def back(g):
        out = np.zeros_like(av)
        np.add.at(out, (slice(None), idx), g)
        return out

    return _make("gather_cols", av[:, idx], ((a, back),))


def tile_rows(a, reps: int):
    """(u, c) -> (reps*u, c) by block repetition."""
    av = _val(a)
    u, c = av.shape

    def back(g):
        return g.reshape(reps, u, c).sum(axis=0)

    return _make("tile_rows", np.tile(av, (reps, 1)), ((a, back),))


def embed_rows(a, rows, base):
    """Place a's rows at ``rows`` within a constant copy of ``base``.

    Only the embedded rows are differentiable; the remaining rows keep the
    base values and receive no gradient.
    """
    av = _val(a)
    rows = np.asarray(rows, dtype=np.intp)
    value = np.array(base, dtype=float, copy=True)
    value[rows] = av

    def back(g):
        return g[rows]

    return _make("embed_rows", value, ((a, back),))


def put_input(v, elec):
    """(n, u) signal matrix -> (n*u, 7) with column elec[u] carrying v[:, u]."""
    from .devices import N_ELECTRODES

    vv = _val(v)
    n, u = vv.shape
    elec = np.asarray(elec, dtype=np.intp)
    cols = np.arange(u)
    out = np.zeros((n * u, N_ELECTRODES))
    out.reshape(n, u, N_ELECTRODES)[:, cols, elec] = vv

    def back(g):
        return g.reshape(n, u, N_ELECTRODES)[:, cols, elec]

    return _make("put_input", out, ((v, back),))


def place_controls(c, elec):
    """(u, 6) controls -> (u, 7) with zeros on each unit's input electrode."""
    from .devices import N_CONTROLS, N_ELECTRODES

    cv = _val(c)
    u = cv.shape[0]
    elec = np.asarray(elec, dtype=np.intp)
    slot_idx = np.empty((u, N_CONTROLS), dtype=np.intp)
    for i in range(u):
        slot_idx[i] = [e for e in range(N_ELECTRODES) if e != elec[i]]
    rows = np.arange(u)[:, None]
    out = np.zeros((u, N_ELECTRODES))
    out[rows, slot_idx] = cv

    def back(g):
        return g[rows, slot_idx]

    return _make("place_controls", out, ((c, back),))


# ---- parameters -------------------------------------------------------------

@dataclass
class _Entry:
    sl: slice
    shape: tuple
    lower_value: float
    upper_value: float


class ParamSet:
    """Flat trainable vector with named views and per-entry box constraints."""

    def __init__(self):
        self._entries: dict[str, _Entry] = {}
        self.vector = np.zeros(0)
        self.lower = np.zeros(0)
        self.upper = np.zeros(0)
        self._last_leaves: dict[str, Node] | None = None

    def add(self, name: str, value, lower=-math.inf, upper=math.inf):
        if name in self._entries:
            raise ValueError(f"parameter {name!r} registered twice")
        value = np.asarray(value, dtype=float)
        start = self.vector.size
        sl = slice(start, start + value.size)
        self._entries[name] = _Entry(sl, value.shape, lower, upper)
        self.vector = np.concatenate([self.vector, value.ravel()])
        self.lower = np.concatenate(
            [self.lower, np.broadcast_to(np.asarray(lower, dtype=float), value.shape).ravel()]
        )
        self.upper = np.concatenate(
            [self.upper, np.broadcast_to(np.asarray(upper, dtype=float), value.shape).ravel()]
        )

    def names(self):
        return list(self._entries)

    def slice_of(self, name: str) -> slice:
        return self._entries[name].sl

    def __len__(self):
        return self.vector.size

    def __contains__(self, name):
        return name in self._entries

    def get(self, name: str) -> np.ndarray:
        e = self._entries[name]
        return self.vector[e.sl].reshape(e.shape)

    def set(self, name: str, value):
        e = self._entries[name]
        self.vector[e.sl] = np.asarray(value, dtype=float).ravel()

    def copy(self) -> "ParamSet":
        out = ParamSet()
        out._entries = dict(self._entries)
        out.vector = self.vector.copy()
        out.lower = self.lower.copy()
        out.upper = self.upper.copy()
        return out

    def project(self, vector: np.ndarray) -> np.ndarray:
        """Clip onto the box constraints (control-voltage ranges)."""
        return np.clip(vector, self.lower, self.upper)

    def leaves(self, tape: Tape) -> dict[str, Node]:
        """Create one tape leaf per named parameter from the current vector."""
        out = {name: tape.param(self.get(name)) for name in self._entries}
        self._last_leaves = out
        return out

    def gather(self, leaves: dict[str, Node]) -> np.ndarray:
        g = np.zeros_like(self.vector)
        for name, node in leaves.items():
            e = self._entries[name]
            if node.grad is not None:
                g[e.sl] = node.grad.ravel()
        return g


def grad(loss: Node, params: ParamSet) -> np.ndarray:
    """Backward sweep; returns d(loss)/d(p) for the leaves last created by
    ``params.leaves(...)`` on the loss's tape."""
    if params._last_leaves is None:
        raise ValueError("params.leaves(tape) was never called for this ParamSet")
    loss.tape.backward(loss)
    return params.gather(params._last_leaves)


# ---- finite differences -----------------------------------------------------

KINK_SKIP_DISTANCE = 1e-7
SKIPPED = "non-differentiable point skipped"

@dataclass
class FdComponent:
    index: int
    autodiff: float
    central: float
    rel_error: float
    status: str  # "pass" | "fail" | SKIPPED


@dataclass
class FdReport:
    components: list = field(default_factory=list)
    tolerance: float = 0.0
    h: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.status != "fail" for c in self.components)

    @property
    def max_rel_error(self) -> float:
        checked = [c.rel_error for c in self.components if c.status != SKIPPED]
        return max(checked) if checked else 0.0

    @property
    def n_skipped(self) -> int:
        return sum(1 for c in self.components if c.status == SKIPPED)


def finite_difference_check(f, params: ParamSet, h: float = 1e-5,
                            tolerance: float = 1e-6) -> FdReport:
    """Compare reverse-mode gradients of ``f(tape, leaves) -> loss node``
    against central differences, component by component.

    Components whose base or shifted evaluations pass within
    ``KINK_SKIP_DISTANCE`` of a relu/abs/clamp kink are reported as skipped.
    """
    if h <= 0:
        raise ValueError(f"step h must be positive, got {h}")
    tape = Tape()
    leaves = params.leaves(tape)
    loss = f(tape, leaves)
    auto = grad(loss, params)
    base_kink = tape.kink_distance

    def eval_at(vector):
        probe = params.copy()
        probe.vector[:] = vector
        t = Tape()
        value = f(t, probe.leaves(t)).value
        return float(value), t.kink_distance

    report = FdReport(tolerance=tolerance, h=h)
    x0 = params.vector
    for i in range(x0.size):
        shift = np.zeros_like(x0)
        shift[i] = h
        f_plus, kink_plus = eval_at(x0 + shift)
        f_minus, kink_minus = eval_at(x0 - shift)
        central = (f_plus - f_minus) / (2.0 * h)
        denom = max(abs(auto[i]), abs(central), 1e-12)
        rel = abs(auto[i] - central) / denom
        if min(base_kink, kink_plus, kink_minus) < KINK_SKIP_DISTANCE:
            status = SKIPPED
        else:
            status = "pass" if rel < tolerance else "fail"
        report.components.append(FdComponent(i, float(auto[i]), central, rel, status))
    return report
