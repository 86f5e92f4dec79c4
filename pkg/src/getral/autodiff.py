"""Minimal dense-matrix reverse-mode differentiation.

Everything is a 2-D float64 array: scalars are (1,1), row vectors (1,n),
column vectors (n,1). A :class:`Tape` records primitive applications while
active; :func:`backward` replays them in exact reverse order and keeps the
gradient of every node, intermediates included (the adversarial step
differentiates w.r.t. an intermediate evidence representation, so nothing
is freed).

The public primitive set is dispatched by :func:`primitive`. A few
internal ops beyond that set (``transpose``, ``concat_rows``,
``kernel_pool``) exist for row/column plumbing and the fused Gaussian
pooling hot path; they follow the same recording rules and are
grad-checked in the test suite.
"""

from __future__ import annotations

import numpy as np

from . import backend

LOG_EPS = 1e-12
PROB_LO = 1e-12
PROB_HI = 1.0 - 1e-12


class AutodiffError(Exception):
    pass


class ShapeError(AutodiffError):
    pass


class DomainError(AutodiffError):
    pass


class TapeError(AutodiffError):
    pass


_TAPE_STACK: list["Tape"] = []


def _active_tape():
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class Tape:
    """Ordered record of primitive applications plus gradient bookkeeping.

    Entries are (kind, input node ids, output node id, vjp). Recording
    order is topological by construction; backward walks it reversed.
    Tapes are context managers: ops executed inside the block record onto
    the innermost active tape.
    """

    def __init__(self):
        self._entries = []
        self._n_nodes = 0

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def _new_node(self):
        node = self._n_nodes
        self._n_nodes += 1
        return node

    def watch(self, values):
        """Register ``values`` as a tracked leaf and return its Tensor."""
        arr = _as_matrix(values)
        return Tensor(arr, tape=self, node=self._new_node())

    def __len__(self):
        return len(self._entries)


def _as_matrix(values):
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeError(f"tensors are 2-D matrices, got shape {arr.shape}")
    return arr


class Tensor:
    """A dense float64 matrix, optionally tracked on a tape.

    ``node`` is None for constants. Values must stay finite; primitives
    raise on domain violations instead of producing NaN/Inf.
    """

    __slots__ = ("values", "tape", "node")

    def __init__(self, values, tape=None, node=None):
        self.values = _as_matrix(values)
        self.tape = tape
        self.node = node

    @property
    def shape(self):
        return self.values.shape

    def __repr__(self):
        tag = f" node={self.node}" if self.node is not None else ""
        return f"Tensor(shape={self.shape}{tag})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scalar_mul(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return scalar_mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def constant(values):
    return Tensor(values)


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(kind, out_values, inputs, vjp):
    tape = _active_tape()
    tracked = tape is not None and any(
        t.node is not None and t.tape is tape for t in inputs
    )
    if not tracked:
        return Tensor(out_values)
    node = tape._new_node()
    tape._entries.append((kind, tuple(t.node if t.tape is tape else None for t in inputs), node, vjp))
    return Tensor(out_values, tape=tape, node=node)


def _unbroadcast(grad, shape):
    """Sum ``grad`` back down to ``shape`` along broadcast axes."""
    if grad.shape == shape:
        return grad
    out = grad
    if shape[0] == 1 and out.shape[0] != 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and out.shape[1] != 1:
        out = out.sum(axis=1, keepdims=True)
    if out.shape != shape:
        raise ShapeError(f"cannot reduce gradient {grad.shape} to {shape}")
    return out


def _broadcastable(sa, sb):
    return all(da == db or da == 1 or db == 1 for da, db in zip(sa, sb))


# ---------------------------------------------------------------------------
# primitives


def matmul(a, b):
    a, b = _wrap(a), _wrap(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    av, bv = a.values, b.values
    out = av @ bv

    def vjp(g):
        return g @ bv.T, av.T @ g

    return _record("matmul", out, (a, b), vjp)


def _elementwise_pair(kind, a, b):
    a, b = _wrap(a), _wrap(b)
    if not _broadcastable(a.shape, b.shape):
        raise ShapeError(f"{kind}: shapes {a.shape} and {b.shape} do not broadcast")
    return a, b


def add(a, b):
    a, b = _elementwise_pair("add", a, b)
    out = a.values + b.values
    sa, sb = a.shape, b.shape

    def vjp(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _record("add", out, (a, b), vjp)


def sub(a, b):
    a, b = _elementwise_pair("sub", a, b)
    out = a.values - b.values
    sa, sb = a.shape, b.shape

    def vjp(g):
        return _unbroadcast(g, sa), _unbroadcast(-g, sb)

    return _record("sub", out, (a, b), vjp)


def mul(a, b):
    a, b = _elementwise_pair("elementwise-mul", a, b)
    av, bv = a.values, b.values
    out = av * bv
    sa, sb = a.shape, b.shape

    def vjp(g):
        return _unbroadcast(g * bv, sa), _unbroadcast(g * av, sb)

    return _record("elementwise-mul", out, (a, b), vjp)


def scalar_mul(a, c):
    a = _wrap(a)
    c = float(c)
    out = a.values * c

    def vjp(g):
        return (g * c,)

    return _record("scalar-mul", out, (a,), vjp)


def sigmoid(a):
    a = _wrap(a)
    av = a.values
    out = np.empty_like(av)
    pos = av >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-av[pos]))
    ea = np.exp(av[~pos])
    out[~pos] = ea / (1.0 + ea)

    def vjp(g):
        return (g * out * (1.0 - out),)

    return _record("sigmoid", out, (a,), vjp)


def tanh(a):
    a = _wrap(a)
    out = np.tanh(a.values)

    def vjp(g):
        return (g * (1.0 - out * out),)

    return _record("tanh", out, (a,), vjp)


def exp(a):
    a = _wrap(a)
    out = np.exp(a.values)

    def vjp(g):
        return (g * out,)

    return _record("exp", out, (a,), vjp)


def log(a):
    a = _wrap(a)
    av = a.values
    if np.any(av <= 0.0):
        raise DomainError("log: non-positive input; clamp first")

    def vjp(g):
        return (g / av,)

    return _record("log", np.log(av), (a,), vjp)


def softmax_last(a):
    """Row softmax (over the last axis)."""
    a = _wrap(a)
    shifted = a.values - a.values.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def vjp(g):
        inner = (g * out).sum(axis=1, keepdims=True)
        return (out * (g - inner),)

    return _record("softmax-over-last-axis", out, (a,), vjp)


def row_mean(a):
    """Mean over rows: (n,m) -> (1,m)."""
    a = _wrap(a)
    n = a.shape[0]
    out = a.values.mean(axis=0, keepdims=True)

    def vjp(g):
        return (np.repeat(g / n, n, axis=0),)

    return _record("row-mean", out, (a,), vjp)


def concat_cols(*tensors):
    """Concatenate along the last axis; all inputs share the row count."""
    ts = [_wrap(t) for t in tensors]
    rows = ts[0].shape[0]
    if any(t.shape[0] != rows for t in ts):
        raise ShapeError(
            "concat-last-axis: row counts differ: " + ", ".join(str(t.shape) for t in ts)
        )
    out = np.concatenate([t.values for t in ts], axis=1)
    widths = [t.shape[1] for t in ts]

    def vjp(g):
        pieces = []
        at = 0
        for w in widths:
            pieces.append(g[:, at:at + w])
            at += w
        return tuple(pieces)

    return _record("concat-last-axis", out, tuple(ts), vjp)


def gather_rows(a, indices):
    """Select rows by index; backward scatter-adds."""
    a = _wrap(a)
    idx = np.asarray(indices, dtype=np.intp).reshape(-1)
    if idx.size == 0:
        raise ShapeError("row-select/gather: empty index list")
    if idx.min() < 0 or idx.max() >= a.shape[0]:
        raise ShapeError(f"row-select/gather: index out of range for {a.shape[0]} rows")
    out = a.values[idx]
    shape = a.shape

    def vjp(g):
        ga = np.zeros(shape)
        np.add.at(ga, idx, g)
        return (ga,)

    return _record("row-select/gather", out, (a,), vjp)


def masked_fill(a, mask, value):
    """Replace entries where ``mask`` is True by ``value`` (no gradient there)."""
    a = _wrap(a)
    m = np.asarray(mask, dtype=bool)
    if m.shape != a.shape:
        raise ShapeError(f"masked-fill: mask shape {m.shape} != tensor shape {a.shape}")
    out = np.where(m, float(value), a.values)

    def vjp(g):
        return (np.where(m, 0.0, g),)

    return _record("masked-fill", out, (a,), vjp)


def cosine_rows(a, b):
    """M[i,j] = cosine(a_i, b_j); rows with norm < 1e-12 give 0."""
    a, b = _wrap(a), _wrap(b)
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"cosine-similarity-rows: feature dims differ, {a.shape} vs {b.shape}")
    av, bv = a.values, b.values
    out, na, nb = backend.cosine_rows_forward(av, bv)

    def vjp(g):
        return backend.cosine_rows_backward(av, bv, out, na, nb, g)

    return _record("cosine-similarity-rows", out, (a, b), vjp)


def l2_norm(a):
    """Frobenius norm as a (1,1) scalar; gradient 0 at the origin."""
    a = _wrap(a)
    av = a.values
    norm = float(np.sqrt((av * av).sum()))
    out = np.array([[norm]])

    def vjp(g):
        if norm < backend.NORM_EPS:
            return (np.zeros_like(av),)
        return (float(g[0, 0]) / norm * av,)

    return _record("l2-norm", out, (a,), vjp)


def clamp(a, lo=None, hi=None):
    """Clip to [lo, hi]; gradient passes where lo <= x <= hi."""
    a = _wrap(a)
    if lo is None and hi is None:
        raise AutodiffError("clamp: need at least one bound")
    av = a.values
    out = np.clip(av, lo, hi)
    keep = np.ones_like(av, dtype=bool)
    if lo is not None:
        keep &= av >= lo
    if hi is not None:
        keep &= av <= hi

    def vjp(g):
        return (np.where(keep, g, 0.0),)

    return _record("clamp", out, (a,), vjp)


# ---------------------------------------------------------------------------
# internal ops (not part of the public primitive kinds)


def transpose(a):
    a = _wrap(a)

    def vjp(g):
        return (g.T,)

    return _record("transpose", a.values.T.copy(), (a,), vjp)


def concat_rows(*tensors):
    """Stack along axis 0; all inputs share the column count."""
    ts = [_wrap(t) for t in tensors]
    cols = ts[0].shape[1]
    if any(t.shape[1] != cols for t in ts):
        raise ShapeError(
            "concat_rows: column counts differ: " + ", ".join(str(t.shape) for t in ts)
        )
    out = np.concatenate([t.values for t in ts], axis=0)
    heights = [t.shape[0] for t in ts]

    def vjp(g):
        pieces = []
        at = 0
        for h in heights:
            pieces.append(g[at:at + h])
            at += h
        return tuple(pieces)

    return _record("concat_rows", out, tuple(ts), vjp)


def kernel_pool(m, mus, sigmas):
    """Fused Gaussian kernel pooling over similarity rows (hot kernel).

    K[i,t] = log of the summed Gaussian responses of row i under kernel t,
    with the sum floored at 1e-12 per the engine's log-domain convention
    (zero gradient on the floor). Kernel means/widths are fixed.
    """
    m = _wrap(m)
    if m.shape[1] == 0:
        raise ShapeError("kernel_pool: empty claim (zero columns)")
    mus = np.asarray(mus, dtype=np.float64).reshape(-1)
    sigmas = np.asarray(sigmas, dtype=np.float64).reshape(-1)
    if mus.shape != sigmas.shape:
        raise ShapeError("kernel_pool: kernel means and widths differ in length")
    mv = m.values
    out = backend.kernel_pool_forward(mv, mus, sigmas)

    def vjp(g):
        return (backend.kernel_pool_backward(mv, mus, sigmas, out, g),)

    return _record("kernel_pool", out, (m,), vjp)


# ---------------------------------------------------------------------------
# composite helpers built from primitives


def sum_all(a):
    """Sum of all entries as a (1,1) scalar."""
    a = _wrap(a)
    n, m = a.shape
    col = matmul(a, constant(np.ones((m, 1))))
    return matmul(constant(np.ones((1, n))), col)


def mean_all(a):
    a = _wrap(a)
    return scalar_mul(sum_all(a), 1.0 / (a.shape[0] * a.shape[1]))


def logsumexp_all(a):
    """log(sum(exp(entries))) via a detached max shift (exact for any shift)."""
    a = _wrap(a)
    peak = float(a.values.max())
    return add(constant([[peak]]), log(sum_all(exp(sub(a, constant(np.full(a.shape, peak)))))))


PRIMITIVE_KINDS = {
    "matmul": matmul,
    "add": add,
    "sub": sub,
    "elementwise-mul": mul,
    "scalar-mul": scalar_mul,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "exp": exp,
    "log": log,
    "softmax-over-last-axis": softmax_last,
    "row-mean": row_mean,
    "concat-last-axis": concat_cols,
    "row-select/gather": gather_rows,
    "masked-fill": masked_fill,
    "cosine-similarity-rows": cosine_rows,
    "l2-norm": l2_norm,
    "clamp": clamp,
}


def primitive(kind, *inputs, **kwargs):
    """Apply a primitive by kind name. Records on the active tape when tracked."""
    try:
        fn = PRIMITIVE_KINDS[kind]
    except KeyError:
        raise AutodiffError(
            f"unknown primitive kind {kind!r}; valid kinds: {sorted(PRIMITIVE_KINDS)}"
        ) from None
    return fn(*inputs, **kwargs)


# ---------------------------------------------------------------------------
# backward and gradient checking


class Gradients:
    """Node-id -> gradient map produced by :func:`backward`."""

    def __init__(self, slots):
        self._slots = slots

    def get(self, node):
        if node is None or node >= len(self._slots):
            return None
        return self._slots[node]

    def of(self, tensor):
        """Gradient for ``tensor``; zeros when the loss does not depend on it."""
        if tensor.node is None:
            raise TapeError("tensor is a constant; it has no gradient slot")
        g = self.get(tensor.node)
        return np.zeros_like(tensor.values) if g is None else g


def backward(tape, loss):
    """Reverse sweep from ``loss``; returns gradients for every tracked node.

    May be called repeatedly on one tape with different roots (the
    adversarial step runs one backward per instance loss); each call uses
    fresh gradient slots. Entries whose output never receives a gradient
    are skipped, so a root only pays for its own ancestry.
    """
    if not isinstance(loss, Tensor) or loss.node is None or loss.tape is not tape:
        raise TapeError("loss is not tracked on this tape")
    if loss.values.size != 1:
        raise TapeError(f"loss must be scalar-shaped, got {loss.shape}")
    slots = [None] * tape._n_nodes
    slots[loss.node] = np.ones_like(loss.values)
    for _kind, in_nodes, out_node, vjp in reversed(tape._entries):
        g = slots[out_node]
        if g is None:
            continue
        for node, gi in zip(in_nodes, vjp(g)):
            if node is None or gi is None:
                continue
            slots[node] = gi if slots[node] is None else slots[node] + gi
    return Gradients(slots)


class GradCheckReport:
    def __init__(self, max_rel_err, passed, per_input=None):
        self.max_rel_err = max_rel_err
        self.passed = passed
        self.per_input = per_input or {}

    def __repr__(self):
        state = "pass" if self.passed else "FAIL"
        return f"GradCheckReport({state}, max_rel_err={self.max_rel_err:.3e})"


def _rel_err(a, n):
    return abs(a - n) / max(abs(a), abs(n), 1e-8)


def grad_check_inputs(f, points, step=1e-5, tol=1e-4):
    """Check analytic vs central-difference gradients of a scalar function.

    ``f`` maps a dict of Tensors (same keys as ``points``) to a scalar
    Tensor and must be deterministic; two differing evaluations raise.
    Every coordinate of every input is perturbed by ``step``.
    """
    points = {k: _as_matrix(v) for k, v in points.items()}

    def evaluate(arrays):
        out = f({k: constant(v) for k, v in arrays.items()})
        return float(out.values.reshape(()))

    first = evaluate(points)
    second = evaluate(points)
    if first != second:
        raise AutodiffError("grad_check: function is not deterministic")

    with Tape() as tape:
        tracked = {k: tape.watch(v) for k, v in points.items()}
        loss = f(tracked)
    grads = backward(tape, loss)

    per_input = {}
    worst = 0.0
    for name, base in points.items():
        analytic = grads.of(tracked[name])
        local = 0.0
        flat = base.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            up = evaluate(points)
            flat[i] = keep - step
            down = evaluate(points)
            flat[i] = keep
            numeric = (up - down) / (2.0 * step)
            local = max(local, _rel_err(analytic.reshape(-1)[i], numeric))
        per_input[name] = local
        worst = max(worst, local)
    return GradCheckReport(worst, worst <= tol, per_input)


def grad_check(f, point, step=1e-5, tol=1e-4):
    """Single-input convenience wrapper around :func:`grad_check_inputs`."""
    return grad_check_inputs(lambda ts: f(ts["x"]), {"x": point}, step=step, tol=tol)
