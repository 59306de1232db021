"""
Minimal reverse-mode differentiation over dense float64 arrays.

Every learnable computation in apiae is recorded on a :class:`Tape` as a list
of :class:`Node` objects in topological (append) order. :func:`backward` walks
the tape in reverse and accumulates vector-Jacobian products.

Sampled noise enters a tape through :meth:`Tape.constant`, so gradients flow
through the deterministic map and never through the sampler.

Broadcasting is limited to a right-aligned suffix shape: matrix with vector,
or anything with a scalar.
"""
import numpy as np
from scipy import linalg
from scipy import special

from apiae.exceptions import ShapeError, NonFiniteError, CholeskyError


class Op(object):
    """
    An operation: a forward rule and a vector-Jacobian rule.

    `forward(values, attrs)` returns the output array; `vjp(g, out, values,
    attrs)` returns one gradient array (or None) per input.
    """

    def __init__(self, name, forward, vjp, check=None):
        self.name = name
        self.forward = forward
        self.vjp = vjp
        self.check = check


OPS = {}


def _register(name, forward, vjp, check=None):
    OPS[name] = Op(name, forward, vjp, check)


class Node(object):
    __slots__ = ("id", "op", "inputs", "value", "requires_grad", "attrs", "tape")
    # make numpy defer to the reflected operators below
    __array_ufunc__ = None

    def __init__(self, id, op, inputs, value, requires_grad, attrs, tape):
        self.id = id
        self.op = op
        self.inputs = inputs
        self.value = value
        self.requires_grad = requires_grad
        self.attrs = attrs
        self.tape = tape

    def __repr__(self):
        return "<Node %s: %s %s>" % (self.id, self.op, self.shape)

    @property
    def shape(self):
        return self.value.shape

    @property
    def T(self):
        return self.tape.record("transpose", [self])

    def __add__(self, other):
        return self.tape.record("add", [self, self.tape.lift(other)])

    def __radd__(self, other):
        return self.tape.record("add", [self.tape.lift(other), self])

    def __sub__(self, other):
        return self.tape.record("subtract", [self, self.tape.lift(other)])

    def __rsub__(self, other):
        return self.tape.record("subtract", [self.tape.lift(other), self])

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return self.tape.record("scale", [self], c=float(other))
        return self.tape.record("multiply", [self, self.tape.lift(other)])

    def __rmul__(self, other):
        if isinstance(other, (int, float)):
            return self.tape.record("scale", [self], c=float(other))
        return self.tape.record("multiply", [self.tape.lift(other), self])

    def __neg__(self):
        return self.tape.record("scale", [self], c=-1.0)

    def __matmul__(self, other):
        return self.tape.record("matmul", [self, self.tape.lift(other)])

    def __rmatmul__(self, other):
        return self.tape.record("matmul", [self.tape.lift(other), self])

    def __getitem__(self, index):
        if not isinstance(index, tuple):
            index = (index,)
        return self.tape.record("slice", [self], index=index)


class Tape(object):
    def __init__(self):
        """
        An append-only record of the forward pass.

        Tapes are single-threaded objects; build a separate tape for each
        sequence when working in parallel.
        """
        self.nodes = []

    def __len__(self):
        return len(self.nodes)

    def _append(self, op, inputs, value, requires_grad, attrs):
        node = Node(len(self.nodes), op, inputs, value, requires_grad, attrs, self)
        self.nodes.append(node)
        return node

    def leaf(self, value):
        """
        Add a differentiable input.
        """
        value = _as_tensor(value, "leaf")
        return self._append("leaf", (), value, True, {})

    def constant(self, value):
        """
        Add an input that gradients do not flow into.
        """
        value = _as_tensor(value, "constant")
        return self._append("constant", (), value, False, {})

    def lift(self, x):
        if isinstance(x, Node):
            if x.tape is not self:
                raise ValueError("node %r belongs to another tape" % x)
            return x
        return self.constant(x)

    def stop_gradient(self, node):
        """
        Re-enter the value of `node` as a constant.
        """
        return self.constant(node.value)

    def record(self, op, inputs, **attrs):
        """
        Append a node computed by `op`'s forward rule.

        Parameters
        ----------
        op : str
            Name of a registered operation (see `OPS`).

        inputs : list of Node

        attrs :
            Op-specific static arguments (e.g. `c` for scale, `index` for
            slice).

        Returns
        -------
        Node
        """
        try:
            impl = OPS[op]
        except KeyError:
            raise ValueError("unsupported op %r" % op)
        inputs = tuple(self.lift(i) for i in inputs)
        values = [i.value for i in inputs]
        if impl.check is not None:
            impl.check(values, attrs)
        value = np.asarray(impl.forward(values, attrs), dtype=np.float64)
        if not np.all(np.isfinite(value)):
            raise NonFiniteError(
                "non-finite value from %s on shapes %s"
                % (op, [v.shape for v in values])
            )
        requires_grad = any(i.requires_grad for i in inputs)
        return self._append(op, inputs, value, requires_grad, attrs)


def _as_tensor(value, where):
    value = np.array(value, dtype=np.float64)
    if not np.all(np.isfinite(value)):
        raise NonFiniteError("non-finite value entering the tape as %s" % where)
    return value


def backward(tape, root):
    """
    Reverse-mode gradients of scalar `root` with respect to every node that
    requires a gradient.

    Tape values are never modified.

    Returns
    -------
    dict
        Maps node id to a gradient array with the node's shape.  Leaves that
        `root` does not depend on get zeros.
    """
    if root.value.shape != ():
        raise ShapeError("backward (root must be scalar)", root.value.shape)
    grads = {root.id: np.ones(())}
    for node in reversed(tape.nodes[: root.id + 1]):
        g = grads.get(node.id)
        if g is None or not node.inputs:
            continue
        impl = OPS[node.op]
        parts = impl.vjp(g, node.value, [i.value for i in node.inputs], node.attrs)
        for inp, part in zip(node.inputs, parts):
            if part is None or not inp.requires_grad:
                continue
            if inp.id in grads:
                grads[inp.id] = grads[inp.id] + part
            else:
                grads[inp.id] = part
    out = {}
    for node in tape.nodes:
        if node.requires_grad:
            out[node.id] = grads.get(node.id, np.zeros_like(node.value))
    return out


def grad_check(f, point, eps=1e-5):
    """
    Compare reverse-mode gradients with central differences.

    Parameters
    ----------
    f : callable
        `f(tape, x)` builds a scalar node from the leaf `x`.

    point : array-like
        Where to evaluate.

    eps : float
        Finite-difference step.

    Returns
    -------
    float
        max over coordinates of |analytic - numeric| / (|numeric| + 1e-12).
        Coordinates where both are below 1e-9 in magnitude are structural
        zeros and are skipped.
    """
    point = np.array(point, dtype=np.float64)
    tape = Tape()
    x = tape.leaf(point)
    out = f(tape, x)
    analytic = backward(tape, out)[x.id]

    def _value(p):
        t = Tape()
        return float(f(t, t.leaf(p)).value)

    worst = 0.0
    flat = point.ravel()
    for i in range(flat.size):
        up = flat.copy()
        down = flat.copy()
        up[i] += eps
        down[i] -= eps
        numeric = (_value(up.reshape(point.shape)) - _value(down.reshape(point.shape))) / (
            2 * eps
        )
        a = analytic.ravel()[i]
        if abs(a) < 1e-9 and abs(numeric) < 1e-9:
            continue
        worst = max(worst, abs(a - numeric) / (abs(numeric) + 1e-12))
    return worst


def pack(params):
    """
    Flatten a dict of named arrays into one vector.

    Returns
    -------
    vector, layout
        `layout` is a list of (name, shape, start, stop) used by
        :func:`unpack`.
    """
    layout = []
    chunks = []
    start = 0
    for name, arr in params.items():
        arr = np.asarray(arr, dtype=np.float64)
        layout.append((name, arr.shape, start, start + arr.size))
        chunks.append(arr.ravel())
        start += arr.size
    if not chunks:
        return np.zeros(0), layout
    return np.concatenate(chunks), layout


def unpack(tape, vector, layout):
    """
    Split a packed vector node back into a dict of named nodes.
    """
    out = {}
    for name, shape, start, stop in layout:
        piece = tape.record("slice", [vector], index=(slice(start, stop),))
        out[name] = tape.record("reshape", [piece], shape=shape)
    return out


# Convenience wrappers; each one records a single node.


def matmul(a, b):
    return a.tape.record("matmul", [a, b])


def add(a, b):
    return a.tape.record("add", [a, b])


def subtract(a, b):
    return a.tape.record("subtract", [a, b])


def multiply(a, b):
    return a.tape.record("multiply", [a, b])


def scale(a, c):
    return a.tape.record("scale", [a], c=float(c))


def tanh(a):
    return a.tape.record("tanh", [a])


def relu(a):
    return a.tape.record("relu", [a])


def sigmoid(a):
    return a.tape.record("sigmoid", [a])


def softplus(a):
    return a.tape.record("softplus", [a])


def exp(a):
    return a.tape.record("exp", [a])


def log(a):
    return a.tape.record("log", [a])


def softmax(a):
    return a.tape.record("softmax", [a])


def logsumexp(a):
    return a.tape.record("logsumexp", [a])


def sum(a, axis=None):
    return a.tape.record("sum", [a], axis=axis)


def mean(a):
    return a.tape.record("mean", [a])


def concat(nodes, axis=0):
    return nodes[0].tape.record("concat", list(nodes), axis=axis)


def stack(nodes):
    return nodes[0].tape.record("stack", list(nodes))


def take(a, indices):
    return a.tape.record("take", [a], indices=np.asarray(indices, dtype=np.intp))


def transpose(a):
    return a.tape.record("transpose", [a])


def reshape(a, shape):
    return a.tape.record("reshape", [a], shape=tuple(shape))


def square(a):
    return a.tape.record("square", [a])


def sqrt(a):
    return a.tape.record("sqrt", [a])


def quadform(x, A):
    return x.tape.record("quadform", [x, A])


def clip(a, lo, hi):
    return a.tape.record("clip", [a], lo=float(lo), hi=float(hi))


def diag(a):
    return a.tape.record("diag", [a])


def diagflat(a):
    return a.tape.record("diagflat", [a])


def tril_fill(a, n, strict=False):
    return a.tape.record("tril_fill", [a], n=int(n), strict=bool(strict))


def cholesky(a):
    return a.tape.record("cholesky", [a])


def trisolve(L, b, trans=False):
    return L.tape.record("trisolve", [L, b], trans=bool(trans))


# ---------------------------------------------------------------------------
# Forward and vector-Jacobian rules
# ---------------------------------------------------------------------------


def _suffix(big, small):
    return big[len(big) - len(small):] == small if len(small) <= len(big) else False


def _check_broadcast(name):
    def check(values, attrs):
        a, b = values
        if a.shape == b.shape:
            return
        if _suffix(a.shape, b.shape) or _suffix(b.shape, a.shape):
            return
        raise ShapeError(name, a.shape, b.shape)

    return check


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    return g.reshape(shape)


_register(
    "add",
    lambda v, at: v[0] + v[1],
    lambda g, out, v, at: (_unbroadcast(g, v[0].shape), _unbroadcast(g, v[1].shape)),
    _check_broadcast("add"),
)
_register(
    "subtract",
    lambda v, at: v[0] - v[1],
    lambda g, out, v, at: (_unbroadcast(g, v[0].shape), _unbroadcast(-g, v[1].shape)),
    _check_broadcast("subtract"),
)
_register(
    "multiply",
    lambda v, at: v[0] * v[1],
    lambda g, out, v, at: (
        _unbroadcast(g * v[1], v[0].shape),
        _unbroadcast(g * v[0], v[1].shape),
    ),
    _check_broadcast("multiply"),
)
_register(
    "scale",
    lambda v, at: at["c"] * v[0],
    lambda g, out, v, at: (at["c"] * g,),
)


def _check_matmul(values, attrs):
    a, b = values
    if a.ndim not in (1, 2) or b.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)


def _matmul_vjp(g, out, v, at):
    a, b = v
    if a.ndim == 2 and b.ndim == 2:
        return g @ b.T, a.T @ g
    if a.ndim == 2:
        return np.outer(g, b), a.T @ g
    if b.ndim == 2:
        return b @ g, np.outer(a, g)
    return g * b, g * a


_register("matmul", lambda v, at: v[0] @ v[1], _matmul_vjp, _check_matmul)

_register("tanh", lambda v, at: np.tanh(v[0]), lambda g, out, v, at: (g * (1.0 - out**2),))
# relu'(0) is defined as 0
_register(
    "relu",
    lambda v, at: np.maximum(v[0], 0.0),
    lambda g, out, v, at: (g * (v[0] > 0.0),),
)
_register(
    "sigmoid",
    lambda v, at: special.expit(v[0]),
    lambda g, out, v, at: (g * out * (1.0 - out),),
)
_register(
    "softplus",
    lambda v, at: np.logaddexp(0.0, v[0]),
    lambda g, out, v, at: (g * special.expit(v[0]),),
)
_register("exp", lambda v, at: np.exp(v[0]), lambda g, out, v, at: (g * out,))


def _check_log(values, attrs):
    if np.any(values[0] <= 0):
        raise NonFiniteError("log of non-positive value")


_register("log", lambda v, at: np.log(v[0]), lambda g, out, v, at: (g / v[0],), _check_log)


_register(
    "softmax",
    lambda v, at: special.softmax(v[0], axis=-1),
    lambda g, out, v, at: (out * (g - np.sum(g * out, axis=-1, keepdims=True)),),
)
_register(
    "logsumexp",
    lambda v, at: special.logsumexp(v[0], axis=-1),
    lambda g, out, v, at: (np.asarray(g)[..., None] * special.softmax(v[0], axis=-1),),
)


def _sum_vjp(g, out, v, at):
    axis = at.get("axis")
    if axis is None:
        return (np.broadcast_to(g, v[0].shape).copy(),)
    return (np.broadcast_to(np.expand_dims(g, axis), v[0].shape).copy(),)


_register("sum", lambda v, at: np.sum(v[0], axis=at.get("axis")), _sum_vjp)
_register(
    "mean",
    lambda v, at: np.mean(v[0]),
    lambda g, out, v, at: (np.full(v[0].shape, g / v[0].size),),
)


def _check_concat(values, attrs):
    axis = attrs.get("axis", 0)
    ref = values[0]
    for x in values[1:]:
        if x.ndim != ref.ndim or any(
            x.shape[i] != ref.shape[i] for i in range(ref.ndim) if i != axis
        ):
            raise ShapeError("concat", *[y.shape for y in values])


def _concat_vjp(g, out, v, at):
    axis = at.get("axis", 0)
    splits = np.cumsum([x.shape[axis] for x in v])[:-1]
    return tuple(np.split(g, splits, axis=axis))


_register(
    "concat",
    lambda v, at: np.concatenate(v, axis=at.get("axis", 0)),
    _concat_vjp,
    _check_concat,
)


def _check_stack(values, attrs):
    if any(x.shape != values[0].shape for x in values):
        raise ShapeError("stack", *[x.shape for x in values])


_register(
    "stack",
    lambda v, at: np.stack(v),
    lambda g, out, v, at: tuple(g[i] for i in range(len(v))),
    _check_stack,
)


def _slice_vjp(g, out, v, at):
    full = np.zeros_like(v[0])
    full[at["index"]] = g
    return (full,)


_register("slice", lambda v, at: v[0][at["index"]], _slice_vjp)


def _take_vjp(g, out, v, at):
    full = np.zeros_like(v[0])
    np.add.at(full, at["indices"], g)
    return (full,)


_register("take", lambda v, at: v[0][at["indices"]], _take_vjp)


def _check_2d(name):
    def check(values, attrs):
        if values[0].ndim != 2:
            raise ShapeError(name, values[0].shape)

    return check


_register(
    "transpose",
    lambda v, at: v[0].T,
    lambda g, out, v, at: (g.T,),
    _check_2d("transpose"),
)


def _check_reshape(values, attrs):
    if int(np.prod(attrs["shape"])) != values[0].size:
        raise ShapeError("reshape", values[0].shape, attrs["shape"])


_register(
    "reshape",
    lambda v, at: v[0].reshape(at["shape"]),
    lambda g, out, v, at: (g.reshape(v[0].shape),),
    _check_reshape,
)
_register("square", lambda v, at: v[0] ** 2, lambda g, out, v, at: (2.0 * v[0] * g,))


def _check_sqrt(values, attrs):
    if values[0].shape != () or values[0] <= 0:
        raise ShapeError("sqrt (positive scalar only)", values[0].shape)


_register(
    "sqrt",
    lambda v, at: np.sqrt(v[0]),
    lambda g, out, v, at: (g / (2.0 * out),),
    _check_sqrt,
)


def _check_quadform(values, attrs):
    x, A = values
    if x.ndim != 1 or A.shape != (x.size, x.size):
        raise ShapeError("quadform", x.shape, A.shape)


_register(
    "quadform",
    lambda v, at: v[0] @ v[1] @ v[0],
    lambda g, out, v, at: (g * (v[1] + v[1].T) @ v[0], g * np.outer(v[0], v[0])),
    _check_quadform,
)
_register(
    "clip",
    lambda v, at: np.clip(v[0], at["lo"], at["hi"]),
    lambda g, out, v, at: (g * ((v[0] > at["lo"]) & (v[0] < at["hi"])),),
)
_register(
    "diag",
    lambda v, at: np.diag(v[0]).copy(),
    lambda g, out, v, at: (np.diag(g),),
    _check_2d("diag"),
)
_register(
    "diagflat",
    lambda v, at: np.diag(v[0]),
    lambda g, out, v, at: (np.diag(g).copy(),),
)


def _tril_indices(at):
    return np.tril_indices(at["n"], -1 if at["strict"] else 0)


def _check_tril_fill(values, attrs):
    n = attrs["n"]
    want = n * (n - 1) // 2 if attrs["strict"] else n * (n + 1) // 2
    if values[0].shape != (want,):
        raise ShapeError("tril_fill", values[0].shape, (want,))


def _tril_fill(v, at):
    out = np.zeros((at["n"], at["n"]))
    out[_tril_indices(at)] = v[0]
    return out


_register(
    "tril_fill",
    _tril_fill,
    lambda g, out, v, at: (g[_tril_indices(at)],),
    _check_tril_fill,
)


def _cholesky(v, at):
    try:
        return linalg.cholesky(v[0], lower=True)
    except linalg.LinAlgError:
        raise CholeskyError("matrix is not positive definite")


def _cholesky_vjp(g, L, v, at):
    # Phi(L^T g): lower triangle with halved diagonal
    P = np.tril(L.T @ g)
    P[np.diag_indices_from(P)] *= 0.5
    Y = linalg.solve_triangular(L, P, lower=True, trans="T")
    X = linalg.solve_triangular(L, Y.T, lower=True, trans="T").T
    return (0.5 * (X + X.T),)


_register("cholesky", _cholesky, _cholesky_vjp, _check_2d("cholesky"))


def _check_trisolve(values, attrs):
    L, b = values
    if L.ndim != 2 or L.shape[0] != L.shape[1] or b.shape[0] != L.shape[0]:
        raise ShapeError("trisolve", L.shape, b.shape)
    if np.any(np.diag(L) == 0):
        raise CholeskyError("singular triangular factor")


def _trisolve(v, at):
    return linalg.solve_triangular(v[0], v[1], lower=True, trans="T" if at["trans"] else "N")


def _trisolve_vjp(g, x, v, at):
    L = v[0]
    if at["trans"]:
        gb = linalg.solve_triangular(L, g, lower=True, trans="N")
        outer = np.outer(x, gb) if x.ndim == 1 else x @ gb.T
    else:
        gb = linalg.solve_triangular(L, g, lower=True, trans="T")
        outer = np.outer(gb, x) if x.ndim == 1 else gb @ x.T
    return -np.tril(outer), gb


_register("trisolve", _trisolve, _trisolve_vjp, _check_trisolve)
