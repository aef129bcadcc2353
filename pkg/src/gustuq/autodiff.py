"""Tape-based reverse-mode automatic differentiation on dense float64 arrays.

The engine records primitive operations (matmul, elementwise arithmetic,
activations, reductions, column slicing) on a Tape in execution order, which
is already a topological order, so the backward sweep is a single reversed
pass that visits each node exactly once. Outputs with a handful of
components (latent dim 3, raw head dim 9) against inputs of dim 33 and
parameter counts in the hundreds of thousands make reverse mode the right
choice; Jacobians are built as one backward pass per output row.

Values are numpy float64 arrays. Non-Var operands are treated as constants
and receive no adjoint. Broadcasting is restricted to row-wise bias
addition and python scalars; any other shape mismatch raises ShapeError.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, NumericError, ShapeError

__all__ = [
    "Tape",
    "Var",
    "matmul",
    "transpose",
    "add",
    "sub",
    "mul",
    "div",
    "relu",
    "tanh",
    "exp",
    "log",
    "clip",
    "col",
    "sum_all",
    "mean_all",
    "gradient",
    "jacobian",
    "batched_jacobian",
]


def _as_value(x):
    if isinstance(x, Var):
        return x.value
    if np.isscalar(x):
        return x
    return np.asarray(x, dtype=np.float64)


class Var:
    """One recorded value on a tape: forward value plus adjoint plumbing."""

    __slots__ = ("value", "grad", "_parents", "_vjps", "_tape")

    def __init__(self, value, tape, parents=(), vjps=()):
        self.value = value
        self.grad = None
        self._parents = parents
        self._vjps = vjps
        self._tape = tape
        tape._nodes.append(self)

    @property
    def shape(self):
        return np.shape(self.value)

    # arithmetic sugar so loss expressions read naturally
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Ordered record of primitive operations for one forward computation.

    Single-use and single-threaded: build a fresh tape per evaluation.
    """

    def __init__(self):
        self._nodes = []

    def var(self, value) -> Var:
        """Register a leaf (input or trainable parameter)."""
        return Var(np.asarray(value, dtype=np.float64), self)

    def zero_grads(self):
        for node in self._nodes:
            node.grad = None

    def backward(self, output: Var, seed=None):
        """Accumulate adjoints of `output` into every node's .grad.

        `seed` defaults to ones (the usual choice for a scalar loss); pass an
        array of output shape to weight the output components, e.g. a unit
        vector to extract one Jacobian row.
        """
        if seed is None:
            seed = np.ones_like(output.value)
        else:
            seed = np.asarray(seed, dtype=np.float64)
            if seed.shape != np.shape(output.value):
                raise ShapeError(
                    f"backward seed shape {seed.shape} != output shape "
                    f"{np.shape(output.value)}"
                )
        self.zero_grads()
        output.grad = seed
        for node in reversed(self._nodes):
            g = node.grad
            if g is None:
                continue
            for parent, vjp in zip(node._parents, node._vjps):
                contrib = vjp(g)
                if parent.grad is None:
                    parent.grad = contrib
                else:
                    parent.grad = parent.grad + contrib


def _tape_of(*args):
    for a in args:
        if isinstance(a, Var):
            return a._tape
    return None


def _record(tape, value, var_operands, vjps):
    return Var(value, tape, parents=tuple(var_operands), vjps=tuple(vjps))


def _binary(a, b, value, vjp_a, vjp_b):
    tape = _tape_of(a, b)
    if tape is None:
        return value
    parents, vjps = [], []
    if isinstance(a, Var):
        parents.append(a)
        vjps.append(vjp_a)
    if isinstance(b, Var):
        parents.append(b)
        vjps.append(vjp_b)
    return _record(tape, value, parents, vjps)


def _unary(a, value, vjp):
    if not isinstance(a, Var):
        return value
    return _record(a._tape, value, [a], [vjp])


def matmul(a, b):
    """Standard matrix product with explicit shape checking.

    Works on plain arrays or tape Vars (mixed operands allowed; constants
    get no adjoint).
    """
    av, bv = _as_value(a), _as_value(b)
    if np.ndim(av) != 2 or np.ndim(bv) != 2:
        raise ShapeError(
            f"matmul requires 2-d operands, got shapes {np.shape(av)} and {np.shape(bv)}"
        )
    if av.shape[1] != bv.shape[0]:
        raise ShapeError(
            f"matmul shape mismatch: {av.shape[0]}x{av.shape[1]} times "
            f"{bv.shape[0]}x{bv.shape[1]}"
        )
    out = av @ bv
    if not np.isfinite(out).all():
        raise NumericError("matmul produced non-finite entries")
    return _binary(a, b, out, lambda g: g @ bv.T, lambda g: av.T @ g)


def transpose(a):
    av = _as_value(a)
    return _unary(a, av.T, lambda g: g.T)


def add(a, b):
    """Elementwise addition; the only array broadcast allowed is a row-wise
    bias (adding a length-n vector to every row of a (m, n) array)."""
    av, bv = _as_value(a), _as_value(b)
    if np.isscalar(av) or np.isscalar(bv) or np.shape(av) == np.shape(bv):
        return _binary(a, b, av + bv, lambda g: g, lambda g: g)
    # row-wise bias: (m, n) + (n,) or (m, n) + (1, n)
    for x, y, bias_is_b in ((av, bv, True), (bv, av, False)):
        if np.ndim(x) == 2 and np.size(y) == x.shape[1] and np.ndim(y) <= 2:
            vjp_full = lambda g: g
            vjp_bias = lambda g, shp=np.shape(y): g.sum(axis=0).reshape(shp)
            value = x + np.reshape(y, (1, -1))
            if bias_is_b:
                return _binary(a, b, value, vjp_full, vjp_bias)
            return _binary(a, b, value, vjp_bias, vjp_full)
    raise ShapeError(f"add shape mismatch: {np.shape(av)} vs {np.shape(bv)}")


def sub(a, b):
    av, bv = _as_value(a), _as_value(b)
    if not (np.isscalar(av) or np.isscalar(bv) or np.shape(av) == np.shape(bv)):
        raise ShapeError(f"sub shape mismatch: {np.shape(av)} vs {np.shape(bv)}")
    return _binary(a, b, av - bv, lambda g: g, lambda g: -g)


def mul(a, b):
    av, bv = _as_value(a), _as_value(b)
    if not (np.isscalar(av) or np.isscalar(bv) or np.shape(av) == np.shape(bv)):
        raise ShapeError(f"mul shape mismatch: {np.shape(av)} vs {np.shape(bv)}")
    return _binary(a, b, av * bv, lambda g: g * bv, lambda g: g * av)


def div(a, b):
    av, bv = _as_value(a), _as_value(b)
    if not (np.isscalar(av) or np.isscalar(bv) or np.shape(av) == np.shape(bv)):
        raise ShapeError(f"div shape mismatch: {np.shape(av)} vs {np.shape(bv)}")
    return _binary(a, b, av / bv, lambda g: g / bv, lambda g: -g * av / (bv * bv))


def relu(a):
    av = _as_value(a)
    out = np.maximum(av, 0.0)
    return _unary(a, out, lambda g: g * (av > 0.0))


def tanh(a):
    out = np.tanh(_as_value(a))
    return _unary(a, out, lambda g: g * (1.0 - out * out))


def exp(a):
    out = np.exp(_as_value(a))
    return _unary(a, out, lambda g: g * out)


def log(a):
    av = _as_value(a)
    return _unary(a, np.log(av), lambda g: g / av)


def clip(a, lo, hi):
    """Clamp with pass-through gradient inside [lo, hi], zero outside."""
    av = _as_value(a)
    out = np.clip(av, lo, hi)
    return _unary(a, out, lambda g: g * ((av >= lo) & (av <= hi)))


def col(a, j):
    """Column j of a 2-d array as an (m, 1) slice."""
    av = _as_value(a)
    if np.ndim(av) != 2:
        raise ShapeError(f"col requires a 2-d operand, got shape {np.shape(av)}")
    out = av[:, j : j + 1]

    def vjp(g):
        full = np.zeros_like(av)
        full[:, j : j + 1] = g
        return full

    return _unary(a, out, vjp)


def sum_all(a):
    av = _as_value(a)
    return _unary(a, np.sum(av), lambda g: g * np.ones_like(av))


def mean_all(a):
    av = _as_value(a)
    n = np.size(av)
    return _unary(a, np.mean(av), lambda g: g * np.ones_like(av) / n)


def gradient(f, at):
    """Gradient of a scalar-valued function built from recorded primitives.

    `f` receives a leaf Var for `at` and must return a Var whose value has
    exactly one element; the result has the same shape as `at`.
    """
    tape = Tape()
    x = tape.var(at)
    out = f(x)
    if not isinstance(out, Var):
        raise ContractError("function did not produce a recorded value")
    if np.size(out.value) != 1:
        raise ContractError(
            f"gradient requires a scalar output, got shape {np.shape(out.value)}"
        )
    tape.backward(out)
    g = x.grad
    if g is None:
        g = np.zeros_like(x.value)
    return np.asarray(g, dtype=np.float64).reshape(np.shape(x.value))


def jacobian(f, at):
    """Jacobian of a vector-valued function: row i is the gradient of output
    component i, computed as one backward pass per row."""
    tape = Tape()
    x = tape.var(at)
    out = f(x)
    if not isinstance(out, Var):
        raise ContractError("function did not produce a recorded value")
    n_out = np.size(out.value)
    n_in = np.size(x.value)
    jac = np.zeros((n_out, n_in))
    for i in range(n_out):
        seed = np.zeros_like(out.value)
        seed.reshape(-1)[i] = 1.0
        tape.backward(out, seed=seed)
        if x.grad is not None:
            jac[i, :] = np.asarray(x.grad).reshape(-1)
    return jac


def batched_jacobian(f, xs):
    """Per-row Jacobians for a row-independent batched map.

    `f` maps a (B, d) leaf Var to a (B, l) Var where each output row depends
    only on the matching input row (true for feed-forward nets evaluated on
    a batch). All B Jacobians then come out of l backward passes instead of
    B*l. Returns an array of shape (B, l, d).
    """
    xs = np.asarray(xs, dtype=np.float64)
    tape = Tape()
    x = tape.var(xs)
    out = f(x)
    b, l = out.value.shape
    jac = np.zeros((b, l, xs.shape[1]))
    for j in range(l):
        seed = np.zeros_like(out.value)
        seed[:, j] = 1.0
        tape.backward(out, seed=seed)
        if x.grad is not None:
            jac[:, j, :] = x.grad
    return jac
