"""Reverse-mode automatic differentiation over dense numpy arrays.

A deliberately small engine: tensors are 0-d scalars, 1-d vectors or 2-d
matrices, recording happens on an explicit :class:`Tape`, and the op set is
exactly what backpropagation through LSTM stacks and layer-normalized MLPs
requires. Values are float32 by default; every op also runs in float64 so
gradient checks have headroom.

Broadcasting is restricted to scalar-with-tensor; all other operand shapes
must match exactly. Row-vector broadcasts (bias adds, per-column gains) are
separate named ops with their own adjoints.
"""

from __future__ import annotations

import threading

import numpy as np
from scipy.special import erf

__all__ = [
    "Tensor",
    "Tape",
    "ShapeError",
    "TapeError",
    "FrozenParameterError",
    "matmul",
    "add",
    "sub",
    "mul",
    "tanh",
    "sigmoid",
    "gelu",
    "exp",
    "square",
    "add_bias",
    "scale_columns",
    "layer_norm",
    "sum_all",
    "sum_axis0",
    "concat_cols",
    "concat_rows",
    "slice_rows",
    "slice_cols",
    "reshape",
]

_INV_SQRT2 = 0.7071067811865476
_INV_SQRT2PI = 0.3989422804014327


class ShapeError(ValueError):
    """Operand shapes incompatible with the requested op."""


class TapeError(RuntimeError):
    """Tape misuse: non-scalar loss, reuse after backward, foreign loss node."""


class FrozenParameterError(RuntimeError):
    """Attempted mutation of a parameter belonging to a frozen model."""


class Tensor:
    """Dense array with optional gradient accumulation.

    ``data`` is always a float32 or float64 ndarray. ``grad`` stays ``None``
    until a backward pass deposits into it. ``locked`` marks parameters of
    frozen models; optimizers must refuse to touch them.
    """

    __slots__ = ("data", "requires_grad", "grad", "locked")

    def __init__(self, data, requires_grad=False, dtype=None):
        if dtype is not None:
            arr = np.asarray(data, dtype=dtype)
        elif isinstance(data, (np.ndarray, np.generic)):
            arr = np.asarray(data)
            if arr.dtype not in (np.float32, np.float64):
                arr = arr.astype(np.float32)
        else:
            # python lists/scalars default to the engine's 32-bit precision
            arr = np.asarray(data, dtype=np.float32)
        if arr.ndim > 2:
            raise ShapeError(f"tensors are at most 2-d, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.locked = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def set_data(self, arr):
        """Replace the value in place. Rejected for locked parameters."""
        if self.locked:
            raise FrozenParameterError("parameter belongs to a frozen model")
        arr = np.asarray(arr, dtype=self.data.dtype)
        if arr.shape != self.data.shape:
            raise ShapeError(f"cannot assign shape {arr.shape} over {self.data.shape}")
        self.data = arr

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # operator sugar; all arithmetic goes through the module-level ops
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)


_LOCAL = threading.local()


def _tape_stack():
    stack = getattr(_LOCAL, "stack", None)
    if stack is None:
        stack = []
        _LOCAL.stack = stack
    return stack


def _active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered record of operations for one backward pass.

    Entries are appended in execution order, which is topological by
    construction: an op can only consume tensors that already exist. The
    backward walk visits entries exactly once, in reverse. A tape becomes
    stale after one backward pass and refuses a second.

    Used as a context manager; ops record themselves onto the innermost
    active tape of the current thread. Distinct tapes on distinct threads
    are independent.
    """

    def __init__(self):
        self._entries = []  # (out, inputs, backward_fn)
        self._produced = set()
        self._consumed = False

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _tape_stack().pop()
        assert popped is self
        return False

    def __len__(self):
        return len(self._entries)

    def _record(self, out, inputs, backward_fn):
        self._entries.append((out, inputs, backward_fn))
        self._produced.add(id(out))

    def backward(self, loss):
        """Accumulate d(loss)/d(leaf) into every requires_grad leaf's .grad."""
        if self._consumed:
            raise TapeError("stale tape: backward already ran on it")
        if not isinstance(loss, Tensor) or loss.size != 1:
            raise TapeError("loss must be a scalar (single-element) tensor")
        if id(loss) not in self._produced:
            raise TapeError("loss was not produced on this tape")
        self._consumed = True

        grads = {id(loss): (loss, np.ones_like(loss.data))}
        for out, inputs, backward_fn in reversed(self._entries):
            entry = grads.pop(id(out), None)
            if entry is None:
                continue  # node does not influence the loss
            for inp, g in zip(inputs, backward_fn(entry[1])):
                if g is None or not isinstance(inp, Tensor) or not inp.requires_grad:
                    continue
                prev = grads.get(id(inp))
                # accumulation is never in place: backward fns may return
                # shared or viewed arrays
                grads[id(inp)] = (inp, g if prev is None else prev[1] + g)

        for leaf, g in grads.values():
            leaf.grad = g if leaf.grad is None else leaf.grad + g


def _as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _result(value, inputs, backward_fn):
    out = Tensor(value)
    out.requires_grad = any(isinstance(t, Tensor) and t.requires_grad for t in inputs)
    tape = _active_tape()
    if tape is not None and out.requires_grad:
        tape._record(out, inputs, backward_fn)
    return out


def _check_same_dtype(a, b, op):
    if a.dtype != b.dtype:
        raise ShapeError(f"{op}: mixed dtypes {a.dtype} and {b.dtype}")


def matmul(a, b):
    """Matrix product of 2-d tensors. Records both partials."""
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_dtype(a, b, "matmul")
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data

    def backward_fn(g):
        return g @ bd.T, ad.T @ g

    return _result(ad @ bd, (a, b), backward_fn)


def _binary_prepare(a, b, op):
    """Resolve the scalar-or-equal-shape broadcast rule for a binary op.

    Returns (a, b, scalar_side) where scalar_side is 0/1 for which operand is
    a python scalar, or None when both are tensors of identical shape.
    """
    a_scalar = not isinstance(a, Tensor) and np.ndim(a) == 0
    b_scalar = not isinstance(b, Tensor) and np.ndim(b) == 0
    if a_scalar and b_scalar:
        raise ShapeError(f"{op}: at least one operand must be a tensor")
    if a_scalar:
        return float(a), _as_tensor(b), 0
    if b_scalar:
        return _as_tensor(a), float(b), 1
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_dtype(a, b, op)
    if a.shape != b.shape:
        raise ShapeError(
            f"{op}: shapes {a.shape} and {b.shape} do not match "
            "(only scalar-with-tensor broadcasting is supported)"
        )
    return a, b, None


def add(a, b):
    a, b, scalar_side = _binary_prepare(a, b, "add")
    if scalar_side == 0:
        return _result(a + b.data, (b,), lambda g: (g,))
    if scalar_side == 1:
        return _result(a.data + b, (a,), lambda g: (g,))
    return _result(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b):
    a, b, scalar_side = _binary_prepare(a, b, "sub")
    if scalar_side == 0:
        return _result(a - b.data, (b,), lambda g: (-g,))
    if scalar_side == 1:
        return _result(a.data - b, (a,), lambda g: (g,))
    return _result(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b):
    a, b, scalar_side = _binary_prepare(a, b, "mul")
    if scalar_side == 0:
        return _result(a * b.data, (b,), lambda g, c=a: (c * g,))
    if scalar_side == 1:
        return _result(a.data * b, (a,), lambda g, c=b: (c * g,))
    ad, bd = a.data, b.data
    return _result(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def tanh(x):
    x = _as_tensor(x)
    y = np.tanh(x.data)
    return _result(y, (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid(x):
    x = _as_tensor(x)
    # logistic via tanh for stability at large |x|
    y = 0.5 * (np.tanh(0.5 * x.data) + 1.0)
    return _result(y, (x,), lambda g: (g * (y * (1.0 - y)),))


def gelu(x):
    """Exact Gaussian-CDF GELU, not the tanh approximation."""
    x = _as_tensor(x)
    xd = x.data
    cdf = 0.5 * (1.0 + erf(xd * _INV_SQRT2))

    def backward_fn(g):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * xd * xd)
        return (g * (cdf + xd * pdf),)

    return _result(xd * cdf, (x,), backward_fn)


def exp(x):
    x = _as_tensor(x)
    y = np.exp(x.data)
    return _result(y, (x,), lambda g: (g * y,))


def square(x):
    x = _as_tensor(x)
    xd = x.data
    return _result(xd * xd, (x,), lambda g: (2.0 * xd * g,))


def add_bias(x, b):
    """Add a length-N vector to every row of a (B, N) matrix."""
    x, b = _as_tensor(x), _as_tensor(b)
    _check_same_dtype(x, b, "add_bias")
    if x.data.ndim != 2 or b.data.ndim != 1 or x.shape[1] != b.shape[0]:
        raise ShapeError(f"add_bias: shapes {x.shape} and {b.shape}")
    return _result(x.data + b.data, (x, b), lambda g: (g, g.sum(axis=0)))


def scale_columns(x, v):
    """Multiply column j of a (B, N) matrix by v[j]."""
    x, v = _as_tensor(x), _as_tensor(v)
    _check_same_dtype(x, v, "scale_columns")
    if x.data.ndim != 2 or v.data.ndim != 1 or x.shape[1] != v.shape[0]:
        raise ShapeError(f"scale_columns: shapes {x.shape} and {v.shape}")
    xd, vd = x.data, v.data
    return _result(xd * vd, (x, v), lambda g: (g * vd, (g * xd).sum(axis=0)))


def layer_norm(x, eps=1e-5):
    """Normalize each row to zero mean, unit variance (population, pre gain/bias)."""
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeError(f"layer_norm expects a matrix, got {x.shape}")
    xd = x.data
    mu = xd.mean(axis=1, keepdims=True)
    var = xd.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.asarray(eps, dtype=xd.dtype))
    y = (xd - mu) * inv

    def backward_fn(g):
        gm = g.mean(axis=1, keepdims=True)
        gym = (g * y).mean(axis=1, keepdims=True)
        return (inv * (g - gm - y * gym),)

    return _result(y, (x,), backward_fn)


def sum_all(x):
    """Sum every element into a 0-d scalar tensor."""
    x = _as_tensor(x)
    shape = x.data.shape

    def backward_fn(g):
        return (np.broadcast_to(g, shape),)

    return _result(x.data.sum(), (x,), backward_fn)


def sum_axis0(x):
    """Column sums of a (T, N) matrix, result shape (N,)."""
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeError(f"sum_axis0 expects a matrix, got {x.shape}")
    rows = x.data.shape[0]

    def backward_fn(g):
        return (np.broadcast_to(g, (rows, g.shape[0])),)

    return _result(x.data.sum(axis=0), (x,), backward_fn)


def concat_cols(a, b):
    """Concatenate two matrices along columns."""
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_dtype(a, b, "concat_cols")
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ShapeError(f"concat_cols: shapes {a.shape} and {b.shape}")
    wa = a.shape[1]
    return _result(
        np.concatenate([a.data, b.data], axis=1),
        (a, b),
        lambda g: (g[:, :wa], g[:, wa:]),
    )


def concat_rows(parts):
    """Stack a sequence of (B_i, N) matrices along rows."""
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat_rows: empty sequence")
    widths = {p.shape[1] for p in parts if p.data.ndim == 2}
    if any(p.data.ndim != 2 for p in parts) or len(widths) != 1:
        raise ShapeError(f"concat_rows: shapes {[p.shape for p in parts]}")
    counts = [p.shape[0] for p in parts]
    offsets = np.cumsum([0] + counts)

    def backward_fn(g):
        return tuple(g[offsets[i] : offsets[i + 1]] for i in range(len(parts)))

    return _result(np.concatenate([p.data for p in parts], axis=0), tuple(parts), backward_fn)


def slice_rows(x, start, stop):
    """Rows start:stop of a matrix; adjoint scatters into zeros."""
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeError(f"slice_rows expects a matrix, got {x.shape}")
    xd = x.data

    def backward_fn(g):
        gx = np.zeros_like(xd)
        gx[start:stop] = g
        return (gx,)

    return _result(xd[start:stop].copy(), (x,), backward_fn)


def slice_cols(x, start, stop):
    """Columns start:stop of a matrix; adjoint scatters into zeros."""
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeError(f"slice_cols expects a matrix, got {x.shape}")
    xd = x.data

    def backward_fn(g):
        gx = np.zeros_like(xd)
        gx[:, start:stop] = g
        return (gx,)

    return _result(xd[:, start:stop].copy(), (x,), backward_fn)


def reshape(x, shape):
    x = _as_tensor(x)
    old = x.data.shape

    def backward_fn(g):
        return (g.reshape(old),)

    return _result(x.data.reshape(shape), (x,), backward_fn)
