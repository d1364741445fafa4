"""Differentiable numeric core.

A small reverse-mode engine over numpy arrays: every operation returns a
:class:`Tensor` that remembers its parents and a backward closure, and
:func:`backward` replays the recorded computation in reverse creation order
(a fixed topological order, so gradient accumulation is deterministic).

Two numeric widths are supported: float32 for training and evaluation,
float64 for finite-difference gradient checking. Operands of one operation
must share a dtype; nothing promotes silently.

Shapes are written ``(rows, cols)`` in docstrings; there is no general
broadcasting, only the specific patterns the encoders need (row-vector bias,
per-row scaling, time slicing of rank-3 blocks).
"""

import itertools
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import (
    ContractError,
    DeterminismError,
    EmptySupportError,
    InvalidValueError,
    ShapeError,
)

FLOAT_DTYPES = (np.float32, np.float64)

_creation_counter = itertools.count()
_RECORDING = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (forward evaluation only)."""
    global _RECORDING
    previous = _RECORDING
    _RECORDING = False
    try:
        yield
    finally:
        _RECORDING = previous


class Tensor:
    """Dense array node of a recorded computation.

    ``data`` is a row-major numpy array (float32 or float64), ``grad`` the
    accumulated gradient buffer (same shape, populated by :func:`backward`).
    All values are validated finite on construction: NaN/Inf raise instead of
    propagating silently.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_idx")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        data = np.asarray(data)
        if data.dtype not in FLOAT_DTYPES:
            raise ContractError(f"tensor dtype must be float32/float64, got {data.dtype}")
        if not np.all(np.isfinite(data)):
            raise InvalidValueError("tensor contains NaN or Inf")
        self.data = data
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self._idx = next(_creation_counter)

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


def constant(values, dtype=None) -> Tensor:
    """Wrap raw values as a non-differentiable leaf."""
    arr = np.asarray(values, dtype=dtype)
    if arr.dtype not in FLOAT_DTYPES:
        arr = arr.astype(np.float64)
    return Tensor(arr)


def _result(data, parents, backward_fn) -> Tensor:
    """Wire an op result into the graph (or detach it under no_grad)."""
    if _RECORDING and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=tuple(parents), _backward=backward_fn)
    return Tensor(data)


def _accumulate(tensor: Tensor, grad: np.ndarray) -> None:
    if not tensor.requires_grad:
        return
    # out-of-place: backward closures may hand out views
    tensor.grad = grad if tensor.grad is None else tensor.grad + grad


def _check_same_dtype(*tensors):
    dt = tensors[0].data.dtype
    for t in tensors[1:]:
        if t.data.dtype != dt:
            raise ContractError(f"mixed dtypes in op: {dt} vs {t.data.dtype}")


# ---------------------------------------------------------------------------
# elementwise ops
# ---------------------------------------------------------------------------


def sigmoid(x: Tensor) -> Tensor:
    """Elementwise 1/(1+e^-x), computed branch-wise so neither tail overflows."""
    v = x.data
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)

    def bwd(g):
        _accumulate(x, g * out * (1.0 - out))

    return _result(out, (x,), bwd)


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def bwd(g):
        _accumulate(x, g * (1.0 - out * out))

    return _result(out, (x,), bwd)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)

    def bwd(g):
        _accumulate(x, g * (x.data > 0))

    return _result(out, (x,), bwd)


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add: {a.data.shape} vs {b.data.shape}")

    def bwd(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _result(a.data + b.data, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"sub: {a.data.shape} vs {b.data.shape}")

    def bwd(g):
        _accumulate(a, g)
        _accumulate(b, -g)

    return _result(a.data - b.data, (a, b), bwd)


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of same-shape tensors."""
    _check_same_dtype(a, b)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"hadamard: {a.data.shape} vs {b.data.shape}")

    def bwd(g):
        _accumulate(a, g * b.data)
        _accumulate(b, g * a.data)

    return _result(a.data * b.data, (a, b), bwd)


def scale(x: Tensor, factor: float) -> Tensor:
    factor = x.data.dtype.type(factor)

    def bwd(g):
        _accumulate(x, g * factor)

    return _result(x.data * factor, (x,), bwd)


def add_scalar(x: Tensor, value: float) -> Tensor:
    value = x.data.dtype.type(value)

    def bwd(g):
        _accumulate(x, g)

    return _result(x.data + value, (x,), bwd)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor, transpose_a: bool = False, transpose_b: bool = False) -> Tensor:
    """Matrix product. Transpose flags apply to rank-2 operands only.

    Rank-1 operands follow numpy semantics: (m,k)@(k,)->(m,), (k,)@(k,n)->(n,),
    (k,)@(k,)->scalar.
    """
    _check_same_dtype(a, b)
    ad, bd = a.data, b.data
    if (transpose_a or transpose_b) and (ad.ndim != 2 or bd.ndim != 2):
        raise ShapeError("transpose flags require rank-2 operands")
    if ad.ndim == 0 or bd.ndim == 0 or ad.ndim > 2 or bd.ndim > 2:
        raise ShapeError(f"matmul ranks unsupported: {ad.ndim} and {bd.ndim}")

    aa = ad.T if transpose_a else ad
    bb = bd.T if transpose_b else bd
    if aa.shape[-1] != (bb.shape[0] if bb.ndim > 1 else bb.shape[0]):
        raise ShapeError(f"matmul: {ad.shape}{'^T' if transpose_a else ''} @ "
                         f"{bd.shape}{'^T' if transpose_b else ''}")
    with np.errstate(over="ignore", invalid="ignore"):  # finiteness check raises instead
        out = aa @ bb

    def bwd(g):
        if ad.ndim == 2 and bd.ndim == 2:
            if a.requires_grad:
                ga = (bb @ g.T) if transpose_a else (g @ bb.T)
                _accumulate(a, ga)
            if b.requires_grad:
                gb = (g.T @ aa) if transpose_b else (aa.T @ g)
                _accumulate(b, gb)
        elif ad.ndim == 2 and bd.ndim == 1:
            _accumulate(a, np.outer(g, bd))
            _accumulate(b, ad.T @ g)
        elif ad.ndim == 1 and bd.ndim == 2:
            _accumulate(a, bd @ g)
            _accumulate(b, np.outer(ad, g))
        else:  # 1-D dot
            _accumulate(a, g * bd)
            _accumulate(b, g * ad)

    return _result(out, (a, b), bwd)


def add_rowvec(m: Tensor, v: Tensor) -> Tensor:
    """(r,c) + (c,): add a row vector (bias) to every row."""
    _check_same_dtype(m, v)
    if m.data.ndim != 2 or v.data.ndim != 1 or m.data.shape[1] != v.data.shape[0]:
        raise ShapeError(f"add_rowvec: {m.data.shape} + {v.data.shape}")

    def bwd(g):
        _accumulate(m, g)
        _accumulate(v, g.sum(axis=0))

    return _result(m.data + v.data, (m, v), bwd)


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ShapeError(f"transpose needs rank-2, got shape {x.data.shape}")

    def bwd(g):
        _accumulate(x, g.T)

    return _result(x.data.T.copy(), (x,), bwd)


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)

    def bwd(g):
        _accumulate(x, g.reshape(x.data.shape))

    return _result(x.data.reshape(shape), (x,), bwd)


def rowdot(a: Tensor, b: Tensor) -> Tensor:
    """Row-wise dot products: (r,c),(r,c) -> (r,)."""
    _check_same_dtype(a, b)
    if a.data.shape != b.data.shape or a.data.ndim != 2:
        raise ShapeError(f"rowdot: {a.data.shape} vs {b.data.shape}")

    def bwd(g):
        _accumulate(a, g[:, None] * b.data)
        _accumulate(b, g[:, None] * a.data)

    return _result((a.data * b.data).sum(axis=1), (a, b), bwd)


def scale_rows(m: Tensor, s: Tensor) -> Tensor:
    """Scale row i of (r,c) by s[i]."""
    _check_same_dtype(m, s)
    if m.data.ndim != 2 or s.data.ndim != 1 or m.data.shape[0] != s.data.shape[0]:
        raise ShapeError(f"scale_rows: {m.data.shape} by {s.data.shape}")

    def bwd(g):
        _accumulate(m, g * s.data[:, None])
        _accumulate(s, (g * m.data).sum(axis=1))

    return _result(m.data * s.data[:, None], (m, s), bwd)


def column(m: Tensor, j: int) -> Tensor:
    """Extract column j of (r,c) as (r,)."""
    if m.data.ndim != 2 or not 0 <= j < m.data.shape[1]:
        raise ShapeError(f"column {j} of shape {m.data.shape}")

    def bwd(g):
        full = np.zeros_like(m.data)
        full[:, j] = g
        _accumulate(m, full)

    return _result(m.data[:, j].copy(), (m,), bwd)


def stack_columns(cols) -> Tensor:
    """Stack k rank-1 tensors of length r into an (r,k) matrix."""
    cols = list(cols)
    if not cols:
        raise ShapeError("stack_columns of zero columns")
    _check_same_dtype(*cols)
    for c in cols:
        if c.data.shape != cols[0].data.shape or c.data.ndim != 1:
            raise ShapeError("stack_columns needs equal-length rank-1 tensors")
    out = np.stack([c.data for c in cols], axis=1)

    def bwd(g):
        for j, c in enumerate(cols):
            _accumulate(c, g[:, j])

    return _result(out, tuple(cols), bwd)


def sum_all(x: Tensor) -> Tensor:
    def bwd(g):
        _accumulate(x, np.full_like(x.data, g.reshape(())))

    return _result(np.asarray(x.data.sum(), dtype=x.data.dtype), (x,), bwd)


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size

    def bwd(g):
        _accumulate(x, np.full_like(x.data, g.reshape(()) / n))

    return _result(np.asarray(x.data.mean(), dtype=x.data.dtype), (x,), bwd)


# ---------------------------------------------------------------------------
# softmax
# ---------------------------------------------------------------------------


def softmax(logits: Tensor, mask=None) -> Tensor:
    """Max-stabilised softmax over the last axis of a rank-1 or rank-2 tensor.

    ``mask`` is an optional boolean array of the same shape; masked positions
    get weight exactly 0 and take no part in the normalisation. A row with no
    valid position is an error, not a NaN.
    """
    v = logits.data
    if v.ndim not in (1, 2):
        raise ShapeError(f"softmax over shape {v.shape}")
    if mask is None:
        valid = np.ones(v.shape, dtype=bool)
    else:
        valid = np.asarray(mask, dtype=bool)
        if valid.shape != v.shape:
            raise ShapeError(f"mask shape {valid.shape} != logits shape {v.shape}")
    if not valid.any(axis=-1).all():
        raise EmptySupportError("softmax row with all positions masked")

    shifted = np.where(valid, v, -np.inf)
    shifted = shifted - shifted.max(axis=-1, keepdims=True)
    e = np.exp(shifted)  # exp(-inf) = 0 at masked positions
    out = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        inner = (out * g).sum(axis=-1, keepdims=True)
        _accumulate(logits, out * (g - inner))

    return _result(out, (logits,), bwd)


# ---------------------------------------------------------------------------
# rank-3 sequence ops (batch, time, channels)
# ---------------------------------------------------------------------------


def time_slice(x: Tensor, t: int) -> Tensor:
    """(B,T,C) -> (B,C), the slice at time t."""
    if x.data.ndim != 3 or not 0 <= t < x.data.shape[1]:
        raise ShapeError(f"time_slice {t} of shape {x.data.shape}")

    def bwd(g):
        full = np.zeros_like(x.data)
        full[:, t, :] = g
        _accumulate(x, full)

    return _result(x.data[:, t, :].copy(), (x,), bwd)


def sum_time(x: Tensor) -> Tensor:
    """(B,T,C) -> (B,C), summed over time."""
    if x.data.ndim != 3:
        raise ShapeError(f"sum_time of shape {x.data.shape}")

    def bwd(g):
        _accumulate(x, np.repeat(g[:, None, :], x.data.shape[1], axis=1))

    return _result(x.data.sum(axis=1), (x,), bwd)


def conv1d(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """Valid temporal convolution, stride 1: (B,T,Ci) * (Co,Ci,W) -> (B,T-W+1,Co)."""
    _check_same_dtype(x, kernel, bias)
    if x.data.ndim != 3 or kernel.data.ndim != 3 or bias.data.ndim != 1:
        raise ShapeError("conv1d expects (B,T,Ci), (Co,Ci,W), (Co,)")
    if x.data.shape[2] != kernel.data.shape[1] or kernel.data.shape[0] != bias.data.shape[0]:
        raise ShapeError(f"conv1d: x {x.data.shape}, kernel {kernel.data.shape}, bias {bias.data.shape}")
    if x.data.shape[1] < kernel.data.shape[2]:
        raise ShapeError(f"conv1d: sequence length {x.data.shape[1]} < kernel width {kernel.data.shape[2]}")
    out = kernels.conv1d_forward(x.data, kernel.data, bias.data)

    def bwd(g):
        gx, gk, gb = kernels.conv1d_backward(np.ascontiguousarray(g), x.data, kernel.data)
        _accumulate(x, gx)
        _accumulate(kernel, gk)
        _accumulate(bias, gb)

    return _result(out, (x, kernel, bias), bwd)


def maxpool1d(x: Tensor, width: int) -> Tensor:
    """Non-overlapping temporal max-pool: (B,T,C) -> (B,T//width,C)."""
    if x.data.ndim != 3:
        raise ShapeError(f"maxpool1d of shape {x.data.shape}")
    if width < 1 or x.data.shape[1] // width < 1:
        raise ShapeError(f"maxpool1d width {width} on length {x.data.shape[1]}")
    if width == 1:
        values = x.data
        indices = None
    else:
        values, indices = kernels.maxpool1d_forward(x.data, width)

    def bwd(g):
        if indices is None:
            _accumulate(x, g)
        else:
            _accumulate(x, kernels.maxpool1d_backward(np.ascontiguousarray(g), indices, x.data.shape[1]))

    return _result(values, (x,), bwd)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------


def backward(output: Tensor) -> None:
    """Accumulate d(output)/d(leaf) into the grad buffers of reachable tensors.

    ``output`` must hold a single value. Nodes run in reverse creation order,
    which is a topological order of the recorded DAG, so accumulation order is
    fixed and results are bitwise reproducible.
    """
    if output.data.size != 1:
        raise ContractError(f"backward on non-scalar output of shape {output.data.shape}")

    nodes = []
    seen = {id(output)}
    stack = [output]
    while stack:
        node = stack.pop()
        if node._backward is not None:
            nodes.append(node)
        for parent in node._parents:
            if id(parent) not in seen:
                seen.add(id(parent))
                stack.append(parent)

    nodes.sort(key=lambda t: t._idx, reverse=True)
    output.grad = np.ones_like(output.data)
    for node in nodes:
        if node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# parameter store
# ---------------------------------------------------------------------------


class ParamStore:
    """Named trainable tensors with gradient buffers; iteration is sorted by name."""

    def __init__(self):
        self._params = {}

    def add(self, name: str, values) -> Tensor:
        if name in self._params:
            raise ContractError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(values), requires_grad=True)
        t.grad = np.zeros_like(t.data)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self):
        return sorted(self._params)

    def items(self):
        for name in sorted(self._params):
            yield name, self._params[name]

    def zero_grads(self) -> None:
        for _, t in self.items():
            t.grad = np.zeros_like(t.data)

    def num_values(self) -> int:
        return sum(t.data.size for t in self._params.values())

    @property
    def dtype(self):
        dtypes = {t.data.dtype for t in self._params.values()}
        if len(dtypes) != 1:
            raise ContractError(f"parameter store holds mixed dtypes: {dtypes}")
        return dtypes.pop()

    def astype(self, dtype) -> "ParamStore":
        """Copy of the store with every parameter cast (used for 64-bit checks)."""
        other = ParamStore()
        for name, t in self.items():
            other.add(name, t.data.astype(dtype))
        return other

    def state(self) -> dict:
        return {name: t.data.copy() for name, t in self.items()}

    def load_state(self, state: dict) -> None:
        for name, t in self.items():
            src = np.asarray(state[name])
            if src.shape != t.data.shape:
                raise ShapeError(f"parameter {name!r}: stored shape {src.shape} != {t.data.shape}")
            t.data = src.astype(t.data.dtype)
            t.grad = np.zeros_like(t.data)


# ---------------------------------------------------------------------------
# finite-difference gradient checking
# ---------------------------------------------------------------------------

# Elements where both gradients fall below this magnitude are compared
# absolutely; a pure ratio there would only amplify finite-difference noise.
_REL_SWITCH = 1e-6


@dataclass
class GradCheckEntry:
    name: str
    max_rel_error: float
    passed: bool


@dataclass
class GradCheckReport:
    tolerance: float
    step: float
    entries: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def worst(self) -> GradCheckEntry:
        return max(self.entries, key=lambda e: e.max_rel_error)

    def format(self) -> str:
        width = max(len(e.name) for e in self.entries) if self.entries else 4
        lines = [f"{e.name:<{width}}  {e.max_rel_error:12.3e}  {'pass' if e.passed else 'FAIL'}"
                 for e in self.entries]
        return "\n".join(lines)


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    diff = np.abs(analytic - numeric)
    denom = np.maximum(np.abs(analytic), np.abs(numeric))
    rel = np.where(denom > _REL_SWITCH, diff / np.maximum(denom, _REL_SWITCH), diff)
    return float(rel.max()) if rel.size else 0.0


def grad_check(f, params: ParamStore, step: float = 1e-5, tolerance: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients of scalar-valued ``f()`` against central differences.

    ``f`` must read its parameters from ``params`` (float64; checks in float32
    are rejected as unreliable) and be deterministic: it is called twice up
    front and any bit-level difference raises ``DeterminismError``.
    """
    if params.dtype != np.float64:
        raise ContractError("grad_check requires float64 parameters")

    with no_grad():
        first = f()
        second = f()
    if first.data.size != 1:
        raise ContractError("grad_check target must be scalar")
    if not np.array_equal(first.data, second.data):
        raise DeterminismError("function value changed across identical calls")

    params.zero_grads()
    out = f()
    backward(out)
    analytic = {name: t.grad.copy() for name, t in params.items()}

    report = GradCheckReport(tolerance=tolerance, step=step)
    for name, t in params.items():
        flat = t.data.reshape(-1)
        numeric = np.zeros_like(flat)
        with no_grad():
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                f_plus = f().item()
                flat[i] = orig - step
                f_minus = f().item()
                flat[i] = orig
                numeric[i] = (f_plus - f_minus) / (2.0 * step)
        err = _relative_error(analytic[name].reshape(-1), numeric)
        report.entries.append(GradCheckEntry(name=name, max_rel_error=err, passed=err < tolerance))
    return report
