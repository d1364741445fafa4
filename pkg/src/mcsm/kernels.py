"""Hot numeric kernels: temporal (1-D) convolution and temporal max-pooling.

Each kernel has two interchangeable implementations: a numba ``@njit`` one and
a vectorised pure-numpy one. The numba path is used when numba imports and the
environment variable ``MCSM_NUMBA`` is not set to ``0``; everything else in the
package goes through the dispatching wrappers at the bottom of this module.
Both implementations are kept importable so tests and ``benchmarks/`` can
compare them directly.

Shapes follow the row-major convention used across the package:
``x (B, T, Cin)``, kernel ``(Cout, Cin, W)``, outputs ``(B, T-W+1, Cout)``.
"""

import os

import numpy as np

_ENV = os.environ.get("MCSM_NUMBA", "1").strip().lower()
_WANT_NUMBA = _ENV not in ("0", "false", "off", "no")

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(func):
            return func

        return wrap(args[0]) if args and callable(args[0]) else wrap


USING_NUMBA = HAS_NUMBA and _WANT_NUMBA


# ---------------------------------------------------------------------------
# pure-numpy implementations
# ---------------------------------------------------------------------------


def conv1d_forward_numpy(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Valid 1-D convolution, stride 1. x (B,T,Ci), kernel (Co,Ci,W) -> (B,T-W+1,Co)."""
    _, t, _ = x.shape
    width = kernel.shape[2]
    t_out = t - width + 1
    out = np.zeros((x.shape[0], t_out, kernel.shape[0]), dtype=x.dtype)
    for w in range(width):
        out += x[:, w:w + t_out, :] @ kernel[:, :, w].T
    return out + bias


def conv1d_backward_numpy(grad_out, x, kernel):
    """Gradients of conv1d_forward. Returns (grad_x, grad_kernel, grad_bias)."""
    t_out = grad_out.shape[1]
    width = kernel.shape[2]
    grad_x = np.zeros_like(x)
    grad_k = np.zeros_like(kernel)
    for w in range(width):
        grad_k[:, :, w] = np.einsum("bto,btc->oc", grad_out, x[:, w:w + t_out, :])
        grad_x[:, w:w + t_out, :] += grad_out @ kernel[:, :, w]
    grad_b = grad_out.sum(axis=(0, 1))
    return grad_x, grad_k, grad_b


def maxpool1d_forward_numpy(x: np.ndarray, width: int):
    """Non-overlapping temporal max-pool (stride = width, remainder dropped).

    x (B,T,C) -> (values (B,T//width,C), argmax time indices, same shape, int64).
    Ties keep the earliest position, matching the jit path.
    """
    b, t, c = x.shape
    t_out = t // width
    windows = x[:, : t_out * width, :].reshape(b, t_out, width, c)
    inner = windows.argmax(axis=2)
    values = np.take_along_axis(windows, inner[:, :, None, :], axis=2)[:, :, 0, :]
    indices = inner + (np.arange(t_out, dtype=np.int64) * width)[None, :, None]
    return values, indices


def maxpool1d_backward_numpy(grad_out, indices, t: int):
    """Scatter pooled gradients back to the (B,t,C) input positions."""
    b, _, c = grad_out.shape
    grad_x = np.zeros((b, t, c), dtype=grad_out.dtype)
    rows = np.arange(b)[:, None, None]
    cols = np.arange(c)[None, None, :]
    np.add.at(grad_x, (rows, indices, cols), grad_out)
    return grad_x


# ---------------------------------------------------------------------------
# numba implementations (compiled lazily per dtype)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _conv1d_fwd_jit(x, kernel, bias, out):
    b, t, ci = x.shape
    co = kernel.shape[0]
    width = kernel.shape[2]
    t_out = t - width + 1
    for n in range(b):
        for j in range(t_out):
            for o in range(co):
                acc = bias[o]
                for w in range(width):
                    for c in range(ci):
                        acc += x[n, j + w, c] * kernel[o, c, w]
                out[n, j, o] = acc


@njit(cache=True)
def _conv1d_bwd_jit(grad_out, x, kernel, grad_x, grad_k, grad_b):
    b, t_out, co = grad_out.shape
    ci = kernel.shape[1]
    width = kernel.shape[2]
    for n in range(b):
        for j in range(t_out):
            for o in range(co):
                g = grad_out[n, j, o]
                grad_b[o] += g
                for w in range(width):
                    for c in range(ci):
                        grad_k[o, c, w] += g * x[n, j + w, c]
                        grad_x[n, j + w, c] += g * kernel[o, c, w]


@njit(cache=True)
def _maxpool1d_fwd_jit(x, width, values, indices):
    b, t, c = x.shape
    t_out = t // width
    for n in range(b):
        for j in range(t_out):
            for k in range(c):
                best = x[n, j * width, k]
                best_i = j * width
                for w in range(1, width):
                    v = x[n, j * width + w, k]
                    if v > best:
                        best = v
                        best_i = j * width + w
                values[n, j, k] = best
                indices[n, j, k] = best_i


@njit(cache=True)
def _maxpool1d_bwd_jit(grad_out, indices, grad_x):
    b, t_out, c = grad_out.shape
    for n in range(b):
        for j in range(t_out):
            for k in range(c):
                grad_x[n, indices[n, j, k], k] += grad_out[n, j, k]


def conv1d_forward_jit(x, kernel, bias):
    t_out = x.shape[1] - kernel.shape[2] + 1
    out = np.empty((x.shape[0], t_out, kernel.shape[0]), dtype=x.dtype)
    _conv1d_fwd_jit(x, kernel, bias, out)
    return out


def conv1d_backward_jit(grad_out, x, kernel):
    grad_x = np.zeros_like(x)
    grad_k = np.zeros_like(kernel)
    grad_b = np.zeros(kernel.shape[0], dtype=kernel.dtype)
    _conv1d_bwd_jit(grad_out, x, kernel, grad_x, grad_k, grad_b)
    return grad_x, grad_k, grad_b


def maxpool1d_forward_jit(x, width: int):
    b, t, c = x.shape
    t_out = t // width
    values = np.empty((b, t_out, c), dtype=x.dtype)
    indices = np.empty((b, t_out, c), dtype=np.int64)
    _maxpool1d_fwd_jit(x, width, values, indices)
    return values, indices


def maxpool1d_backward_jit(grad_out, indices, t: int):
    grad_x = np.zeros((grad_out.shape[0], t, grad_out.shape[2]), dtype=grad_out.dtype)
    _maxpool1d_bwd_jit(grad_out, indices, grad_x)
    return grad_x


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

if USING_NUMBA:
    conv1d_forward = conv1d_forward_jit
    conv1d_backward = conv1d_backward_jit
    maxpool1d_forward = maxpool1d_forward_jit
    maxpool1d_backward = maxpool1d_backward_jit
else:
    conv1d_forward = conv1d_forward_numpy
    conv1d_backward = conv1d_backward_numpy
    maxpool1d_forward = maxpool1d_forward_numpy
    maxpool1d_backward = maxpool1d_backward_numpy
