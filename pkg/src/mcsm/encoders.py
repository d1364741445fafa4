"""Sequence encoders: LSTM over feature rows, temporal convolution block for
text, and linear projections.

All functions run on batched rank-2/rank-3 tensors (rows = batch) and accept
rank-1/rank-2 single-instance input, which is promoted to a batch of one.
Parameters are created through a ParamStore so gradients, SGD updates and
checkpointing see one flat namespace.
"""

from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .errors import EmptyInputError, ShapeError, TooShortError
from .numcore import ParamStore, Tensor

GATES = ("input", "forget", "output", "update")


def glorot_uniform(rng: np.random.Generator, shape, dtype) -> np.ndarray:
    """Uniform init in +-sqrt(6/(fan_in+fan_out)).

    Matrices (out,in): fans are the two extents. Conv kernels (out,in,w):
    fans include the kernel width. Rank-1 tensors count as fan_in=len, fan_out=1.
    """
    if len(shape) == 1:
        fan_in, fan_out = shape[0], 1
    elif len(shape) == 2:
        fan_out, fan_in = shape
    elif len(shape) == 3:
        fan_out, fan_in = shape[0] * shape[2], shape[1] * shape[2]
    else:
        raise ShapeError(f"glorot init for rank {len(shape)}")
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _wrap(x, dtype) -> Tensor:
    return x if isinstance(x, Tensor) else nc.constant(np.asarray(x, dtype=dtype))


# ---------------------------------------------------------------------------
# LSTM
# ---------------------------------------------------------------------------


@dataclass
class LstmParams:
    """Per-gate weights: w[g] (hidden,input), u[g] (hidden,hidden), b[g] (hidden,)."""

    w: dict
    u: dict
    b: dict

    @property
    def input_dim(self) -> int:
        return self.w["input"].data.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w["input"].data.shape[0]


def init_lstm_params(store: ParamStore, prefix: str, input_dim: int, hidden_dim: int,
                     rng: np.random.Generator, dtype=np.float32) -> LstmParams:
    """Glorot weights, zero biases; forget-gate bias starts at 1 to keep early memory."""
    w, u, b = {}, {}, {}
    for gate in GATES:
        w[gate] = store.add(f"{prefix}.{gate}.w", glorot_uniform(rng, (hidden_dim, input_dim), dtype))
        u[gate] = store.add(f"{prefix}.{gate}.u", glorot_uniform(rng, (hidden_dim, hidden_dim), dtype))
        init = np.ones(hidden_dim, dtype=dtype) if gate == "forget" else np.zeros(hidden_dim, dtype=dtype)
        b[gate] = store.add(f"{prefix}.{gate}.b", init)
    return LstmParams(w=w, u=u, b=b)


def _gate_preact(x: Tensor, h: Tensor, w: Tensor, u: Tensor, b: Tensor) -> Tensor:
    return nc.add_rowvec(nc.add(nc.matmul(x, w, transpose_b=True),
                                nc.matmul(h, u, transpose_b=True)), b)


def lstm_step(x, h_prev, c_prev, params: LstmParams):
    """One LSTM update. Accepts (d,) vectors or (B,d) batches; returns (h, c).

    Gates: input/forget/output through sigmoid, candidate through tanh,
    c = candidate*input_gate + c_prev*forget_gate, h = output_gate*tanh(c).
    """
    dtype = params.w["input"].data.dtype
    x, h_prev, c_prev = _wrap(x, dtype), _wrap(h_prev, dtype), _wrap(c_prev, dtype)
    single = x.data.ndim == 1
    if single:
        x = nc.reshape(x, (1, x.data.shape[0]))
        h_prev = nc.reshape(h_prev, (1, h_prev.data.shape[0]))
        c_prev = nc.reshape(c_prev, (1, c_prev.data.shape[0]))

    gate_in = nc.sigmoid(_gate_preact(x, h_prev, params.w["input"], params.u["input"], params.b["input"]))
    gate_forget = nc.sigmoid(_gate_preact(x, h_prev, params.w["forget"], params.u["forget"], params.b["forget"]))
    gate_out = nc.sigmoid(_gate_preact(x, h_prev, params.w["output"], params.u["output"], params.b["output"]))
    candidate = nc.tanh(_gate_preact(x, h_prev, params.w["update"], params.u["update"], params.b["update"]))

    c = nc.add(nc.hadamard(candidate, gate_in), nc.hadamard(c_prev, gate_forget))
    h = nc.hadamard(gate_out, nc.tanh(c))
    if single:
        h = nc.reshape(h, (h.data.shape[1],))
        c = nc.reshape(c, (c.data.shape[1],))
    return h, c


def lstm_run(steps, params: LstmParams):
    """Run the LSTM over a list of (B,d) step tensors; returns the list of (B,hidden)."""
    if not steps:
        raise EmptyInputError("lstm_run over empty sequence")
    batch = steps[0].data.shape[0]
    dtype = steps[0].data.dtype
    h = nc.constant(np.zeros((batch, params.hidden_dim), dtype=dtype))
    c = nc.constant(np.zeros((batch, params.hidden_dim), dtype=dtype))
    hidden = []
    for x in steps:
        h, c = lstm_step(x, h, c, params)
        hidden.append(h)
    return hidden


def lstm_sequence(seq, params: LstmParams):
    """Encode one instance: (T,d) rows -> list of T rank-1 hidden tensors.

    Accepts a FeatureSequence, ndarray or Tensor; h_0 = c_0 = 0.
    """
    values = getattr(seq, "values", seq)
    dtype = params.w["input"].data.dtype
    t = _wrap(values, dtype)
    if t.data.ndim != 2:
        raise ShapeError(f"lstm_sequence expects (T,d) rows, got {t.data.shape}")
    if t.data.shape[0] == 0:
        raise EmptyInputError("lstm_sequence over empty sequence")
    x3 = nc.reshape(t, (1,) + t.data.shape)
    steps = [nc.time_slice(x3, i) for i in range(t.data.shape[0])]
    hidden = lstm_run(steps, params)
    return [nc.reshape(h, (params.hidden_dim,)) for h in hidden]


def lstm_stack_run(steps, stack):
    """Feed each LSTM unit's hidden sequence into the next ('units in series')."""
    hidden = steps
    for params in stack:
        hidden = lstm_run(hidden, params)
    return hidden


# ---------------------------------------------------------------------------
# temporal convolution block
# ---------------------------------------------------------------------------


@dataclass
class ConvLayerParams:
    """One conv layer: kernel (out,in,width), bias (out,), pool width (stride = width)."""

    kernel: Tensor
    bias: Tensor
    pool: int

    @property
    def width(self) -> int:
        return self.kernel.data.shape[2]


def init_conv_block(store: ParamStore, prefix: str, in_channels: int, layer_specs,
                    rng: np.random.Generator, dtype=np.float32):
    """Build the conv block from (out_channels, kernel_width, pool_width) specs."""
    layers = []
    channels = in_channels
    for i, (out_ch, width, pool) in enumerate(layer_specs):
        if width < 1 or pool < 1:
            raise ShapeError(f"conv layer {i}: width {width}, pool {pool}")
        base = f"{prefix}.conv{i}" if prefix else f"conv{i}"
        kernel = store.add(f"{base}.kernel", glorot_uniform(rng, (out_ch, channels, width), dtype))
        bias = store.add(f"{base}.bias", np.zeros(out_ch, dtype=dtype))
        layers.append(ConvLayerParams(kernel=kernel, bias=bias, pool=int(pool)))
        channels = out_ch
    return layers


def conv_block_output_length(length: int, layers) -> int:
    """Valid-conv / pool length arithmetic; raises if the block eats the sequence."""
    for i, layer in enumerate(layers):
        length = length - layer.width + 1
        if length >= 1:
            length = length // layer.pool
        if length < 1:
            raise TooShortError(f"sequence exhausted at conv layer {i}")
    return length


def temporal_conv_block(words, layers):
    """Conv -> ReLU -> temporal max-pool per layer.

    Input (m,k) word rows or a (B,T,k) batch; output (m',C) fragments or
    (B,T',C). Stride is 1 for convolutions and equal to the pool width for
    pooling (remainder positions dropped).
    """
    dtype = layers[0].kernel.data.dtype
    x = _wrap(words, dtype)
    single = x.data.ndim == 2
    if single:
        x = nc.reshape(x, (1,) + x.data.shape)
    if x.data.ndim != 3:
        raise ShapeError(f"temporal_conv_block expects (m,k) or (B,T,k), got {x.data.shape}")
    conv_block_output_length(x.data.shape[1], layers)  # too-short guard up front

    for layer in layers:
        x = nc.conv1d(x, layer.kernel, layer.bias)
        x = nc.relu(x)
        x = nc.maxpool1d(x, layer.pool)
    if single:
        x = nc.reshape(x, x.data.shape[1:])
    return x


# ---------------------------------------------------------------------------
# projections and the text global vector
# ---------------------------------------------------------------------------


@dataclass
class ProjectionParams:
    """Affine map: w (out,in), b (out,)."""

    w: Tensor
    b: Tensor


def init_projection(store: ParamStore, prefix: str, in_dim: int, out_dim: int,
                    rng: np.random.Generator, dtype=np.float32) -> ProjectionParams:
    return ProjectionParams(
        w=store.add(f"{prefix}.w", glorot_uniform(rng, (out_dim, in_dim), dtype)),
        b=store.add(f"{prefix}.b", np.zeros(out_dim, dtype=dtype)),
    )


def project(h, w, b):
    """W.h + b, no nonlinearity. h is (d,) or (B,d)."""
    if not isinstance(w, Tensor) or not isinstance(b, Tensor):
        raise ShapeError("project expects parameter tensors")
    h = _wrap(h, w.data.dtype)
    if h.data.ndim == 1:
        return nc.add(nc.matmul(w, h), b)
    return nc.add_rowvec(nc.matmul(h, w, transpose_b=True), b)


def encode_text_global(words, proj: ProjectionParams):
    """Mean of the word vectors, then a learnable projection: (m,k) -> (target,)."""
    dtype = proj.w.data.dtype
    t = _wrap(words, dtype)
    if t.data.ndim != 2:
        raise ShapeError(f"encode_text_global expects (m,k) rows, got {t.data.shape}")
    m = t.data.shape[0]
    if m == 0:
        raise EmptyInputError("encode_text_global over empty text")
    mean = nc.reshape(nc.scale(nc.sum_time(nc.reshape(t, (1,) + t.data.shape)), 1.0 / m),
                      (t.data.shape[1],))
    return project(mean, proj.w, proj.b)


def encode_text_global_batch(words3, valid_lengths, proj: ProjectionParams):
    """Batched text globals: (B,T,k) zero-padded rows + per-instance valid lengths.

    Padded rows are exactly zero, so the sum over all T positions equals the
    sum over valid ones; dividing by the valid length gives the true mean.
    """
    dtype = proj.w.data.dtype
    x = _wrap(words3, dtype)
    valid = np.asarray(valid_lengths)
    if x.data.ndim != 3 or valid.shape != (x.data.shape[0],):
        raise ShapeError(f"encode_text_global_batch: {x.data.shape} with valid {valid.shape}")
    if (valid < 1).any():
        raise EmptyInputError("instance with zero valid words")
    inv = nc.constant((1.0 / valid).astype(dtype))
    mean = nc.scale_rows(nc.sum_time(x), inv)
    return project(mean, proj.w, proj.b)
