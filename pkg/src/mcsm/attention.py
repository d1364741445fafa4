"""Feed-forward attention over hidden sequences.

Scores each position with tanh(W.h) followed by a learned scoring vector and
a masked softmax; the attended sequence scales every hidden vector by its
weight. Padded positions get weight exactly 0 and so contribute nothing to
any downstream sum.
"""

from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .encoders import glorot_uniform
from .errors import EmptyInputError, ShapeError
from .numcore import ParamStore, Tensor


@dataclass
class AttentionParams:
    """w (attn_dim, d) projection, v (attn_dim,) scoring vector."""

    w: Tensor
    v: Tensor

    @property
    def input_dim(self) -> int:
        return self.w.data.shape[1]


def init_attention_params(store: ParamStore, prefix: str, input_dim: int, attn_dim: int,
                          rng: np.random.Generator, dtype=np.float32) -> AttentionParams:
    return AttentionParams(
        w=store.add(f"{prefix}.w", glorot_uniform(rng, (attn_dim, input_dim), dtype)),
        v=store.add(f"{prefix}.v", glorot_uniform(rng, (attn_dim,), dtype)),
    )


def attention_weights(hidden, params: AttentionParams, mask=None) -> Tensor:
    """Per-position weights for one instance: (n,d) rows -> (n,) summing to 1.

    mask is an optional boolean (n,) validity vector; masked weights are 0.
    """
    if not isinstance(hidden, Tensor):
        hidden = nc.constant(np.asarray(hidden, dtype=params.w.data.dtype))
    if hidden.data.ndim != 2:
        raise ShapeError(f"attention_weights expects (n,d) rows, got {hidden.data.shape}")
    if hidden.data.shape[0] == 0:
        raise EmptyInputError("attention over empty sequence")
    scored = nc.tanh(nc.matmul(hidden, params.w, transpose_b=True))  # (n, attn)
    logits = nc.matmul(scored, params.v)  # (n,)
    return nc.softmax(logits, mask=mask)


def attention_weights_batch(hidden_steps, params: AttentionParams, mask=None) -> Tensor:
    """Batched weights: list of n (B,d) step tensors -> (B,n) rows summing to 1."""
    if not hidden_steps:
        raise EmptyInputError("attention over empty sequence")
    v_col = nc.reshape(params.v, (params.v.data.shape[0], 1))
    logits = []
    for h in hidden_steps:
        scored = nc.tanh(nc.matmul(h, params.w, transpose_b=True))  # (B, attn)
        logits.append(nc.reshape(nc.matmul(scored, v_col), (h.data.shape[0],)))
    return nc.softmax(nc.stack_columns(logits), mask=mask)


def attended_sequence(hidden, weights: Tensor) -> Tensor:
    """Scale hidden vector j by weight j: (n,d),(n,) -> (n,d)."""
    if not isinstance(hidden, Tensor):
        hidden = nc.constant(np.asarray(hidden, dtype=weights.data.dtype))
    if hidden.data.ndim != 2 or weights.data.ndim != 1 \
            or hidden.data.shape[0] != weights.data.shape[0]:
        raise ShapeError(f"attended_sequence: {hidden.data.shape} with {weights.data.shape}")
    return nc.scale_rows(hidden, weights)


def attended_sum_batch(hidden_steps, weights: Tensor) -> Tensor:
    """Weighted sum over positions: steps of (B,d) with (B,n) weights -> (B,d)."""
    if len(hidden_steps) != weights.data.shape[1]:
        raise ShapeError(f"{len(hidden_steps)} steps vs {weights.data.shape[1]} weight columns")
    total = None
    for j, h in enumerate(hidden_steps):
        term = nc.scale_rows(h, nc.column(weights, j))
        total = term if total is None else nc.add(total, term)
    return total
