"""Semantic space assembly: encoder + attention + the opposite modality's
global projection, the modality-specific cross-modal similarities, similarity
matrices, and checkpoint serialization.

Each space is anchored in one modality: its fine-grained sequence runs through
LSTM(+conv for text) -> projection -> attention, and the other modality enters
as a single global vector dotted against the attended sum. The two spaces
share no parameters and are stored in separate checkpoints.
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import numcore as nc
from .attention import (AttentionParams, attended_sum_batch, attention_weights_batch,
                        init_attention_params)
from .encoders import (ConvLayerParams, LstmParams, ProjectionParams,
                       conv_block_output_length, encode_text_global,
                       encode_text_global_batch, init_conv_block, init_lstm_params,
                       init_projection, lstm_stack_run, project, temporal_conv_block)
from .errors import ContractError, CorruptFileError, FormatError, ShapeError
from .numcore import ParamStore, Tensor

KIND_IMAGE = "image"
KIND_TEXT = "text"

# desk-scale stand-in for the reference conv stack (384,15)->(512,9)->(256,7)
DEFAULT_CONV_SPECS = ((16, 3, 1), (16, 3, 1), (16, 2, 1))


@dataclass
class DimConfig:
    """The six serialized dimension fields shared by both space kinds."""

    feature_dim: int    # sequence input width: region dim (image) / word dim (text)
    hidden_dim: int
    attention_dim: int
    target_dim: int     # attended-vector dim == opposite global-vector dim
    conv_layers: int = 0
    grid_size: int = 0

    def as_tuple(self):
        return (self.feature_dim, self.hidden_dim, self.attention_dim,
                self.target_dim, self.conv_layers, self.grid_size)


@dataclass
class SimilarityMatrix:
    """Query-by-candidate scores: rows are images, columns are texts."""

    values: np.ndarray
    tag: str  # "sim_i" | "sim_t" | "fused" | "late-fused"

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2:
            raise ShapeError(f"similarity matrix must be rank-2, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ContractError("similarity matrix contains NaN or Inf")


@dataclass
class SemanticSpaceModel:
    kind: str
    dims: DimConfig
    store: ParamStore
    lstm_stack: list
    proj: ProjectionParams               # hidden -> target, feeds attention and the dot product
    attn: AttentionParams
    conv: list                           # text space only
    text_global_proj: ProjectionParams = None  # image space only

    @property
    def dtype(self):
        return self.store.dtype


def create_image_space(dims: DimConfig, word_dim: int, seed: int = 0,
                       dtype=np.float32, lstm_units: int = 1) -> SemanticSpaceModel:
    """Image-anchored space: region sequence encoder plus the text-global projection."""
    if dims.conv_layers != 0:
        raise ContractError("image space carries no conv block")
    rng = np.random.default_rng(seed)
    store = ParamStore()
    stack = []
    in_dim = dims.feature_dim
    for i in range(lstm_units):
        stack.append(init_lstm_params(store, f"lstm{i}", in_dim, dims.hidden_dim, rng, dtype))
        in_dim = dims.hidden_dim
    proj = init_projection(store, "proj", dims.hidden_dim, dims.target_dim, rng, dtype)
    attn = init_attention_params(store, "attn", dims.target_dim, dims.attention_dim, rng, dtype)
    text_proj = init_projection(store, "text_global", word_dim, dims.target_dim, rng, dtype)
    return SemanticSpaceModel(kind=KIND_IMAGE, dims=dims, store=store, lstm_stack=stack,
                              proj=proj, attn=attn, conv=[], text_global_proj=text_proj)


def create_text_space(dims: DimConfig, conv_specs=DEFAULT_CONV_SPECS, seed: int = 0,
                      dtype=np.float32, lstm_units: int = 1) -> SemanticSpaceModel:
    """Text-anchored space: word conv block, fragment LSTM; image global enters raw."""
    conv_specs = tuple(tuple(s) for s in conv_specs)
    if len(conv_specs) == 0:
        raise ContractError("text space needs at least one conv layer")
    if dims.conv_layers != len(conv_specs):
        raise ContractError(f"dims.conv_layers={dims.conv_layers} but {len(conv_specs)} specs given")
    rng = np.random.default_rng(seed)
    store = ParamStore()
    conv = init_conv_block(store, "", dims.feature_dim, conv_specs, rng, dtype)
    stack = []
    in_dim = conv_specs[-1][0]
    for i in range(lstm_units):
        stack.append(init_lstm_params(store, f"lstm{i}", in_dim, dims.hidden_dim, rng, dtype))
        in_dim = dims.hidden_dim
    proj = init_projection(store, "proj", dims.hidden_dim, dims.target_dim, rng, dtype)
    attn = init_attention_params(store, "attn", dims.target_dim, dims.attention_dim, rng, dtype)
    return SemanticSpaceModel(kind=KIND_TEXT, dims=dims, store=store, lstm_stack=stack,
                              proj=proj, attn=attn, conv=conv, text_global_proj=None)


# ---------------------------------------------------------------------------
# encoding and similarity
# ---------------------------------------------------------------------------


def _length_mask(valid, length: int) -> np.ndarray:
    valid = np.asarray(valid)
    return np.arange(length)[None, :] < valid[:, None]


def encode_image_batch(model: SemanticSpaceModel, seqs, valid) -> Tensor:
    """Region sequences (B,T,d) + valid lengths -> attended vectors (B,target)."""
    if model.kind != KIND_IMAGE:
        raise ContractError(f"encode_image_batch on a {model.kind}-anchored space")
    seqs = np.asarray(seqs, dtype=model.dtype)
    if seqs.ndim != 3 or seqs.shape[2] != model.dims.feature_dim:
        raise ShapeError(f"image batch {seqs.shape} vs feature dim {model.dims.feature_dim}")
    x3 = nc.constant(seqs)
    steps = [nc.time_slice(x3, t) for t in range(seqs.shape[1])]
    hidden = lstm_stack_run(steps, model.lstm_stack)
    projected = [project(h, model.proj.w, model.proj.b) for h in hidden]
    weights = attention_weights_batch(projected, model.attn,
                                      mask=_length_mask(valid, len(projected)))
    return attended_sum_batch(projected, weights)


def encode_text_batch(model: SemanticSpaceModel, words, valid) -> Tensor:
    """Word matrices (B,T,k) + valid lengths -> attended fragment vectors (B,target)."""
    if model.kind != KIND_TEXT:
        raise ContractError(f"encode_text_batch on a {model.kind}-anchored space")
    words = np.asarray(words, dtype=model.dtype)
    if words.ndim != 3 or words.shape[2] != model.dims.feature_dim:
        raise ShapeError(f"text batch {words.shape} vs word dim {model.dims.feature_dim}")
    fragments = temporal_conv_block(nc.constant(words), model.conv)  # (B,T',C)
    frag_valid = np.array([conv_block_output_length(int(v), model.conv)
                           for v in np.asarray(valid)], dtype=np.int64)
    steps = [nc.time_slice(fragments, t) for t in range(fragments.data.shape[1])]
    hidden = lstm_stack_run(steps, model.lstm_stack)
    projected = [project(h, model.proj.w, model.proj.b) for h in hidden]
    weights = attention_weights_batch(projected, model.attn,
                                      mask=_length_mask(frag_valid, len(projected)))
    return attended_sum_batch(projected, weights)


def _as_seq_array(seq):
    values = getattr(seq, "values", seq)
    valid = getattr(seq, "valid_len", None)
    arr = np.asarray(values)
    return arr, (arr.shape[0] if valid is None else int(valid))


def sim_image_space(image_seq, text_global, model: SemanticSpaceModel) -> Tensor:
    """Image-space similarity: sum_j a_j (h_j . q_text), as a scalar tensor.

    ``text_global`` may be a plain vector or the tensor from
    encode_text_global, so losses differentiate through both sides.
    """
    arr, valid = _as_seq_array(image_seq)
    attended = encode_image_batch(model, arr[None, :, :], [valid])  # (1, target)
    q = text_global if isinstance(text_global, Tensor) else nc.constant(
        np.asarray(text_global, dtype=model.dtype))
    if q.data.ndim == 1:
        q = nc.reshape(q, (1, q.data.shape[0]))
    if q.data.shape != attended.data.shape:
        raise ShapeError(f"text global {q.data.shape} vs attended {attended.data.shape}")
    return nc.sum_all(nc.rowdot(attended, q))


def sim_text_space(text_words, image_global, model: SemanticSpaceModel) -> Tensor:
    """Text-space similarity: sum_j a_j (h_j . q_image), as a scalar tensor."""
    arr, valid = _as_seq_array(text_words)
    attended = encode_text_batch(model, arr[None, :, :], [valid])  # (1, target)
    q = image_global if isinstance(image_global, Tensor) else nc.constant(
        np.asarray(image_global, dtype=model.dtype))
    if q.data.ndim == 1:
        q = nc.reshape(q, (1, q.data.shape[0]))
    if q.data.shape != attended.data.shape:
        raise ShapeError(f"image global {q.data.shape} vs attended {attended.data.shape}")
    return nc.sum_all(nc.rowdot(attended, q))


def text_global_batch(model: SemanticSpaceModel, words, valid) -> Tensor:
    """(B,T,k) padded word matrices -> projected global text vectors (B,target)."""
    if model.text_global_proj is None:
        raise ContractError("this space kind computes no text global")
    return encode_text_global_batch(np.asarray(words, dtype=model.dtype), valid,
                                    model.text_global_proj)


_EVAL_CHUNK = 128


def _encode_all(fn, model, seqs, valid) -> np.ndarray:
    out = []
    with nc.no_grad():
        for start in range(0, len(seqs), _EVAL_CHUNK):
            out.append(fn(model, seqs[start:start + _EVAL_CHUNK],
                          valid[start:start + _EVAL_CHUNK]).data)
    return np.concatenate(out, axis=0)


def similarity_matrix_arrays(model: SemanticSpaceModel, image_seqs, image_valid,
                             image_globals, text_words, text_valid) -> SimilarityMatrix:
    """Scores for every image row against every text column.

    The attention weights of a query depend only on its own sequence, so the
    matrix factorizes into attended vectors times global vectors.
    """
    if model.kind == KIND_IMAGE:
        attended = _encode_all(encode_image_batch, model, image_seqs, image_valid)
        with nc.no_grad():
            globals_mat = np.concatenate(
                [text_global_batch(model, text_words[s:s + _EVAL_CHUNK],
                                   text_valid[s:s + _EVAL_CHUNK]).data
                 for s in range(0, len(text_words), _EVAL_CHUNK)], axis=0)
        return SimilarityMatrix(values=attended @ globals_mat.T, tag="sim_i")

    attended = _encode_all(encode_text_batch, model, text_words, text_valid)
    globals_mat = np.asarray(image_globals, dtype=model.dtype)
    if globals_mat.shape[1] != model.dims.target_dim:
        raise ShapeError(f"image globals dim {globals_mat.shape[1]} != target {model.dims.target_dim}")
    return SimilarityMatrix(values=globals_mat @ attended.T, tag="sim_t")


def similarity_matrix(model: SemanticSpaceModel, images, texts) -> SimilarityMatrix:
    """Instance-list form: images and texts are Instance records of one modality each."""
    if not images or not texts:
        raise ContractError("similarity_matrix over empty instance lists")
    img_len = max(i.sequence.valid_len for i in images)
    txt_len = max(t.sequence.valid_len for t in texts)
    from .data import pad_and_mask
    img_seqs = pad_and_mask([i.sequence for i in images], img_len)
    txt_seqs = pad_and_mask([t.sequence for t in texts], txt_len)
    return similarity_matrix_arrays(
        model,
        np.stack([s.values for s in img_seqs]),
        np.array([s.valid_len for s in img_seqs]),
        np.stack([i.global_vec for i in images]),
        np.stack([s.values for s in txt_seqs]),
        np.array([s.valid_len for s in txt_seqs]),
    )


def similarity_matrix_split(model: SemanticSpaceModel, split) -> SimilarityMatrix:
    return similarity_matrix_arrays(model, split.image_seqs, split.image_valid,
                                    split.image_globals, split.text_words, split.text_valid)


def check_dims_against_split(model: SemanticSpaceModel, split) -> None:
    """Raise early when a checkpoint and a dataset disagree on any width."""
    if model.kind == KIND_IMAGE:
        if split.image_seqs.shape[2] != model.dims.feature_dim:
            raise ShapeError(f"region dim {split.image_seqs.shape[2]} != model {model.dims.feature_dim}")
        if split.text_words.shape[2] != model.text_global_proj.w.data.shape[1]:
            raise ShapeError(f"word dim {split.text_words.shape[2]} != text-global projection "
                             f"{model.text_global_proj.w.data.shape[1]}")
        if model.dims.grid_size and split.image_seqs.shape[1] != model.dims.grid_size ** 2:
            raise ShapeError(f"sequence length {split.image_seqs.shape[1]} != grid "
                             f"{model.dims.grid_size}^2")
    else:
        if split.text_words.shape[2] != model.dims.feature_dim:
            raise ShapeError(f"word dim {split.text_words.shape[2]} != model {model.dims.feature_dim}")
        if split.image_globals.shape[1] != model.dims.target_dim:
            raise ShapeError(f"image global dim {split.image_globals.shape[1]} != target "
                             f"{model.dims.target_dim}")


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"MCSC"
CHECKPOINT_VERSION = 1
_KIND_BYTE = {KIND_IMAGE: 0, KIND_TEXT: 1}
_BYTE_KIND = {v: k for k, v in _KIND_BYTE.items()}
_POOLS_NAME = "conv.pool_widths"  # structural, not trainable


def save_checkpoint(model: SemanticSpaceModel, path) -> None:
    """Versioned binary checkpoint; parameters serialize as float32."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tensors = [(name, t.data) for name, t in model.store.items()]
    if model.conv:
        pools = np.array([layer.pool for layer in model.conv], dtype=np.float32)
        tensors.append((_POOLS_NAME, pools))
        tensors.sort(key=lambda nt: nt[0])

    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<B", _KIND_BYTE[model.kind]))
        fh.write(struct.pack("<6I", *model.dims.as_tuple()))
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors:
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


class _Reader:
    def __init__(self, raw: bytes, label: str):
        self.raw = raw
        self.pos = 0
        self.label = label

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise CorruptFileError(f"{self.label}: truncated at byte {self.pos}")
        chunk = self.raw[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path) -> SemanticSpaceModel:
    """Rebuild a model from its checkpoint; round-trips bitwise with save."""
    path = Path(path)
    rd = _Reader(path.read_bytes(), str(path))
    if rd.take(4) != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic")
    (version,) = rd.unpack("<I")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    (kind_byte,) = rd.unpack("<B")
    if kind_byte not in _BYTE_KIND:
        raise FormatError(f"{path}: unknown space kind {kind_byte}")
    kind = _BYTE_KIND[kind_byte]
    dims = DimConfig(*rd.unpack("<6I"))
    (count,) = rd.unpack("<I")

    tensors = {}
    for _ in range(count):
        (name_len,) = rd.unpack("<H")
        name = rd.take(name_len).decode("utf-8")
        (rank,) = rd.unpack("<B")
        shape = rd.unpack(f"<{rank}I") if rank else ()
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        values = np.frombuffer(rd.take(size * 4), dtype="<f4").reshape(shape).copy()
        tensors[name] = values
    if rd.pos != len(rd.raw):
        raise CorruptFileError(f"{path}: {len(rd.raw) - rd.pos} trailing bytes")

    lstm_units = 2 if any(n.startswith("lstm1.") for n in tensors) else 1

    if kind == KIND_IMAGE:
        if "text_global.w" not in tensors:
            raise FormatError(f"{path}: image-space checkpoint lacks the text-global projection")
        word_dim = tensors["text_global.w"].shape[1]
        model = create_image_space(dims, word_dim=word_dim, lstm_units=lstm_units)
    else:
        if _POOLS_NAME not in tensors:
            raise FormatError(f"{path}: text-space checkpoint lacks pool widths")
        pools = [int(p) for p in tensors.pop(_POOLS_NAME)]
        specs = []
        for i in range(dims.conv_layers):
            key = f"conv{i}.kernel"
            if key not in tensors:
                raise FormatError(f"{path}: missing {key}")
            out_ch, _, width = tensors[key].shape
            specs.append((out_ch, width, pools[i]))
        model = create_text_space(dims, conv_specs=specs, lstm_units=lstm_units)

    expected = set(model.store.names())
    found = set(tensors)
    if expected != found:
        raise FormatError(f"{path}: tensor names mismatch "
                          f"(missing {sorted(expected - found)}, extra {sorted(found - expected)})")
    model.store.load_state(tensors)
    return model
