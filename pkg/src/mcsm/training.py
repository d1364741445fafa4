"""Triplet sampling, the joint-embedding ranking losses, and the SGD loop.

Both spaces train independently on tuples (matched pair, text negative,
image negative); each tuple contributes two hinge terms that push the matched
similarity above both mismatched ones by a margin. Printed forms of the loss
in the source material reverse the sign inside the hinge, which would reward
mismatches; the standard ranking direction is implemented.

Everything is deterministic given (seed, config, dataset): sampling comes
from one generator, gradient accumulation order is fixed, and updates apply
in sorted parameter order.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import numcore as nc
from .errors import ContractError, DivergenceError, InvalidValueError, NoNegativeError
from .numcore import Tensor
from .semantic_space import (KIND_IMAGE, SemanticSpaceModel, check_dims_against_split,
                             encode_image_batch, encode_text_batch,
                             similarity_matrix_split, text_global_batch)


@dataclass(frozen=True)
class Triplet:
    """Id-level view of one hinge term; the negative never shares the anchor's label."""

    anchor: str
    positive: str
    negative: str
    direction: str  # "image-anchor": negative is a text; "text-anchor": negative is an image


@dataclass(frozen=True)
class TripletTuple:
    """Indices into a PairedSplit: anchor pair plus the two negative-supplying pairs."""

    pair: int
    text_neg: int
    image_neg: int

    def triplets(self, split):
        return (
            Triplet(anchor=split.image_ids[self.pair], positive=split.text_ids[self.pair],
                    negative=split.text_ids[self.text_neg], direction="image-anchor"),
            Triplet(anchor=split.text_ids[self.pair], positive=split.image_ids[self.pair],
                    negative=split.image_ids[self.image_neg], direction="text-anchor"),
        )


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    margin_image: float = 0.5
    margin_text: float = 0.5
    triplets_per_step: int = 64
    max_steps: int = 2000
    seed: int = 0
    val_interval: int = 0  # 0 disables validation passes

    def validate(self) -> None:
        if self.learning_rate < 0:
            raise ContractError("learning rate must be >= 0")
        if self.margin_image < 0 or self.margin_text < 0:
            raise ContractError("margins must be >= 0")
        if self.triplets_per_step < 1:
            raise ContractError("need at least one triplet per step")
        if self.max_steps < 1:
            raise ContractError("need at least one step")


def hinge_term(sim_matched: float, sim_mismatched: float, margin: float) -> float:
    """max(0, margin - sim_matched + sim_mismatched)."""
    if margin < 0:
        raise ContractError("margin must be >= 0")
    return max(0.0, margin - sim_matched + sim_mismatched)


def sample_triplets(split, count: int, rng: np.random.Generator):
    """Uniform anchor pairs; negatives drawn uniformly from other-label instances."""
    labels = split.labels
    if len(np.unique(labels)) < 2:
        raise NoNegativeError("triplet sampling needs at least two categories")
    others = {int(c): np.flatnonzero(labels != c) for c in np.unique(labels)}
    out = []
    for _ in range(count):
        pair = int(rng.integers(len(labels)))
        pool = others[int(labels[pair])]
        text_neg = int(pool[rng.integers(len(pool))])
        image_neg = int(pool[rng.integers(len(pool))])
        out.append(TripletTuple(pair=pair, text_neg=text_neg, image_neg=image_neg))
    return out


def _gather(batch):
    pos = np.array([t.pair for t in batch])
    tneg = np.array([t.text_neg for t in batch])
    ineg = np.array([t.image_neg for t in batch])
    return pos, tneg, ineg


def _hinge_mean(s_matched: Tensor, s_mis_a: Tensor, s_mis_b: Tensor, margin: float) -> Tensor:
    term_a = nc.relu(nc.add_scalar(nc.sub(s_mis_a, s_matched), margin))
    term_b = nc.relu(nc.add_scalar(nc.sub(s_mis_b, s_matched), margin))
    return nc.mean_all(nc.add(term_a, term_b))


def loss_image_space(batch, split, model: SemanticSpaceModel, margin: float) -> Tensor:
    """Mean of both image-space hinge terms over the batch, as a scalar tensor."""
    if not batch:
        raise ContractError("empty triplet batch")
    pos, tneg, ineg = _gather(batch)
    v_pos = encode_image_batch(model, split.image_seqs[pos], split.image_valid[pos])
    v_neg = encode_image_batch(model, split.image_seqs[ineg], split.image_valid[ineg])
    q_pos = text_global_batch(model, split.text_words[pos], split.text_valid[pos])
    q_neg = text_global_batch(model, split.text_words[tneg], split.text_valid[tneg])
    s_pp = nc.rowdot(v_pos, q_pos)   # matched
    s_pn = nc.rowdot(v_pos, q_neg)   # anchor image vs negative text
    s_np = nc.rowdot(v_neg, q_pos)   # negative image vs anchor text
    return _hinge_mean(s_pp, s_pn, s_np, margin)


def loss_text_space(batch, split, model: SemanticSpaceModel, margin: float) -> Tensor:
    """Mean of both text-space hinge terms over the batch, as a scalar tensor."""
    if not batch:
        raise ContractError("empty triplet batch")
    pos, tneg, ineg = _gather(batch)
    t_pos = encode_text_batch(model, split.text_words[pos], split.text_valid[pos])
    t_neg = encode_text_batch(model, split.text_words[tneg], split.text_valid[tneg])
    qi_pos = nc.constant(split.image_globals[pos].astype(model.dtype, copy=False))
    qi_neg = nc.constant(split.image_globals[ineg].astype(model.dtype, copy=False))
    s_pp = nc.rowdot(t_pos, qi_pos)  # matched
    s_np = nc.rowdot(t_pos, qi_neg)  # negative image vs anchor text
    s_pn = nc.rowdot(t_neg, qi_pos)  # anchor image vs negative text
    return _hinge_mean(s_pp, s_np, s_pn, margin)


def space_loss(batch, split, model: SemanticSpaceModel, config: TrainConfig) -> Tensor:
    if model.kind == KIND_IMAGE:
        return loss_image_space(batch, split, model, config.margin_image)
    return loss_text_space(batch, split, model, config.margin_text)


def sgd_update(store, learning_rate: float) -> None:
    for _, t in store.items():
        t.data -= t.data.dtype.type(learning_rate) * t.grad


@dataclass
class TrainResult:
    steps: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    val_maps: dict = field(default_factory=dict)  # step -> (map_i2t, map_t2i)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "loss", "val_map_img2txt", "val_map_txt2img"])
            for step, loss in zip(self.steps, self.losses):
                val = self.val_maps.get(step, ("", ""))
                writer.writerow([step, f"{loss:.8g}", val[0], val[1]])


def validation_map(model: SemanticSpaceModel, split):
    """MAP of this space alone on a split, both retrieval directions."""
    from .fusion_eval import retrieval_eval

    sim = similarity_matrix_split(model, split)
    fwd = retrieval_eval(sim, split.labels, split.labels, direction="image2text")
    bwd = retrieval_eval(sim, split.labels, split.labels, direction="text2image")
    return fwd.map_score, bwd.map_score


def train(model: SemanticSpaceModel, dataset, config: TrainConfig) -> TrainResult:
    """SGD over sampled triplet batches; aborts with the partial trace on NaN/Inf."""
    config.validate()
    split = dataset.splits.get("train")
    if split is None or len(split) == 0:
        raise ContractError("dataset has no training split")
    check_dims_against_split(model, split)
    val_split = dataset.splits.get("val")

    rng = np.random.default_rng(config.seed)
    result = TrainResult()
    for step in range(1, config.max_steps + 1):
        batch = sample_triplets(split, config.triplets_per_step, rng)
        try:
            loss = space_loss(batch, split, model, config)
            loss_value = loss.item()
            model.store.zero_grads()
            nc.backward(loss)
        except InvalidValueError as exc:
            raise DivergenceError(f"non-finite value at step {step}: {exc}",
                                  trace=list(zip(result.steps, result.losses))) from exc
        result.steps.append(step)
        result.losses.append(loss_value)
        sgd_update(model.store, config.learning_rate)
        if config.val_interval and val_split is not None and step % config.val_interval == 0:
            result.val_maps[step] = validation_map(model, val_split)
    return result
