"""Score normalisation, fusion of the two semantic spaces, and MAP evaluation.

Adaptive fusion weights each pair's similarity from one space by the min-max
normalised similarity of the same pair from the other space; late fusion is
the plain average baseline. Retrieval quality is average precision over all
returned results, relevance meaning a shared category label.
"""

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ShapeError
from .semantic_space import SimilarityMatrix

logger = logging.getLogger(__name__)

DIRECTIONS = ("image2text", "text2image")


def _values(sim) -> np.ndarray:
    return sim.values if isinstance(sim, SimilarityMatrix) else np.asarray(sim)


def minmax_normalize(sim) -> np.ndarray:
    """Map scores onto [0,1] using the global min/max of the whole matrix.

    A constant matrix maps to 0.5 everywhere: a neutral fusion weight instead
    of zeroing out one space.
    """
    v = _values(sim).astype(np.float64)
    if v.size == 0:
        raise ContractError("min-max normalisation of an empty matrix")
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.full_like(v, 0.5)
    return (v - lo) / (hi - lo)


def adaptive_fuse(sim_i, sim_t) -> SimilarityMatrix:
    """Cross-weighted sum: each space's score weighted by the other's normalised score."""
    vi, vt = _values(sim_i).astype(np.float64), _values(sim_t).astype(np.float64)
    if vi.shape != vt.shape:
        raise ShapeError(f"fusion shapes differ: {vi.shape} vs {vt.shape}")
    r_i = minmax_normalize(vi)
    r_t = minmax_normalize(vt)
    return SimilarityMatrix(values=r_t * vi + r_i * vt, tag="fused")


def late_fuse(sim_i, sim_t) -> SimilarityMatrix:
    """Unweighted average of the two spaces' scores."""
    vi, vt = _values(sim_i).astype(np.float64), _values(sim_t).astype(np.float64)
    if vi.shape != vt.shape:
        raise ShapeError(f"fusion shapes differ: {vi.shape} vs {vt.shape}")
    return SimilarityMatrix(values=0.5 * (vi + vt), tag="late-fused")


def average_precision(ranked_relevance, total_relevant: int) -> float:
    """(1/R) * sum_k (R_k / k) * rel_k over the full ranked candidate list."""
    if total_relevant < 1:
        raise ContractError("average precision undefined for a query with no relevant instances")
    rel = np.asarray(ranked_relevance, dtype=bool)
    if rel.size == 0:
        raise ContractError("empty ranking")
    hits = np.cumsum(rel)
    ranks = np.arange(1, rel.size + 1)
    return float((hits[rel] / ranks[rel]).sum() / total_relevant)


@dataclass
class RetrievalMetrics:
    direction: str
    tag: str
    query_ids: list          # included queries, in evaluation order
    ap_values: np.ndarray    # aligned with query_ids
    excluded: list           # query ids with zero relevant candidates
    map_score: float

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["query_id", "ap"])
            for qid, ap in zip(self.query_ids, self.ap_values):
                writer.writerow([qid, f"{ap:.10g}"])
            writer.writerow(["summary", self.direction, self.tag, f"{self.map_score:.10g}"])


def retrieval_eval(sim, image_labels, text_labels, direction: str,
                   query_ids=None) -> RetrievalMetrics:
    """Rank candidates per query by score (ties: ascending candidate index).

    direction "image2text": rows are queries, texts are candidates;
    "text2image" transposes that. Queries without any same-label candidate
    are excluded from the mean with a logged warning.
    """
    if direction not in DIRECTIONS:
        raise ContractError(f"direction must be one of {DIRECTIONS}")
    values = _values(sim)
    image_labels = np.asarray(image_labels)
    text_labels = np.asarray(text_labels)
    if values.shape != (image_labels.size, text_labels.size):
        raise ShapeError(f"matrix {values.shape} vs labels "
                         f"({image_labels.size} images, {text_labels.size} texts)")

    if direction == "image2text":
        scores, q_labels, c_labels = values, image_labels, text_labels
    else:
        scores, q_labels, c_labels = values.T, text_labels, image_labels
    if query_ids is None:
        query_ids = list(range(len(q_labels)))

    candidate_idx = np.arange(len(c_labels))
    included, aps, excluded = [], [], []
    for q in range(len(q_labels)):
        relevant_total = int((c_labels == q_labels[q]).sum())
        if relevant_total == 0:
            excluded.append(query_ids[q])
            continue
        order = np.lexsort((candidate_idx, -scores[q]))
        ranked_rel = c_labels[order] == q_labels[q]
        included.append(query_ids[q])
        aps.append(average_precision(ranked_rel, relevant_total))
    if excluded:
        logger.warning("%s: %d quer%s with no relevant candidates excluded from MAP",
                       direction, len(excluded), "y" if len(excluded) == 1 else "ies")
    if not included:
        raise ContractError("every query was excluded; MAP undefined")

    ap_arr = np.array(aps, dtype=np.float64)
    return RetrievalMetrics(direction=direction,
                            tag=getattr(sim, "tag", "unknown"),
                            query_ids=included, ap_values=ap_arr,
                            excluded=excluded, map_score=float(ap_arr.mean()))
