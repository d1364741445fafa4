"""Modality-specific cross-modal similarity measurement.

Two independently trained semantic spaces (image-anchored and text-anchored),
each an LSTM-plus-attention encoder trained with a triplet joint-embedding
loss; their similarity matrices are adaptively fused and scored with MAP.
"""

__version__ = "0.1.0"
