"""
Greedy-matching BERTScore over supplied token embeddings

Each token is matched to its most similar token on the other side; no IDF
weighting and no baseline rescaling.
"""

from typing import Sequence, Tuple

import numpy as np

from ..common.errors import DimensionMismatch, EmptyInput, ZeroVector
from ..common.types import EmbeddingVector


def _unit_rows(vectors: Sequence[EmbeddingVector], dims: int, side: str) -> np.ndarray:
    for vector in vectors:
        if vector.dims != dims:
            raise DimensionMismatch(dims, vector.dims, f"{side} token embedding")
    matrix = np.array([v.values for v in vectors], dtype=np.float64)
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ZeroVector(f"in {side} token embeddings")
    return matrix / norms


def bertscore_greedy(
    hyp_embeddings: Sequence[EmbeddingVector],
    ref_embeddings: Sequence[EmbeddingVector],
) -> Tuple[float, float, float]:
    """(precision, recall, f1) from greedy max-cosine matching"""
    if not hyp_embeddings:
        raise EmptyInput("hypothesis embeddings")
    if not ref_embeddings:
        raise EmptyInput("reference embeddings")
    dims = hyp_embeddings[0].dims
    hyp = _unit_rows(hyp_embeddings, dims, "hypothesis")
    ref = _unit_rows(ref_embeddings, dims, "reference")

    similarity = np.clip(hyp @ ref.T, -1.0, 1.0)
    precision = float(similarity.max(axis=1).mean())
    recall = float(similarity.max(axis=0).mean())
    if precision + recall == 0:
        return precision, recall, 0.0
    return precision, recall, 2 * precision * recall / (precision + recall)
