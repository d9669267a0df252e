"""Unary and pairwise potentials.

The unary field is the negative log of a temperature-scaled softmax over
cosine similarities between patch embeddings and class text embeddings.
Two pairwise terms couple labels along sparse edges:

* diversity: cost (1 - sim) when two patches share a label — applied on
  edges to the most *dissimilar* patches, so lookalike labels on unlike
  patches are discouraged;
* annotation: cost sim when labels differ — applied on edges from an
  annotated patch to its most *similar* patches, pulling them toward the
  expert label.

Negative cosine similarities flow through both formulas unclipped, so the
diversity cost can exceed 1 and the annotation cost can be negative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ClassTextEmbeddings, EmbeddingMatrix, normalize_rows, row_softmax

__all__ = [
    "PROBABILITY_FLOOR",
    "DEFAULT_TEMPERATURE",
    "UnaryField",
    "PairwiseWeights",
    "compute_unary",
    "diversity_pair",
    "annotation_pair",
    "compute_energy",
]

# Softmax probabilities are floored here before the log so unary potentials
# stay finite at extreme temperatures.
PROBABILITY_FLOOR = 1e-12

# Similarities are divided by the temperature before the softmax; 0.01 mirrors
# the x100 logit scaling customary for VLM cosine similarities. Always logged
# alongside results.
DEFAULT_TEMPERATURE = 0.01


@dataclass(frozen=True)
class UnaryField:
    """N x L matrix of per-patch label costs (negative log-probabilities)."""

    data: np.ndarray
    temperature: float

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", arr)
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")
        if np.any(arr < 0.0) or not np.isfinite(arr).all():
            raise ValueError("unary potentials must be finite and non-negative")
        sums = np.exp(-arr).sum(axis=1)
        if np.max(np.abs(sums - 1.0)) > 1e-9:
            bad = int(np.argmax(np.abs(sums - 1.0)))
            raise ValueError(f"exp(-unary) row {bad} sums to {sums[bad]!r}, not 1")

    @property
    def num_vertices(self) -> int:
        return self.data.shape[0]

    @property
    def num_classes(self) -> int:
        return self.data.shape[1]

    def probabilities(self) -> np.ndarray:
        """Zero-shot class probabilities, renormalized after the floor."""
        p = np.exp(-self.data)
        return p / p.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class PairwiseWeights:
    """Weights of the diversity (alpha) and annotation (beta) terms."""

    alpha: float = 0.1
    beta: float = 0.01

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and np.isfinite(self.beta)):
            raise ValueError("weights must be finite")
        if self.alpha < 0.0 or self.beta < 0.0:
            raise ValueError("weights must be non-negative")


def compute_unary(
    unary_embeddings: EmbeddingMatrix,
    text: ClassTextEmbeddings,
    temperature: float = DEFAULT_TEMPERATURE,
) -> UnaryField:
    """Unary potentials from cosine similarity to each class text embedding."""
    if unary_embeddings.dim != text.dim:
        raise ValueError(
            f"embedding dim {unary_embeddings.dim} != text dim {text.dim}"
        )
    patches = normalize_rows(unary_embeddings.data, "embedding")
    texts = normalize_rows(text.data, "text embedding")
    sims = patches @ texts.T
    probs = row_softmax(sims, temperature)
    phi = -np.log(np.maximum(probs, PROBABILITY_FLOOR))
    return UnaryField(phi, temperature)


def diversity_pair(sim_vw: float, same_label: bool) -> float:
    """Diversity cost: (1 - sim) if the two labels match, else 0."""
    return (1.0 - sim_vw) if same_label else 0.0


def annotation_pair(sim_vw: float, same_label: bool) -> float:
    """Annotation cost: sim if the two labels differ, else 0."""
    return sim_vw if not same_label else 0.0


def compute_energy(labeling, unary: UnaryField, neighborhoods, annotations, weights: PairwiseWeights) -> float:
    """Energy of a hard labeling under the combined potential. Diagnostic only;
    inference never calls this.

    unary sum + alpha * diversity over sampled base edges + beta * annotation
    over sampled annotated edges.
    """
    labeling = np.asarray(labeling, dtype=np.int64)
    n, num_classes = unary.data.shape
    if labeling.shape != (n,):
        raise ValueError(f"labeling shape {labeling.shape} != ({n},)")
    if labeling.size and (labeling.min() < 0 or labeling.max() >= num_classes):
        raise ValueError("label index out of range")

    total = float(unary.data[np.arange(n), labeling].sum())

    if weights.alpha != 0.0:
        acc = 0.0
        for v in range(n):
            yv = labeling[v]
            for w, sim in zip(neighborhoods.base_ids[v], neighborhoods.base_sims[v]):
                acc += diversity_pair(float(sim), yv == labeling[int(w)])
        total += weights.alpha * acc

    if weights.beta != 0.0 and annotations is not None:
        acc = 0.0
        for a, (ids, sims) in sorted(neighborhoods.ann_edges.items()):
            ya = labeling[a]
            for w, sim in zip(ids, sims):
                acc += annotation_pair(float(sim), ya == labeling[int(w)])
        total += weights.beta * acc

    return total
