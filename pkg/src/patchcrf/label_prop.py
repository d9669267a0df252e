"""Label propagation baseline (Zhou-style normalized graph diffusion).

Propagates one-hot annotation rows over a symmetric k-NN similarity graph:
S = D^{-1/2} W D^{-1/2}, then either the closed form
F = (1 - a)(I - aS)^{-1} Y or the fixed-point iteration
F <- aSF + (1 - a)Y from F0 = Y. The closed form materializes a dense
N x N system, so it refuses instances above a configurable memory guard
instead of thrashing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .core import AnnotationSet, EmbeddingMatrix
from .neighborhood import top_k_similar

__all__ = ["LpConfig", "LpResult", "InstanceTooLargeError", "label_propagation"]


class InstanceTooLargeError(ValueError):
    """Closed-form solve refused: N exceeds the configured memory guard."""


@dataclass(frozen=True)
class LpConfig:
    alpha_lp: float = 0.5
    k_graph: int = 16
    solver: str = "closed_form"
    iter_tol: float = 1e-8
    iter_max: int = 1000
    closed_form_max_n: int = 4000

    def __post_init__(self):
        if not 0.0 < self.alpha_lp < 1.0:
            raise ValueError("alpha_lp must lie strictly in (0, 1)")
        if self.solver not in ("closed_form", "iterative"):
            raise ValueError("solver must be 'closed_form' or 'iterative'")
        if self.k_graph < 1 or self.iter_max < 1:
            raise ValueError("k_graph and iter_max must be >= 1")
        if self.iter_tol <= 0.0:
            raise ValueError("iter_tol must be positive")

    def to_dict(self) -> dict:
        return {
            "alpha_lp": self.alpha_lp,
            "k_graph": self.k_graph,
            "solver": self.solver,
            "iter_tol": self.iter_tol,
            "iter_max": self.iter_max,
            "closed_form_max_n": self.closed_form_max_n,
        }


@dataclass(frozen=True)
class LpResult:
    scores: np.ndarray  # (N, L)
    predictions: np.ndarray  # (N,)
    iterations: int  # 0 for the closed form


def build_similarity_graph(pairwise_embeddings: EmbeddingMatrix, k: int) -> sp.csr_matrix:
    """Symmetric k-NN graph: weights max(0, cosine), symmetrized by max."""
    n = pairwise_embeddings.rows
    ids, sims = top_k_similar(pairwise_embeddings, k)
    weights = np.maximum(sims, 0.0)
    rows = np.repeat(np.arange(n), ids.shape[1])
    directed = sp.csr_matrix((weights.ravel(), (rows, ids.ravel())), shape=(n, n))
    symmetric = directed.maximum(directed.T)
    symmetric.setdiag(0.0)
    symmetric.eliminate_zeros()
    return symmetric


def _normalized(graph: sp.csr_matrix) -> sp.csr_matrix:
    degrees = np.asarray(graph.sum(axis=1)).ravel()
    with np.errstate(divide="ignore"):
        inv_sqrt = 1.0 / np.sqrt(degrees)
    inv_sqrt[~np.isfinite(inv_sqrt)] = 0.0
    d = sp.diags(inv_sqrt)
    return d @ graph @ d


def label_propagation(
    pairwise_embeddings: EmbeddingMatrix,
    annotations: AnnotationSet,
    num_classes: int,
    config: LpConfig | None = None,
) -> LpResult:
    """Propagate annotated labels over the similarity graph.

    Raises on an empty annotation set: with no labeled rows, Y = 0 and the
    diffusion has no signal.
    """
    config = config or LpConfig()
    n = pairwise_embeddings.rows
    if len(annotations) == 0:
        raise ValueError("label propagation requires annotations")
    annotations.validate(n, num_classes)

    graph = build_similarity_graph(pairwise_embeddings, config.k_graph)
    s = _normalized(graph)

    y = np.zeros((n, num_classes), dtype=np.float64)
    vertices = annotations.vertices()
    y[vertices, annotations.labels_for(vertices)] = 1.0

    if config.solver == "closed_form":
        if n > config.closed_form_max_n:
            raise InstanceTooLargeError(
                f"instance too large for closed form: N={n} exceeds the "
                f"memory guard {config.closed_form_max_n}; use the iterative solver"
            )
        system = np.eye(n) - config.alpha_lp * s.toarray()
        scores = (1.0 - config.alpha_lp) * np.linalg.solve(system, y)
        iterations = 0
    else:
        f = y.copy()
        iterations = 0
        for iterations in range(1, config.iter_max + 1):
            f_next = config.alpha_lp * (s @ f) + (1.0 - config.alpha_lp) * y
            delta = float(np.max(np.abs(f_next - f)))
            f = f_next
            if delta < config.iter_tol:
                break
        scores = f

    return LpResult(
        scores=scores, predictions=np.argmax(scores, axis=1), iterations=iterations
    )
