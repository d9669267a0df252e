"""Sparse neighborhoods over the pairwise embedding space.

Each vertex gets two ranked candidate pools, computed once by exact top-k
over all pairwise cosine similarities (O(N^2 d), chunked): a dissimilar pool
(ascending similarity) feeding the diversity edges, and a similar pool
(descending similarity) feeding the annotation edges. Per message-passing
iteration, edges are drawn without replacement from the pools using the
counter-based stream in rng.py, so samples depend only on
(seed, iteration, vertex) and are reproducible in isolation.

Ties are broken by ascending vertex id everywhere; a vertex never appears in
its own pools. Edges are directed: w in N_v does not imply v in N_w.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import AnnotationSet, EmbeddingMatrix, normalize_rows
from .rng import DOMAIN_ANN_EDGES, DOMAIN_BASE_EDGES, counter_uniforms

__all__ = [
    "NeighborhoodIndex",
    "SampledNeighborhoods",
    "build_index",
    "resample",
    "top_k_similar",
]

DEFAULT_K_BASE = 16
DEFAULT_K_ANN = 5
DEFAULT_POOL_FACTOR = 4

# Rows per chunk of the O(N^2) similarity sweep, sized to keep each chunk's
# float64 block around tens of MB at N ~ 1e4.
_CHUNK_TARGET_CELLS = 4_000_000


@dataclass(frozen=True)
class NeighborhoodIndex:
    """Ranked candidate pools per vertex, plus the sampling parameters."""

    dissimilar_ids: np.ndarray  # (N, P_base) ascending similarity
    dissimilar_sims: np.ndarray
    similar_ids: np.ndarray  # (N, P_ann) descending similarity
    similar_sims: np.ndarray
    k_base: int
    k_ann: int
    pool_factor: int
    rng_seed: int

    @property
    def num_vertices(self) -> int:
        return self.dissimilar_ids.shape[0]

    def to_debug_dict(self) -> dict:
        return {
            "k_base": self.k_base,
            "k_ann": self.k_ann,
            "pool_factor": self.pool_factor,
            "rng_seed": self.rng_seed,
            "dissimilar_ids": self.dissimilar_ids.tolist(),
            "dissimilar_sims": self.dissimilar_sims.tolist(),
            "similar_ids": self.similar_ids.tolist(),
            "similar_sims": self.similar_sims.tolist(),
        }

    def dump_debug_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_debug_dict(), f, indent=2, sort_keys=True)


@dataclass(frozen=True)
class SampledNeighborhoods:
    """One iteration's drawn edges.

    base_ids/base_sims are (N, k) arrays; ann_edges maps each annotated
    vertex to the (ids, sims) of its drawn similar neighbors.
    """

    base_ids: np.ndarray
    base_sims: np.ndarray
    ann_edges: dict[int, tuple[np.ndarray, np.ndarray]]
    iteration: int

    @property
    def num_vertices(self) -> int:
        return self.base_ids.shape[0]


def _smallest_k(values: np.ndarray, k: int, row_offset: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Per-row indices of the k smallest values, ties by ascending index.

    Rows are assumed to carry +inf sentinels for excluded columns. The result
    is sorted ascending by (value, index) and is exact even when ties straddle
    the selection boundary.
    """
    rows, n = values.shape
    if k < n:
        part = np.argpartition(values, k - 1, axis=1)[:, :k]
    else:
        part = np.broadcast_to(np.arange(n), (rows, n)).copy()
    part.sort(axis=1)  # ascending index, so the stable value sort breaks ties by id
    vals = np.take_along_axis(values, part, axis=1)
    order = np.argsort(vals, axis=1, kind="stable")
    ids = np.take_along_axis(part, order, axis=1)
    vals = np.take_along_axis(vals, order, axis=1)

    # Ties crossing the boundary make argpartition's pick ambiguous; redo
    # those rows exactly. Never triggered by continuous similarities.
    boundary = vals[:, -1]
    ambiguous = np.flatnonzero((values <= boundary[:, None]).sum(axis=1) > k)
    for r in ambiguous:
        row = values[r]
        b = boundary[r]
        lt = np.flatnonzero(row < b)
        lt = lt[np.lexsort((lt, row[lt]))]
        eq = np.flatnonzero(row == b)[: k - lt.size]
        chosen = np.concatenate([lt, eq])
        ids[r] = chosen
        vals[r] = row[chosen]
    return ids, vals


def _pools(
    normalized: np.ndarray, pool_base: int, pool_ann: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    n = normalized.shape[0]
    chunk = max(1, min(n, _CHUNK_TARGET_CELLS // n))
    dis_ids = np.empty((n, pool_base), dtype=np.int64)
    dis_sims = np.empty((n, pool_base), dtype=np.float64)
    sim_ids = np.empty((n, pool_ann), dtype=np.int64)
    sim_sims = np.empty((n, pool_ann), dtype=np.float64)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        block = normalized[start:stop] @ normalized.T
        rows = np.arange(start, stop)
        # most dissimilar: smallest similarity, self excluded
        block_d = block.copy()
        block_d[np.arange(stop - start), rows] = np.inf
        ids, vals = _smallest_k(block_d, pool_base)
        dis_ids[start:stop] = ids
        dis_sims[start:stop] = vals
        # most similar: smallest negated similarity, self excluded
        block_s = -block
        block_s[np.arange(stop - start), rows] = np.inf
        ids, vals = _smallest_k(block_s, pool_ann)
        sim_ids[start:stop] = ids
        sim_sims[start:stop] = -vals
    return dis_ids, dis_sims, sim_ids, sim_sims


def build_index(
    pairwise_embeddings: EmbeddingMatrix,
    k_base: int = DEFAULT_K_BASE,
    k_ann: int = DEFAULT_K_ANN,
    pool_factor: int = DEFAULT_POOL_FACTOR,
    seed: int = 0,
) -> NeighborhoodIndex:
    """Build both candidate pools by exact top-k selection."""
    n = pairwise_embeddings.rows
    if n < 2:
        raise ValueError("graph too small: need at least 2 vertices")
    if min(k_base, k_ann, pool_factor) < 1:
        raise ValueError("k_base, k_ann and pool_factor must be >= 1")
    normalized = normalize_rows(pairwise_embeddings.data)
    pool_base = min(pool_factor * k_base, n - 1)
    pool_ann = min(pool_factor * k_ann, n - 1)
    dis_ids, dis_sims, sim_ids, sim_sims = _pools(normalized, pool_base, pool_ann)

    if __debug__:
        all_vertices = np.arange(n)[:, None]
        assert not np.any(dis_ids == all_vertices), "vertex in its own dissimilar pool"
        assert not np.any(sim_ids == all_vertices), "vertex in its own similar pool"
        assert np.all(np.diff(dis_sims, axis=1) >= 0), "dissimilar pool not ascending"
        assert np.all(np.diff(sim_sims, axis=1) <= 0), "similar pool not descending"

    return NeighborhoodIndex(
        dissimilar_ids=dis_ids,
        dissimilar_sims=dis_sims,
        similar_ids=sim_ids,
        similar_sims=sim_sims,
        k_base=k_base,
        k_ann=k_ann,
        pool_factor=pool_factor,
        rng_seed=seed,
    )


def _draw(
    pool_ids: np.ndarray,
    pool_sims: np.ndarray,
    k: int,
    seed: int,
    domain: int,
    iteration: int,
    vertex_ids: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """k columns per row, uniform without replacement via random-key order."""
    pool_size = pool_ids.shape[1]
    if pool_size <= k:
        return pool_ids, pool_sims
    keys = counter_uniforms(seed, domain, iteration, vertex_ids, pool_size)
    cols = np.argsort(keys, axis=1, kind="stable")[:, :k]
    return (
        np.take_along_axis(pool_ids, cols, axis=1),
        np.take_along_axis(pool_sims, cols, axis=1),
    )


def resample(
    index: NeighborhoodIndex,
    annotations: AnnotationSet,
    iteration: int,
    seed: int | None = None,
    base_pool: str = "dissimilar",
) -> SampledNeighborhoods:
    """Draw this iteration's edges from the precomputed pools.

    base_pool="similar" switches the base edges to the similar pool (the
    conventional smoothing variant used in ablations); the default draws from
    the dissimilar pool.
    """
    if base_pool not in ("dissimilar", "similar"):
        raise ValueError(f"unknown base_pool {base_pool!r}")
    if seed is None:
        seed = index.rng_seed
    n = index.num_vertices

    if base_pool == "dissimilar":
        pool_ids, pool_sims = index.dissimilar_ids, index.dissimilar_sims
    else:
        pool_ids, pool_sims = index.similar_ids, index.similar_sims
    base_ids, base_sims = _draw(
        pool_ids, pool_sims, index.k_base, seed, DOMAIN_BASE_EDGES, iteration, np.arange(n)
    )

    ann_edges: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    if len(annotations) > 0:
        vertices = annotations.vertices()
        ids, sims = _draw(
            index.similar_ids[vertices],
            index.similar_sims[vertices],
            index.k_ann,
            seed,
            DOMAIN_ANN_EDGES,
            iteration,
            vertices,
        )
        ann_edges = {int(a): (ids[i], sims[i]) for i, a in enumerate(vertices)}

    return SampledNeighborhoods(
        base_ids=base_ids, base_sims=base_sims, ann_edges=ann_edges, iteration=iteration
    )


def top_k_similar(embeddings: EmbeddingMatrix, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact k most similar vertices per vertex (descending, ties by id).

    Shared by the label-propagation graph builder.
    """
    n = embeddings.rows
    if n < 2:
        raise ValueError("graph too small: need at least 2 vertices")
    k = min(k, n - 1)
    normalized = normalize_rows(embeddings.data)
    _, _, sim_ids, sim_sims = _pools(normalized, 1, k)
    return sim_ids, sim_sims
