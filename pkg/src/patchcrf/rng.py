"""Counter-based deterministic random streams.

Every draw is a pure function of (seed, stream domain, iteration, vertex,
slot), so per-vertex sampling can run in any order, on any number of
workers, and still reproduce bit-identically. The mixer is the splitmix64
finalizer applied to combined counters; outputs pass the usual smoke checks
(mean ~0.5, no visible correlation between adjacent streams).
"""

from __future__ import annotations

import numpy as np

U64 = np.uint64

_GOLDEN = U64(0x9E3779B97F4A7C15)
_MIX1 = U64(0xBF58476D1CE4E5B9)
_MIX2 = U64(0x94D049BB133111EB)

# Stream domains keep independent uses of the same (seed, iteration, vertex)
# from colliding.
DOMAIN_BASE_EDGES = 0x01
DOMAIN_ANN_EDGES = 0x02
DOMAIN_DERIVE = 0x03

__all__ = [
    "mix64",
    "counter_uniforms",
    "derive_seed",
    "DOMAIN_BASE_EDGES",
    "DOMAIN_ANN_EDGES",
]


def mix64(x):
    """splitmix64 finalizer; bijective on uint64, vectorized over arrays."""
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (x + _GOLDEN).astype(np.uint64)
        z = (z ^ (z >> U64(30))) * _MIX1
        z = (z ^ (z >> U64(27))) * _MIX2
        z = z ^ (z >> U64(31))
    return z


def _stream_key(seed: int, domain: int, iteration: int) -> np.uint64:
    with np.errstate(over="ignore"):
        k = mix64(U64(seed & 0xFFFFFFFFFFFFFFFF) ^ (U64(domain) * _GOLDEN))
        k = mix64(k ^ mix64(U64(iteration & 0xFFFFFFFFFFFFFFFF)))
    return U64(k)


def counter_uniforms(
    seed: int, domain: int, iteration: int, vertex_ids: np.ndarray, slots: int
) -> np.ndarray:
    """(len(vertex_ids), slots) float64 uniforms in [0, 1).

    Row v depends only on (seed, domain, iteration, vertex_ids[v]); column s
    is the s-th splitmix64 output of that stream.
    """
    key = _stream_key(seed, domain, iteration)
    v = np.asarray(vertex_ids, dtype=np.uint64)
    with np.errstate(over="ignore"):
        per_vertex = mix64(key ^ mix64(v * _GOLDEN))
        counters = per_vertex[:, None] + (np.arange(1, slots + 1, dtype=np.uint64) * _GOLDEN)[None, :]
        bits = mix64(counters)
    return (bits >> U64(11)).astype(np.float64) * (2.0 ** -53)


def derive_seed(seed: int, *tags: int) -> int:
    """Derive an independent 63-bit sub-seed from a master seed and tags."""
    h = _stream_key(seed, DOMAIN_DERIVE, 0)
    for t in tags:
        with np.errstate(over="ignore"):
            h = mix64(h ^ mix64(U64(t & 0xFFFFFFFFFFFFFFFF)))
    return int(h) & 0x7FFFFFFFFFFFFFFF
