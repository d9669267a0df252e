"""Shared domain types and the similarity primitives everything else builds on.

All matrices are float64 internally; file storage is float32 (see dataio).
Types are plain values: construct, validate, never mutate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

__all__ = [
    "EmbeddingMatrix",
    "ClassTextEmbeddings",
    "Beliefs",
    "AnnotationSet",
    "AnnotationAudit",
    "cosine_similarity",
    "row_softmax",
    "normalize_rows",
]


def _as_float64(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class EmbeddingMatrix:
    """N x d matrix of per-patch feature vectors."""

    data: np.ndarray

    def __post_init__(self):
        arr = _as_float64(self.data)
        object.__setattr__(self, "data", arr)
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"embedding matrix must be at least 1x1, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("embedding matrix contains NaN/Inf entries")

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class ClassTextEmbeddings:
    """L x d matrix of prompt-averaged class text embeddings plus class names."""

    data: np.ndarray
    class_names: tuple[str, ...]

    def __post_init__(self):
        arr = _as_float64(self.data)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "class_names", tuple(self.class_names))
        if arr.shape[0] < 2:
            raise ValueError("need at least 2 classes")
        if not np.isfinite(arr).all():
            raise ValueError("text embeddings contain NaN/Inf entries")
        if len(self.class_names) != arr.shape[0]:
            raise ValueError(
                f"{len(self.class_names)} class names for {arr.shape[0]} embedding rows"
            )
        if len(set(self.class_names)) != len(self.class_names):
            raise ValueError("class names must be distinct")

    @property
    def num_classes(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


# Row sums of a Beliefs matrix must hold to this tolerance at all times.
ROW_SUM_TOL = 1e-9


@dataclass(frozen=True)
class Beliefs:
    """Row-stochastic N x L matrix of mean-field marginals."""

    data: np.ndarray
    iteration: int = 0

    def __post_init__(self):
        arr = _as_float64(self.data)
        object.__setattr__(self, "data", arr)
        if self.iteration < 0:
            raise ValueError("iteration must be non-negative")
        if np.any(arr < 0.0) or np.any(arr > 1.0):
            raise ValueError("belief entries must lie in [0, 1]")
        sums = arr.sum(axis=1)
        if np.max(np.abs(sums - 1.0)) > ROW_SUM_TOL:
            bad = int(np.argmax(np.abs(sums - 1.0)))
            raise ValueError(f"belief row {bad} sums to {sums[bad]!r}, not 1")

    @property
    def num_vertices(self) -> int:
        return self.data.shape[0]

    @property
    def num_classes(self) -> int:
        return self.data.shape[1]

    def predictions(self) -> np.ndarray:
        """Argmax labels, ties broken by lowest class index."""
        return np.argmax(self.data, axis=1)


@dataclass(frozen=True)
class AnnotationAudit:
    """Record emitted whenever an annotation is inserted or overwritten."""

    vertex: int
    label: int
    previous_label: int | None
    timestamp: str = field(
        default_factory=lambda: datetime.now(timezone.utc).isoformat()
    )


@dataclass(frozen=True)
class AnnotationSet:
    """Map vertex id -> expert class label. Updates return a new set plus an audit."""

    entries: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(
            self, "entries", {int(v): int(l) for v, l in self.entries.items()}
        )

    def validate(self, num_vertices: int, num_classes: int) -> None:
        for v, l in self.entries.items():
            if not 0 <= v < num_vertices:
                raise ValueError(f"annotated vertex {v} out of range [0, {num_vertices})")
            if not 0 <= l < num_classes:
                raise ValueError(f"annotation label {l} out of range [0, {num_classes})")

    def with_annotation(self, vertex: int, label: int) -> tuple["AnnotationSet", AnnotationAudit]:
        vertex, label = int(vertex), int(label)
        previous = self.entries.get(vertex)
        updated = dict(self.entries)
        updated[vertex] = label
        return AnnotationSet(updated), AnnotationAudit(vertex, label, previous)

    def vertices(self) -> np.ndarray:
        """Annotated vertex ids, ascending (stable order for vectorized paths)."""
        return np.array(sorted(self.entries), dtype=np.int64)

    def labels_for(self, vertices: np.ndarray) -> np.ndarray:
        return np.array([self.entries[int(v)] for v in vertices], dtype=np.int64)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, vertex: int) -> bool:
        return int(vertex) in self.entries


def cosine_similarity(a, b) -> float:
    """Cosine similarity a.b / (|a||b|), in [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("degenerate embedding: zero-norm vector")
    return float(np.dot(a, b) / (na * nb))


def normalize_rows(matrix: np.ndarray, what: str = "embedding") -> np.ndarray:
    """Unit-normalize each row; error names the first degenerate row."""
    matrix = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(matrix, axis=1)
    if np.any(norms == 0.0):
        bad = int(np.argmax(norms == 0.0))
        raise ValueError(f"degenerate {what}: row {bad} has zero norm")
    return matrix / norms[:, None]


def row_softmax(logits, temperature: float = 1.0) -> np.ndarray:
    """Stable softmax over the last axis of logits / temperature.

    Inputs are divided by `temperature` before exponentiation; the row max is
    subtracted so arbitrarily large logits cannot overflow.
    """
    if temperature <= 0.0:
        raise ValueError("temperature must be positive")
    scaled = np.asarray(logits, dtype=np.float64) / temperature
    if not np.isfinite(scaled).all():
        raise ValueError("softmax input must be finite")
    scaled = scaled - scaled.max(axis=-1, keepdims=True)
    e = np.exp(scaled)
    return e / e.sum(axis=-1, keepdims=True)
