"""Dataset files: EMB1 embedding matrices, labels, JSON manifests, synthesis.

Formats are bit-exact contracts:

* EMB1 — magic ``EMB1``, version 1, dtype 1 (float32 LE), 2 reserved zero
  bytes, rows as u64 LE, dim as u32 LE, then rows*dim float32 row-major.
* labels — one class index per line, ASCII decimal, newline-terminated.
* manifest — a single JSON document naming the other files.

The synthetic generator stands in for real embedding dumps: it plants class
clusters in two embedding spaces (a noisy "unary" space used for zero-shot
scoring and a cleaner "pairwise" space used for the neighbor graph) and
corrupts a chosen fraction of unary embeddings toward a wrong class.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import ClassTextEmbeddings, EmbeddingMatrix, normalize_rows

__all__ = [
    "FormatError",
    "CorruptFileError",
    "ManifestError",
    "Dataset",
    "DatasetManifest",
    "SyntheticSpec",
    "GenerationSummary",
    "write_embeddings",
    "read_embeddings",
    "read_embedding_header",
    "write_labels",
    "read_labels",
    "load_dataset",
    "generate_synthetic",
]

_MAGIC = b"EMB1"
_VERSION = 1
_DTYPE_F32 = 1
_HEADER = struct.Struct("<4sBB2sQI")  # magic, version, dtype, reserved, rows, dim


class FormatError(ValueError):
    """Unsupported format: wrong magic, version, or dtype."""


class CorruptFileError(ValueError):
    """Structurally valid header but truncated or oversized payload."""


class ManifestError(ValueError):
    """Manifest fields disagree with each other or with file headers."""


def write_embeddings(matrix: EmbeddingMatrix, path) -> None:
    """Write a matrix in EMB1 format (float32 storage)."""
    _write_matrix(matrix.data, path)


def _write_matrix(data: np.ndarray, path) -> None:
    arr = np.ascontiguousarray(np.asarray(data), dtype="<f4")
    rows, dim = arr.shape
    with open(path, "wb") as f:
        f.write(_HEADER.pack(_MAGIC, _VERSION, _DTYPE_F32, b"\x00\x00", rows, dim))
        f.write(arr.tobytes(order="C"))


def read_embeddings(path) -> EmbeddingMatrix:
    """Read an EMB1 file back into an EmbeddingMatrix (float64 internally)."""
    return EmbeddingMatrix(_read_matrix(path))


def _read_header(raw: bytes, path) -> tuple[int, int]:
    if len(raw) < _HEADER.size:
        raise CorruptFileError(f"corrupt file: {path} shorter than the EMB1 header")
    magic, version, dtype, _reserved, rows, dim = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise FormatError(f"unsupported format: bad magic {magic!r} in {path}")
    if version != _VERSION:
        raise FormatError(f"unsupported format: version {version} in {path}")
    if dtype != _DTYPE_F32:
        raise FormatError(f"unsupported format: dtype code {dtype} in {path}")
    return rows, dim


def _read_matrix(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    rows, dim = _read_header(raw, path)
    expected = _HEADER.size + rows * dim * 4
    if len(raw) != expected:
        raise CorruptFileError(
            f"corrupt file: {path} has {len(raw)} bytes, expected {expected}"
        )
    payload = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    return payload.reshape(rows, dim).astype(np.float64)


def read_embedding_header(path) -> tuple[int, int]:
    """(rows, dim) from an EMB1 header without loading the payload."""
    with open(path, "rb") as f:
        raw = f.read(_HEADER.size)
    return _read_header(raw, path)


def write_labels(labels: np.ndarray, path) -> None:
    with open(path, "w") as f:
        for l in np.asarray(labels).ravel():
            f.write(f"{int(l)}\n")


def read_labels(path) -> np.ndarray:
    text = Path(path).read_text()
    values = [int(line) for line in text.splitlines() if line.strip()]
    return np.array(values, dtype=np.int64)


_MANIFEST_REQUIRED = (
    "name",
    "num_patches",
    "num_classes",
    "class_names",
    "unary_embeddings_path",
    "pairwise_embeddings_path",
    "text_embeddings_path",
)


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    num_patches: int
    num_classes: int
    class_names: tuple[str, ...]
    unary_embeddings_path: str
    pairwise_embeddings_path: str
    text_embeddings_path: str
    labels_path: str | None = None
    thumbnails_dir: str | None = None
    grid: tuple[int, int] | None = None

    def to_json_dict(self) -> dict:
        d = {
            "name": self.name,
            "num_patches": self.num_patches,
            "num_classes": self.num_classes,
            "class_names": list(self.class_names),
            "unary_embeddings_path": self.unary_embeddings_path,
            "pairwise_embeddings_path": self.pairwise_embeddings_path,
            "text_embeddings_path": self.text_embeddings_path,
        }
        if self.labels_path is not None:
            d["labels_path"] = self.labels_path
        if self.thumbnails_dir is not None:
            d["thumbnails_dir"] = self.thumbnails_dir
        if self.grid is not None:
            d["grid"] = list(self.grid)
        return d


@dataclass(frozen=True)
class Dataset:
    """In-memory dataset: both embedding spaces plus optional ground truth."""

    name: str
    unary: EmbeddingMatrix
    pairwise: EmbeddingMatrix
    text: ClassTextEmbeddings
    labels: np.ndarray | None = None
    thumbnails_dir: Path | None = None
    grid: tuple[int, int] | None = None

    @property
    def num_patches(self) -> int:
        return self.unary.rows

    @property
    def num_classes(self) -> int:
        return self.text.num_classes

    @property
    def class_names(self) -> tuple[str, ...]:
        return self.text.class_names

    def require_labels(self) -> np.ndarray:
        if self.labels is None:
            raise ValueError(
                "dataset has no ground-truth labels; this operation requires them"
            )
        return self.labels


def _parse_manifest(manifest_path: Path) -> DatasetManifest:
    try:
        doc = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ManifestError(f"manifest mismatch: cannot read {manifest_path}: {e}") from e
    missing = [k for k in _MANIFEST_REQUIRED if k not in doc]
    if missing:
        raise ManifestError(f"manifest mismatch: missing fields {missing}")
    grid = doc.get("grid")
    return DatasetManifest(
        name=doc["name"],
        num_patches=int(doc["num_patches"]),
        num_classes=int(doc["num_classes"]),
        class_names=tuple(doc["class_names"]),
        unary_embeddings_path=doc["unary_embeddings_path"],
        pairwise_embeddings_path=doc["pairwise_embeddings_path"],
        text_embeddings_path=doc["text_embeddings_path"],
        labels_path=doc.get("labels_path"),
        thumbnails_dir=doc.get("thumbnails_dir"),
        grid=tuple(int(x) for x in grid) if grid else None,
    )


def load_dataset(manifest_path) -> Dataset:
    """Load a dataset, verifying every file header against the manifest.

    Relative paths inside the manifest resolve against the manifest's own
    directory.
    """
    manifest_path = Path(manifest_path)
    m = _parse_manifest(manifest_path)
    base = manifest_path.parent

    def resolve(p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else base / path

    for p in (m.unary_embeddings_path, m.pairwise_embeddings_path, m.text_embeddings_path):
        if not resolve(p).exists():
            raise ManifestError(f"manifest mismatch: referenced file {p} does not exist")

    unary = read_embeddings(resolve(m.unary_embeddings_path))
    pairwise = read_embeddings(resolve(m.pairwise_embeddings_path))
    text_data = _read_matrix(resolve(m.text_embeddings_path))

    if unary.rows != m.num_patches:
        raise ManifestError(
            f"manifest mismatch: unary embeddings have {unary.rows} rows, "
            f"manifest says {m.num_patches}"
        )
    if pairwise.rows != m.num_patches:
        raise ManifestError(
            f"manifest mismatch: pairwise embeddings have {pairwise.rows} rows, "
            f"manifest says {m.num_patches}"
        )
    if text_data.shape[0] != m.num_classes or len(m.class_names) != m.num_classes:
        raise ManifestError(
            f"manifest mismatch: {text_data.shape[0]} text rows / "
            f"{len(m.class_names)} names for {m.num_classes} classes"
        )
    if text_data.shape[1] != unary.dim:
        raise ManifestError(
            f"manifest mismatch: text dim {text_data.shape[1]} != unary dim {unary.dim}"
        )
    text = ClassTextEmbeddings(text_data, m.class_names)

    labels = None
    if m.labels_path is not None:
        labels = read_labels(resolve(m.labels_path))
        if labels.shape[0] != m.num_patches:
            raise ManifestError(
                f"manifest mismatch: {labels.shape[0]} labels for {m.num_patches} patches"
            )
        if labels.size and (labels.min() < 0 or labels.max() >= m.num_classes):
            raise ManifestError("manifest mismatch: label value out of class range")

    thumbs = resolve(m.thumbnails_dir) if m.thumbnails_dir else None
    return Dataset(
        name=m.name,
        unary=unary,
        pairwise=pairwise,
        text=text,
        labels=labels,
        thumbnails_dir=thumbs,
        grid=m.grid,
    )


# Within-class noise scales (fraction of the unit mean's norm). The unary
# space is deliberately the noisier of the two; the pairwise space stands in
# for a stronger feature extractor.
UNARY_NOISE_SCALE = 0.7
PAIRWISE_NOISE_SCALE = 0.35


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters for a generated clustered dataset.

    cluster_separation is the Euclidean distance between unary-space class
    mean directions (unit vectors), capped at sqrt(2) (orthogonal means).
    The small default keeps raw cosine margins in the same regime as real
    VLM patch/text similarities, i.e. close enough that refinement has work
    to do. unary_noise is the fraction of patches whose unary embedding is
    replaced by a draw from a uniformly chosen wrong class, modeling
    zero-shot errors; ground truth and the pairwise space are untouched.
    """

    num_classes: int
    patches_per_class: int
    dim_unary: int = 512
    dim_pairwise: int = 256
    cluster_separation: float = 0.1
    unary_noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")
        if min(self.patches_per_class, self.dim_unary, self.dim_pairwise) < 1:
            raise ValueError("counts and dimensions must be >= 1")
        if not 0.0 <= self.unary_noise <= 1.0:
            raise ValueError("unary_noise must lie in [0, 1]")
        if self.cluster_separation <= 0.0:
            raise ValueError("cluster_separation must be positive")

    @property
    def num_patches(self) -> int:
        return self.num_classes * self.patches_per_class


@dataclass(frozen=True)
class GenerationSummary:
    """Bookkeeping from generate_synthetic, enough to predict zero-shot accuracy."""

    manifest_path: Path
    corrupted_indices: np.ndarray
    corrupted_to: np.ndarray
    zero_shot_accuracy: float


def _unary_class_means(rng: np.random.Generator, spec: SyntheticSpec) -> np.ndarray:
    """Unit class means with pairwise distance = cluster_separation.

    mu_l = sqrt(rho) * m + sqrt(1 - rho) * b_l for a shared direction m and
    orthonormal b_l, giving mu_i . mu_j = rho = 1 - sep^2 / 2.
    """
    L, d = spec.num_classes, spec.dim_unary
    if d < L + 1:
        raise ValueError(f"dim_unary={d} too small for {L} classes (need >= {L + 1})")
    sep = min(spec.cluster_separation, math.sqrt(2.0))
    rho = max(0.0, 1.0 - sep * sep / 2.0)
    basis, _ = np.linalg.qr(rng.standard_normal((d, L + 1)))
    m, b = basis[:, 0], basis[:, 1:]
    return (math.sqrt(rho) * m[:, None] + math.sqrt(1.0 - rho) * b).T


def _pairwise_class_means(rng: np.random.Generator, spec: SyntheticSpec) -> np.ndarray:
    """Maximally spread unit class means (mutual similarity -1/(L-1))."""
    L, d = spec.num_classes, spec.dim_pairwise
    if d < L:
        raise ValueError(f"dim_pairwise={d} too small for {L} classes")
    basis, _ = np.linalg.qr(rng.standard_normal((d, L)))
    centered = basis.T - basis.T.mean(axis=0, keepdims=True)
    return normalize_rows(centered)


def generate_synthetic(
    spec: SyntheticSpec, out_dir, thumbnails: bool = False
) -> GenerationSummary:
    """Generate a manifest-backed dataset directory. Deterministic per seed."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    L, N = spec.num_classes, spec.num_patches

    # Fixed draw order; reordering would silently break byte-determinism.
    unary_means = _unary_class_means(rng, spec)
    pairwise_means = _pairwise_class_means(rng, spec)
    labels = np.repeat(np.arange(L, dtype=np.int64), spec.patches_per_class)

    noise_u = rng.standard_normal((N, spec.dim_unary)) / math.sqrt(spec.dim_unary)
    unary = normalize_rows(unary_means[labels] + UNARY_NOISE_SCALE * noise_u)

    n_corrupt = int(round(spec.unary_noise * N))
    corrupted = np.sort(rng.choice(N, size=n_corrupt, replace=False)) if n_corrupt else np.array([], dtype=np.int64)
    corrupted_to = np.array([], dtype=np.int64)
    if n_corrupt:
        offsets = rng.integers(1, L, size=n_corrupt)
        corrupted_to = (labels[corrupted] + offsets) % L
        noise_c = rng.standard_normal((n_corrupt, spec.dim_unary)) / math.sqrt(spec.dim_unary)
        unary[corrupted] = normalize_rows(
            unary_means[corrupted_to] + UNARY_NOISE_SCALE * noise_c
        )

    noise_p = rng.standard_normal((N, spec.dim_pairwise)) / math.sqrt(spec.dim_pairwise)
    pairwise = normalize_rows(pairwise_means[labels] + PAIRWISE_NOISE_SCALE * noise_p)

    class_names = tuple(f"class_{i}" for i in range(L))
    _write_matrix(unary, out / "unary.emb")
    _write_matrix(pairwise, out / "pairwise.emb")
    _write_matrix(unary_means, out / "text.emb")
    write_labels(labels, out / "labels.txt")

    cols = int(math.ceil(math.sqrt(N)))
    grid = (int(math.ceil(N / cols)), cols)

    thumbs_dir = None
    if thumbnails:
        thumbs_dir = "thumbnails"
        _write_thumbnails(out / thumbs_dir, labels, rng_seed=spec.seed)

    manifest = DatasetManifest(
        name=f"synthetic_L{L}_n{spec.patches_per_class}_noise{spec.unary_noise}_seed{spec.seed}",
        num_patches=N,
        num_classes=L,
        class_names=class_names,
        unary_embeddings_path="unary.emb",
        pairwise_embeddings_path="pairwise.emb",
        text_embeddings_path="text.emb",
        labels_path="labels.txt",
        thumbnails_dir=thumbs_dir,
        grid=grid,
    )
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest.to_json_dict(), indent=2, sort_keys=True) + "\n")

    # Zero-shot bookkeeping: cosine argmax against the class means. Rows and
    # means are unit vectors, so the dot product is the cosine similarity.
    zero_shot = np.argmax(unary @ unary_means.T, axis=1)
    accuracy = float(np.mean(zero_shot == labels))
    info = {
        "corrupted_indices": corrupted.tolist(),
        "corrupted_to": corrupted_to.tolist(),
        "zero_shot_accuracy": accuracy,
        "spec": {
            "num_classes": L,
            "patches_per_class": spec.patches_per_class,
            "dim_unary": spec.dim_unary,
            "dim_pairwise": spec.dim_pairwise,
            "cluster_separation": spec.cluster_separation,
            "unary_noise": spec.unary_noise,
            "seed": spec.seed,
        },
    }
    (out / "generation.json").write_text(json.dumps(info, indent=2, sort_keys=True) + "\n")

    return GenerationSummary(
        manifest_path=manifest_path,
        corrupted_indices=corrupted,
        corrupted_to=corrupted_to,
        zero_shot_accuracy=accuracy,
    )


# Fixed categorical palette; index i colors class i. Mirrored by any UI.
CLASS_PALETTE = (
    (31, 119, 180), (255, 127, 14), (44, 160, 44), (214, 39, 40),
    (148, 103, 189), (140, 86, 75), (227, 119, 194), (127, 127, 127),
    (188, 189, 34), (23, 190, 207), (174, 199, 232), (255, 187, 120),
)


def _write_thumbnails(directory: Path, labels: np.ndarray, rng_seed: int, size: int = 24) -> None:
    from PIL import Image

    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(rng_seed ^ 0x7468756D)
    for v, label in enumerate(labels):
        base = np.array(CLASS_PALETTE[int(label) % len(CLASS_PALETTE)], dtype=np.float64)
        jitter = rng.normal(0.0, 18.0, size=(size, size, 1))
        pixels = np.clip(base[None, None, :] + jitter, 0, 255).astype(np.uint8)
        Image.fromarray(pixels, mode="RGB").save(directory / f"{v}.png")
