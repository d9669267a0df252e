"""patchcrf: interactive mean-field CRF refinement of patch-level predictions."""

from .core import (
    AnnotationSet,
    Beliefs,
    ClassTextEmbeddings,
    EmbeddingMatrix,
    cosine_similarity,
    row_softmax,
)
from .dataio import Dataset, SyntheticSpec, generate_synthetic, load_dataset
from .inference import EngineConfig, RefinementState, mean_field_step, refine
from .label_prop import LpConfig, label_propagation
from .neighborhood import NeighborhoodIndex, SampledNeighborhoods, build_index, resample
from .potentials import PairwiseWeights, UnaryField, compute_unary

__version__ = "0.1.0"

__all__ = [
    "AnnotationSet",
    "Beliefs",
    "ClassTextEmbeddings",
    "EmbeddingMatrix",
    "cosine_similarity",
    "row_softmax",
    "Dataset",
    "SyntheticSpec",
    "generate_synthetic",
    "load_dataset",
    "EngineConfig",
    "RefinementState",
    "mean_field_step",
    "refine",
    "LpConfig",
    "label_propagation",
    "NeighborhoodIndex",
    "SampledNeighborhoods",
    "build_index",
    "resample",
    "PairwiseWeights",
    "UnaryField",
    "compute_unary",
    "__version__",
]
