"""Mean-field message passing over the sparse patch graph.

One step recomputes, for every vertex v and label l,

    m_v(l) = phi_v(l)
           + alpha * sum_{w in N_v} Q_w(l) * (1 - sim(v, w))
           + beta  * sum_{annotated a with v in M_a} sim(a, v) * [l != label(a)]

and sets Q'_v = softmax(-m_v), optionally blended with the previous beliefs
(damping) and with annotated rows clamped to one-hot. The diversity term is
the expectation of the pairwise cost under the neighbor's current marginal;
all updates read the pre-step beliefs (synchronous, double-buffered), so the
result is independent of vertex evaluation order.

Edges are redrawn from the candidate pools every iteration; with
pool_factor=1 the neighborhoods are fixed and the whole run is independent
of the sampling seed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .core import AnnotationAudit, AnnotationSet, Beliefs, row_softmax
from .dataio import Dataset
from .neighborhood import NeighborhoodIndex, SampledNeighborhoods, resample
from .potentials import DEFAULT_TEMPERATURE, PairwiseWeights, UnaryField, compute_unary

__all__ = [
    "EngineConfig",
    "StepStats",
    "RefinementResult",
    "RefinementState",
    "mean_field_step",
    "refine",
    "apply_annotation",
]

PAIRWISE_TERMS = ("diversity", "smoothing")


@dataclass(frozen=True)
class EngineConfig:
    weights: PairwiseWeights = field(default_factory=PairwiseWeights)
    max_iterations: int = 10
    convergence_tol: float = 1e-4
    damping: float = 0.0
    clamp_annotations: bool = True
    temperature: float = DEFAULT_TEMPERATURE
    pairwise_term: str = "diversity"

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.convergence_tol <= 0.0:
            raise ValueError("convergence_tol must be positive")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must lie in [0, 1)")
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")
        if self.pairwise_term not in PAIRWISE_TERMS:
            raise ValueError(f"pairwise_term must be one of {PAIRWISE_TERMS}")

    def to_dict(self) -> dict:
        return {
            "alpha": self.weights.alpha,
            "beta": self.weights.beta,
            "max_iterations": self.max_iterations,
            "convergence_tol": self.convergence_tol,
            "damping": self.damping,
            "clamp_annotations": self.clamp_annotations,
            "temperature": self.temperature,
            "pairwise_term": self.pairwise_term,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EngineConfig":
        return cls(
            weights=PairwiseWeights(
                alpha=d.get("alpha", 0.1), beta=d.get("beta", 0.01)
            ),
            max_iterations=d.get("max_iterations", 10),
            convergence_tol=d.get("convergence_tol", 1e-4),
            damping=d.get("damping", 0.0),
            clamp_annotations=d.get("clamp_annotations", True),
            temperature=d.get("temperature", DEFAULT_TEMPERATURE),
            pairwise_term=d.get("pairwise_term", "diversity"),
        )


@dataclass(frozen=True)
class StepStats:
    iteration: int
    max_delta: float
    seconds: float


@dataclass(frozen=True)
class RefinementResult:
    beliefs: Beliefs
    predictions: np.ndarray
    iterations_run: int
    per_iteration_seconds: list[float]
    converged: bool


def _clamp_rows(q: np.ndarray, annotations: AnnotationSet) -> None:
    if len(annotations) == 0:
        return
    vertices = annotations.vertices()
    q[vertices, :] = 0.0
    q[vertices, annotations.labels_for(vertices)] = 1.0


def mean_field_step(
    Q: Beliefs,
    unary: UnaryField,
    nbrs: SampledNeighborhoods,
    annotations: AnnotationSet,
    config: EngineConfig,
) -> Beliefs:
    """One synchronous mean-field update of all beliefs."""
    q = Q.data
    n, num_classes = q.shape
    if unary.data.shape != (n, num_classes):
        raise ValueError("unary field and beliefs disagree on shape")
    annotations.validate(n, num_classes)
    alpha, beta = config.weights.alpha, config.weights.beta

    m = unary.data.copy()

    if alpha != 0.0 and nbrs.base_ids.shape[1] > 0:
        neighbor_beliefs = q[nbrs.base_ids]  # (N, k, L)
        if config.pairwise_term == "diversity":
            m += alpha * np.einsum(
                "vkl,vk->vl", neighbor_beliefs, 1.0 - nbrs.base_sims
            )
        else:
            # smoothing ablation: cost sim * [labels differ] on similar edges
            m += alpha * (
                nbrs.base_sims.sum(axis=1)[:, None]
                - np.einsum("vkl,vk->vl", neighbor_beliefs, nbrs.base_sims)
            )

    if beta != 0.0 and nbrs.ann_edges:
        sources = sorted(nbrs.ann_edges)
        dst = np.concatenate([nbrs.ann_edges[a][0] for a in sources])
        sims = np.concatenate([nbrs.ann_edges[a][1] for a in sources])
        labels = np.concatenate(
            [np.full(nbrs.ann_edges[a][0].shape, annotations.entries[a]) for a in sources]
        )
        # cost beta*sim on every label except the annotation's
        np.add.at(m, dst, beta * sims[:, None])
        np.subtract.at(m, (dst, labels), beta * sims)

    q_new = row_softmax(-m, 1.0)
    if config.damping > 0.0:
        q_new = (1.0 - config.damping) * q_new + config.damping * q
    if config.clamp_annotations:
        _clamp_rows(q_new, annotations)

    if __debug__:
        assert np.max(np.abs(q_new.sum(axis=1) - 1.0)) <= 1e-9
        if config.clamp_annotations and len(annotations) > 0:
            vs = annotations.vertices()
            assert np.all(q_new[vs, annotations.labels_for(vs)] == 1.0)

    return Beliefs(q_new, iteration=Q.iteration + 1)


class RefinementState:
    """Mutable engine state for one interactive session.

    Owns the beliefs, the annotation set, and the iteration counter that
    drives neighborhood resampling. Single logical writer; concurrent callers
    must serialize externally (the HTTP service does).
    """

    def __init__(
        self,
        dataset: Dataset,
        index: NeighborhoodIndex,
        config: EngineConfig | None = None,
        seed: int | None = None,
    ):
        self.dataset = dataset
        self.index = index
        self.config = config or EngineConfig()
        self.seed = index.rng_seed if seed is None else seed
        self.unary = compute_unary(dataset.unary, dataset.text, self.config.temperature)
        self.annotations = AnnotationSet()
        self.beliefs = Beliefs(row_softmax(-self.unary.data, 1.0), iteration=0)
        self.zero_shot_predictions = self.beliefs.predictions().copy()
        self.last_max_delta = float("inf")

    @property
    def iteration(self) -> int:
        return self.beliefs.iteration

    @property
    def predictions(self) -> np.ndarray:
        return self.beliefs.predictions()

    def annotate(self, vertex: int, label: int) -> AnnotationAudit:
        """Insert/overwrite an annotation; clamps the belief row when enabled."""
        n, num_classes = self.beliefs.data.shape
        if not 0 <= int(vertex) < n:
            raise ValueError(f"vertex {vertex} out of range [0, {n})")
        if not 0 <= int(label) < num_classes:
            raise ValueError(f"label {label} out of range [0, {num_classes})")
        self.annotations, audit = self.annotations.with_annotation(vertex, label)
        if self.config.clamp_annotations:
            q = self.beliefs.data.copy()
            q[int(vertex), :] = 0.0
            q[int(vertex), int(label)] = 1.0
            self.beliefs = Beliefs(q, iteration=self.beliefs.iteration)
        return audit

    def step(self, count: int = 1) -> list[StepStats]:
        """Run `count` iterations (resample edges, then update beliefs)."""
        stats = []
        base_pool = "dissimilar" if self.config.pairwise_term == "diversity" else "similar"
        for _ in range(count):
            t0 = time.perf_counter()
            nbrs = resample(
                self.index,
                self.annotations,
                self.beliefs.iteration,
                seed=self.seed,
                base_pool=base_pool,
            )
            new_beliefs = mean_field_step(
                self.beliefs, self.unary, nbrs, self.annotations, self.config
            )
            delta = float(np.max(np.abs(new_beliefs.data - self.beliefs.data)))
            self.beliefs = new_beliefs
            self.last_max_delta = delta
            stats.append(
                StepStats(
                    iteration=new_beliefs.iteration,
                    max_delta=delta,
                    seconds=time.perf_counter() - t0,
                )
            )
        return stats

    def run_until_stopped(self, max_iterations: int | None = None) -> tuple[list[StepStats], bool]:
        """Step until max-abs belief change drops below the configured
        tolerance or the iteration budget is spent."""
        budget = self.config.max_iterations if max_iterations is None else max_iterations
        stats: list[StepStats] = []
        converged = False
        for _ in range(budget):
            stats.extend(self.step(1))
            if stats[-1].max_delta < self.config.convergence_tol:
                converged = True
                break
        return stats, converged


def apply_annotation(state: RefinementState, vertex: int, label: int) -> AnnotationAudit:
    """Functional-style alias for RefinementState.annotate."""
    return state.annotate(vertex, label)


def refine(
    dataset: Dataset,
    index: NeighborhoodIndex,
    annotations: AnnotationSet | None = None,
    config: EngineConfig | None = None,
    rng_seed: int | None = None,
) -> RefinementResult:
    """Full refinement run: unary once, then resample+step until the stop rule."""
    state = RefinementState(dataset, index, config, seed=rng_seed)
    if annotations is not None:
        for vertex in sorted(annotations.entries):
            state.annotate(vertex, annotations.entries[vertex])
    stats, converged = state.run_until_stopped()
    return RefinementResult(
        beliefs=state.beliefs,
        predictions=state.predictions,
        iterations_run=len(stats),
        per_iteration_seconds=[s.seconds for s in stats],
        converged=converged,
    )
