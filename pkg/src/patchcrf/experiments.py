"""Experiment runners: annotation strategies, the HITL oracle, reports.

Everything here is deterministic given (config, seed): sampling uses seeds
derived from the master seed, and a report's config snapshot is sufficient
to rerun it bit-identically.

Accuracy conventions: the headline accuracy counts all N patches (annotated
vertices included — oracle annotations are correct, so clamped vertices count
as correct); accuracy_excl_annotated is always reported alongside, computed
over the unannotated vertices only (defined as 1.0 when that set is empty).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .core import AnnotationSet
from .dataio import Dataset
from .inference import EngineConfig, RefinementState, refine
from .label_prop import LpConfig, label_propagation
from .neighborhood import (
    DEFAULT_K_ANN,
    DEFAULT_K_BASE,
    DEFAULT_POOL_FACTOR,
    NeighborhoodIndex,
    build_index,
    resample,
)
from .potentials import PairwiseWeights, compute_unary
from .rng import derive_seed

__all__ = [
    "REPORT_COLUMNS",
    "SamplingStrategy",
    "ExperimentReport",
    "HitlRound",
    "AblationGrid",
    "zero_shot_predictions",
    "accuracy",
    "accuracy_excluding",
    "sample_random",
    "sample_error_based",
    "annotations_for_strategy",
    "run_refinement_experiment",
    "run_lp_experiment",
    "run_zero_shot",
    "run_hitl",
    "run_ablation_grid",
    "run_benchmark",
    "write_reports_csv",
]

REPORT_COLUMNS = (
    "dataset",
    "method",
    "strategy",
    "budget",
    "seed",
    "accuracy",
    "accuracy_excl_annotated",
    "iterations",
    "mean_iter_seconds",
    "alpha",
    "beta",
    "k_base",
    "k_ann",
    "pool_factor",
    "temperature",
)

STRATEGY_KINDS = ("none", "random", "error_based")


@dataclass(frozen=True)
class SamplingStrategy:
    kind: str = "none"
    budget: int = 0
    per_round: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"strategy kind must be one of {STRATEGY_KINDS}")
        if self.budget < 0:
            raise ValueError("budget must be >= 0")
        if self.kind != "none" and self.per_round < 1:
            raise ValueError("per_round must be >= 1")


@dataclass(frozen=True)
class ExperimentReport:
    dataset: str
    method: str
    strategy: str
    budget: int
    seed: int
    accuracy: float
    accuracy_excl_annotated: float
    iterations: int
    per_iteration_seconds: list[float] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    converged: bool = False
    predictions: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def mean_iter_seconds(self) -> float:
        if not self.per_iteration_seconds:
            return 0.0
        return float(np.mean(self.per_iteration_seconds))

    def to_row(self) -> list:
        c = self.config
        return [
            self.dataset,
            self.method,
            self.strategy,
            self.budget,
            self.seed,
            self.accuracy,
            self.accuracy_excl_annotated,
            self.iterations,
            self.mean_iter_seconds,
            c.get("alpha", 0.0),
            c.get("beta", 0.0),
            c.get("k_base", 0),
            c.get("k_ann", 0),
            c.get("pool_factor", 0),
            c.get("temperature", 0.0),
        ]


def write_reports_csv(reports, path, extra_columns: tuple[str, ...] = (), extras=None) -> None:
    """One header row with exactly REPORT_COLUMNS (plus any declared extras)."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(list(REPORT_COLUMNS) + list(extra_columns))
        for i, report in enumerate(reports):
            row = report.to_row()
            if extra_columns:
                row += [extras[i][c] for c in extra_columns]
            writer.writerow(row)


def zero_shot_predictions(dataset: Dataset, temperature: float) -> np.ndarray:
    unary = compute_unary(dataset.unary, dataset.text, temperature)
    return np.argmax(-unary.data, axis=1)


def accuracy(predictions: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(np.asarray(predictions) == np.asarray(labels)))


def accuracy_excluding(predictions, labels, annotations: AnnotationSet) -> float:
    mask = np.ones(len(labels), dtype=bool)
    if len(annotations) > 0:
        mask[annotations.vertices()] = False
    if not mask.any():
        return 1.0
    return float(np.mean(np.asarray(predictions)[mask] == np.asarray(labels)[mask]))


def sample_random(labels: np.ndarray, n: int, seed: int) -> AnnotationSet:
    """n distinct vertices uniformly without replacement, true labels."""
    labels = np.asarray(labels)
    if n > labels.shape[0]:
        raise ValueError(f"cannot annotate {n} of {labels.shape[0]} patches")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(labels.shape[0], size=n, replace=False)
    return AnnotationSet({int(v): int(labels[v]) for v in chosen})


def sample_error_based(
    predictions: np.ndarray,
    labels: np.ndarray,
    n: int,
    seed: int,
    exclude: AnnotationSet | None = None,
) -> tuple[AnnotationSet, int]:
    """n misclassified vertices uniformly without replacement, true labels.

    Returns (annotations, shortfall): when fewer than n patches are
    misclassified, all of them are annotated and the shortfall reported.
    Vertices in `exclude` are never re-picked.
    """
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    wrong = predictions != labels
    if exclude is not None and len(exclude) > 0:
        wrong[exclude.vertices()] = False
    candidates = np.flatnonzero(wrong)
    if candidates.size <= n:
        chosen = candidates
    else:
        rng = np.random.default_rng(seed)
        chosen = rng.choice(candidates, size=n, replace=False)
    ann = AnnotationSet({int(v): int(labels[v]) for v in chosen})
    return ann, n - chosen.size


def annotations_for_strategy(
    dataset: Dataset, strategy: SamplingStrategy, temperature: float
) -> tuple[AnnotationSet, int]:
    """One-shot annotation set for a strategy; error_based samples against the
    zero-shot predictions."""
    if strategy.kind == "none" or strategy.budget == 0:
        return AnnotationSet(), 0
    labels = dataset.require_labels()
    if strategy.kind == "random":
        return sample_random(labels, strategy.budget, strategy.seed), 0
    preds = zero_shot_predictions(dataset, temperature)
    return sample_error_based(preds, labels, strategy.budget, strategy.seed)


def _snapshot(dataset: Dataset, config: EngineConfig, index: NeighborhoodIndex, seed: int) -> dict:
    return {
        **config.to_dict(),
        "k_base": index.k_base,
        "k_ann": index.k_ann,
        "pool_factor": index.pool_factor,
        "seed": seed,
        "dataset": dataset.name,
    }


def run_refinement_experiment(
    dataset: Dataset,
    index: NeighborhoodIndex,
    config: EngineConfig,
    strategy: SamplingStrategy,
    seed: int,
) -> ExperimentReport:
    """One refinement run under a one-shot annotation strategy."""
    labels = dataset.labels
    annotations, _ = annotations_for_strategy(dataset, strategy, config.temperature)
    result = refine(dataset, index, annotations, config, rng_seed=seed)
    acc = accuracy(result.predictions, labels) if labels is not None else float("nan")
    acc_excl = (
        accuracy_excluding(result.predictions, labels, annotations)
        if labels is not None
        else float("nan")
    )
    return ExperimentReport(
        dataset=dataset.name,
        method="crf",
        strategy=strategy.kind,
        budget=strategy.budget if strategy.kind != "none" else 0,
        seed=seed,
        accuracy=acc,
        accuracy_excl_annotated=acc_excl,
        iterations=result.iterations_run,
        per_iteration_seconds=result.per_iteration_seconds,
        config=_snapshot(dataset, config, index, seed),
        converged=result.converged,
        predictions=result.predictions,
    )


def run_zero_shot(dataset: Dataset, temperature: float, seed: int = 0) -> ExperimentReport:
    labels = dataset.require_labels()
    preds = zero_shot_predictions(dataset, temperature)
    return ExperimentReport(
        dataset=dataset.name,
        method="zero_shot",
        strategy="none",
        budget=0,
        seed=seed,
        accuracy=accuracy(preds, labels),
        accuracy_excl_annotated=accuracy(preds, labels),
        iterations=0,
        config={"temperature": temperature, "seed": seed, "dataset": dataset.name},
    )


def run_lp_experiment(
    dataset: Dataset,
    strategy: SamplingStrategy,
    lp_config: LpConfig,
    temperature: float,
    seed: int,
) -> ExperimentReport:
    labels = dataset.require_labels()
    annotations, _ = annotations_for_strategy(dataset, strategy, temperature)
    result = label_propagation(
        dataset.pairwise, annotations, dataset.num_classes, lp_config
    )
    return ExperimentReport(
        dataset=dataset.name,
        method="lp",
        strategy=strategy.kind,
        budget=strategy.budget,
        seed=seed,
        accuracy=accuracy(result.predictions, labels),
        accuracy_excl_annotated=accuracy_excluding(result.predictions, labels, annotations),
        iterations=result.iterations,
        config={
            **lp_config.to_dict(),
            "alpha": lp_config.alpha_lp,
            "k_base": lp_config.k_graph,
            "temperature": temperature,
            "seed": seed,
            "dataset": dataset.name,
        },
        predictions=result.predictions,
    )


@dataclass(frozen=True)
class HitlRound:
    round: int
    annotations_total: int
    placed: int
    accuracy: float
    accuracy_excl_annotated: float


@dataclass(frozen=True)
class HitlResult:
    report: ExperimentReport
    rounds: list[HitlRound]
    predictions: np.ndarray


def run_hitl(
    dataset: Dataset,
    index: NeighborhoodIndex,
    config: EngineConfig,
    per_round: int = 5,
    budget: int = 100,
    seed: int = 0,
) -> HitlResult:
    """Oracle-in-the-loop run: annotate `per_round` currently misclassified
    patches before the first iteration and after every subsequent one until
    `budget` annotations are placed, then let refinement run to its stop rule.

    Accuracy is recorded after every annotation round. When the oracle runs
    out of misclassified patches, the remaining budget is left unspent.
    """
    labels = dataset.require_labels()
    state = RefinementState(dataset, index, config, seed=seed)
    rounds: list[HitlRound] = []
    all_seconds: list[float] = []
    placed_total = 0
    round_idx = 0

    def place_round() -> int:
        nonlocal placed_total, round_idx
        want = min(per_round, budget - placed_total)
        if want <= 0:
            return 0
        ann, _short = sample_error_based(
            state.predictions,
            labels,
            want,
            derive_seed(seed, 0x48495442, round_idx),
            exclude=state.annotations,
        )
        for v in sorted(ann.entries):
            state.annotate(v, ann.entries[v])
        placed_total += len(ann)
        rounds.append(
            HitlRound(
                round=round_idx,
                annotations_total=placed_total,
                placed=len(ann),
                accuracy=accuracy(state.predictions, labels),
                accuracy_excl_annotated=accuracy_excluding(
                    state.predictions, labels, state.annotations
                ),
            )
        )
        round_idx += 1
        return len(ann)

    place_round()
    while placed_total < budget:
        stats = state.step(1)
        all_seconds.extend(s.seconds for s in stats)
        if place_round() == 0:
            break  # oracle found nothing left to annotate

    tail_stats, converged = state.run_until_stopped()
    all_seconds.extend(s.seconds for s in tail_stats)

    report = ExperimentReport(
        dataset=dataset.name,
        method="crf",
        strategy="hitl",
        budget=budget,
        seed=seed,
        accuracy=accuracy(state.predictions, labels),
        accuracy_excl_annotated=accuracy_excluding(
            state.predictions, labels, state.annotations
        ),
        iterations=state.iteration,
        per_iteration_seconds=all_seconds,
        config={
            **_snapshot(dataset, config, index, seed),
            "per_round": per_round,
            "budget": budget,
        },
        converged=converged,
    )
    return HitlResult(report=report, rounds=rounds, predictions=state.predictions)


@dataclass(frozen=True)
class AblationGrid:
    pairwise_terms: tuple[str, ...] = ("diversity", "smoothing")
    k_bases: tuple[int, ...] = (4, 16, 64)
    alphas: tuple[float, ...] = (0.1,)
    betas: tuple[float, ...] = (0.0, 0.01)
    budget: int = 50
    strategy_kind: str = "error_based"

    @classmethod
    def from_dict(cls, d: dict) -> "AblationGrid":
        return cls(
            pairwise_terms=tuple(d.get("pairwise_terms", ("diversity", "smoothing"))),
            k_bases=tuple(int(k) for k in d.get("k_bases", (4, 16, 64))),
            alphas=tuple(float(a) for a in d.get("alphas", (0.1,))),
            betas=tuple(float(b) for b in d.get("betas", (0.0, 0.01))),
            budget=int(d.get("budget", 50)),
            strategy_kind=d.get("strategy_kind", "error_based"),
        )


def run_benchmark(
    n: int = 10_000,
    num_classes: int = 10,
    k_base: int = DEFAULT_K_BASE,
    dim_pairwise: int = 64,
    iterations: int = 5,
    num_annotations: int = 100,
    seed: int = 0,
) -> dict:
    """Time message-passing iterations on a random instance of the given size.

    The one-time index build is reported separately; the per-iteration numbers
    are what the real-time claim is about. A batch of random annotations keeps
    the annotation term on the timed path.
    """
    import time

    from .core import ClassTextEmbeddings, EmbeddingMatrix

    rng = np.random.default_rng(seed)
    dim_unary = 32
    dataset = Dataset(
        name=f"bench_n{n}_l{num_classes}",
        unary=EmbeddingMatrix(rng.standard_normal((n, dim_unary))),
        pairwise=EmbeddingMatrix(rng.standard_normal((n, dim_pairwise))),
        text=ClassTextEmbeddings(
            rng.standard_normal((num_classes, dim_unary)),
            tuple(f"class_{i}" for i in range(num_classes)),
        ),
    )
    t0 = time.perf_counter()
    index = build_index(
        dataset.pairwise, k_base=k_base, k_ann=DEFAULT_K_ANN,
        pool_factor=DEFAULT_POOL_FACTOR, seed=seed,
    )
    build_seconds = time.perf_counter() - t0

    from .inference import RefinementState

    state = RefinementState(dataset, index, EngineConfig(), seed=seed)
    for v in rng.choice(n, size=min(num_annotations, n), replace=False):
        state.annotate(int(v), int(rng.integers(0, num_classes)))
    stats = state.step(iterations)
    seconds = [s.seconds for s in stats]
    return {
        "n": n,
        "num_classes": num_classes,
        "k_base": k_base,
        "dim_pairwise": dim_pairwise,
        "iterations": iterations,
        "index_build_seconds": build_seconds,
        "seconds_per_iteration": seconds,
        "mean_seconds_per_iteration": float(np.mean(seconds)),
        "max_seconds_per_iteration": float(np.max(seconds)),
        "seed": seed,
    }


ABLATION_EXTRA_COLUMNS = ("pairwise_term", "edge_memory_bytes")


def run_ablation_grid(
    dataset: Dataset,
    grid: AblationGrid,
    base_config: EngineConfig,
    seed: int,
    pool_factor: int = DEFAULT_POOL_FACTOR,
) -> tuple[list[ExperimentReport], list[dict]]:
    """One report per grid cell, plus per-cell extras (pairwise term, measured
    sampled-edge memory). Indexes are rebuilt per k so the smoothing variant
    has a similar pool of at least k_base candidates."""
    reports: list[ExperimentReport] = []
    extras: list[dict] = []
    for k_base in grid.k_bases:
        index = build_index(
            dataset.pairwise,
            k_base=k_base,
            k_ann=max(DEFAULT_K_ANN, k_base),
            pool_factor=pool_factor,
            seed=seed,
        )
        edges = resample(index, AnnotationSet(), 0, seed=seed)
        edge_bytes = int(edges.base_ids.nbytes + edges.base_sims.nbytes)
        for term in grid.pairwise_terms:
            for alpha in grid.alphas:
                for beta in grid.betas:
                    config = EngineConfig(
                        weights=PairwiseWeights(alpha=alpha, beta=beta),
                        max_iterations=base_config.max_iterations,
                        convergence_tol=base_config.convergence_tol,
                        damping=base_config.damping,
                        clamp_annotations=base_config.clamp_annotations,
                        temperature=base_config.temperature,
                        pairwise_term=term,
                    )
                    strategy = SamplingStrategy(
                        kind=grid.strategy_kind if grid.budget > 0 else "none",
                        budget=grid.budget,
                        seed=derive_seed(seed, 0xAB1A7E),
                    )
                    reports.append(
                        run_refinement_experiment(dataset, index, config, strategy, seed)
                    )
                    extras.append(
                        {"pairwise_term": term, "edge_memory_bytes": edge_bytes}
                    )
    return reports, extras
