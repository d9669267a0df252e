"""Request/response models for the HTTP service."""

from __future__ import annotations

from typing import Any, Optional

from pydantic import BaseModel, Field, model_validator


class SyntheticSpecModel(BaseModel):
    num_classes: int = Field(ge=2)
    patches_per_class: int = Field(ge=1)
    dim_unary: int = 512
    dim_pairwise: int = 256
    cluster_separation: float = 0.1
    unary_noise: float = Field(default=0.0, ge=0.0, le=1.0)
    seed: int = 0


class EngineConfigModel(BaseModel):
    alpha: float = 0.1
    beta: float = 0.01
    max_iterations: int = 10
    convergence_tol: float = 1e-4
    damping: float = 0.0
    clamp_annotations: bool = True
    temperature: float = 0.01
    pairwise_term: str = "diversity"


class CreateSessionRequest(BaseModel):
    manifest_path: Optional[str] = None
    synthetic: Optional[SyntheticSpecModel] = None
    config: Optional[EngineConfigModel] = None
    seed: Optional[int] = None
    k_base: int = 16
    k_ann: int = 5
    pool_factor: int = 4

    @model_validator(mode="after")
    def _exactly_one_source(self):
        if (self.manifest_path is None) == (self.synthetic is None):
            raise ValueError("provide exactly one of manifest_path or synthetic")
        return self


class CreateSessionResponse(BaseModel):
    session_id: str
    num_patches: int
    num_classes: int
    class_names: list[str]
    seed: int
    zero_shot_accuracy: Optional[float] = None
    grid: Optional[list[int]] = None


class AnnotationItem(BaseModel):
    vertex: int
    label: int


class AnnotateResponse(BaseModel):
    accepted: int
    overridden: int
    queued: bool


class StepRequest(BaseModel):
    count: int = Field(default=1, ge=1, le=1000)


class StepResponse(BaseModel):
    iterations_run: int
    max_delta: float
    seconds_per_iteration: list[float]
    converged: bool


class Metrics(BaseModel):
    iteration: int
    num_annotations: int
    max_delta: Optional[float] = None
    accuracy: Optional[float] = None
    accuracy_excl_annotated: Optional[float] = None
    zero_shot_accuracy: Optional[float] = None


class StateResponse(BaseModel):
    session_id: str
    status: str
    iteration: int
    num_patches: int
    num_classes: int
    class_names: list[str]
    has_thumbnails: bool = False
    grid: Optional[list[int]] = None
    predictions: Optional[list[int]] = None
    confidence: Optional[list[float]] = None
    zero_shot_predictions: Optional[list[int]] = None
    beliefs: Optional[list[list[float]]] = None
    beliefs_top3: Optional[list[list[list[float]]]] = None
    beliefs_truncated: Optional[bool] = None
    annotations: Optional[dict[int, int]] = None
    metrics: Optional[Metrics] = None


class Event(BaseModel):
    seq: int
    type: str
    payload: dict[str, Any]


class SessionSummary(BaseModel):
    session_id: str
    status: str
    num_patches: int
    num_classes: int
    iteration: int
    num_annotations: int


class ServiceInfo(BaseModel):
    name: str
    version: str
    sessions: int
    max_sessions: int
    max_patches: int
