"""HTTP surface: JSON endpoints plus a server-sent-events stream per session.

Sessions wrap the refinement engine for interactive annotation loops; a UI
(or any HTTP client) creates a session, posts annotations, triggers steps,
and follows progress on the event stream.
"""

from __future__ import annotations

import json
import os
import secrets

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles

from .. import __version__
from ..dataio import ManifestError
from ..inference import EngineConfig
from ..potentials import PairwiseWeights
from .schemas import (
    AnnotateResponse,
    AnnotationItem,
    CreateSessionRequest,
    CreateSessionResponse,
    Event,
    Metrics,
    ServiceInfo,
    SessionSummary,
    StateResponse,
    StepRequest,
    StepResponse,
)
from .sessions import ServiceSettings, SessionBusyError, SessionManager

__all__ = ["create_app", "run_service"]


def _engine_config(req: CreateSessionRequest, settings: ServiceSettings) -> EngineConfig:
    c = req.config
    if c is None:
        return settings.default_config()
    return EngineConfig(
        weights=PairwiseWeights(alpha=c.alpha, beta=c.beta),
        max_iterations=c.max_iterations,
        convergence_tol=c.convergence_tol,
        damping=c.damping,
        clamp_annotations=c.clamp_annotations,
        temperature=c.temperature,
        pairwise_term=c.pairwise_term,
    )


def create_app(settings: ServiceSettings | None = None) -> FastAPI:
    settings = settings or ServiceSettings.from_env(os.environ)
    manager = SessionManager(settings)

    app = FastAPI(title="patchcrf service", version=__version__)
    app.state.manager = manager
    app.state.settings = settings
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    def get_session(session_id: str):
        try:
            return manager.get(session_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")

    @app.get("/", response_model=ServiceInfo)
    def info():
        return ServiceInfo(
            name="patchcrf",
            version=__version__,
            sessions=len(manager),
            max_sessions=settings.max_sessions,
            max_patches=settings.max_patches,
        )

    @app.post("/sessions", response_model=CreateSessionResponse, status_code=201)
    def create_session(req: CreateSessionRequest):
        source = (
            {"manifest_path": req.manifest_path}
            if req.manifest_path
            else {"synthetic": req.synthetic.model_dump()}
        )
        seed = req.seed if req.seed is not None else secrets.randbits(63)
        try:
            session = manager.create(
                source,
                _engine_config(req, settings),
                seed,
                k_base=req.k_base,
                k_ann=req.k_ann,
                pool_factor=req.pool_factor,
            )
        except OverflowError as e:
            raise HTTPException(status_code=413, detail=str(e))
        except RuntimeError as e:
            raise HTTPException(status_code=429, detail=str(e))
        except (ManifestError, FileNotFoundError, OSError, ValueError) as e:
            raise HTTPException(status_code=400, detail=str(e))
        labels = session.dataset.labels
        zero_shot = None
        if labels is not None:
            zero_shot = float(np.mean(session.state.zero_shot_predictions == labels))
        return CreateSessionResponse(
            session_id=session.id,
            num_patches=session.dataset.num_patches,
            num_classes=session.dataset.num_classes,
            class_names=list(session.dataset.class_names),
            seed=session.seed,
            zero_shot_accuracy=zero_shot,
            grid=list(session.dataset.grid) if session.dataset.grid else None,
        )

    @app.get("/sessions", response_model=list[SessionSummary])
    def list_sessions():
        return [
            SessionSummary(
                session_id=s.id,
                status=s.status,
                num_patches=s.dataset.num_patches,
                num_classes=s.dataset.num_classes,
                iteration=s.state.iteration,
                num_annotations=len(s.state.annotations),
            )
            for s in manager.list_sessions()
        ]

    @app.delete("/sessions/{session_id}", status_code=204)
    def delete_session(session_id: str):
        try:
            manager.delete(session_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return Response(status_code=204)

    @app.post("/sessions/{session_id}/annotations", response_model=AnnotateResponse)
    def annotate(session_id: str, items: list[AnnotationItem]):
        session = get_session(session_id)
        try:
            accepted, overridden, queued = session.annotate_batch(
                [(item.vertex, item.label) for item in items]
            )
        except ValueError as e:
            raise HTTPException(status_code=422, detail=str(e))
        return AnnotateResponse(accepted=accepted, overridden=overridden, queued=queued)

    @app.post("/sessions/{session_id}/step", response_model=StepResponse)
    def step(session_id: str, req: StepRequest | None = None):
        session = get_session(session_id)
        count = req.count if req is not None else 1
        try:
            stats = session.step(count)
        except SessionBusyError as e:
            raise HTTPException(status_code=409, detail=str(e))
        return StepResponse(
            iterations_run=len(stats),
            max_delta=stats[-1].max_delta,
            seconds_per_iteration=[s.seconds for s in stats],
            converged=session.converged,
        )

    @app.get("/sessions/{session_id}/state", response_model=StateResponse)
    def state(session_id: str, include: str = "predictions,metrics"):
        session = get_session(session_id)
        wanted = {part.strip() for part in include.split(",") if part.strip()}
        unknown = wanted - {"predictions", "beliefs", "metrics", "annotations", "confidence"}
        if unknown:
            raise HTTPException(status_code=422, detail=f"unknown include fields {sorted(unknown)}")
        doc = StateResponse(
            session_id=session.id,
            status=session.status,
            iteration=session.state.iteration,
            num_patches=session.dataset.num_patches,
            num_classes=session.dataset.num_classes,
            class_names=list(session.dataset.class_names),
            has_thumbnails=session.dataset.thumbnails_dir is not None,
            grid=list(session.dataset.grid) if session.dataset.grid else None,
        )
        if "predictions" in wanted:
            doc.predictions = [int(p) for p in session.state.predictions]
            doc.zero_shot_predictions = [int(p) for p in session.state.zero_shot_predictions]
        if "confidence" in wanted:
            doc.confidence = [float(c) for c in session.state.beliefs.data.max(axis=1)]
        if "beliefs" in wanted:
            payload = session.beliefs_payload(settings.beliefs_full_limit)
            doc.beliefs = payload.get("beliefs")
            doc.beliefs_top3 = payload.get("beliefs_top3")
            doc.beliefs_truncated = payload["beliefs_truncated"]
        if "metrics" in wanted:
            doc.metrics = Metrics(**session.metrics())
        if "annotations" in wanted:
            doc.annotations = dict(session.state.annotations.entries)
        return doc

    @app.get("/sessions/{session_id}/log", response_model=list[Event])
    def event_log(session_id: str):
        return [Event(**e) for e in get_session(session_id).events_snapshot()]

    @app.get("/sessions/{session_id}/events")
    def events(
        session_id: str,
        since: int = 0,
        max_events: int = 0,
        poll_seconds: float = 15.0,
    ):
        session = get_session(session_id)

        def stream():
            cursor = since
            sent = 0
            while True:
                new = session.wait_events(cursor, timeout=poll_seconds)
                if not new:
                    yield ": keep-alive\n\n"
                    continue
                for event in new:
                    data = json.dumps(event["payload"], sort_keys=True)
                    yield f"id: {event['seq']}\nevent: {event['type']}\ndata: {data}\n\n"
                    cursor = event["seq"] + 1
                    sent += 1
                    if max_events and sent >= max_events:
                        return

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.get("/sessions/{session_id}/thumbnails/{vertex}")
    def thumbnail(session_id: str, vertex: int):
        session = get_session(session_id)
        directory = session.dataset.thumbnails_dir
        if directory is None:
            raise HTTPException(status_code=404, detail="session has no thumbnails")
        path = directory / f"{vertex}.png"
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"no thumbnail for vertex {vertex}")
        return FileResponse(path, media_type="image/png")

    if settings.ui_dir:
        app.mount("/ui", StaticFiles(directory=settings.ui_dir, html=True), name="ui")

    return app


def run_service(settings: ServiceSettings | None = None) -> None:
    import uvicorn

    settings = settings or ServiceSettings.from_env(os.environ)
    uvicorn.run(create_app(settings), host=settings.host, port=settings.port, log_level="info")
