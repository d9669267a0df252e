"""Session state for the HTTP service.

Each session owns one RefinementState plus an append-only event log. The log
is the source of truth for reproducibility: replaying it against the same
dataset source reproduces the live beliefs exactly.

Locking discipline: a session has a small mutex guarding the event log, the
pending-annotation queue, and annotation application; a separate step guard
admits one stepping caller at a time (others get SessionBusyError -> 409).
The heavy per-iteration compute runs outside the mutex — belief updates are
atomic reference swaps, so readers always observe a consistent snapshot —
and annotations arriving mid-step are queued and applied between iterations,
never blocked.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import tempfile
import threading
import uuid
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..dataio import Dataset, SyntheticSpec, generate_synthetic, load_dataset
from ..experiments import accuracy, accuracy_excluding
from ..inference import EngineConfig, RefinementState
from ..neighborhood import build_index

__all__ = [
    "ServiceSettings",
    "Session",
    "SessionBusyError",
    "SessionManager",
    "build_dataset_from_source",
    "replay_events",
]


class SessionBusyError(RuntimeError):
    """A step is already in flight for this session."""


@dataclass
class ServiceSettings:
    host: str = "127.0.0.1"
    port: int = 8000
    max_patches: int = 100_000
    max_sessions: int = 16
    beliefs_full_limit: int = 50_000  # max N*L entries returned as a full matrix
    scratch_dir: str | None = None
    ui_dir: str | None = None
    # engine defaults applied when a create request carries no config; the
    # env var holds a JSON object of EngineConfig fields
    default_engine_config: dict | None = None

    @classmethod
    def from_env(cls, env) -> "ServiceSettings":
        default_config = None
        if env.get("PATCHCRF_DEFAULT_CONFIG"):
            default_config = json.loads(env["PATCHCRF_DEFAULT_CONFIG"])
        return cls(
            host=env.get("PATCHCRF_HOST", "127.0.0.1"),
            port=int(env.get("PATCHCRF_PORT", "8000")),
            max_patches=int(env.get("PATCHCRF_MAX_PATCHES", "100000")),
            max_sessions=int(env.get("PATCHCRF_MAX_SESSIONS", "16")),
            beliefs_full_limit=int(env.get("PATCHCRF_BELIEFS_FULL_LIMIT", "50000")),
            scratch_dir=env.get("PATCHCRF_SCRATCH_DIR"),
            ui_dir=env.get("PATCHCRF_UI_DIR"),
            default_engine_config=default_config,
        )

    def default_config(self) -> EngineConfig:
        if self.default_engine_config is None:
            return EngineConfig()
        return EngineConfig.from_dict(self.default_engine_config)


def build_dataset_from_source(source: dict, scratch: Path) -> Dataset:
    """Load or deterministically regenerate the dataset a session came from.

    Synthetic datasets are cached in the scratch directory keyed by the full
    spec, so identical specs share files across sessions and replays.
    """
    if source.get("manifest_path"):
        return load_dataset(source["manifest_path"])
    spec = SyntheticSpec(**source["synthetic"])
    digest = hashlib.sha256(
        json.dumps(dataclasses.asdict(spec), sort_keys=True).encode()
    ).hexdigest()[:16]
    out = scratch / f"synth_{digest}"
    manifest = out / "manifest.json"
    if not manifest.exists():
        generate_synthetic(spec, out, thumbnails=False)
    return load_dataset(manifest)


class Session:
    def __init__(
        self,
        session_id: str,
        dataset: Dataset,
        config: EngineConfig,
        seed: int,
        source: dict,
        k_base: int = 16,
        k_ann: int = 5,
        pool_factor: int = 4,
    ):
        self.id = session_id
        self.dataset = dataset
        self.source = source
        self.k_base, self.k_ann, self.pool_factor = k_base, k_ann, pool_factor
        index = build_index(
            dataset.pairwise, k_base=k_base, k_ann=k_ann, pool_factor=pool_factor, seed=seed
        )
        self.state = RefinementState(dataset, index, config, seed=seed)
        self.seed = seed
        self.converged = False
        self.stepping = False
        self._pending: list[tuple[int, int]] = []
        self._events: list[dict] = []
        self._lock = threading.Lock()
        self._new_event = threading.Condition(self._lock)
        self._step_guard = threading.Lock()
        with self._lock:
            self._append_event(
                "created",
                {
                    "source": source,
                    "config": config.to_dict(),
                    "seed": seed,
                    "k_base": k_base,
                    "k_ann": k_ann,
                    "pool_factor": pool_factor,
                },
            )

    # -- events ------------------------------------------------------------

    def _append_event(self, event_type: str, payload: dict) -> None:
        # lock held by caller
        self._events.append(
            {"seq": len(self._events), "type": event_type, "payload": payload}
        )
        self._new_event.notify_all()

    def events_snapshot(self, since: int = 0) -> list[dict]:
        with self._lock:
            return list(self._events[since:])

    def wait_events(self, since: int, timeout: float) -> list[dict]:
        """Events from `since` on, blocking up to `timeout` if none yet."""
        with self._lock:
            if len(self._events) <= since:
                self._new_event.wait(timeout)
            return list(self._events[since:])

    # -- annotations ---------------------------------------------------------

    def annotate_batch(self, items: list[tuple[int, int]]) -> tuple[int, int, bool]:
        """Apply (or queue, mid-step) a batch atomically, in order.

        Returns (accepted, overridden, queued). Raises ValueError before any
        mutation if any entry is out of range: the whole batch is rejected.
        """
        n, l = self.dataset.num_patches, self.dataset.num_classes
        for vertex, label in items:
            if not 0 <= vertex < n:
                raise ValueError(f"vertex {vertex} out of range [0, {n})")
            if not 0 <= label < l:
                raise ValueError(f"label {label} out of range [0, {l})")
        with self._lock:
            if self.stepping:
                destined = set(self.state.annotations.entries) | {
                    v for v, _ in self._pending
                }
                overridden = 0
                for vertex, _ in items:
                    if vertex in destined:
                        overridden += 1
                    destined.add(vertex)
                self._pending.extend(items)
                return len(items), overridden, True
            overridden = self._apply_items_locked(items)
            return len(items), overridden, False

    def _apply_items_locked(self, items) -> int:
        overridden = 0
        for vertex, label in items:
            audit = self.state.annotate(vertex, label)
            if audit.previous_label is not None:
                overridden += 1
            self._append_event(
                "annotation",
                {
                    "vertex": audit.vertex,
                    "label": audit.label,
                    "previous_label": audit.previous_label,
                    "timestamp": audit.timestamp,
                },
            )
        return overridden

    def _drain_pending_locked(self) -> None:
        if self._pending:
            items, self._pending = self._pending, []
            self._apply_items_locked(items)

    # -- stepping ------------------------------------------------------------

    def step(self, count: int = 1) -> list:
        """Run `count` message-passing iterations. One stepper at a time."""
        if not self._step_guard.acquire(blocking=False):
            raise SessionBusyError(f"session {self.id} is already stepping")
        try:
            with self._lock:
                self.stepping = True
                self._drain_pending_locked()
            collected = []
            for _ in range(count):
                stats = self.state.step(1)[0]
                collected.append(stats)
                with self._lock:
                    self.converged = stats.max_delta < self.state.config.convergence_tol
                    self._append_event("step", self._step_payload_locked(stats))
                    self._drain_pending_locked()
            return collected
        finally:
            with self._lock:
                self.stepping = False
                self._drain_pending_locked()
            self._step_guard.release()

    def _step_payload_locked(self, stats) -> dict:
        payload = {
            "iteration": stats.iteration,
            "max_delta": stats.max_delta,
            "seconds": stats.seconds,
            "converged": stats.max_delta < self.state.config.convergence_tol,
        }
        labels = self.dataset.labels
        if labels is not None:
            payload["accuracy"] = accuracy(self.state.predictions, labels)
            payload["accuracy_excl_annotated"] = accuracy_excluding(
                self.state.predictions, labels, self.state.annotations
            )
        return payload

    # -- snapshots -----------------------------------------------------------

    @property
    def status(self) -> str:
        with self._lock:
            if self.stepping:
                return "stepping"
            return "converged" if self.converged else "idle"

    def metrics(self) -> dict:
        labels = self.dataset.labels
        preds = self.state.predictions
        out = {
            "iteration": self.state.iteration,
            "num_annotations": len(self.state.annotations),
            "max_delta": None
            if self.state.last_max_delta == float("inf")
            else self.state.last_max_delta,
        }
        if labels is not None:
            out["accuracy"] = accuracy(preds, labels)
            out["accuracy_excl_annotated"] = accuracy_excluding(
                preds, labels, self.state.annotations
            )
            out["zero_shot_accuracy"] = accuracy(self.state.zero_shot_predictions, labels)
        return out

    def beliefs_payload(self, full_limit: int) -> dict:
        b = self.state.beliefs.data
        n, l = b.shape
        if n * l <= full_limit:
            return {"beliefs": b.tolist(), "beliefs_truncated": False}
        top = min(3, l)
        idx = np.argsort(-b, axis=1, kind="stable")[:, :top]
        probs = np.take_along_axis(b, idx, axis=1)
        packed = [
            [[int(idx[v, j]), float(probs[v, j])] for j in range(top)] for v in range(n)
        ]
        return {"beliefs_top3": packed, "beliefs_truncated": True}


class SessionManager:
    def __init__(self, settings: ServiceSettings):
        self.settings = settings
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()
        self.scratch = Path(settings.scratch_dir or tempfile.mkdtemp(prefix="patchcrf_"))
        self.scratch.mkdir(parents=True, exist_ok=True)

    def __len__(self) -> int:
        with self._lock:
            return len(self._sessions)

    def create(
        self,
        source: dict,
        config: EngineConfig,
        seed: int,
        k_base: int,
        k_ann: int,
        pool_factor: int,
    ) -> Session:
        with self._lock:
            if len(self._sessions) >= self.settings.max_sessions:
                raise RuntimeError(
                    f"session limit reached ({self.settings.max_sessions})"
                )
        dataset = build_dataset_from_source(source, self.scratch)
        if dataset.num_patches > self.settings.max_patches:
            raise OverflowError(
                f"dataset has {dataset.num_patches} patches, over the service "
                f"limit {self.settings.max_patches}"
            )
        session = Session(
            uuid.uuid4().hex,
            dataset,
            config,
            seed,
            source,
            k_base=k_base,
            k_ann=k_ann,
            pool_factor=pool_factor,
        )
        with self._lock:
            self._sessions[session.id] = session
        return session

    def get(self, session_id: str) -> Session:
        with self._lock:
            if session_id not in self._sessions:
                raise KeyError(session_id)
            return self._sessions[session_id]

    def delete(self, session_id: str) -> None:
        with self._lock:
            if session_id not in self._sessions:
                raise KeyError(session_id)
            del self._sessions[session_id]

    def list_sessions(self) -> list[Session]:
        with self._lock:
            return list(self._sessions.values())


def replay_events(events: list[dict], scratch: Path) -> Session:
    """Reconstruct a session from its exported event log.

    The created event carries the dataset source, config, and seed; annotation
    and step events are reapplied in log order, which reproduces the exact
    operation order of the live session.
    """
    if not events or events[0]["type"] != "created":
        raise ValueError("event log must start with a created event")
    created = events[0]["payload"]
    dataset = build_dataset_from_source(created["source"], scratch)
    session = Session(
        f"replay-{uuid.uuid4().hex[:8]}",
        dataset,
        EngineConfig.from_dict(created["config"]),
        created["seed"],
        created["source"],
        k_base=created["k_base"],
        k_ann=created["k_ann"],
        pool_factor=created["pool_factor"],
    )
    for event in events[1:]:
        if event["type"] == "annotation":
            session.state.annotate(event["payload"]["vertex"], event["payload"]["label"])
        elif event["type"] == "step":
            session.state.step(1)
    return session
