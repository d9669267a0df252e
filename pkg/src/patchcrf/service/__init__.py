from .app import create_app, run_service
from .sessions import ServiceSettings, Session, SessionBusyError, SessionManager, replay_events

__all__ = [
    "create_app",
    "run_service",
    "ServiceSettings",
    "Session",
    "SessionBusyError",
    "SessionManager",
    "replay_events",
]
