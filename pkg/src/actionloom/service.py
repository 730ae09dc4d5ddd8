"""HTTP facade over interactive sessions.

One process hosts many sessions, each single-writer (guarded by the session
lock).  Every successful response carries the session revision so clients
can reconcile optimistic state; domain errors map to 4xx JSON bodies of the
form {"code", "message", "detail"}.
"""

from __future__ import annotations

import os
import re
import tempfile
import uuid

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import errors
from .bundle import load_bundle
from .session import Session


class UnknownSessionError(errors.ActionLoomError):
    pass


NOT_FOUND = (errors.MissingFileError, errors.UnknownActionError,
             errors.UnknownClusterError, UnknownSessionError)
CONFLICT = (errors.ConflictingConstraintError, errors.InfeasibleConstraintsError)


def error_code(exc: Exception) -> str:
    name = type(exc).__name__
    if name.endswith("Error"):
        name = name[:-len("Error")]
    return re.sub(r"(?<!^)(?=[A-Z])", "_", name).lower()


class CreateSessionBody(BaseModel):
    bundle_path: str


class CorrectionsBody(BaseModel):
    corrections: list


class RecommendBody(BaseModel):
    action: int
    side: str
    rough_frame: int


def create_app(sessions_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="actionloom")
    sessions: dict = {}
    app.state.sessions = sessions
    if sessions_dir is None:
        sessions_dir = tempfile.mkdtemp(prefix="actionloom-sessions-")
    os.makedirs(sessions_dir, exist_ok=True)
    app.state.sessions_dir = sessions_dir

    def get_session(session_id: str) -> Session:
        session = sessions.get(session_id)
        if session is None:
            raise UnknownSessionError(f"no session {session_id}")
        return session

    @app.exception_handler(errors.ActionLoomError)
    def domain_error(request, exc):
        if isinstance(exc, NOT_FOUND):
            status = 404
        elif isinstance(exc, CONFLICT):
            status = 409
        else:
            status = 400
        return JSONResponse(status_code=status, content={
            "code": error_code(exc),
            "message": str(exc),
            "detail": type(exc).__name__,
        })

    @app.exception_handler(ValueError)
    def value_error(request, exc):
        return JSONResponse(status_code=400, content={
            "code": "invalid_request",
            "message": str(exc),
            "detail": type(exc).__name__,
        })

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        bundle = load_bundle(body.bundle_path)
        session_id = uuid.uuid4().hex
        session = Session(
            bundle, session_id=session_id,
            log_path=os.path.join(sessions_dir, f"{session_id}.jsonl"))
        sessions[session_id] = session
        return {"session_id": session_id, "revision": session.revision,
                "hash": session.snapshot_hash()}

    @app.get("/sessions/{session_id}/overview")
    def overview(session_id: str):
        return get_session(session_id).overview()

    @app.get("/sessions/{session_id}/clusters/{cluster_id}/layout")
    def cluster_layout(session_id: str, cluster_id: int, depth: int = 1):
        return get_session(session_id).cluster_layout(cluster_id, depth)

    @app.get("/sessions/{session_id}/actions/{action_id}/neighborhood")
    def neighborhood(session_id: str, action_id: int, n: int = 4):
        return get_session(session_id).neighborhood_layout(action_id, n)

    @app.post("/sessions/{session_id}/corrections")
    def corrections(session_id: str, body: CorrectionsBody):
        session = get_session(session_id)
        out = session.apply_corrections(body.corrections)
        out["hash"] = session.snapshot_hash()
        return out

    @app.post("/sessions/{session_id}/recommend_boundary")
    def recommend(session_id: str, body: RecommendBody):
        session = get_session(session_id)
        frame = session.recommend(body.action, body.side, body.rough_frame)
        return {"revision": session.revision, "action": body.action,
                "side": body.side, "frame": int(frame)}

    @app.get("/sessions/{session_id}/export")
    def export(session_id: str):
        return get_session(session_id).export()

    return app


def serve(host: str = "127.0.0.1", port: int = 8000,
          sessions_dir: str | None = None) -> None:
    import uvicorn

    uvicorn.run(create_app(sessions_dir), host=host, port=port)
