"""Streaming session service.

Duplex protocol over a WebSocket: every message is one JSON object with a
``type`` field. Client to server: ``start``, ``frame``, ``end``. Server to
client: ``started``, ``evaluation``, ``classification``, ``feedback``,
``summary``, ``error``. The ``frame`` payload embeds a ``.kpjsonl`` record
verbatim (fields ``t``, ``id``, ``kp``).

Sessions are fully isolated: each owns its pipeline state and log file,
frames are handled strictly in arrival order within a session, and the
model plus reference data are loaded once at startup and only read after
that. Malformed input never terminates a session; only ``end`` or a
disconnect does.
"""

from __future__ import annotations

import json
import time
import uuid
from pathlib import Path

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .biomech import ANGLE_NAMES, ANGLE_TABLE_VERSION
from .config import ServerConfig
from .edge_opt import QuantizedParams, quantize
from .errors import CapacityExceeded, EngineError, UnknownPose, UnknownSession
from .evaluator import load_reference_poses
from .pipeline import PipelineConfig, SessionPipeline
from .sessionlog import SessionLogWriter, make_header

VARIANTS = ("float", "quantized")


class Session:
    def __init__(self, session_id: str, pipeline: SessionPipeline, log: SessionLogWriter):
        self.session_id = session_id
        self.pipeline = pipeline
        self.log = log


class SessionManager:
    """Owns reference data, model variants, and the live session table."""

    def __init__(self, config: ServerConfig):
        config.validate()
        self.config = config
        self.poses = load_reference_poses(config.poses_path)
        self.params_float = None
        self.params_quantized = None
        self.class_names: tuple[str, ...] = ()
        if config.model_path:
            from .model import load_model

            params, meta = load_model(config.model_path)
            self.class_names = meta.class_names
            if isinstance(params, QuantizedParams):
                self.params_quantized = params
            else:
                self.params_float = params
                self.params_quantized = quantize(params)
        self.log_dir = Path(config.log_dir)
        self.log_dir.mkdir(parents=True, exist_ok=True)
        self._sessions: dict[str, Session] = {}

    def poses_info(self) -> dict:
        return {
            "angle_table_version": ANGLE_TABLE_VERSION,
            "poses": [
                {"pose_id": p.pose_id, "display_name": p.display_name}
                for p in self.poses.values()
            ],
        }

    def start_session(self, pose_id: str, variant: str = "float") -> dict:
        if pose_id not in self.poses:
            raise UnknownPose(f"unknown pose {pose_id!r}")
        if len(self._sessions) >= self.config.max_sessions:
            raise CapacityExceeded(
                f"at capacity ({self.config.max_sessions} sessions)"
            )
        if variant not in VARIANTS:
            raise EngineError(f"unknown model variant {variant!r}")
        params = self.params_float if variant == "float" else self.params_quantized
        pose = self.poses[pose_id]
        session_id = uuid.uuid4().hex
        pipeline = SessionPipeline(
            PipelineConfig(
                pose=pose,
                params=params,
                class_names=self.class_names,
                variant=variant,
                alpha=self.config.alpha,
                min_confidence=self.config.min_confidence,
                window=self.config.window,
                stride=self.config.stride,
                cooldown_ms=self.config.cooldown_ms,
            )
        )
        header = make_header(
            session_id=session_id,
            pose_id=pose_id,
            variant=variant,
            alpha=self.config.alpha,
            min_confidence=self.config.min_confidence,
            window=self.config.window,
            stride=self.config.stride,
            cooldown_ms=self.config.cooldown_ms,
            model_path=str(Path(self.config.model_path).resolve())
            if self.config.model_path
            else None,
            angle_table_version=ANGLE_TABLE_VERSION,
            started_at_unix_ms=int(time.time() * 1000),
        )
        log = SessionLogWriter(self.log_dir / f"{session_id}.jsonl", header)
        self._sessions[session_id] = Session(session_id, pipeline, log)
        return {
            "type": "started",
            "session_id": session_id,
            "pose_id": pose_id,
            "display_name": pose.display_name,
            "angle_table_version": ANGLE_TABLE_VERSION,
            "angles": list(ANGLE_NAMES),
            "window": self.config.window,
            "stride": self.config.stride,
            "variant": variant,
            "class_names": list(self.class_names),
        }

    def _get(self, session_id: str) -> Session:
        session = self._sessions.get(session_id)
        if session is None:
            raise UnknownSession(f"no session {session_id!r}")
        return session

    def handle_frame(self, session_id: str, frame_line: str) -> list[dict]:
        """Log the frame, run the pipeline, return output records in order."""
        session = self._get(session_id)
        session.log.write_frame_line(frame_line)
        outputs = session.pipeline.process_record(frame_line)
        session.log.write_outputs(outputs)
        return outputs

    def end_session(self, session_id: str) -> dict:
        session = self._sessions.pop(self._get(session_id).session_id)
        summary = session.pipeline.summary()
        session.log.close(summary)
        return summary

    def abort_session(self, session_id: str) -> None:
        """Finalize on disconnect: summary still goes to the log."""
        session = self._sessions.pop(session_id, None)
        if session is not None:
            session.log.close(session.pipeline.summary())

    def active_sessions(self) -> int:
        return len(self._sessions)


def _error_record(exc: EngineError) -> dict:
    return {"type": "error", "code": exc.code, "detail": exc.detail}


def handle_message(
    manager: SessionManager, session_id: str | None, text: str
) -> tuple[list[dict], str | None]:
    """Dispatch one wire message; returns (replies, active session id)."""
    try:
        message = json.loads(text)
        if not isinstance(message, dict):
            raise ValueError("not an object")
    except (json.JSONDecodeError, ValueError) as exc:
        return [
            {"type": "error", "code": "MalformedRecord", "detail": f"bad message: {exc}"}
        ], session_id

    mtype = message.get("type")
    if mtype == "start":
        if session_id is not None:
            return [
                {
                    "type": "error",
                    "code": "SessionActive",
                    "detail": "end the current session before starting a new one",
                }
            ], session_id
        try:
            started = manager.start_session(
                message.get("pose_id", ""), message.get("variant", "float")
            )
        except EngineError as exc:
            return [_error_record(exc)], None
        return [started], started["session_id"]

    if mtype == "frame":
        if session_id is None:
            return [
                {"type": "error", "code": "UnknownSession", "detail": "no active session"}
            ], None
        payload = {k: v for k, v in message.items() if k != "type"}
        line = json.dumps(payload, separators=(",", ":"))
        try:
            outputs = manager.handle_frame(session_id, line)
        except UnknownSession as exc:
            return [_error_record(exc)], None
        return outputs, session_id

    if mtype == "end":
        if session_id is None:
            return [
                {"type": "error", "code": "UnknownSession", "detail": "no active session"}
            ], None
        try:
            summary = manager.end_session(session_id)
        except UnknownSession as exc:
            return [_error_record(exc)], None
        return [summary], None

    return [
        {
            "type": "error",
            "code": "MalformedRecord",
            "detail": f"unknown message type {mtype!r}",
        }
    ], session_id


def create_app(config: ServerConfig) -> FastAPI:
    manager = SessionManager(config)
    app = FastAPI(title="asanacoach", docs_url=None, redoc_url=None)
    app.state.manager = manager

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "active_sessions": manager.active_sessions()}

    @app.get("/poses")
    def poses():
        return manager.poses_info()

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        session_id: str | None = None
        try:
            while True:
                text = await ws.receive_text()
                replies, session_id = handle_message(manager, session_id, text)
                for record in replies:
                    await ws.send_text(json.dumps(record, separators=(",", ":")))
        except WebSocketDisconnect:
            if session_id is not None:
                manager.abort_session(session_id)

    if config.static_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=config.static_dir, html=True), name="app")

    return app


def run_server(config: ServerConfig) -> None:
    import uvicorn

    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="info")
