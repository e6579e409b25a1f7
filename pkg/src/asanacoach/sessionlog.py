"""Append-only session logs and deterministic offline replay.

A session log is newline-delimited JSON: one header record, then the
input frame records exactly as received (no ``type`` field), each
followed by the output records the engine emitted for it, and finally a
summary record. Replaying the input frames through a freshly built
pipeline must reproduce every output record exactly; ``replay`` verifies
that and is the offline oracle behind the ``analyze`` command.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO

from .errors import EngineError
from .evaluator import load_reference_poses
from .pipeline import PipelineConfig, SessionPipeline

LOG_FORMAT = "asanacoach-session-log"
LOG_FORMAT_VERSION = 1
HEADER_TYPE = "session_start"


def make_header(
    session_id: str,
    pose_id: str,
    variant: str,
    alpha: float,
    min_confidence: float,
    window: int,
    stride: int,
    cooldown_ms: int,
    model_path: str | None,
    angle_table_version: str,
    started_at_unix_ms: int,
) -> dict:
    return {
        "type": HEADER_TYPE,
        "format": LOG_FORMAT,
        "format_version": LOG_FORMAT_VERSION,
        "session_id": session_id,
        "pose_id": pose_id,
        "variant": variant,
        "alpha": alpha,
        "min_confidence": min_confidence,
        "window": window,
        "stride": stride,
        "cooldown_ms": cooldown_ms,
        "model_path": model_path,
        "angle_table_version": angle_table_version,
        "started_at_unix_ms": started_at_unix_ms,
    }


class SessionLogWriter:
    """Writes one session's records in arrival order; append-only."""

    def __init__(self, path: str | Path, header: dict):
        self.path = Path(path)
        self._fh: IO[str] = open(self.path, "w", encoding="utf-8")
        self._write(header)

    def _write(self, record: dict) -> None:
        self._fh.write(json.dumps(record, separators=(",", ":")) + "\n")

    def write_frame_line(self, line: str) -> None:
        self._fh.write(line.rstrip("\n") + "\n")
        self._fh.flush()

    def write_outputs(self, outputs: list[dict]) -> None:
        for record in outputs:
            self._write(record)
        self._fh.flush()

    def close(self, summary: dict | None = None) -> None:
        if self._fh.closed:
            return
        if summary is not None:
            self._write(summary)
        self._fh.close()


@dataclass
class LoggedFrame:
    line: str
    outputs: list[dict]


@dataclass
class SessionLog:
    header: dict
    frames: list[LoggedFrame]
    summary: dict | None


def read_log(path: str | Path) -> SessionLog:
    header = None
    frames: list[LoggedFrame] = []
    summary = None
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            raw = raw.rstrip("\n")
            if not raw:
                continue
            record = json.loads(raw)
            rtype = record.get("type")
            if rtype == HEADER_TYPE:
                header = record
            elif rtype == "summary":
                summary = record
            elif rtype is None:
                frames.append(LoggedFrame(line=raw, outputs=[]))
            else:
                if not frames:
                    raise ValueError(f"output record before any frame in {path}")
                frames[-1].outputs.append(record)
    if header is None:
        raise ValueError(f"no session header in {path}")
    if header.get("format") != LOG_FORMAT:
        raise ValueError(f"not a session log: {path}")
    return SessionLog(header=header, frames=frames, summary=summary)


@dataclass
class FrameMismatch:
    frame_index: int
    logged: list[dict]
    replayed: list[dict]


@dataclass
class ReplayResult:
    header: dict
    outputs: list[list[dict]]  # per input frame, in order
    summary: dict
    logged_summary: dict | None
    mismatches: list[FrameMismatch] = field(default_factory=list)

    @property
    def matches_log(self) -> bool:
        return not self.mismatches and self.summary_matches

    @property
    def summary_matches(self) -> bool:
        if self.logged_summary is None:
            return True
        logged = {k: v for k, v in self.logged_summary.items() if k != "type"}
        computed = {k: v for k, v in self.summary.items() if k != "type"}
        return logged == computed


def pipeline_from_header(
    header: dict,
    model_path: str | None = None,
    poses_path: str | None = None,
) -> SessionPipeline:
    """Rebuild the exact pipeline a logged session ran with."""
    poses = load_reference_poses(poses_path)
    pose = poses.get(header["pose_id"])
    if pose is None:
        raise EngineError(f"pose {header['pose_id']!r} not in reference library")
    params = None
    class_names: tuple[str, ...] = ()
    path = model_path if model_path is not None else header.get("model_path")
    if path:
        from .model import load_model
        from .edge_opt import QuantizedParams, quantize

        loaded, meta = load_model(path)
        class_names = meta.class_names
        if header["variant"] == "quantized" and not isinstance(loaded, QuantizedParams):
            loaded = quantize(loaded)
        params = loaded
    config = PipelineConfig(
        pose=pose,
        params=params,
        class_names=class_names,
        variant=header["variant"],
        alpha=header["alpha"],
        min_confidence=header["min_confidence"],
        window=header["window"],
        stride=header["stride"],
        cooldown_ms=header["cooldown_ms"],
    )
    return SessionPipeline(config)


def replay(
    path: str | Path,
    model_path: str | None = None,
    poses_path: str | None = None,
) -> ReplayResult:
    """Re-run a persisted session and compare with its logged outputs."""
    log = read_log(path)
    pipeline = pipeline_from_header(log.header, model_path, poses_path)
    outputs: list[list[dict]] = []
    mismatches: list[FrameMismatch] = []
    for index, logged in enumerate(log.frames):
        replayed = pipeline.process_record(logged.line)
        # normalize through JSON so float repr matches the logged records
        replayed = [json.loads(json.dumps(r)) for r in replayed]
        outputs.append(replayed)
        if replayed != logged.outputs:
            mismatches.append(
                FrameMismatch(frame_index=index, logged=logged.outputs, replayed=replayed)
            )
    summary = json.loads(json.dumps(pipeline.summary()))
    return ReplayResult(
        header=log.header,
        outputs=outputs,
        summary=summary,
        logged_summary=log.summary,
        mismatches=mismatches,
    )
