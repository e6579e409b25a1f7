"""Per-frame processing pipeline shared by the live service, offline
replay, and the latency benchmark.

One SessionPipeline instance holds all per-session state (smoother,
feature window, feedback cooldowns, counters). Live sessions and offline
replay construct it identically and feed it the same records, so replayed
outputs match live outputs bit for bit. All time-dependent behavior keys
off frame timestamps, never the wall clock.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import biomech
from .biomech import DEFAULT_ANGLE_DEFINITIONS, FeatureVector
from .edge_opt import QuantizedParams, quantized_forward_batch
from .errors import (
    DegenerateTorso,
    LowConfidenceAnchors,
    MalformedRecord,
    NoEvaluableJoints,
    SchemaViolation,
)
from .evaluator import PostureReport, ReferencePose, evaluate_posture
from .feedback import CooldownState, FeedbackEvent, generate
from .ingest import DEFAULT_ALPHA, DEFAULT_MIN_CONFIDENCE, EmaSmoother, KeypointFrame, normalize, parse_frame
from .model import ModelParams, forward_batch, scale_inputs

DEFAULT_WINDOW = 30
DEFAULT_STRIDE = 5
SMOOTHER_RESET_AFTER_DROPS = 10


@dataclass
class PipelineConfig:
    """Everything a session needs to process frames deterministically."""

    pose: ReferencePose
    params: ModelParams | QuantizedParams | None = None
    class_names: tuple[str, ...] = ()
    variant: str = "float"
    alpha: float = DEFAULT_ALPHA
    min_confidence: float = DEFAULT_MIN_CONFIDENCE
    window: int = DEFAULT_WINDOW
    stride: int = DEFAULT_STRIDE
    cooldown_ms: int = 2000
    angle_definitions: tuple = DEFAULT_ANGLE_DEFINITIONS

    def __post_init__(self):
        if self.window < 3:
            raise ValueError(f"window must be >= 3, got {self.window}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")


def _feedback_to_record(event: FeedbackEvent, frame_id: int) -> dict:
    rec = {
        "type": "feedback",
        "frame_id": frame_id,
        "t": event.timestamp_ms,
        "channel": event.channel,
        "joint": event.joint,
        "severity": event.severity,
    }
    if event.message is not None:
        rec["message"] = event.message
    if event.color is not None:
        rec["color"] = event.color
    return rec


def _report_to_record(report: PostureReport, frame: KeypointFrame) -> dict:
    return {
        "type": "evaluation",
        "frame_id": frame.frame_id,
        "t": frame.timestamp_ms,
        "pose_id": report.pose_id,
        "score": report.score,
        "score_unclamped": report.score_unclamped,
        "evaluated_joint_count": report.evaluated_joint_count,
        "joints": [
            {
                "name": j.name,
                "signed_deviation_deg": j.signed_deviation_deg,
                "deviation_deg": j.deviation_deg,
                "masked": j.masked,
                "flagged": j.flagged,
            }
            for j in report.joints
        ],
    }


class SessionPipeline:
    """Stateful frame-by-frame engine for one session."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.variant = config.variant
        self.smoother = EmaSmoother(config.alpha)
        self.cooldowns = CooldownState(config.cooldown_ms)
        self.window: deque[FeatureVector] = deque(maxlen=config.window)
        self.frames_received = 0
        self.frames_evaluated = 0
        self.drops = 0
        self.consecutive_drops = 0
        self.flag_counts: dict[str, int] = {
            d.name: 0 for d in config.angle_definitions
        }
        self.score_sum = 0.0
        self.min_score: float | None = None
        self.first_t: int | None = None
        self.last_t: int | None = None
        self.last_frame_id: int | None = None
        self._since_classified: int | None = None

    # -- internals ---------------------------------------------------------

    def _drop(self, code: str, detail: str, frame_id: int | None) -> dict:
        self.drops += 1
        self.consecutive_drops += 1
        if self.consecutive_drops == SMOOTHER_RESET_AFTER_DROPS:
            self.smoother.reset()
        rec = {"type": "error", "code": code, "detail": detail, "dropped": True}
        if frame_id is not None:
            rec["frame_id"] = frame_id
        return rec

    def _classify(self) -> dict | None:
        if self.config.params is None or len(self.window) < self.config.window:
            return None
        if (
            self._since_classified is not None
            and self._since_classified < self.config.stride
        ):
            return None
        angles = np.stack([f.angles for f in self.window])
        mask = np.stack([f.mask for f in self.window])
        X = scale_inputs(angles, mask)[np.newaxis]
        if isinstance(self.config.params, QuantizedParams):
            probs = quantized_forward_batch(X, self.config.params)[0]
        else:
            probs = forward_batch(X, self.config.params)[0]
        self._since_classified = 0
        label_idx = int(np.argmax(probs))
        label = (
            self.config.class_names[label_idx]
            if label_idx < len(self.config.class_names)
            else str(label_idx)
        )
        return {
            "type": "classification",
            "label": label,
            "label_index": label_idx,
            "confidence": float(probs[label_idx]),
        }

    # -- public ---------------------------------------------------------------

    def process_record(self, line: str, timings: dict | None = None) -> list[dict]:
        """Parse one wire/log line and run the pipeline on it."""
        self.frames_received += 1
        t0 = time.perf_counter_ns() if timings is not None else 0
        try:
            frame = parse_frame(line)
        except (MalformedRecord, SchemaViolation) as exc:
            return [self._drop(exc.code, exc.detail, None)]
        if self.last_frame_id is not None and frame.frame_id <= self.last_frame_id:
            return [
                self._drop(
                    "SchemaViolation",
                    f"frame id {frame.frame_id} not greater than {self.last_frame_id}",
                    frame.frame_id,
                )
            ]
        return self._process_parsed(frame, timings, t0)

    def process_frame(self, frame: KeypointFrame, timings: dict | None = None) -> list[dict]:
        """Run the pipeline on an already-validated frame."""
        self.frames_received += 1
        t0 = time.perf_counter_ns() if timings is not None else 0
        if self.last_frame_id is not None and frame.frame_id <= self.last_frame_id:
            return [
                self._drop(
                    "SchemaViolation",
                    f"frame id {frame.frame_id} not greater than {self.last_frame_id}",
                    frame.frame_id,
                )
            ]
        return self._process_parsed(frame, timings, t0)

    def _process_parsed(
        self, frame: KeypointFrame, timings: dict | None, t0: int
    ) -> list[dict]:
        self.last_frame_id = frame.frame_id
        cfg = self.config
        outputs: list[dict] = []

        try:
            normalized = normalize(frame, cfg.min_confidence)
        except (LowConfidenceAnchors, DegenerateTorso) as exc:
            return [self._drop(exc.code, exc.detail, frame.frame_id)]
        smoothed = self.smoother.smooth(normalized)
        if timings is not None:
            t1 = time.perf_counter_ns()
            timings["ingest"] = t1 - t0
        else:
            t1 = 0

        features = biomech.extract_features(
            smoothed, cfg.angle_definitions, cfg.min_confidence
        )
        if timings is not None:
            t2 = time.perf_counter_ns()
            timings["biomech"] = t2 - t1
        else:
            t2 = 0

        try:
            report = evaluate_posture(features, cfg.pose)
        except NoEvaluableJoints as exc:
            return [self._drop(exc.code, exc.detail, frame.frame_id)]
        if timings is not None:
            t3 = time.perf_counter_ns()
            timings["evaluate"] = t3 - t2
        else:
            t3 = 0

        self.consecutive_drops = 0
        self.frames_evaluated += 1
        if self._since_classified is not None:
            self._since_classified += 1
        self.window.append(features)
        self.score_sum += report.score
        self.min_score = (
            report.score if self.min_score is None else min(self.min_score, report.score)
        )
        if self.first_t is None:
            self.first_t = frame.timestamp_ms
        self.last_t = frame.timestamp_ms
        outputs.append(_report_to_record(report, frame))

        classification = self._classify()
        if timings is not None:
            t4 = time.perf_counter_ns()
            if classification is not None:
                timings["model"] = t4 - t3
        else:
            t4 = 0
        if classification is not None:
            classification["frame_id"] = frame.frame_id
            classification["t"] = frame.timestamp_ms
            outputs.append(classification)

        events = generate(report, self.cooldowns, frame.timestamp_ms)
        for joint in report.flagged_joints:
            self.flag_counts[joint.name] += 1
        outputs.extend(_feedback_to_record(e, frame.frame_id) for e in events)
        if timings is not None:
            timings["feedback"] = time.perf_counter_ns() - t4
        return outputs

    def summary(self) -> dict:
        """Aggregate statistics over the session so far."""
        evaluated = self.frames_evaluated
        return {
            "type": "summary",
            "frames": evaluated,
            "frames_received": self.frames_received,
            "drops": self.drops,
            "mean_score": (self.score_sum / evaluated) if evaluated else None,
            "min_score": self.min_score,
            "flag_counts": dict(self.flag_counts),
            "duration_ms": (
                self.last_t - self.first_t
                if self.first_t is not None and self.last_t is not None
                else 0
            ),
        }
