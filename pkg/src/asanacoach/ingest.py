"""Keypoint frame parsing, body-frame normalization, and jitter smoothing.

Input frames arrive as newline-delimited JSON records (``.kpjsonl``):
one object per line with fields ``t`` (ms since session start), ``id``
(monotonic frame counter) and ``kp`` (flat array of 51 reals, x/y/conf
for the 17 COCO keypoints).

Normalization re-expresses every keypoint in a body frame: hip midpoint
at the origin, hip-to-shoulder (torso) distance as the unit length.
Features computed downstream are therefore invariant to where the camera
sits and how large the subject appears. Orientation is deliberately kept:
a lying-down pose must not look like a standing one.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateTorso,
    LowConfidenceAnchors,
    MalformedRecord,
    SchemaViolation,
)

NUM_KEYPOINTS = 17

# COCO keypoint order. Index constants for the joints the engine touches.
COCO_KEYPOINT_NAMES = (
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
)

LEFT_SHOULDER = 5
RIGHT_SHOULDER = 6
LEFT_HIP = 11
RIGHT_HIP = 12

_ANCHOR_INDICES = (LEFT_SHOULDER, RIGHT_SHOULDER, LEFT_HIP, RIGHT_HIP)

DEFAULT_MIN_CONFIDENCE = 0.3
DEFAULT_ALPHA = 0.5

# Torso lengths below this are treated as degenerate (no usable scale).
TORSO_EPSILON = 1e-9


@dataclass(frozen=True)
class KeypointFrame:
    """One validated frame: 17 keypoints as a (17, 3) array of x, y, conf."""

    timestamp_ms: int
    frame_id: int
    keypoints: np.ndarray


@dataclass(frozen=True)
class NormalizedFrame:
    """Frame in body coordinates; ``torso_length`` is the pre-normalization scale."""

    timestamp_ms: int
    frame_id: int
    keypoints: np.ndarray
    torso_length: float


def frame_to_record(frame: KeypointFrame | NormalizedFrame) -> dict:
    """Frame as a ``.kpjsonl`` record dict (``t``, ``id``, ``kp``)."""
    return {
        "t": int(frame.timestamp_ms),
        "id": int(frame.frame_id),
        "kp": [float(v) for v in frame.keypoints.reshape(-1)],
    }


def frame_to_line(frame: KeypointFrame | NormalizedFrame) -> str:
    """Frame as one ``.kpjsonl`` line (no trailing newline)."""
    return json.dumps(frame_to_record(frame), separators=(",", ":"))


def parse_record(record: dict) -> KeypointFrame:
    """Validate an already-decoded record dict into a KeypointFrame."""
    try:
        t = record["t"]
        frame_id = record["id"]
        kp = record["kp"]
    except (KeyError, TypeError) as exc:
        raise MalformedRecord(f"missing field: {exc}") from None
    if isinstance(t, bool) or not isinstance(t, int):
        raise MalformedRecord("field 't' must be an integer")
    if isinstance(frame_id, bool) or not isinstance(frame_id, int):
        raise MalformedRecord("field 'id' must be an integer")
    if not isinstance(kp, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in kp
    ):
        raise MalformedRecord("field 'kp' must be an array of numbers")
    if len(kp) != 3 * NUM_KEYPOINTS:
        raise SchemaViolation(
            f"expected {3 * NUM_KEYPOINTS} keypoint values, got {len(kp)}"
        )
    points = np.asarray(kp, dtype=np.float64).reshape(NUM_KEYPOINTS, 3)
    if not np.all(np.isfinite(points)):
        raise SchemaViolation("keypoint values must be finite")
    conf = points[:, 2]
    if np.any(conf < 0.0) or np.any(conf > 1.0):
        raise SchemaViolation("confidence outside [0, 1]")
    return KeypointFrame(timestamp_ms=t, frame_id=frame_id, keypoints=points)


def parse_frame(line: str) -> KeypointFrame:
    """Parse one ``.kpjsonl`` text line into a validated KeypointFrame."""
    try:
        record = json.loads(line)
    except (json.JSONDecodeError, TypeError) as exc:
        raise MalformedRecord(f"invalid JSON: {exc}") from None
    if not isinstance(record, dict):
        raise MalformedRecord("record must be a JSON object")
    return parse_record(record)


def normalize(
    frame: KeypointFrame, min_confidence: float = DEFAULT_MIN_CONFIDENCE
) -> NormalizedFrame:
    """Re-express keypoints in the body frame.

    Translates so the hip midpoint is the origin, then scales so the
    hip-midpoint-to-shoulder-midpoint distance is 1. Confidences are
    untouched. Requires confident hips and shoulders: they anchor the
    transform.
    """
    kp = frame.keypoints
    anchor_conf = kp[list(_ANCHOR_INDICES), 2]
    if np.any(anchor_conf < min_confidence):
        low = [
            COCO_KEYPOINT_NAMES[i]
            for i, c in zip(_ANCHOR_INDICES, anchor_conf)
            if c < min_confidence
        ]
        raise LowConfidenceAnchors(f"low-confidence anchors: {', '.join(low)}")
    hip_mid = 0.5 * (kp[LEFT_HIP, :2] + kp[RIGHT_HIP, :2])
    shoulder_mid = 0.5 * (kp[LEFT_SHOULDER, :2] + kp[RIGHT_SHOULDER, :2])
    torso = float(math.hypot(*(shoulder_mid - hip_mid)))
    if torso < TORSO_EPSILON:
        raise DegenerateTorso(f"torso length {torso:g} below {TORSO_EPSILON:g}")
    out = kp.copy()
    out[:, :2] = (kp[:, :2] - hip_mid) / torso
    return NormalizedFrame(
        timestamp_ms=frame.timestamp_ms,
        frame_id=frame.frame_id,
        keypoints=out,
        torso_length=torso,
    )


class EmaSmoother:
    """Per-session exponential moving average over keypoint coordinates.

    ``alpha`` is the weight of the current frame; 1.0 disables smoothing.
    The first frame after construction or reset passes through unchanged.
    Confidences are never smoothed: they describe the current detection.
    """

    def __init__(self, alpha: float = DEFAULT_ALPHA):
        if not 0.0 < alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {alpha}")
        self.alpha = alpha
        self._prev: np.ndarray | None = None

    def reset(self) -> None:
        self._prev = None

    def smooth(self, frame: NormalizedFrame) -> NormalizedFrame:
        coords = frame.keypoints[:, :2]
        if self._prev is None:
            smoothed = coords.copy()
        else:
            smoothed = self.alpha * coords + (1.0 - self.alpha) * self._prev
        self._prev = smoothed
        out = frame.keypoints.copy()
        out[:, :2] = smoothed
        return NormalizedFrame(
            timestamp_ms=frame.timestamp_ms,
            frame_id=frame.frame_id,
            keypoints=out,
            torso_length=frame.torso_length,
        )
