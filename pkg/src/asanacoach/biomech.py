"""Joint-angle computation and per-frame biomechanical feature vectors.

The angle at a joint B between adjacent joints A and C is the interior
angle of the segments BA and BC, in degrees, always in [0, 180]. The
eight tracked angles (elbows, shoulders, hips, knees, both sides) are
defined in a versioned data table so alternative skeletons can be
configured without code changes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import ZeroLengthSegment
from .ingest import NormalizedFrame, DEFAULT_MIN_CONFIDENCE

# Segments shorter than this have no usable direction.
SEGMENT_EPSILON = 1e-9

ANGLE_TABLE_RESOURCE = "angles_v1.json"


@dataclass(frozen=True)
class AngleDefinition:
    """Named joint angle: vertex ``b`` between endpoints ``a`` and ``c``."""

    name: str
    a: int
    b: int
    c: int


@dataclass(frozen=True)
class FeatureVector:
    """Per-frame joint angles in degrees with a validity mask.

    ``angles[i]`` is meaningful only where ``mask[i]`` is true; masked
    entries are stored as 0.0 so downstream numeric code never sees
    non-finite values.
    """

    angles: np.ndarray
    mask: np.ndarray
    timestamp_ms: int


def _load_angle_table(text: str) -> tuple[str, tuple[AngleDefinition, ...]]:
    doc = json.loads(text)
    version = doc["version"]
    defs = []
    for row in doc["angles"]:
        d = AngleDefinition(row["name"], int(row["a"]), int(row["b"]), int(row["c"]))
        if len({d.a, d.b, d.c}) != 3 or not all(0 <= i <= 16 for i in (d.a, d.b, d.c)):
            raise ValueError(f"bad angle definition: {row}")
        defs.append(d)
    return version, tuple(defs)


def load_angle_definitions(path: str | None = None) -> tuple[str, tuple[AngleDefinition, ...]]:
    """Load (version, definitions) from a file, or the packaged table."""
    if path is None:
        text = resources.files("asanacoach.data").joinpath(ANGLE_TABLE_RESOURCE).read_text()
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    return _load_angle_table(text)


ANGLE_TABLE_VERSION, DEFAULT_ANGLE_DEFINITIONS = load_angle_definitions()
ANGLE_NAMES = tuple(d.name for d in DEFAULT_ANGLE_DEFINITIONS)
NUM_ANGLES = len(DEFAULT_ANGLE_DEFINITIONS)


def joint_angle(a, b, c) -> float:
    """Interior angle at vertex ``b``, in degrees within [0, 180].

    The cosine of the angle is the normalized dot product of B->A and
    B->C, clamped to [-1, 1] before arccos: floating-point rounding can
    push it past 1 for collinear points.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    ba = a - b
    bc = c - b
    norm_ba = float(np.hypot(ba[0], ba[1]))
    norm_bc = float(np.hypot(bc[0], bc[1]))
    if norm_ba <= SEGMENT_EPSILON or norm_bc <= SEGMENT_EPSILON:
        raise ZeroLengthSegment(
            f"segment lengths {norm_ba:g}, {norm_bc:g} at vertex {b.tolist()}"
        )
    cos_theta = float(ba @ bc) / (norm_ba * norm_bc)
    cos_theta = min(1.0, max(-1.0, cos_theta))
    return float(np.degrees(np.arccos(cos_theta)))


def extract_features(
    frame: NormalizedFrame,
    defs: tuple[AngleDefinition, ...] = DEFAULT_ANGLE_DEFINITIONS,
    min_confidence: float = DEFAULT_MIN_CONFIDENCE,
) -> FeatureVector:
    """Compute the configured joint angles for one frame.

    A joint is masked (angle 0.0, mask false) when any of its three
    keypoints falls below ``min_confidence`` or when a segment is
    degenerate. Per-angle failures never raise.
    """
    kp = frame.keypoints
    angles = np.zeros(len(defs), dtype=np.float64)
    mask = np.zeros(len(defs), dtype=bool)
    for i, d in enumerate(defs):
        if (
            kp[d.a, 2] < min_confidence
            or kp[d.b, 2] < min_confidence
            or kp[d.c, 2] < min_confidence
        ):
            continue
        try:
            angles[i] = joint_angle(kp[d.a, :2], kp[d.b, :2], kp[d.c, :2])
        except ZeroLengthSegment:
            continue
        mask[i] = True
    return FeatureVector(angles=angles, mask=mask, timestamp_ms=frame.timestamp_ms)
