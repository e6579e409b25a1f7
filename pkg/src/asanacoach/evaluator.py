"""Posture scoring against reference poses.

A reference pose stores, per tracked joint, the ideal angle, the maximum
allowable deviation used as the score denominator, and the (usually
tighter) threshold beyond which the joint is flagged for correction.

The overall score is the mean over evaluated joints of
``1 - deviation / theta_max``, with each term clamped to [0, 1] so a
wildly wrong joint cannot push the score negative. The unclamped mean is
kept on the report for diagnostics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .biomech import ANGLE_NAMES, ANGLE_TABLE_VERSION, FeatureVector
from .errors import LengthMismatch, NoEvaluableJoints, UnknownPose

POSE_LIBRARY_RESOURCE = "poses_v1.json"


@dataclass(frozen=True)
class ReferencePose:
    """Per-joint reference angles and tolerances for one named pose."""

    pose_id: str
    display_name: str
    names: tuple[str, ...]
    ref_deg: np.ndarray
    theta_max_deg: np.ndarray
    flag_threshold_deg: np.ndarray

    @property
    def k(self) -> int:
        return len(self.names)


@dataclass(frozen=True)
class DeviationSet:
    """Signed/absolute angle deviations plus which joints were evaluable."""

    signed_deg: np.ndarray
    absolute_deg: np.ndarray
    evaluated: np.ndarray


@dataclass(frozen=True)
class JointResult:
    name: str
    signed_deviation_deg: float
    deviation_deg: float
    masked: bool
    flagged: bool
    flag_threshold_deg: float


@dataclass(frozen=True)
class PostureReport:
    pose_id: str
    score: float
    score_unclamped: float
    joints: tuple[JointResult, ...]
    evaluated_joint_count: int

    @property
    def flagged_joints(self) -> tuple[JointResult, ...]:
        return tuple(j for j in self.joints if j.flagged)


def _pose_from_doc(doc: dict, names: tuple[str, ...]) -> ReferencePose:
    joints = doc["joints"]
    missing = [n for n in names if n not in joints]
    if missing:
        raise ValueError(f"pose {doc['pose_id']!r} missing joints: {missing}")
    ref = np.array([float(joints[n]["ref_deg"]) for n in names])
    tmax = np.array([float(joints[n]["theta_max_deg"]) for n in names])
    tau = np.array([float(joints[n]["flag_threshold_deg"]) for n in names])
    if np.any(ref < 0.0) or np.any(ref > 180.0):
        raise ValueError(f"pose {doc['pose_id']!r}: ref angles outside [0, 180]")
    if np.any(tmax <= 0.0) or np.any(tau <= 0.0):
        raise ValueError(f"pose {doc['pose_id']!r}: thresholds must be positive")
    return ReferencePose(
        pose_id=doc["pose_id"],
        display_name=doc["display_name"],
        names=names,
        ref_deg=ref,
        theta_max_deg=tmax,
        flag_threshold_deg=tau,
    )


def load_reference_poses(path: str | None = None) -> dict[str, ReferencePose]:
    """Load the pose library, validating it against the angle table version."""
    if path is None:
        text = resources.files("asanacoach.data").joinpath(POSE_LIBRARY_RESOURCE).read_text()
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    doc = json.loads(text)
    if doc["angle_table_version"] != ANGLE_TABLE_VERSION:
        raise ValueError(
            f"pose library targets angle table {doc['angle_table_version']!r}, "
            f"engine uses {ANGLE_TABLE_VERSION!r}"
        )
    poses = {}
    for pose_doc in doc["poses"]:
        pose = _pose_from_doc(pose_doc, ANGLE_NAMES)
        poses[pose.pose_id] = pose
    return poses


def get_pose(pose_id: str, poses: dict[str, ReferencePose] | None = None) -> ReferencePose:
    library = poses if poses is not None else load_reference_poses()
    try:
        return library[pose_id]
    except KeyError:
        raise UnknownPose(f"unknown pose {pose_id!r}") from None


def deviations(features: FeatureVector, ref: ReferencePose) -> DeviationSet:
    """Per-joint signed (measured - reference) and absolute deviations.

    Masked joints are excluded from evaluation; their deviation entries
    are zeroed and must not be read.
    """
    if len(features.angles) != ref.k:
        raise LengthMismatch(
            f"feature length {len(features.angles)} != reference length {ref.k}"
        )
    evaluated = features.mask.astype(bool).copy()
    signed = np.where(evaluated, features.angles - ref.ref_deg, 0.0)
    return DeviationSet(signed_deg=signed, absolute_deg=np.abs(signed), evaluated=evaluated)


def score(dev: DeviationSet, ref: ReferencePose, clamp: bool = True) -> float:
    """Mean per-joint alignment over evaluated joints, in [0, 1] when clamped."""
    if not np.any(dev.evaluated):
        raise NoEvaluableJoints("all joints masked")
    terms = 1.0 - dev.absolute_deg[dev.evaluated] / ref.theta_max_deg[dev.evaluated]
    if clamp:
        terms = np.clip(terms, 0.0, 1.0)
    return float(np.mean(terms))


def flag_joints(dev: DeviationSet, ref: ReferencePose) -> np.ndarray:
    """Per-joint booleans: evaluated and strictly beyond the flag threshold."""
    return dev.evaluated & (dev.absolute_deg > ref.flag_threshold_deg)


def evaluate_posture(features: FeatureVector, ref: ReferencePose) -> PostureReport:
    """deviations + score + flags rolled into one report."""
    dev = deviations(features, ref)
    flags = flag_joints(dev, ref)
    joints = tuple(
        JointResult(
            name=ref.names[i],
            signed_deviation_deg=float(dev.signed_deg[i]),
            deviation_deg=float(dev.absolute_deg[i]),
            masked=not bool(dev.evaluated[i]),
            flagged=bool(flags[i]),
            flag_threshold_deg=float(ref.flag_threshold_deg[i]),
        )
        for i in range(ref.k)
    )
    return PostureReport(
        pose_id=ref.pose_id,
        score=score(dev, ref, clamp=True),
        score_unclamped=score(dev, ref, clamp=False),
        joints=joints,
        evaluated_joint_count=int(np.sum(dev.evaluated)),
    )
