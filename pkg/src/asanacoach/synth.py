"""Synthetic skeletons and datasets via 2-D forward kinematics.

A SkeletonSpec assigns the eight tracked joint angles directly; the
generator places keypoints so that feature extraction on the normalized
frame recovers exactly those angles. That closes the loop for tests (no
external datasets needed) and makes shipped reference poses exact by
construction.

Coordinates use the image convention (y grows downward); "up" is -y
rotated by the global orientation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .biomech import ANGLE_NAMES, FeatureVector, NUM_ANGLES
from .errors import InvalidSpec
from .evaluator import ReferencePose, load_reference_poses
from .ingest import (
    COCO_KEYPOINT_NAMES,
    KeypointFrame,
    NUM_KEYPOINTS,
    frame_to_line,
    normalize,
    parse_frame,
)
from . import biomech

DATASET_SIDECAR_NAME = "labels.json"
DATASET_FRAMES_NAME = "dataset.kpjsonl"
DATASET_FORMAT = "asanacoach-dataset"

# Start of every synthetic sequence: standing, arms near the body.
# Order matches ANGLE_NAMES (elbows, shoulders, hips, knees; left/right).
NEUTRAL_ANGLES_DEG = np.array([170.0, 170.0, 30.0, 30.0, 170.0, 170.0, 170.0, 170.0])

FRAME_INTERVAL_MS = 33


@dataclass(frozen=True)
class SkeletonSpec:
    """Joint-angle assignment plus limb proportions for one synthetic body.

    ``angles_deg`` is ordered like the angle table: left/right elbow,
    left/right shoulder, left/right hip, left/right knee.
    """

    angles_deg: np.ndarray
    orientation_deg: float = 0.0
    torso: float = 1.0
    upper_arm: float = 0.45
    forearm: float = 0.4
    thigh: float = 0.55
    shin: float = 0.5
    shoulder_half_width: float = 0.35
    hip_half_width: float = 0.25

    @classmethod
    def from_angle_map(cls, angles: dict[str, float], **kwargs) -> "SkeletonSpec":
        ordered = np.array([float(angles[name]) for name in ANGLE_NAMES])
        return cls(angles_deg=ordered, **kwargs)


def _validate_spec(spec: SkeletonSpec) -> None:
    lengths = (
        spec.torso,
        spec.upper_arm,
        spec.forearm,
        spec.thigh,
        spec.shin,
        spec.shoulder_half_width,
        spec.hip_half_width,
    )
    if any(not (length > 0.0) for length in lengths):
        raise InvalidSpec("all limb lengths must be positive")
    angles = np.asarray(spec.angles_deg, dtype=np.float64)
    if angles.shape != (NUM_ANGLES,):
        raise InvalidSpec(f"expected {NUM_ANGLES} angles, got shape {angles.shape}")
    if not np.all(np.isfinite(angles)) or np.any(angles < 0.0) or np.any(angles > 180.0):
        raise InvalidSpec("assigned angles must lie in [0, 180]")


def _rot(v: np.ndarray, deg: float) -> np.ndarray:
    rad = math.radians(deg)
    c, s = math.cos(rad), math.sin(rad)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


def _unit(v: np.ndarray) -> np.ndarray:
    return v / math.hypot(v[0], v[1])


def skeleton_to_frame(
    spec: SkeletonSpec, timestamp_ms: int = 0, frame_id: int = 0
) -> KeypointFrame:
    """Place the 17 keypoints for a spec; all confidences are 1.

    Limb chains branch off the torso: hip->knee->ankle and
    shoulder->elbow->wrist per side, each segment rotated from its parent
    direction by the assigned interior angle (mirrored between sides).
    """
    _validate_spec(spec)
    a = {name: float(v) for name, v in zip(ANGLE_NAMES, spec.angles_deg)}

    up = _rot(np.array([0.0, -1.0]), spec.orientation_deg)
    lat = _rot(np.array([1.0, 0.0]), spec.orientation_deg)

    hip_mid = np.zeros(2)
    shoulder_mid = hip_mid + spec.torso * up

    pts = {}
    pts["left_hip"] = hip_mid + spec.hip_half_width * lat
    pts["right_hip"] = hip_mid - spec.hip_half_width * lat
    pts["left_shoulder"] = shoulder_mid + spec.shoulder_half_width * lat
    pts["right_shoulder"] = shoulder_mid - spec.shoulder_half_width * lat

    for side, sign in (("left", 1.0), ("right", -1.0)):
        hip = pts[f"{side}_hip"]
        shoulder = pts[f"{side}_shoulder"]

        torso_dir = _unit(shoulder - hip)
        thigh_dir = _rot(torso_dir, sign * a[f"{side}_hip"])
        knee = hip + spec.thigh * thigh_dir
        shin_dir = _rot(-thigh_dir, sign * a[f"{side}_knee"])
        ankle = knee + spec.shin * shin_dir
        pts[f"{side}_knee"] = knee
        pts[f"{side}_ankle"] = ankle

        drop_dir = _unit(hip - shoulder)
        upper_dir = _rot(drop_dir, sign * a[f"{side}_shoulder"])
        elbow = shoulder + spec.upper_arm * upper_dir
        fore_dir = _rot(-upper_dir, sign * a[f"{side}_elbow"])
        wrist = elbow + spec.forearm * fore_dir
        pts[f"{side}_elbow"] = elbow
        pts[f"{side}_wrist"] = wrist

    nose = shoulder_mid + 0.30 * spec.torso * up
    pts["nose"] = nose
    pts["left_eye"] = nose + 0.06 * lat + 0.05 * up
    pts["right_eye"] = nose - 0.06 * lat + 0.05 * up
    pts["left_ear"] = nose + 0.12 * lat
    pts["right_ear"] = nose - 0.12 * lat

    kp = np.ones((NUM_KEYPOINTS, 3))
    for i, name in enumerate(COCO_KEYPOINT_NAMES):
        kp[i, :2] = pts[name]
    return KeypointFrame(timestamp_ms=timestamp_ms, frame_id=frame_id, keypoints=kp)


@dataclass(frozen=True)
class SequenceSample:
    """One labelled training sequence of per-frame feature vectors."""

    features: tuple[FeatureVector, ...]
    label: int


@dataclass(frozen=True)
class Dataset:
    samples: tuple[SequenceSample, ...]
    class_names: tuple[str, ...]
    frames_per_sample: int


def _sample_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def _ease_sequence(
    ref_angles: np.ndarray, frames: int, noise_deg: float, rng: np.random.Generator
) -> np.ndarray:
    """(frames, k) angle trajectory: linear blend from neutral to the target."""
    out = np.empty((frames, NUM_ANGLES))
    for t in range(frames):
        w = t / (frames - 1) if frames > 1 else 1.0
        angles = (1.0 - w) * NEUTRAL_ANGLES_DEG + w * ref_angles
        if noise_deg > 0.0:
            angles = angles + rng.normal(0.0, noise_deg, NUM_ANGLES)
        out[t] = np.clip(angles, 0.0, 180.0)
    return out


def make_dataset(
    num_classes: int = 5,
    samples_per_class: int = 100,
    frames: int = 30,
    noise_deg: float = 3.0,
    seed: int = 0,
    poses: dict[str, ReferencePose] | None = None,
) -> Dataset:
    """Deterministic synthetic dataset over the shipped reference poses.

    Every sample eases linearly from the neutral stance to its class's
    reference angles over ``frames`` frames, with i.i.d. Gaussian angle
    noise. Per-sample RNG streams derive from (seed, sample index), so
    generation order cannot change the data.
    """
    library = poses if poses is not None else load_reference_poses()
    pose_ids = list(library.keys())
    if num_classes > len(pose_ids):
        raise ValueError(
            f"num_classes {num_classes} exceeds pose library size {len(pose_ids)}"
        )
    class_names = tuple(pose_ids[:num_classes])
    samples = []
    for c, pose_id in enumerate(class_names):
        ref_angles = library[pose_id].ref_deg
        for j in range(samples_per_class):
            index = c * samples_per_class + j
            rng = _sample_rng(seed, index)
            traj = _ease_sequence(ref_angles, frames, noise_deg, rng)
            feats = tuple(
                FeatureVector(
                    angles=traj[t].copy(),
                    mask=np.ones(NUM_ANGLES, dtype=bool),
                    timestamp_ms=t * FRAME_INTERVAL_MS,
                )
                for t in range(frames)
            )
            samples.append(SequenceSample(features=feats, label=c))
    return Dataset(
        samples=tuple(samples),
        class_names=class_names,
        frames_per_sample=frames,
    )


def export_dataset(dataset: Dataset, out_dir: str | Path) -> tuple[Path, Path]:
    """Write a dataset as keypoint frames (.kpjsonl) plus a label sidecar.

    Frames are produced by forward kinematics from each sample's angle
    trajectory, so consumers exercise the same wire format and ingest
    path as live sessions.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    frames_path = out / DATASET_FRAMES_NAME
    sidecar_path = out / DATASET_SIDECAR_NAME
    frame_id = 0
    rows = []
    with open(frames_path, "w", encoding="utf-8") as fh:
        for idx, sample in enumerate(dataset.samples):
            start_id = frame_id
            for t, feat in enumerate(sample.features):
                spec = SkeletonSpec(angles_deg=feat.angles)
                frame = skeleton_to_frame(
                    spec, timestamp_ms=t * FRAME_INTERVAL_MS, frame_id=frame_id
                )
                fh.write(frame_to_line(frame) + "\n")
                frame_id += 1
            rows.append({"index": idx, "label": sample.label, "frame_id_start": start_id})
    sidecar = {
        "format": DATASET_FORMAT,
        "format_version": 1,
        "class_names": list(dataset.class_names),
        "frames_per_sample": dataset.frames_per_sample,
        "samples": rows,
    }
    with open(sidecar_path, "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")
    return frames_path, sidecar_path


def load_dataset(data_dir: str | Path, min_confidence: float = 0.3) -> Dataset:
    """Read an exported dataset back through the real ingest + feature path."""
    data = Path(data_dir)
    with open(data / DATASET_SIDECAR_NAME, "r", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    if sidecar.get("format") != DATASET_FORMAT:
        raise ValueError(f"not a dataset sidecar: {data / DATASET_SIDECAR_NAME}")
    frames_per_sample = int(sidecar["frames_per_sample"])
    features: list[FeatureVector] = []
    with open(data / DATASET_FRAMES_NAME, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            frame = parse_frame(line)
            feats = biomech.extract_features(
                normalize(frame, min_confidence), min_confidence=min_confidence
            )
            features.append(feats)
    samples = []
    for row in sidecar["samples"]:
        start = int(row["frame_id_start"])
        chunk = tuple(features[start : start + frames_per_sample])
        if len(chunk) != frames_per_sample:
            raise ValueError(f"dataset truncated at sample {row['index']}")
        samples.append(SequenceSample(features=chunk, label=int(row["label"])))
    return Dataset(
        samples=tuple(samples),
        class_names=tuple(sidecar["class_names"]),
        frames_per_sample=frames_per_sample,
    )


def pose_fixture_frame(
    pose_id: str,
    poses: dict[str, ReferencePose] | None = None,
    timestamp_ms: int = 0,
    frame_id: int = 0,
    orientation_deg: float = 0.0,
) -> KeypointFrame:
    """Keypoint frame that scores 1.0 against the named reference pose."""
    library = poses if poses is not None else load_reference_poses()
    ref = library[pose_id]
    spec = SkeletonSpec(angles_deg=ref.ref_deg.copy(), orientation_deg=orientation_deg)
    return skeleton_to_frame(spec, timestamp_ms=timestamp_ms, frame_id=frame_id)
