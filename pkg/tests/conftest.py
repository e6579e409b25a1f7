import numpy as np
import pytest

from asanacoach.evaluator import load_reference_poses
from asanacoach.ingest import KeypointFrame, NUM_KEYPOINTS


@pytest.fixture(scope="session")
def poses():
    return load_reference_poses()


def random_frame(rng: np.random.Generator, min_torso: float = 0.5) -> KeypointFrame:
    """Random frame with a usable torso and full confidences."""
    while True:
        kp = np.ones((NUM_KEYPOINTS, 3))
        kp[:, :2] = rng.uniform(-5.0, 5.0, size=(NUM_KEYPOINTS, 2))
        hip_mid = 0.5 * (kp[11, :2] + kp[12, :2])
        sho_mid = 0.5 * (kp[5, :2] + kp[6, :2])
        if np.linalg.norm(sho_mid - hip_mid) >= min_torso:
            return KeypointFrame(timestamp_ms=0, frame_id=0, keypoints=kp)
