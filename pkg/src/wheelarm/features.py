"""Feature extraction for the sequence baseline.

An aligned trajectory becomes per-row model inputs (downsampled reference
camera image, hashed instruction bag, 46-dim proprioceptive vector, relative
timestamp) and 16-channel next-row pose targets. Normalization statistics are
computed once over a training set and applied everywhere else.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SchemaMismatch
from .recorder import REFERENCE_CAMERA, AlignedTrajectory

IMAGE_W = 32
IMAGE_H = 24
VOCAB_SIZE = 1024

# proprioceptive layout: (topic, channels)
STATE_TOPICS = (
    ("joint_states", 14),
    ("ee_pose", 7),
    ("base_pose", 7),
    ("base_velocities", 2),
    ("wheel_states", 8),
    ("imu", 6),
    ("gripper_state", 2),
)
STATE_DIM = sum(c for _, c in STATE_TOPICS)  # 46

TARGET_CHANNELS = (
    "EE X-Position (m)",
    "EE Y-Position (m)",
    "EE Z-Position (m)",
    "EE X-Orientation",
    "EE Y-Orientation",
    "EE Z-Orientation",
    "EE W-Orientation",
    "W X-Position (m)",
    "W Y-Position (m)",
    "W Z-Position (m)",
    "W X-Orientation",
    "W Y-Orientation",
    "W Z-Orientation",
    "W W-Orientation",
    "GL Actuator (rad)",
    "GR Actuator (rad)",
)
TARGET_DIM = len(TARGET_CHANNELS)  # 16

STD_FLOOR = 1e-6
DEPTH_FAR = 10.0  # render clip plane; depth features stay in [0, DEPTH_FAR]


def fnv1a_bucket(token: str, buckets: int = VOCAB_SIZE) -> int:
    h = 2166136261
    for byte in token.encode("utf-8"):
        h = ((h ^ byte) * 16777619) & 0xFFFFFFFF
    return h % buckets


def tokenize(instruction: str) -> np.ndarray:
    tokens = instruction.lower().split()
    return np.array([fnv1a_bucket(t) for t in tokens], dtype=np.int64)


def bag_vector(token_ids, buckets: int = VOCAB_SIZE) -> np.ndarray:
    """Mean-pooled one-hot bag; (buckets,) summing to 1 for non-empty input."""
    bag = np.zeros(buckets)
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.size:
        np.add.at(bag, ids, 1.0 / ids.size)
    return bag


def downsample_area(image: np.ndarray, width: int = IMAGE_W, height: int = IMAGE_H):
    h, w = image.shape[:2]
    if h % height or w % width:
        raise SchemaMismatch(f"image {w}x{h} not an integer multiple of {width}x{height}")
    fh, fw = h // height, w // width
    if image.ndim == 3:
        blocks = image.reshape(height, fh, width, fw, image.shape[2])
        return blocks.mean(axis=(1, 3))
    return image.reshape(height, fh, width, fw).mean(axis=(1, 3))


@dataclass
class TrajectoryFeatures:
    """Model-ready arrays for one trajectory: N-1 steps of (input, next-pose)."""

    name: str
    rgb: np.ndarray  # (N-1, IMAGE_H*IMAGE_W*3) in [0, 1]
    depth: np.ndarray  # (N-1, IMAGE_H*IMAGE_W) meters, clipped to far
    bag: np.ndarray  # (VOCAB_SIZE,)
    state: np.ndarray  # (N-1, STATE_DIM)
    timestamp: np.ndarray  # (N-1, 1) seconds from trajectory start
    targets: np.ndarray  # (N-1, TARGET_DIM), row i holds the pose at i+1

    @property
    def steps(self) -> int:
        return self.targets.shape[0]


def _topic_matrix(traj: AlignedTrajectory, topic: str, channels: int) -> np.ndarray:
    if topic not in traj.topics:
        raise SchemaMismatch(f"aligned trajectory missing topic {topic!r}")
    mat = traj.topics[topic]
    if mat.shape[1] != channels:
        raise SchemaMismatch(f"{topic}: expected {channels} channels, found {mat.shape[1]}")
    return mat


def featurize(traj: AlignedTrajectory) -> TrajectoryFeatures:
    n = traj.rows
    if n < 2:
        raise SchemaMismatch("trajectory needs at least 2 aligned rows")
    if REFERENCE_CAMERA not in traj.frames:
        raise SchemaMismatch(f"missing {REFERENCE_CAMERA!r} frames")
    frames = traj.frames[REFERENCE_CAMERA]
    if len(frames) != n:
        raise SchemaMismatch(f"{len(frames)} frames for {n} rows")

    cols = [_topic_matrix(traj, topic, ch) for topic, ch in STATE_TOPICS]
    state = np.hstack(cols)
    targets = np.hstack(
        [
            _topic_matrix(traj, "ee_pose", 7),
            _topic_matrix(traj, "base_pose", 7),
            _topic_matrix(traj, "gripper_state", 2),
        ]
    )
    if not np.all(np.isfinite(state)) or not np.all(np.isfinite(targets)):
        raise SchemaMismatch("non-finite values in aligned topics")
    for lo in (3, 10):  # quaternion blocks of the 16-channel target
        norms = np.linalg.norm(targets[:, lo : lo + 4], axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-6:
            raise SchemaMismatch("target quaternion block not unit norm")

    rgb = np.empty((n, IMAGE_H * IMAGE_W * 3))
    depth = np.empty((n, IMAGE_H * IMAGE_W))
    for i in range(n):
        rgb[i] = (downsample_area(frames.rgb[i].astype(np.float64)) / 255.0).ravel()
        d = downsample_area(frames.depth[i].astype(np.float64))
        depth[i] = np.clip(d, 0.0, DEPTH_FAR).ravel()

    ts = np.asarray(traj.reference_timestamps, dtype=float)
    rel = (ts - ts[0]).reshape(-1, 1)

    return TrajectoryFeatures(
        name=traj.manifest.file_name,
        rgb=rgb[:-1],
        depth=depth[:-1],
        bag=bag_vector(tokenize(traj.manifest.instruction)),
        state=state[:-1],
        timestamp=rel[:-1],
        targets=targets[1:],
    )


@dataclass
class Normalization:
    """Per-channel mean/std for the state vector and the 16 targets,
    computed on the training split only; std floored at 1e-6."""

    state_mean: np.ndarray
    state_std: np.ndarray
    target_mean: np.ndarray
    target_std: np.ndarray

    @staticmethod
    def fit(featurized: list) -> "Normalization":
        states = np.vstack([f.state for f in featurized])
        targets = np.vstack([f.targets for f in featurized])
        return Normalization(
            state_mean=states.mean(axis=0),
            state_std=np.maximum(states.std(axis=0), STD_FLOOR),
            target_mean=targets.mean(axis=0),
            target_std=np.maximum(targets.std(axis=0), STD_FLOOR),
        )

    def normalize_state(self, state: np.ndarray) -> np.ndarray:
        return (state - self.state_mean) / self.state_std

    def normalize_targets(self, targets: np.ndarray) -> np.ndarray:
        return (targets - self.target_mean) / self.target_std

    def denormalize_targets(self, normalized: np.ndarray) -> np.ndarray:
        return normalized * self.target_std + self.target_mean

    def to_dict(self) -> dict:
        return {
            "state_mean": self.state_mean.tolist(),
            "state_std": self.state_std.tolist(),
            "target_mean": self.target_mean.tolist(),
            "target_std": self.target_std.tolist(),
        }

    @staticmethod
    def from_dict(data: dict) -> "Normalization":
        return Normalization(
            state_mean=np.asarray(data["state_mean"], dtype=float),
            state_std=np.asarray(data["state_std"], dtype=float),
            target_mean=np.asarray(data["target_mean"], dtype=float),
            target_std=np.asarray(data["target_std"], dtype=float),
        )
