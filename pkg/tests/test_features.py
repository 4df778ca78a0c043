"""Feature extraction: hashing, downsampling, featurize contracts."""

import numpy as np
import pytest

from wheelarm.errors import SchemaMismatch
from wheelarm.features import (
    DEPTH_FAR,
    IMAGE_H,
    IMAGE_W,
    Normalization,
    STATE_DIM,
    STD_FLOOR,
    TARGET_CHANNELS,
    bag_vector,
    downsample_area,
    featurize,
    fnv1a_bucket,
    tokenize,
)
from wheelarm.recorder import AlignedTrajectory, FrameStream, SessionManifest

yaw = lambda a: np.array([0.0, 0.0, np.sin(a / 2), np.cos(a / 2)])


def make_aligned(rows=30, constant=False, drop_topic=None, widths=None, frames_for=("chassis",)):
    ts = np.arange(rows) / 10.0
    t = ts if not constant else np.zeros(rows)
    base_defaults = {
        "joint_states": 14,
        "ee_pose": 7,
        "base_pose": 7,
        "base_velocities": 2,
        "wheel_states": 8,
        "imu": 6,
        "gripper_state": 2,
    }
    if widths:
        base_defaults.update(widths)
    topics = {}
    for topic, width in base_defaults.items():
        if topic == drop_topic:
            continue
        if topic in ("ee_pose", "base_pose"):
            mat = np.column_stack([t, 2 * t, np.zeros(rows), *(np.tile(yaw(0.2), (rows, 1)).T)])
            mat = mat[:, :3 + 4]
        else:
            mat = np.column_stack([np.sin(t + i) for i in range(width)])
        topics[topic] = mat[:, :width] if mat.shape[1] >= width else np.pad(
            mat, ((0, 0), (0, width - mat.shape[1]))
        )
    frames = {}
    for cam in frames_for:
        rgb = [np.full((IMAGE_H * 4, IMAGE_W * 4, 3), 128, dtype=np.uint8) for _ in range(rows)]
        depth = [np.full((IMAGE_H * 4, IMAGE_W * 4), 2.5, dtype=np.float32) for _ in range(rows)]
        frames[cam] = FrameStream(camera_id=cam, timestamps=ts.copy(), rgb=rgb, depth=depth)
    manifest = SessionManifest(
        session_id="t",
        file_name="traj_a",
        instruction="Pick up the mustard",
        task_label="pick",
        seed=1,
    )
    return AlignedTrajectory(
        manifest=manifest,
        reference_timestamps=ts + 5.0,  # nonzero start; features must be relative
        topics=topics,
        quat_blocks={},
        frames=frames,
        stats={},
    )


class TestHashing:
    def test_fnv1a_reference_values(self):
        # FNV-1a 32-bit check vector: empty string hashes to the offset basis
        assert fnv1a_bucket("", buckets=2**32) == 2166136261
        assert fnv1a_bucket("a", buckets=2**32) == 0xE40C292C

    def test_tokenize_is_stable_and_lowercases(self):
        ids = tokenize("Pick up the mustard")
        assert ids.shape == (4,)
        assert np.array_equal(ids, tokenize("pick UP the MUSTARD"))
        assert np.array_equal(ids, tokenize("Pick up the mustard"))
        assert np.all((0 <= ids) & (ids < 1024))

    def test_bag_vector_mean_pooled(self):
        bag = bag_vector([3, 3, 7])
        assert bag.shape == (1024,)
        assert bag[3] == pytest.approx(2 / 3)
        assert bag[7] == pytest.approx(1 / 3)
        assert bag.sum() == pytest.approx(1.0)
        assert np.array_equal(bag_vector([]), np.zeros(1024))


class TestDownsample:
    def test_area_mean_exact_on_blocks(self):
        img = np.zeros((48, 64))
        img[0:2, 0:2] = [[1, 2], [3, 4]]  # one 2x2 source block
        out = downsample_area(img, width=32, height=24)
        assert out.shape == (24, 32)
        assert out[0, 0] == pytest.approx(2.5)
        assert np.all(out[1:, 1:] == 0)

    def test_rgb_keeps_channels(self):
        img = np.stack([np.full((96, 128), v) for v in (10, 20, 30)], axis=2)
        out = downsample_area(img)
        assert out.shape == (24, 32, 3)
        assert np.allclose(out[5, 5], [10, 20, 30])

    def test_non_integer_factor_rejected(self):
        with pytest.raises(SchemaMismatch):
            downsample_area(np.zeros((50, 64)))


class TestFeaturize:
    def test_shift_by_one_counts(self):
        feats = featurize(make_aligned(rows=100))
        assert feats.steps == 99
        assert feats.rgb.shape == (99, IMAGE_H * IMAGE_W * 3)
        assert feats.depth.shape == (99, IMAGE_H * IMAGE_W)
        assert feats.state.shape == (99, STATE_DIM)
        assert feats.targets.shape == (99, 16)

    def test_targets_are_next_row_pose(self):
        traj = make_aligned(rows=12)
        feats = featurize(traj)
        expected = np.hstack(
            [traj.topics["ee_pose"][1:], traj.topics["base_pose"][1:], traj.topics["gripper_state"][1:]]
        )
        assert np.array_equal(feats.targets, expected)

    def test_images_scaled_and_clipped(self):
        feats = featurize(make_aligned(rows=5))
        assert np.allclose(feats.rgb, 128 / 255)
        assert np.allclose(feats.depth, 2.5)
        assert np.all(feats.depth <= DEPTH_FAR)

    def test_timestamps_relative_to_start(self):
        feats = featurize(make_aligned(rows=6))
        assert feats.timestamp[0, 0] == 0.0
        assert np.allclose(feats.timestamp.ravel(), np.arange(5) / 10.0)

    def test_requires_two_rows_and_reference_camera(self):
        with pytest.raises(SchemaMismatch):
            featurize(make_aligned(rows=1))
        with pytest.raises(SchemaMismatch, match="chassis"):
            featurize(make_aligned(frames_for=("wrist",)))

    def test_missing_topic_and_bad_width(self):
        with pytest.raises(SchemaMismatch, match="imu"):
            featurize(make_aligned(drop_topic="imu"))
        with pytest.raises(SchemaMismatch, match="wheel_states"):
            featurize(make_aligned(widths={"wheel_states": 5}))

    def test_non_unit_target_quaternion_rejected(self):
        traj = make_aligned(rows=8)
        traj.topics["ee_pose"][:, 3:7] *= 1.01
        with pytest.raises(SchemaMismatch, match="quaternion"):
            featurize(traj)


class TestNormalization:
    def test_fit_and_floor(self):
        feats = featurize(make_aligned(rows=20, constant=True))
        norm = Normalization.fit([feats])
        assert np.all(norm.state_std >= STD_FLOOR)
        assert np.all(norm.target_std >= STD_FLOOR)
        normalized = norm.normalize_state(feats.state)
        assert np.all(np.isfinite(normalized))
        assert np.allclose(normalized, 0.0)

    def test_round_trip_targets(self):
        feats = featurize(make_aligned(rows=25))
        norm = Normalization.fit([feats])
        z = norm.normalize_targets(feats.targets)
        assert np.allclose(norm.denormalize_targets(z), feats.targets, atol=1e-12)
        assert abs(float(z.mean())) < 1e-12

    def test_dict_round_trip(self):
        norm = Normalization.fit([featurize(make_aligned(rows=10))])
        again = Normalization.from_dict(norm.to_dict())
        assert np.array_equal(norm.state_mean, again.state_mean)
        assert np.array_equal(norm.target_std, again.target_std)

    def test_channel_catalog(self):
        assert len(TARGET_CHANNELS) == 16
        assert TARGET_CHANNELS[9] == "W Z-Position (m)"
        assert TARGET_CHANNELS[14].startswith("GL")
