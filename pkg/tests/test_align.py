"""Interpolation against analytic oracles (knot exactness, linearity, the
h^2/8 quadratic bound for sin, slerp midpoints) and full-recording alignment."""

import numpy as np
import pytest

from wheelarm.align import (
    align_recording,
    hemisphere_align,
    interp_linear,
    interp_quaternion,
    nearest_indices,
)
from wheelarm.errors import EmptyTopic, NoOverlap, OutOfRange
from wheelarm.recorder import Recorder, Recording, SessionManifest, StreamBuffer
from tests.test_recorder import make_manifest, make_recording


def buffer(ts, values, topic="sig", quat_blocks=()):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    return StreamBuffer(topic, np.asarray(ts, dtype=float), values, quat_blocks)


def slerp(q0, q1, u):
    """Spherical linear interpolation, the reference for nlerp accuracy."""
    q0, q1 = np.asarray(q0, float), np.asarray(q1, float)
    dot = float(np.clip(q0 @ q1, -1.0, 1.0))
    theta = np.arccos(dot)
    if theta < 1e-12:
        return q0
    return (np.sin((1 - u) * theta) * q0 + np.sin(u * theta) * q1) / np.sin(theta)


def yaw_quat(angle):
    return np.array([0.0, 0.0, np.sin(angle / 2.0), np.cos(angle / 2.0)])


# --- interp_linear ---------------------------------------------------------------

class TestInterpLinear:
    def test_exact_at_knots(self):
        rng = np.random.default_rng(0)
        ts = np.cumsum(rng.uniform(0.01, 0.1, 40))
        vals = rng.normal(0.0, 3.0, (40, 5))
        out = interp_linear(buffer(ts, vals), ts)
        assert np.array_equal(out, vals)

    def test_linear_signal_exact(self):
        ts = np.linspace(0.0, 4.0, 41)
        vals = np.column_stack([3.5 * ts - 1.2, -0.25 * ts + 7.0])
        rng = np.random.default_rng(1)
        t_ref = rng.uniform(0.0, 4.0, 200)
        t_ref.sort()
        out = interp_linear(buffer(ts, vals), t_ref)
        truth = np.column_stack([3.5 * t_ref - 1.2, -0.25 * t_ref + 7.0])
        assert np.max(np.abs(out - truth)) < 1e-12

    def test_sin_bound_60_to_10_hz(self):
        ts = np.arange(0.0, 2.0 * np.pi, 1.0 / 60.0)
        t_ref = np.arange(0.013, float(ts[-1]), 1.0 / 10.0)
        out = interp_linear(buffer(ts, np.sin(ts)), t_ref)
        err = np.max(np.abs(out[:, 0] - np.sin(t_ref)))
        assert err < 2e-4
        # and the theoretical h^2/8 * max|f''| ceiling itself
        assert err < (1.0 / 60.0) ** 2 / 8.0 * 1.0001

    def test_out_of_range_lists_times(self):
        buf = buffer([0.0, 1.0], [0.0, 1.0])
        with pytest.raises(OutOfRange) as exc_info:
            interp_linear(buf, [-0.5, 0.5, 1.5])
        assert exc_info.value.times == [-0.5, 1.5]

    def test_empty_topic(self):
        buf = buffer(np.zeros(0), np.zeros((0, 1)))
        with pytest.raises(EmptyTopic):
            interp_linear(buf, [0.0])


# --- interp_quaternion -----------------------------------------------------------

class TestInterpQuaternion:
    def test_constant_stream_constant_output(self):
        q = yaw_quat(1.1)
        buf = buffer([0.0, 1.0, 2.0], np.tile(q, (3, 1)))
        out = interp_quaternion(buf, np.linspace(0.0, 2.0, 17))
        assert np.allclose(out, q, atol=1e-15)

    def test_midpoint_matches_slerp(self):
        q0 = np.array([0.0, 0.0, 0.0, 1.0])
        q1 = yaw_quat(np.pi / 2.0)
        buf = buffer([0.0, 1.0], np.vstack([q0, q1]))
        out = interp_quaternion(buf, [0.5])
        assert np.max(np.abs(out[0] - slerp(q0, q1, 0.5))) < 1e-3

    def test_outputs_unit_norm(self):
        rng = np.random.default_rng(2)
        q = rng.normal(0.0, 1.0, (30, 4))
        q /= np.linalg.norm(q, axis=1, keepdims=True)
        ts = np.arange(30.0)
        out = interp_quaternion(buffer(ts, q), rng.uniform(0.0, 29.0, 500))
        assert np.max(np.abs(np.linalg.norm(out, axis=1) - 1.0)) < 1e-9

    def test_antipodal_pair_continuous(self):
        q = yaw_quat(0.7)
        buf = buffer([0.0, 1.0, 2.0], np.vstack([q, -q, q]))
        out = interp_quaternion(buf, np.linspace(0.0, 2.0, 21))
        # hemisphere correction collapses the stream to a constant
        assert np.allclose(np.abs(out @ q), 1.0, atol=1e-12)

    def test_sign_flips_do_not_change_result(self):
        rng = np.random.default_rng(3)
        angles = np.cumsum(rng.uniform(0.0, 0.2, 25))
        q = np.vstack([yaw_quat(a) for a in angles])
        ts = np.arange(25.0)
        t_ref = rng.uniform(0.0, 24.0, 100)
        clean = interp_quaternion(buffer(ts, q), t_ref)
        flipped = q.copy()
        flipped[rng.random(25) < 0.4] *= -1.0
        mixed = interp_quaternion(buffer(ts, flipped), t_ref)
        # equal up to one global sign
        sign = np.sign(mixed[0] @ clean[0])
        assert np.allclose(mixed, sign * clean, atol=1e-12)

    def test_hemisphere_align_pre_norm_floor(self):
        q = yaw_quat(0.7)
        aligned = hemisphere_align(np.vstack([q, -q, q]))
        mid = 0.5 * (aligned[0] + aligned[1])  # worst-case nlerp point
        assert np.linalg.norm(mid) > 0.99

    def test_wrong_width_rejected(self):
        with pytest.raises(ValueError):
            interp_quaternion(buffer([0.0, 1.0], np.zeros((2, 3))), [0.5])


class TestNearestIndices:
    def test_basic(self):
        ts = np.array([0.0, 1.0, 2.0, 3.0])
        idx = nearest_indices(ts, np.array([0.1, 0.9, 2.4, 3.0]))
        assert idx.tolist() == [0, 1, 2, 3]

    def test_tie_prefers_earlier(self):
        idx = nearest_indices(np.array([0.0, 1.0]), np.array([0.5]))
        assert idx.tolist() == [0]

    def test_single_source(self):
        idx = nearest_indices(np.array([2.0]), np.array([0.0, 5.0]))
        assert idx.tolist() == [0, 0]


# --- align_recording -------------------------------------------------------------

def make_analytic_recording(duration=2.0):
    """Every topic is a closed-form signal of time so alignment is checkable."""
    rec = Recorder(make_manifest(end_time=duration))
    t60 = np.arange(0.0, duration, 1.0 / 60.0)
    t100 = np.arange(0.0, duration, 1.0 / 100.0)
    for t in t60:
        rec.add_sample("joint_states", t, np.full(14, np.sin(t)))
        q = yaw_quat(0.3 * t)
        rec.add_sample("ee_pose", t, np.r_[t, 2.0 * t, -t, q])
        rec.add_sample("base_velocities", t, [0.5 * t, -0.1 * t])
    for t in t100:
        rec.add_sample("imu", t, np.full(6, np.cos(t)))
    rgb = np.zeros((4, 4, 3), dtype=np.uint8)
    depth = np.zeros((4, 4), dtype=np.float32)
    rng = np.random.default_rng(9)
    chassis_ts = np.arange(0.05, duration - 0.05, 0.1) + rng.uniform(-0.002, 0.002, 19)
    for t in chassis_ts:
        rec.add_frame("chassis", float(t), rgb, depth)
    for t in chassis_ts + 0.03:
        rec.add_frame("wrist", float(t), rgb, depth)
    return rec.seal()


class TestAlignRecording:
    def test_row_counts_equal_and_inside_spans(self):
        rec = make_analytic_recording()
        aligned = align_recording(rec)
        n = aligned.rows
        # wrist stream starts 0.03 s after chassis, so its span trims exactly
        # the first chassis frame
        assert n == len(rec.frames["chassis"]) - 1
        for name, matrix in aligned.topics.items():
            assert matrix.shape[0] == n, name
        for buf in rec.topics.values():
            assert aligned.reference_timestamps[0] >= buf.timestamps[0]
            assert aligned.reference_timestamps[-1] <= buf.timestamps[-1]
        assert len(aligned.frames["chassis"]) == n
        assert len(aligned.frames["wrist"]) == n

    def test_closed_form_bounds(self):
        aligned = align_recording(make_analytic_recording())
        t = aligned.reference_timestamps
        sin_err = np.abs(aligned.topics["joint_states"][:, 0] - np.sin(t)).max()
        cos_err = np.abs(aligned.topics["imu"][:, 0] - np.cos(t)).max()
        assert sin_err < (1.0 / 60.0) ** 2 / 8.0 * 1.0001
        assert cos_err < (1.0 / 100.0) ** 2 / 8.0 * 1.0001
        lin = aligned.topics["ee_pose"][:, :3]
        assert np.max(np.abs(lin - np.column_stack([t, 2.0 * t, -t]))) < 1e-12

    def test_quaternion_block_accuracy(self):
        aligned = align_recording(make_analytic_recording())
        t = aligned.reference_timestamps
        q = aligned.topics["ee_pose"][:, 3:7]
        truth = np.vstack([yaw_quat(0.3 * tk) for tk in t])
        assert np.max(np.abs(np.linalg.norm(q, axis=1) - 1.0)) < 1e-9
        assert np.max(np.abs(q - truth)) < 1e-6  # 0.3 rad/s at 60 Hz: nlerp error tiny

    def test_wrist_paired_nearest(self):
        rec = make_analytic_recording()
        aligned = align_recording(rec)
        wrist_ts = rec.frames["wrist"].timestamps
        for t_ref, paired in zip(aligned.reference_timestamps, aligned.frames["wrist"].timestamps):
            assert abs(paired - t_ref) == pytest.approx(np.min(np.abs(wrist_ts - t_ref)))

    def test_stats_report_max_gap(self):
        rec = Recorder(make_manifest())
        for t in [0.0, 0.1, 0.35, 0.4, 0.5]:  # max gap 0.25
            rec.add_sample("imu", t, np.zeros(6))
        rgb = np.zeros((2, 2, 3), np.uint8)
        depth = np.zeros((2, 2), np.float32)
        for t in [0.05, 0.2, 0.45]:
            rec.add_frame("chassis", t, rgb, depth)
        aligned = align_recording(rec.seal())
        assert aligned.stats["imu"] == pytest.approx(0.25)
        assert aligned.stats["frames/chassis"] == pytest.approx(0.25)

    def test_empty_topic_raises(self):
        rec = make_analytic_recording()
        rec.topics["imu"] = StreamBuffer("imu", np.zeros(0), np.zeros((0, 6)))
        with pytest.raises(EmptyTopic) as exc_info:
            align_recording(rec)
        assert exc_info.value.topic == "imu"

    def test_no_overlap(self):
        rec = Recorder(make_manifest())
        rec.add_sample("imu", 0.0, np.zeros(6))
        rec.add_sample("imu", 1.0, np.zeros(6))
        rgb = np.zeros((2, 2, 3), np.uint8)
        depth = np.zeros((2, 2), np.float32)
        rec.add_frame("chassis", 10.0, rgb, depth)
        with pytest.raises(NoOverlap):
            align_recording(rec.seal())

    def test_single_frame_single_row(self):
        rec = Recorder(make_manifest())
        for t in [0.0, 0.5, 1.0]:
            rec.add_sample("imu", t, np.full(6, t))
        rgb = np.zeros((2, 2, 3), np.uint8)
        depth = np.zeros((2, 2), np.float32)
        rec.add_frame("chassis", 0.25, rgb, depth)
        aligned = align_recording(rec.seal())
        assert aligned.rows == 1
        assert aligned.topics["imu"].shape == (1, 6)
        assert aligned.topics["imu"][0, 0] == pytest.approx(0.25)

    def test_missing_reference_camera(self):
        rec = Recorder(make_manifest())
        rec.add_sample("imu", 0.0, np.zeros(6))
        with pytest.raises(EmptyTopic):
            align_recording(rec.seal())

    def test_randomized_recording_aligns(self):
        aligned = align_recording(make_recording(seed=11))
        assert aligned.rows > 0
        q = aligned.topics["base_pose"][:, 3:7]
        assert np.max(np.abs(np.linalg.norm(q, axis=1) - 1.0)) < 1e-9
