"""Resampling asynchronous topic streams onto camera timestamps.

Scalar channels are piecewise-linear interpolated; quaternion column blocks
are hemisphere-aligned, linearly interpolated, and renormalized (nlerp).
The reference timeline is the chassis camera's frame times trimmed to the
intersection of all topic spans, so nothing is ever extrapolated.
"""

from __future__ import annotations

import numpy as np

from .errors import EmptyTopic, NoOverlap, OutOfRange
from .recorder import AlignedTrajectory, FrameStream, Recording, StreamBuffer


def _check_span(buffer: StreamBuffer, t_ref: np.ndarray) -> None:
    if buffer.timestamps.size == 0:
        raise EmptyTopic(buffer.topic)
    lo, hi = buffer.timestamps[0], buffer.timestamps[-1]
    bad = t_ref[(t_ref < lo) | (t_ref > hi)]
    if bad.size:
        raise OutOfRange(
            f"topic '{buffer.topic}': reference times outside [{lo}, {hi}]",
            times=bad.tolist(),
        )


def interp_linear(buffer: StreamBuffer, t_ref) -> np.ndarray:
    """Channel-wise linear interpolation; exact at source sample times."""
    t_ref = np.asarray(t_ref, dtype=float)
    _check_span(buffer, t_ref)
    out = np.empty((t_ref.size, buffer.values.shape[1]))
    for c in range(buffer.values.shape[1]):
        out[:, c] = np.interp(t_ref, buffer.timestamps, buffer.values[:, c])
    return out


def hemisphere_align(quats: np.ndarray) -> np.ndarray:
    """Flip signs so consecutive quaternion rows have non-negative dot."""
    q = np.array(quats, dtype=float)
    if q.shape[0] > 1:
        dots = np.sum(q[1:] * q[:-1], axis=1)
        q[1:] *= np.cumprod(np.where(dots < 0.0, -1.0, 1.0))[:, None]
    return q


def interp_quaternion(buffer: StreamBuffer, t_ref) -> np.ndarray:
    """nlerp: hemisphere-align, interpolate component-wise, renormalize."""
    t_ref = np.asarray(t_ref, dtype=float)
    _check_span(buffer, t_ref)
    if buffer.values.shape[1] != 4:
        raise ValueError(f"quaternion topic needs 4 channels, got {buffer.values.shape[1]}")
    q = hemisphere_align(buffer.values)
    out = np.empty((t_ref.size, 4))
    for c in range(4):
        out[:, c] = np.interp(t_ref, buffer.timestamps, q[:, c])
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def nearest_indices(timestamps: np.ndarray, t_ref: np.ndarray) -> np.ndarray:
    """Index of the nearest timestamp for each reference time (ties: earlier)."""
    if timestamps.size == 1:
        return np.zeros(t_ref.size, dtype=int)
    pos = np.clip(np.searchsorted(timestamps, t_ref), 1, timestamps.size - 1)
    left = pos - 1
    choose_left = (t_ref - timestamps[left]) <= (timestamps[pos] - t_ref)
    return np.where(choose_left, left, pos)


def align_recording(recording: Recording) -> AlignedTrajectory:
    """Resample a sealed recording onto the reference camera's timestamps.

    Reference times are trimmed to the intersection of every topic's and
    every camera's span. Scalar channels use interp_linear, quaternion blocks
    interp_quaternion; non-reference camera frames are paired to the nearest
    reference time without pixel interpolation. Per-stream max source gaps
    are reported in stats."""
    ref_cam = recording.manifest.reference_camera
    if ref_cam not in recording.frames or len(recording.frames[ref_cam]) == 0:
        raise EmptyTopic(f"frames/{ref_cam}")
    for name, buf in recording.topics.items():
        if buf.timestamps.size == 0:
            raise EmptyTopic(name)
    for cam, fs in recording.frames.items():
        if len(fs) == 0:
            raise EmptyTopic(f"frames/{cam}")

    spans = [(b.timestamps[0], b.timestamps[-1]) for b in recording.topics.values()]
    spans += [(f.timestamps[0], f.timestamps[-1]) for f in recording.frames.values()]
    lo = max(s for s, _ in spans)
    hi = min(e for _, e in spans)
    ref_all = recording.frames[ref_cam].timestamps
    keep = np.flatnonzero((ref_all >= lo) & (ref_all <= hi))
    if keep.size == 0:
        raise NoOverlap("reference frames share no window with all topics")
    t_ref = ref_all[keep].copy()

    topics, quat_blocks, stats = {}, {}, {}
    for name in sorted(recording.topics):
        buf = recording.topics[name]
        matrix = interp_linear(buf, t_ref)
        for a, b in buf.quat_blocks:
            sub = StreamBuffer(name, buf.timestamps, buf.values[:, a:b])
            matrix[:, a:b] = interp_quaternion(sub, t_ref)
        topics[name] = matrix
        quat_blocks[name] = tuple(buf.quat_blocks)
        if buf.timestamps.size > 1:
            stats[name] = float(np.max(np.diff(buf.timestamps)))
        else:
            stats[name] = 0.0

    frames = {}
    for cam in sorted(recording.frames):
        fs = recording.frames[cam]
        if cam == ref_cam:
            idx = keep
        else:
            idx = nearest_indices(fs.timestamps, t_ref)
        frames[cam] = FrameStream(
            camera_id=cam,
            timestamps=fs.timestamps[idx].copy(),
            rgb=[fs.rgb[i] for i in idx],
            depth=[fs.depth[i] for i in idx],
        )
        if fs.timestamps.size > 1:
            stats[f"frames/{cam}"] = float(np.max(np.diff(fs.timestamps)))
        else:
            stats[f"frames/{cam}"] = 0.0

    return AlignedTrajectory(
        manifest=recording.manifest,
        reference_timestamps=t_ref,
        topics=topics,
        quat_blocks=quat_blocks,
        frames=frames,
        stats=stats,
    )
