"""Recording buffers and the on-disk ``.watr`` dataset container.

A container is a directory ``<name>.watr/`` (format ``wheelarm-dataset/1``):

    manifest.json               session metadata
    index.json                  topic shapes, timestamp columns, quaternion
                                column blocks, frame listings
    topics/<topic>.f64          20-byte header (magic, rows, cols, payload
                                CRC32C) + row-major little-endian float64
    frames/<cam>/<i>.png        8-bit RGB frames
    frames/<cam>/depth_<i>.f32  raw little-endian float32 depth rasters
    checksums.json              chunked CRC32C sidecar covering every file

Reads verify the sidecar before parsing anything else, so a single corrupted
byte anywhere is detected and reported with its file and byte offset, and
numeric payloads plus strings round-trip bit exactly.
"""

from __future__ import annotations

import json
import shutil
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .accel import crc32c
from .errors import CorruptContainer, SchemaError

DATASET_FORMAT = "wheelarm-dataset/1"
REFERENCE_CAMERA = "chassis"
_MAGIC = b"WATRF64\x00"
_HEADER = struct.Struct("<III")
_CHUNK = 4096

# channel layout of the standard topics (timestamps stored separately);
# quat blocks are (start, stop) column ranges holding x,y,z,w quaternions
RAW_SCHEMA = {
    "joint_states": {"channels": 14, "quat_blocks": ()},
    "ee_pose": {"channels": 7, "quat_blocks": ((3, 7),)},
    "base_pose": {"channels": 7, "quat_blocks": ((3, 7),)},
    "base_velocities": {"channels": 2, "quat_blocks": ()},
    "wheel_states": {"channels": 8, "quat_blocks": ()},
    "gripper_state": {"channels": 2, "quat_blocks": ()},
    "imu": {"channels": 6, "quat_blocks": ()},
}


@dataclass
class SessionManifest:
    session_id: str
    file_name: str
    instruction: str
    task_label: str
    start_time: float = 0.0
    end_time: float = 0.0
    seed: int = 0
    reference_camera: str = REFERENCE_CAMERA
    jitter_ms: float = 2.0

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "file_name": self.file_name,
            "instruction": self.instruction,
            "task_label": self.task_label,
            "start_time": self.start_time,
            "end_time": self.end_time,
            "seed": self.seed,
            "reference_camera": self.reference_camera,
            "jitter_ms": self.jitter_ms,
        }

    @staticmethod
    def from_dict(data: dict) -> "SessionManifest":
        try:
            return SessionManifest(
                session_id=str(data["session_id"]),
                file_name=str(data["file_name"]),
                instruction=str(data["instruction"]),
                task_label=str(data["task_label"]),
                start_time=float(data["start_time"]),
                end_time=float(data["end_time"]),
                seed=int(data["seed"]),
                reference_camera=str(data.get("reference_camera", REFERENCE_CAMERA)),
                jitter_ms=float(data.get("jitter_ms", 2.0)),
            )
        except KeyError as exc:
            raise SchemaError(f"manifest.{exc.args[0]}", "missing field") from exc


@dataclass(eq=False)
class StreamBuffer:
    """One topic: strictly increasing timestamps plus a (rows, channels) matrix."""

    topic: str
    timestamps: np.ndarray
    values: np.ndarray
    quat_blocks: tuple = ()


@dataclass(eq=False)
class FrameStream:
    """One camera's frames; rgb and depth lists are index-aligned with timestamps."""

    camera_id: str
    timestamps: np.ndarray
    rgb: list = field(default_factory=list)
    depth: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rgb)


@dataclass(eq=False)
class Recording:
    """A sealed raw recording: asynchronous topics plus per-camera frames."""

    manifest: SessionManifest
    topics: dict
    frames: dict

    @property
    def sample_count(self) -> int:
        n = sum(buf.timestamps.size for buf in self.topics.values())
        return n + sum(len(fs) for fs in self.frames.values())


@dataclass(eq=False)
class AlignedTrajectory:
    """All topics resampled onto the reference camera's (trimmed) timestamps."""

    manifest: SessionManifest
    reference_timestamps: np.ndarray
    topics: dict
    quat_blocks: dict
    frames: dict
    stats: dict

    @property
    def rows(self) -> int:
        return int(self.reference_timestamps.size)


class Recorder:
    """Buffers topic samples during a session; seal() freezes a Recording."""

    def __init__(self, manifest: SessionManifest):
        self.manifest = manifest
        self._samples: dict = {}
        self._frames: dict = {}

    def add_sample(self, topic: str, timestamp: float, values) -> None:
        values = np.asarray(values, dtype=float).reshape(-1)
        ts, rows = self._samples.setdefault(topic, ([], []))
        if ts and timestamp <= ts[-1]:
            raise ValueError(
                f"topic '{topic}': timestamp {timestamp} not after {ts[-1]}"
            )
        if rows and rows[-1].size != values.size:
            raise ValueError(
                f"topic '{topic}': expected {rows[-1].size} channels, got {values.size}"
            )
        ts.append(float(timestamp))
        rows.append(values)

    def add_frame(self, camera_id: str, timestamp: float, rgb, depth) -> None:
        ts, rgbs, depths = self._frames.setdefault(camera_id, ([], [], []))
        if ts and timestamp <= ts[-1]:
            raise ValueError(
                f"camera '{camera_id}': timestamp {timestamp} not after {ts[-1]}"
            )
        ts.append(float(timestamp))
        rgbs.append(np.ascontiguousarray(rgb, dtype=np.uint8))
        depths.append(np.ascontiguousarray(depth, dtype=np.float32))

    @property
    def sample_count(self) -> int:
        n = sum(len(ts) for ts, _ in self._samples.values())
        return n + sum(len(ts) for ts, _, _ in self._frames.values())

    def seal(self) -> Recording:
        topics = {}
        for topic in sorted(self._samples):
            ts, rows = self._samples[topic]
            schema = RAW_SCHEMA.get(topic, {})
            topics[topic] = StreamBuffer(
                topic=topic,
                timestamps=np.array(ts, dtype=float),
                values=np.vstack(rows),
                quat_blocks=tuple(schema.get("quat_blocks", ())),
            )
        frames = {}
        for cam in sorted(self._frames):
            ts, rgbs, depths = self._frames[cam]
            frames[cam] = FrameStream(cam, np.array(ts, dtype=float), rgbs, depths)
        return Recording(manifest=self.manifest, topics=topics, frames=frames)


# --- binary topic files -----------------------------------------------------------

def _write_f64(path: Path, matrix: np.ndarray) -> None:
    matrix = np.ascontiguousarray(matrix, dtype="<f8")
    rows, cols = matrix.shape
    payload = matrix.tobytes()
    path.write_bytes(_MAGIC + _HEADER.pack(rows, cols, int(crc32c(payload))) + payload)


def _read_f64(path: Path, rel: str) -> np.ndarray:
    data = path.read_bytes()
    head = len(_MAGIC) + _HEADER.size
    if len(data) < head or data[: len(_MAGIC)] != _MAGIC:
        raise CorruptContainer(rel, 0, "bad magic or truncated header")
    rows, cols, crc = _HEADER.unpack(data[len(_MAGIC) : head])
    payload = data[head:]
    expected = rows * cols * 8
    if len(payload) != expected:
        raise CorruptContainer(
            rel, head + min(len(payload), expected), "payload size mismatch"
        )
    if int(crc32c(payload)) != crc:
        raise CorruptContainer(rel, head, "payload checksum mismatch")
    return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).copy()


# --- sidecar ----------------------------------------------------------------------

def _chunk_crcs(data: bytes) -> list:
    return [
        int(crc32c(data[i : i + _CHUNK])) for i in range(0, len(data), _CHUNK)
    ]


def _write_sidecar(root: Path) -> None:
    files = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            data = path.read_bytes()
            files[path.relative_to(root).as_posix()] = {
                "size": len(data),
                "crc32c": _chunk_crcs(data),
            }
    _write_json(root / "checksums.json", {"chunk_size": _CHUNK, "files": files})


def _verify_sidecar(root: Path) -> None:
    sidecar = root / "checksums.json"
    if not sidecar.is_file():
        raise CorruptContainer("checksums.json", 0, "sidecar missing")
    try:
        table = json.loads(sidecar.read_bytes())
        chunk = int(table["chunk_size"])
        files = table["files"]
        if chunk <= 0 or not isinstance(files, dict):
            raise ValueError("bad sidecar structure")
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptContainer("checksums.json", 0, f"unreadable sidecar: {exc}")
    actual = {
        p.relative_to(root).as_posix()
        for p in root.rglob("*")
        if p.is_file() and p != sidecar
    }
    for rel in sorted(set(files) - actual):
        raise CorruptContainer(rel, 0, "listed in sidecar but missing")
    for rel in sorted(actual - set(files)):
        raise CorruptContainer(rel, 0, "not covered by sidecar")
    for rel in sorted(files):
        entry = files[rel]
        data = (root / rel).read_bytes()
        try:
            size, crcs = int(entry["size"]), list(entry["crc32c"])
        except (KeyError, TypeError) as exc:
            raise CorruptContainer("checksums.json", 0, f"bad entry for {rel}: {exc}")
        if len(data) != size:
            raise CorruptContainer(
                rel, min(len(data), size), f"size {len(data)}, sidecar says {size}"
            )
        got = _chunk_crcs(data)
        if len(got) != len(crcs):
            raise CorruptContainer("checksums.json", 0, f"chunk count for {rel}")
        for i, (a, b) in enumerate(zip(got, crcs)):
            if a != b:
                raise CorruptContainer(rel, i * _CHUNK, "checksum mismatch")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


# --- container write --------------------------------------------------------------

def container_name(manifest: SessionManifest, kind: str) -> str:
    name = manifest.file_name
    if not name or name != Path(name).name or name.startswith("."):
        raise SchemaError("manifest.file_name", f"not a valid container name: {name!r}")
    return name + (".aligned.watr" if kind == "aligned" else ".watr")


def _write_frames(root: Path, frames: dict) -> dict:
    listing = {}
    for cam in sorted(frames):
        fs = frames[cam]
        cam_dir = root / "frames" / cam
        cam_dir.mkdir(parents=True)
        height = width = 0
        for i, (rgb, depth) in enumerate(zip(fs.rgb, fs.depth)):
            height, width = rgb.shape[0], rgb.shape[1]
            Image.fromarray(rgb, "RGB").save(cam_dir / f"{i:06d}.png", format="PNG")
            (cam_dir / f"depth_{i:06d}.f32").write_bytes(
                np.ascontiguousarray(depth, dtype="<f4").tobytes()
            )
        listing[cam] = {
            "count": len(fs),
            "height": height,
            "width": width,
            "timestamps": [float(t) for t in fs.timestamps],
        }
    return listing


def write_container(obj, out_dir) -> Path:
    """Serialize a Recording or AlignedTrajectory; returns the container path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if isinstance(obj, Recording):
        kind = "raw"
    elif isinstance(obj, AlignedTrajectory):
        kind = "aligned"
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    root = out_dir / container_name(obj.manifest, kind)
    if root.exists():
        shutil.rmtree(root)
    (root / "topics").mkdir(parents=True)

    index = {"format": DATASET_FORMAT, "kind": kind, "topics": {}}
    if kind == "raw":
        for name in sorted(obj.topics):
            buf = obj.topics[name]
            matrix = np.column_stack([buf.timestamps, buf.values])
            _write_f64(root / "topics" / f"{name}.f64", matrix)
            index["topics"][name] = {
                "rows": int(matrix.shape[0]),
                "cols": int(matrix.shape[1]),
                "timestamp_column": 0,
                "quat_blocks": [[a + 1, b + 1] for a, b in buf.quat_blocks],
            }
    else:
        ref = np.asarray(obj.reference_timestamps, dtype=float).reshape(-1, 1)
        _write_f64(root / "topics" / "reference_timestamps.f64", ref)
        index["topics"]["reference_timestamps"] = {
            "rows": int(ref.shape[0]),
            "cols": 1,
            "timestamp_column": 0,
            "quat_blocks": [],
        }
        for name in sorted(obj.topics):
            matrix = np.asarray(obj.topics[name], dtype=float)
            _write_f64(root / "topics" / f"{name}.f64", matrix)
            index["topics"][name] = {
                "rows": int(matrix.shape[0]),
                "cols": int(matrix.shape[1]),
                "timestamp_column": None,
                "quat_blocks": [[a, b] for a, b in obj.quat_blocks.get(name, ())],
            }
        index["alignment_stats"] = {k: float(v) for k, v in sorted(obj.stats.items())}

    index["frames"] = _write_frames(root, obj.frames)
    _write_json(root / "index.json", index)
    _write_json(root / "manifest.json", obj.manifest.to_dict())
    _write_sidecar(root)
    return root


# --- container read ---------------------------------------------------------------

def _read_frames(root: Path, listing: dict) -> dict:
    frames = {}
    for cam in sorted(listing):
        entry = listing[cam]
        cam_dir = root / "frames" / cam
        h, w = int(entry["height"]), int(entry["width"])
        rgbs, depths = [], []
        for i in range(int(entry["count"])):
            with Image.open(cam_dir / f"{i:06d}.png") as img:
                rgbs.append(np.asarray(img.convert("RGB"), dtype=np.uint8))
            raw = (cam_dir / f"depth_{i:06d}.f32").read_bytes()
            if len(raw) != h * w * 4:
                raise CorruptContainer(
                    f"frames/{cam}/depth_{i:06d}.f32", len(raw), "depth size mismatch"
                )
            depths.append(np.frombuffer(raw, dtype="<f4").reshape(h, w).copy())
        frames[cam] = FrameStream(
            cam, np.array(entry["timestamps"], dtype=float), rgbs, depths
        )
    return frames


def read_container(path):
    """Verify checksums, then load a Recording or AlignedTrajectory."""
    root = Path(path)
    if not root.is_dir():
        raise CorruptContainer(str(path), 0, "not a container directory")
    _verify_sidecar(root)
    index = json.loads((root / "index.json").read_text())
    if index.get("format") != DATASET_FORMAT:
        raise SchemaError("index.format", f"expected {DATASET_FORMAT}")
    manifest = SessionManifest.from_dict(json.loads((root / "manifest.json").read_text()))
    kind = index.get("kind")
    matrices = {}
    for name, entry in index["topics"].items():
        rel = f"topics/{name}.f64"
        matrix = _read_f64(root / rel, rel)
        if matrix.shape != (int(entry["rows"]), int(entry["cols"])):
            raise SchemaError(f"index.topics.{name}", "shape disagrees with file")
        matrices[name] = (matrix, entry)
    frames = _read_frames(root, index.get("frames", {}))

    if kind == "raw":
        topics = {}
        for name, (matrix, entry) in matrices.items():
            topics[name] = StreamBuffer(
                topic=name,
                timestamps=matrix[:, 0].copy(),
                values=matrix[:, 1:].copy(),
                quat_blocks=tuple((a - 1, b - 1) for a, b in entry["quat_blocks"]),
            )
        return Recording(manifest=manifest, topics=topics, frames=frames)
    if kind == "aligned":
        if "reference_timestamps" not in matrices:
            raise SchemaError("index.topics", "aligned container lacks reference_timestamps")
        ref = matrices.pop("reference_timestamps")[0][:, 0].copy()
        topics = {name: matrix for name, (matrix, _) in matrices.items()}
        quat_blocks = {
            name: tuple((a, b) for a, b in entry["quat_blocks"])
            for name, (_, entry) in matrices.items()
        }
        return AlignedTrajectory(
            manifest=manifest,
            reference_timestamps=ref,
            topics=topics,
            quat_blocks=quat_blocks,
            frames=frames,
            stats={k: float(v) for k, v in index.get("alignment_stats", {}).items()},
        )
    raise SchemaError("index.kind", f"unknown kind {kind!r}")
