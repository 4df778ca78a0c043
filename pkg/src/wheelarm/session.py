"""Teleop session service: command handling, multi-rate topic fan-out to the
recorder, session lifecycle, and deterministic script replay.

The simulator runs on a fixed 60 Hz clock (tick k is t = k/60). While a
session is active, topics publish at independent rates: the 60 Hz state
topics every tick, IMU on the absolute 100 Hz grid, cameras every 6th tick.
Each recorded timestamp gets per-topic uniform jitter of +-2 ms drawn from a
generator seeded by (manifest seed, topic name hash), which keeps streams
asynchronous yet bit-reproducible. Jitter stays below every half-period, so
per-topic timestamps remain strictly increasing.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .accel import crc32c
from .errors import (
    IkRejected,
    JointLimitViolation,
    MalformedCommand,
    MaxIterationsExceeded,
    NoActiveSession,
    OutOfReach,
    SchemaError,
    ScriptError,
    SessionAlreadyActive,
    WheelArmError,
)
from .recorder import Recorder, Recording, SessionManifest, write_container
from .render import render_rgbd
from .robot import VelocityCommand, WheelArm, synthesize_imu
from .scene import GRASP_CLOSE_THRESHOLD, Scene, default_scene, held_drawer, try_grasp
from .scene import actuate_drawer
from .se3 import quat_from_matrix

SIM_RATE_HZ = 60
IMU_RATE_HZ = 100
CAMERA_RATE_HZ = 10
JITTER_S = 0.002

SCALAR_TOPICS = (
    "joint_states",
    "ee_pose",
    "base_pose",
    "base_velocities",
    "wheel_states",
    "gripper_state",
)

GRIPPER_ACTIONS = ("open_step", "close_step")
SCRIPT_FORMAT = "wheelarm-script/1"


@dataclass(frozen=True)
class TeleopCommand:
    """One operator input; exactly the fields for its kind are set."""

    kind: str
    axis: str = None
    direction: int = None
    gripper_action: str = None
    linear: float = None
    angular: float = None

    @staticmethod
    def from_dict(data) -> "TeleopCommand":
        if not isinstance(data, dict):
            raise MalformedCommand(f"command must be an object, got {type(data).__name__}")
        kind = data.get("kind")
        if kind == "ee_increment":
            return TeleopCommand(
                kind=kind, axis=data.get("axis"), direction=data.get("direction")
            )
        if kind == "gripper":
            action = data.get("action")
            if action not in GRIPPER_ACTIONS:
                raise MalformedCommand(f"gripper action must be one of {GRIPPER_ACTIONS}")
            return TeleopCommand(kind=kind, gripper_action=action)
        if kind == "base_velocity":
            try:
                linear = float(data["linear"])
                angular = float(data["angular"])
            except (KeyError, TypeError, ValueError) as exc:
                raise MalformedCommand("base_velocity needs numeric linear and angular")
            return TeleopCommand(kind=kind, linear=linear, angular=angular)
        if kind == "stop":
            return TeleopCommand(kind=kind)
        raise MalformedCommand(f"unknown command kind {kind!r}")

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "ee_increment":
            out["axis"] = self.axis
            out["direction"] = self.direction
        elif self.kind == "gripper":
            out["action"] = self.gripper_action
        elif self.kind == "base_velocity":
            out["linear"] = self.linear
            out["angular"] = self.angular
        return out


@dataclass(frozen=True)
class TopicSample:
    topic: str
    timestamp: float
    payload: object


def _topic_rng(seed: int, topic: str) -> np.random.Generator:
    # stable per-topic stream id (never Python's salted hash)
    return np.random.default_rng([seed & 0x7FFFFFFF, crc32c(topic.encode())])


class TeleopSession:
    """Single-writer simulation service; see module docstring for the clock.

    All mutation goes through handle_command / step / start_session /
    end_session, which the server calls from one thread."""

    def __init__(self, robot_description=None, scene: Scene = None, out_dir=None):
        self.robot = WheelArm(robot_description)
        self.scene = scene if scene is not None else default_scene()
        self.rate_hz = SIM_RATE_HZ
        self.dt = 1.0 / SIM_RATE_HZ
        self.tick = 0
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.manifest: SessionManifest = None
        self.recorder: Recorder = None
        self.published_count = 0
        self._command_counter = 0
        self._jitter = {}
        self._imu_noise_rng = None
        self._imu_next_m = 0

    # --- clock ------------------------------------------------------------------

    @property
    def time(self) -> float:
        return self.tick / self.rate_hz

    @property
    def session_active(self) -> bool:
        return self.recorder is not None

    # --- commands ---------------------------------------------------------------

    def handle_command(self, cmd) -> dict:
        """Apply one teleop command; domain failures come back in the ack
        with the state untouched. Acks carry the arrival index."""
        self._command_counter += 1
        ack = {
            "ok": True,
            "command_index": self._command_counter,
            "error": None,
            "message": "",
        }
        try:
            command = cmd if isinstance(cmd, TeleopCommand) else TeleopCommand.from_dict(cmd)
            extras = self._apply(command)
        except WheelArmError as exc:
            ack.update(ok=False, error=exc.taxonomy, message=str(exc))
            return ack
        if extras:
            ack.update(extras)
        return ack

    def _apply(self, cmd: TeleopCommand):
        if cmd.kind == "base_velocity":
            self.robot.set_velocity(VelocityCommand(cmd.linear, cmd.angular))
            return None
        if cmd.kind == "stop":
            self.robot.stop()
            return None
        if cmd.kind == "gripper":
            self.robot.gripper(cmd.gripper_action)
            result = try_grasp(self.scene, self.robot.arm)
            return {"grasp": result.status, "object_id": result.object_id}
        if cmd.kind == "ee_increment":
            ee_before = self.robot.arm.ee_pose_world
            try:
                self.robot.ee_increment(cmd.axis, cmd.direction)
            except (MaxIterationsExceeded, JointLimitViolation) as exc:
                raise IkRejected(f"no reachable solution: {exc}") from exc
            extras = {}
            displacement = self._drag_drawer(ee_before)
            if displacement is not None:
                extras["drawer_displacement"] = displacement
            return extras
        raise MalformedCommand(f"unknown command kind {cmd.kind!r}")

    def _drag_drawer(self, ee_before):
        """A closed, empty gripper near an articulated handle drags it: the
        EE displacement projects onto the drawer axis."""
        arm = self.robot.arm
        if arm.gripper_left < GRASP_CLOSE_THRESHOLD or self.scene.attachment is not None:
            return None
        drawer = held_drawer(self.scene, arm.ee_pose_world)
        if drawer is None:
            return None
        axis_world = self.scene.object_pose(drawer.id).rotation @ np.asarray(
            drawer.articulation.axis, dtype=float
        )
        delta = float((arm.ee_pose_world.translation - ee_before.translation) @ axis_world)
        try:
            return actuate_drawer(self.scene, arm.ee_pose_world, delta)
        except OutOfReach:
            return None

    # --- session lifecycle --------------------------------------------------------

    def start_session(self, manifest: SessionManifest) -> SessionManifest:
        if self.recorder is not None:
            raise SessionAlreadyActive("end the current session first")
        if not manifest.instruction.strip():
            raise SchemaError("manifest.instruction", "must be non-empty at session start")
        manifest = replace(
            manifest, start_time=self.time, end_time=self.time, jitter_ms=JITTER_S * 1e3
        )
        self.manifest = manifest
        self.recorder = Recorder(manifest)
        self.published_count = 0
        cameras = tuple(f"frames/{cam}" for cam in sorted(self.scene.cameras))
        self._jitter = {
            topic: _topic_rng(manifest.seed, topic)
            for topic in SCALAR_TOPICS + ("imu",) + cameras
        }
        self._imu_noise_rng = _topic_rng(manifest.seed, "imu-noise")
        # next absolute 100 Hz grid index at least half a period after start
        self._imu_next_m = int(np.ceil(IMU_RATE_HZ * self.time + 0.5 - 1e-9))
        # initial state samples so even an empty session covers every topic
        t = self.time
        for topic, vec in self._scalar_samples():
            self._record(topic, t, vec)
        self._record("imu", t, self._imu_vector(self.robot.base, self.robot.base, t))
        self._record_frames(t)
        return manifest

    def end_session(self):
        """Seal the recording; returns (recording, container_path_or_None)."""
        if self.recorder is None:
            raise NoActiveSession("no session to end")
        self.manifest = replace(self.manifest, end_time=self.time)
        self.recorder.manifest = self.manifest
        recording = self.recorder.seal()
        self.recorder = None
        self._jitter = {}
        path = None
        if self.out_dir is not None:
            path = write_container(recording, self.out_dir)
        return recording, path

    # --- stepping -----------------------------------------------------------------

    def step(self) -> None:
        """Advance one fixed tick and publish due topics to the recorder."""
        prev_base = self.robot.base
        self.tick += 1
        self.robot.tick(self.dt)
        self.scene.sync_attachment(self.robot.arm.ee_pose_world)
        if self.recorder is None:
            return
        t = self.time
        for topic, vec in self._scalar_samples():
            self._record(topic, t, vec)
        while self._imu_next_m <= IMU_RATE_HZ * t + 1e-9:
            tm = self._imu_next_m / IMU_RATE_HZ
            self._record("imu", tm, self._imu_vector(prev_base, self.robot.base, tm))
            self._imu_next_m += 1
        if self.tick % (self.rate_hz // CAMERA_RATE_HZ) == 0:
            self._record_frames(t)

    def run_ticks(self, n: int) -> None:
        for _ in range(n):
            self.step()

    # --- publishing internals -------------------------------------------------------

    def _scalar_samples(self):
        arm, base = self.robot.arm, self.robot.base
        ee = arm.ee_pose_world
        return (
            ("joint_states", np.concatenate([arm.q, arm.qdot])),
            ("ee_pose", np.concatenate([ee.translation, quat_from_matrix(ee.rotation)])),
            (
                "base_pose",
                np.concatenate(
                    [base.pose_world.translation, quat_from_matrix(base.pose_world.rotation)]
                ),
            ),
            ("base_velocities", np.array([base.linear_vel, base.angular_vel])),
            ("wheel_states", np.concatenate([base.wheel_angles, base.wheel_velocities])),
            ("gripper_state", np.array([arm.gripper_left, arm.gripper_right])),
        )

    def _imu_vector(self, prev_base, next_base, timestamp: float) -> np.ndarray:
        seed = int(self._imu_noise_rng.integers(2**63))
        reading = synthesize_imu(prev_base, next_base, self.dt, noise_seed=seed, timestamp=timestamp)
        return np.concatenate([reading.angular_velocity, reading.linear_acceleration])

    def _record(self, topic: str, t_nominal: float, vec: np.ndarray) -> None:
        jitter = float(self._jitter[topic].uniform(-JITTER_S, JITTER_S))
        self.recorder.add_sample(topic, t_nominal + jitter, vec)
        self.published_count += 1

    def camera_frames(self) -> dict:
        return {"chassis": self.robot.base.pose_world, "wrist": self.robot.arm.ee_pose_world}

    def render_camera(self, camera_id: str, timestamp: float = None):
        cam = self.scene.cameras[camera_id]
        t = self.time if timestamp is None else timestamp
        return render_rgbd(self.scene, cam, self.camera_frames(), timestamp=t)

    def _record_frames(self, t: float) -> None:
        for cam in sorted(self.scene.cameras):
            frame = self.render_camera(cam, t)
            jitter = float(self._jitter[f"frames/{cam}"].uniform(-JITTER_S, JITTER_S))
            self.recorder.add_frame(cam, t + jitter, frame.rgb, frame.depth)
            self.published_count += 1

    # --- state snapshot for the UI ---------------------------------------------------

    def state_snapshot(self) -> dict:
        arm, base = self.robot.arm, self.robot.base
        drawer = next((o for o in self.scene.objects if o.articulation is not None), None)
        return {
            "time": self.time,
            "tick": self.tick,
            "recording": self.session_active,
            "base": {
                "x": float(base.pose_world.translation[0]),
                "y": float(base.pose_world.translation[1]),
                "yaw": float(base.yaw),
                "linear": float(base.linear_vel),
                "angular": float(base.angular_vel),
            },
            "ee": {
                "position": [float(v) for v in arm.ee_pose_world.translation],
                "quaternion": [float(v) for v in quat_from_matrix(arm.ee_pose_world.rotation)],
            },
            "gripper": [float(arm.gripper_left), float(arm.gripper_right)],
            "attached": self.scene.attached_ids(),
            "drawer_displacement": (
                float(drawer.articulation.displacement) if drawer else 0.0
            ),
            "objects": {
                obj.id: [float(v) for v in self.scene.object_pose(obj.id).translation]
                for obj in self.scene.objects
            },
        }


# --- scripts --------------------------------------------------------------------

@dataclass
class Script:
    manifest: SessionManifest
    duration: float
    commands: list  # [(t, TeleopCommand)], non-decreasing t


def parse_script(data: dict) -> Script:
    """Validate a script document; ScriptError lines are 1-based command
    positions in the commands array."""
    if not isinstance(data, dict) or data.get("format") != SCRIPT_FORMAT:
        raise ScriptError(f"format must be {SCRIPT_FORMAT!r}")
    try:
        manifest_dict = dict(data["manifest"])
        manifest_dict.setdefault("start_time", 0.0)
        manifest_dict.setdefault("end_time", 0.0)
        manifest = SessionManifest.from_dict(manifest_dict)
        duration = float(data["duration"])
        raw_commands = list(data["commands"])
    except (KeyError, TypeError, ValueError, SchemaError) as exc:
        raise ScriptError(f"bad script document: {exc}")
    if duration <= 0:
        raise ScriptError("duration must be positive")
    commands = []
    last_t = 0.0
    for i, entry in enumerate(raw_commands):
        line = i + 1
        if not isinstance(entry, dict) or "t" not in entry:
            raise ScriptError("command entry needs a 't' field", line=line)
        try:
            t = float(entry["t"])
            cmd = TeleopCommand.from_dict({k: v for k, v in entry.items() if k != "t"})
        except (TypeError, ValueError) as exc:
            raise ScriptError(str(exc), line=line)
        except MalformedCommand as exc:
            raise ScriptError(str(exc), line=line)
        if t < 0.0:
            raise ScriptError("command time must be non-negative", line=line)
        if t < last_t:
            raise ScriptError("command times must be non-decreasing", line=line)
        if t > duration + 1e-9:
            raise ScriptError("command time beyond script duration", line=line)
        last_t = t
        commands.append((t, cmd))
    return Script(manifest=manifest, duration=duration, commands=commands)


def load_script(path) -> Script:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ScriptError(f"cannot read script {path}: {exc}")
    return parse_script(data)


def script_to_dict(script: Script) -> dict:
    return {
        "format": SCRIPT_FORMAT,
        "manifest": {
            "session_id": script.manifest.session_id,
            "file_name": script.manifest.file_name,
            "instruction": script.manifest.instruction,
            "task_label": script.manifest.task_label,
            "seed": script.manifest.seed,
        },
        "duration": script.duration,
        "commands": [{"t": t, **cmd.to_dict()} for t, cmd in script.commands],
    }


@dataclass
class ReplayResult:
    recording: Recording
    container_path: Path
    acks: list


def scripted_replay(script, out_dir=None, robot_description=None, scene=None) -> ReplayResult:
    """Replay a script on a fresh service as fast as possible.

    Commands with t <= the current tick time apply, in file order, before
    that tick advances; identical seeds give byte-identical containers."""
    if not isinstance(script, Script):
        script = load_script(script)
    session = TeleopSession(robot_description=robot_description, scene=scene, out_dir=out_dir)
    session.start_session(script.manifest)
    pending = deque(script.commands)
    acks = []
    n_ticks = round(script.duration * session.rate_hz)
    for _ in range(n_ticks):
        now = session.time
        while pending and pending[0][0] <= now + 1e-9:
            acks.append(session.handle_command(pending.popleft()[1]))
        session.step()
    while pending:  # commands landing exactly on the final boundary
        acks.append(session.handle_command(pending.popleft()[1]))
    recording, path = session.end_session()
    return ReplayResult(recording=recording, container_path=path, acks=acks)
