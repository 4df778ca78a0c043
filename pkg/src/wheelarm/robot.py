"""The combined robot: differential-drive base, mounted 7-DOF arm,
two-finger gripper, and synthesized IMU, stepped on a fixed clock.

The base is a unicycle integrated in closed form (exact arcs, not Euler),
so replaying the same command script always lands on the same floats.
States are immutable snapshots; the ``WheelArm`` class is the single
writer that advances them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import MalformedCommand, SchemaError
from .se3 import (
    BodyTwist,
    ChainDescription,
    RigidTransform,
    body_jacobian,
    default_chain,
    ik_newton_raphson,
    poe_fk,
    so3_exp,
)

GRAVITY = 9.81
IMU_GYRO_SIGMA = 0.005
IMU_ACCEL_SIGMA = 0.02
_OMEGA_STRAIGHT = 1e-9  # below this, the arc degenerates to a line

EE_AXES = ("x", "y", "z", "roll", "pitch", "yaw")
_AXIS_INDEX = {"x": 0, "y": 1, "z": 2, "roll": 0, "pitch": 1, "yaw": 2}


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


def yaw_rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def yaw_of(T: RigidTransform) -> float:
    return math.atan2(T.rotation[1, 0], T.rotation[0, 0])


@dataclass(frozen=True)
class VelocityCommand:
    """Body-frame drive command: forward m/s, counterclockwise rad/s."""

    linear: float = 0.0
    angular: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.linear) and math.isfinite(self.angular)):
            raise MalformedCommand("velocity command must be finite")


@dataclass(frozen=True)
class WheelchairState:
    """Planar base pose plus wheel odometry.

    Wheel order: left drive, right drive, left caster, right caster.
    Casters mirror their drive wheel. The pose stays a pure yaw rotation
    at fixed height for all time."""

    pose_world: RigidTransform
    linear_vel: float
    angular_vel: float
    wheel_angles: np.ndarray
    wheel_velocities: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "wheel_angles", _frozen(self.wheel_angles))
        object.__setattr__(self, "wheel_velocities", _frozen(self.wheel_velocities))

    @staticmethod
    def initial(x: float = 0.0, y: float = 0.0, theta: float = 0.0) -> "WheelchairState":
        return WheelchairState(
            pose_world=RigidTransform(yaw_rotation(theta), np.array([x, y, 0.0])),
            linear_vel=0.0,
            angular_vel=0.0,
            wheel_angles=np.zeros(4),
            wheel_velocities=np.zeros(4),
        )

    @property
    def yaw(self) -> float:
        return yaw_of(self.pose_world)

    def velocity_world(self) -> np.ndarray:
        th = self.yaw
        return self.linear_vel * np.array([math.cos(th), math.sin(th), 0.0])


@dataclass(frozen=True)
class ArmState:
    """Arm snapshot; ``ee_pose_world`` is kept consistent with
    mount_pose_world o poe_fk(chain, q) by every operation."""

    q: np.ndarray
    qdot: np.ndarray
    ee_pose_world: RigidTransform
    ee_twist: BodyTwist
    gripper_left: float
    gripper_right: float

    def __post_init__(self):
        object.__setattr__(self, "q", _frozen(self.q))
        object.__setattr__(self, "qdot", _frozen(self.qdot))


@dataclass(frozen=True)
class ImuReading:
    angular_velocity: np.ndarray  # body frame, rad/s
    linear_acceleration: np.ndarray  # body frame, m/s^2, gravity-inclusive
    timestamp: float

    def __post_init__(self):
        object.__setattr__(self, "angular_velocity", _frozen(self.angular_velocity))
        object.__setattr__(self, "linear_acceleration", _frozen(self.linear_acceleration))


@dataclass(frozen=True)
class RobotDescription:
    """Geometry and actuation config for the wheelchair + arm."""

    chain: ChainDescription
    wheel_radius: float = 0.15
    track_width: float = 0.55
    mount_pose: RigidTransform = None  # chassis frame -> arm base frame
    gripper_range: tuple = (0.0, 0.8)
    gripper_step: float = 0.05
    ee_translation_step: float = 0.025
    ee_rotation_step: float = 0.05
    max_linear: float = 1.0
    max_angular: float = 1.5
    sim_rate_hz: int = 60
    initial_q: np.ndarray = None

    def __post_init__(self):
        if self.mount_pose is None:
            object.__setattr__(self, "mount_pose", RigidTransform.identity())
        if self.initial_q is None:
            object.__setattr__(self, "initial_q", np.zeros(self.chain.n))
        object.__setattr__(self, "initial_q", _frozen(self.initial_q))
        if self.wheel_radius <= 0 or self.track_width <= 0:
            raise SchemaError("wheel_radius_m", "wheel geometry must be positive")
        if not self.gripper_range[0] < self.gripper_range[1]:
            raise SchemaError("gripper_range_rad", "range must be increasing")

    @staticmethod
    def from_dict(data: dict, chain: ChainDescription = None) -> "RobotDescription":
        if data.get("format") != "wheelarm-robot/1":
            raise SchemaError("format", f"expected 'wheelarm-robot/1', got {data.get('format')!r}")
        try:
            return RobotDescription(
                chain=chain if chain is not None else default_chain(),
                wheel_radius=float(data["wheel_radius_m"]),
                track_width=float(data["track_width_m"]),
                mount_pose=RigidTransform.from_matrix(np.asarray(data["mount_pose"])),
                gripper_range=tuple(data["gripper_range_rad"]),
                gripper_step=float(data["gripper_step_rad"]),
                ee_translation_step=float(data["ee_translation_step_m"]),
                ee_rotation_step=float(data["ee_rotation_step_rad"]),
                max_linear=float(data["max_linear_mps"]),
                max_angular=float(data["max_angular_radps"]),
                sim_rate_hz=int(data["sim_rate_hz"]),
                initial_q=np.asarray(data["initial_q_rad"], dtype=float),
            )
        except KeyError as exc:
            raise SchemaError(str(exc.args[0]), "missing robot description key") from exc

    @staticmethod
    def from_file(path, chain: ChainDescription = None) -> "RobotDescription":
        with open(path) as f:
            return RobotDescription.from_dict(json.load(f), chain)


def default_robot() -> RobotDescription:
    from importlib import resources

    ref = resources.files("wheelarm").joinpath("data/wheelarm_robot.json")
    return RobotDescription.from_dict(json.loads(ref.read_text()))


# --- differential drive ---------------------------------------------------------

def wheel_speeds(cmd: VelocityCommand, wheel_radius: float, track_width: float):
    """Left/right drive-wheel angular velocities for a body-frame command."""
    w_l = (cmd.linear - cmd.angular * track_width / 2.0) / wheel_radius
    w_r = (cmd.linear + cmd.angular * track_width / 2.0) / wheel_radius
    return w_l, w_r


def step_diff_drive(
    state: WheelchairState,
    cmd: VelocityCommand,
    dt: float,
    wheel_radius: float = 0.15,
    track_width: float = 0.55,
) -> WheelchairState:
    """Advance the unicycle exactly over dt under a constant command.

    For |omega| >= 1e-9 the pose moves along the closed-form circular arc
    of radius v/omega; below that the straight-line limit applies. Wheel
    angles integrate the commanded wheel velocities."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    x, y, z = state.pose_world.translation
    th = state.yaw
    v, w = cmd.linear, cmd.angular
    th_new = th + w * dt
    if abs(w) >= _OMEGA_STRAIGHT:
        x_new = x + (v / w) * (math.sin(th_new) - math.sin(th))
        y_new = y + (v / w) * (math.cos(th) - math.cos(th_new))
    else:
        x_new = x + v * dt * math.cos(th)
        y_new = y + v * dt * math.sin(th)
    w_l, w_r = wheel_speeds(cmd, wheel_radius, track_width)
    velocities = np.array([w_l, w_r, w_l, w_r])
    return WheelchairState(
        pose_world=RigidTransform(yaw_rotation(th_new), np.array([x_new, y_new, z])),
        linear_vel=v,
        angular_vel=w,
        wheel_angles=state.wheel_angles + velocities * dt,
        wheel_velocities=velocities,
    )


# --- teleop increments -----------------------------------------------------------

def apply_ee_increment(
    arm: ArmState,
    axis: str,
    direction: int,
    translation_step: float = 0.025,
    rotation_step: float = 0.05,
) -> RigidTransform:
    """One keyboard click: x/y/z shift the EE target along the world axis,
    roll/pitch/yaw post-compose a rotation about the EE body axis."""
    if axis not in EE_AXES:
        raise MalformedCommand(f"unknown axis {axis!r}, expected one of {EE_AXES}")
    if direction not in (1, -1):
        raise MalformedCommand("direction must be +1 or -1")
    T = arm.ee_pose_world
    if axis in ("x", "y", "z"):
        delta = np.zeros(3)
        delta[_AXIS_INDEX[axis]] = direction * translation_step
        return RigidTransform(T.rotation, T.translation + delta)
    w = np.zeros(3)
    w[_AXIS_INDEX[axis]] = direction * rotation_step
    return RigidTransform(T.rotation @ so3_exp(w), T.translation)


def _arm_with_q(
    arm: ArmState, q: np.ndarray, chain: ChainDescription, mount_world: RigidTransform
) -> ArmState:
    ee = mount_world @ poe_fk(chain, q)
    twist = BodyTwist.from_vector(body_jacobian(chain, q) @ arm.qdot)
    return replace(arm, q=q, ee_pose_world=ee, ee_twist=twist)


def solve_and_apply(
    arm: ArmState,
    target: RigidTransform,
    chain: ChainDescription,
    mount_world: RigidTransform = None,
) -> ArmState:
    """Run IK (seeded at the current q) for a target in the arm-mount frame
    and apply the solution. IK failures propagate; the state is untouched."""
    if mount_world is None:
        mount_world = RigidTransform.identity()
    result = ik_newton_raphson(chain, target, arm.q)
    return _arm_with_q(arm, result.q, chain, mount_world)


def set_gripper(
    arm: ArmState,
    command: str,
    step: float = 0.05,
    limits: tuple = (0.0, 0.8),
) -> ArmState:
    """Symmetric finger step, clamped to the actuator range. Closing
    increases the actuator angles."""
    if command == "close_step":
        delta = step
    elif command == "open_step":
        delta = -step
    else:
        raise MalformedCommand(f"unknown gripper command {command!r}")
    lo, hi = limits
    left = min(hi, max(lo, arm.gripper_left + delta))
    right = min(hi, max(lo, arm.gripper_right + delta))
    return replace(arm, gripper_left=left, gripper_right=right)


# --- IMU synthesis ---------------------------------------------------------------

def synthesize_imu(
    prev: WheelchairState,
    next_state: WheelchairState,
    dt: float,
    noise_seed=None,
    timestamp: float = 0.0,
) -> ImuReading:
    """Finite-difference IMU between two base states.

    Yaw rate comes from the relative rotation (safe across the +-pi seam);
    acceleration is the body-frame velocity difference plus gravity.
    ``noise_seed`` of None means noiseless; otherwise Gaussian noise
    (sigma 0.005 gyro, 0.02 accel) is drawn deterministically from it."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    d_yaw = math.atan2(
        math.sin(next_state.yaw - prev.yaw), math.cos(next_state.yaw - prev.yaw)
    )
    omega = np.array([0.0, 0.0, d_yaw / dt])
    a_world = (next_state.velocity_world() - prev.velocity_world()) / dt
    a_body = next_state.pose_world.rotation.T @ a_world + np.array([0.0, 0.0, GRAVITY])
    if noise_seed is not None:
        rng = np.random.default_rng(noise_seed)
        omega = omega + IMU_GYRO_SIGMA * rng.standard_normal(3)
        a_body = a_body + IMU_ACCEL_SIGMA * rng.standard_normal(3)
    return ImuReading(angular_velocity=omega, linear_acceleration=a_body, timestamp=timestamp)


# --- the combined model ------------------------------------------------------------

class WheelArm:
    """Single-writer state machine for the whole robot.

    Commands mutate the latched targets; ``tick`` advances the base one
    fixed step and re-derives the arm's world-frame quantities. Readers
    get immutable snapshots."""

    def __init__(self, description: RobotDescription = None):
        self.description = description if description is not None else default_robot()
        d = self.description
        self.base = WheelchairState.initial()
        q0 = d.initial_q
        self.arm = ArmState(
            q=q0,
            qdot=np.zeros(d.chain.n),
            ee_pose_world=self.mount_pose_world() @ poe_fk(d.chain, q0),
            ee_twist=BodyTwist.zero(),
            gripper_left=0.0,
            gripper_right=0.0,
        )
        self.command = VelocityCommand()
        self._q_at_last_tick = q0

    def mount_pose_world(self) -> RigidTransform:
        return self.base.pose_world @ self.description.mount_pose

    def set_velocity(self, cmd: VelocityCommand) -> None:
        d = self.description
        if abs(cmd.linear) > d.max_linear + 1e-12 or abs(cmd.angular) > d.max_angular + 1e-12:
            raise MalformedCommand(
                f"velocity ({cmd.linear}, {cmd.angular}) exceeds caps "
                f"({d.max_linear}, {d.max_angular})"
            )
        self.command = cmd

    def stop(self) -> None:
        self.command = VelocityCommand(0.0, 0.0)

    def tick(self, dt: float) -> None:
        """One fixed step: integrate the base under the latched command,
        then refresh the arm's world pose and velocities."""
        d = self.description
        self.base = step_diff_drive(self.base, self.command, dt, d.wheel_radius, d.track_width)
        qdot = (self.arm.q - self._q_at_last_tick) / dt  # commands land between ticks
        self._q_at_last_tick = self.arm.q
        ee = self.mount_pose_world() @ poe_fk(d.chain, self.arm.q)
        twist = BodyTwist.from_vector(body_jacobian(d.chain, self.arm.q) @ qdot)
        self.arm = replace(self.arm, qdot=qdot, ee_pose_world=ee, ee_twist=twist)

    def ee_increment(self, axis: str, direction: int) -> None:
        """Click pipeline: nudge the world target, convert to the mount
        frame, solve IK. Raises on IK failure with state unchanged."""
        d = self.description
        target_world = apply_ee_increment(
            self.arm, axis, direction, d.ee_translation_step, d.ee_rotation_step
        )
        target_mount = self.mount_pose_world().inverse() @ target_world
        self.arm = solve_and_apply(self.arm, target_mount, d.chain, self.mount_pose_world())

    def gripper(self, command: str) -> None:
        d = self.description
        self.arm = set_gripper(self.arm, command, d.gripper_step, d.gripper_range)
