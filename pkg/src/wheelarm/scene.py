"""Indoor environment: task areas populated with primitive objects, two
RGB-D camera definitions, a kinematic grasp/attachment rule, and one
articulated drawer.

The scene is a single-writer state machine like the robot model. Grasping
is purely geometric: closing the gripper near a graspable object's center
rigidly attaches it to the end-effector frame; opening past the hysteresis
threshold drops it onto whatever surface lies below.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import OutOfReach, SchemaError
from .se3 import RigidTransform

GRASP_CLOSE_THRESHOLD = 0.4  # rad, both actuators at or above -> may attach
GRASP_RELEASE_THRESHOLD = 0.2  # rad, below -> detach (hysteresis)
GRASP_RADIUS = 0.06  # m, EE grasp point to object center

SHAPES = ("box", "cylinder", "sphere")


def _rpy_matrix(roll: float, pitch: float, yaw: float) -> np.ndarray:
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    return rz @ ry @ rx


@dataclass
class Articulation:
    """Prismatic joint in the object's body frame."""

    axis: np.ndarray  # unit 3-vector
    range: tuple  # (lo, hi) meters
    handle_offset: np.ndarray  # grasp point in body frame
    displacement: float = 0.0


@dataclass
class SceneObject:
    id: str
    shape: str
    dimensions: tuple  # box: (dx, dy, dz); cylinder: (radius, height); sphere: (radius,)
    base_pose: RigidTransform
    color: tuple  # floats in [0, 1]
    graspable: bool = False
    area: str = ""
    articulation: Articulation = None

    def half_height(self) -> float:
        if self.shape == "box":
            return self.dimensions[2] / 2.0
        if self.shape == "cylinder":
            return self.dimensions[1] / 2.0
        return self.dimensions[0]

    def footprint_contains(self, pose: RigidTransform, x: float, y: float) -> bool:
        """Whether (x, y) lies over this object, assuming upright placement."""
        p = pose.inverse().apply(np.array([x, y, pose.translation[2]]))
        if self.shape == "box":
            return abs(p[0]) <= self.dimensions[0] / 2.0 and abs(p[1]) <= self.dimensions[1] / 2.0
        if self.shape == "cylinder":
            return p[0] ** 2 + p[1] ** 2 <= self.dimensions[0] ** 2
        return p[0] ** 2 + p[1] ** 2 <= self.dimensions[0] ** 2


@dataclass
class CameraModel:
    id: str
    parent_frame: str  # "chassis" or "wrist"
    mount_offset: RigidTransform
    fx: float
    fy: float
    cx: float
    cy: float
    width: int = 128
    height: int = 96
    near: float = 0.05
    far: float = 10.0

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise SchemaError("cameras", "focal lengths must be positive")
        if not self.near < self.far:
            raise SchemaError("cameras", "near plane must be below far plane")


@dataclass
class RgbdFrame:
    rgb: np.ndarray  # height x width x 3 uint8
    depth: np.ndarray  # height x width float32, 0 = no hit
    timestamp: float
    camera_id: str


@dataclass
class Area:
    name: str
    approach_pose: tuple  # (x, y, yaw) for the wheelchair
    description: str = ""


@dataclass
class GraspResult:
    status: str  # "attached" | "held" | "detached" | "no_candidate"
    object_id: str = None


class Scene:
    """Mutable world state: object poses, one optional EE attachment."""

    def __init__(self, name, areas, objects, cameras, background_rgb, light_direction, ambient):
        self.name = name
        self.areas = list(areas)
        self.objects = list(objects)
        self.cameras = {c.id: c for c in cameras}
        self.background_rgb = tuple(background_rgb)
        self.light_direction = np.asarray(light_direction, dtype=float)
        self.ambient = float(ambient)
        self.by_id = {o.id: o for o in self.objects}
        self.attachment = None  # (object_id, RigidTransform rel to EE)
        self._pose_override = {}

    def object_pose(self, obj_id: str) -> RigidTransform:
        """Current world pose: override (attachment / placement) wins, then
        articulation displacement, then the authored pose."""
        if obj_id in self._pose_override:
            return self._pose_override[obj_id]
        obj = self.by_id[obj_id]
        if obj.articulation is not None and obj.articulation.displacement != 0.0:
            art = obj.articulation
            shift = RigidTransform(np.eye(3), art.axis * art.displacement)
            return obj.base_pose @ shift
        return obj.base_pose

    def set_object_pose(self, obj_id: str, pose: RigidTransform) -> None:
        self._pose_override[obj_id] = pose

    def sync_attachment(self, ee_pose: RigidTransform) -> None:
        """Keep the held object glued to the EE; call after the robot moves."""
        if self.attachment is not None:
            obj_id, rel = self.attachment
            self._pose_override[obj_id] = ee_pose @ rel

    def attached_ids(self) -> list:
        return [self.attachment[0]] if self.attachment is not None else []


# --- loading ---------------------------------------------------------------------

def _require(data: dict, key: str, path: str):
    if key not in data:
        raise SchemaError(f"{path}.{key}", "missing required key")
    return data[key]


_DIM_COUNT = {"box": 3, "cylinder": 2, "sphere": 1}


def _parse_object(entry: dict, index: int) -> SceneObject:
    path = f"objects[{index}]"
    obj_id = _require(entry, "id", path)
    shape = _require(entry, "shape", path)
    if shape not in SHAPES:
        raise SchemaError(f"{path}.shape", f"unknown shape {shape!r}")
    dims = tuple(float(d) for d in _require(entry, "dimensions", path))
    if len(dims) != _DIM_COUNT[shape]:
        raise SchemaError(
            f"{path}.dimensions", f"{shape} needs {_DIM_COUNT[shape]} dimension(s)"
        )
    if any(d <= 0 for d in dims):
        raise SchemaError(f"{path}.dimensions", "dimensions must be strictly positive")
    pose = _require(entry, "pose", path)
    xyz = np.asarray(_require(pose, "xyz", f"{path}.pose"), dtype=float)
    rpy = pose.get("rpy", (0.0, 0.0, 0.0))
    base = RigidTransform(_rpy_matrix(*rpy), xyz)
    color = tuple(float(c) for c in _require(entry, "color", path))
    if len(color) != 3 or any(not 0.0 <= c <= 1.0 for c in color):
        raise SchemaError(f"{path}.color", "color must be 3 floats in [0, 1]")
    articulation = None
    if "articulation" in entry:
        art = entry["articulation"]
        axis = np.asarray(_require(art, "axis", f"{path}.articulation"), dtype=float)
        n = np.linalg.norm(axis)
        if abs(n - 1.0) > 1e-9:
            raise SchemaError(f"{path}.articulation.axis", "axis must be unit length")
        lo, hi = (float(v) for v in _require(art, "range", f"{path}.articulation"))
        if not lo < hi:
            raise SchemaError(f"{path}.articulation.range", "range must be increasing")
        disp = float(art.get("displacement", 0.0))
        if not lo <= disp <= hi:
            raise SchemaError(f"{path}.articulation.displacement", "outside declared range")
        articulation = Articulation(
            axis=axis,
            range=(lo, hi),
            handle_offset=np.asarray(art.get("handle_offset", (0.0, 0.0, 0.0)), dtype=float),
            displacement=disp,
        )
    return SceneObject(
        id=obj_id,
        shape=shape,
        dimensions=dims,
        base_pose=base,
        color=color,
        graspable=bool(entry.get("graspable", False)),
        area=entry.get("area", ""),
        articulation=articulation,
    )


def _parse_camera(entry: dict, index: int) -> CameraModel:
    path = f"cameras[{index}]"
    parent = _require(entry, "parent", path)
    if parent not in ("chassis", "wrist"):
        raise SchemaError(f"{path}.parent", f"unknown parent frame {parent!r}")
    return CameraModel(
        id=_require(entry, "id", path),
        parent_frame=parent,
        mount_offset=RigidTransform.from_matrix(
            np.asarray(_require(entry, "mount_pose", path), dtype=float)
        ),
        fx=float(_require(entry, "fx", path)),
        fy=float(_require(entry, "fy", path)),
        cx=float(_require(entry, "cx", path)),
        cy=float(_require(entry, "cy", path)),
        width=int(entry.get("width", 128)),
        height=int(entry.get("height", 96)),
        near=float(entry.get("near", 0.05)),
        far=float(entry.get("far", 10.0)),
    )


def scene_from_dict(data: dict) -> Scene:
    if data.get("format") != "wheelarm-scene/1":
        raise SchemaError("format", f"expected 'wheelarm-scene/1', got {data.get('format')!r}")
    areas = [
        Area(
            name=_require(a, "name", f"areas[{i}]"),
            approach_pose=tuple(float(v) for v in _require(a, "approach_pose", f"areas[{i}]")),
            description=a.get("description", ""),
        )
        for i, a in enumerate(data.get("areas", []))
    ]
    objects = [_parse_object(o, i) for i, o in enumerate(data.get("objects", []))]
    ids = [o.id for o in objects]
    if len(set(ids)) != len(ids):
        raise SchemaError("objects", "object ids must be unique")
    cameras = [_parse_camera(c, i) for i, c in enumerate(data.get("cameras", []))]
    return Scene(
        name=data.get("name", "scene"),
        areas=areas,
        objects=objects,
        cameras=cameras,
        background_rgb=data.get("background_rgb", (25, 30, 38)),
        light_direction=data.get("light_direction", (0.3, -0.2, -0.9)),
        ambient=data.get("ambient", 0.35),
    )


def load_scene(path) -> Scene:
    with open(path) as f:
        return scene_from_dict(json.load(f))


def default_scene() -> Scene:
    from importlib import resources

    ref = resources.files("wheelarm").joinpath("data/apartment_scene.json")
    return scene_from_dict(json.loads(ref.read_text()))


# --- grasping --------------------------------------------------------------------

def _support_height(scene: Scene, obj_id: str, x: float, y: float, below_z: float) -> float:
    """Highest upward-facing surface under (x, y) at or below below_z."""
    best = 0.0
    for other in scene.objects:
        if other.id == obj_id or other.id in scene.attached_ids():
            continue
        pose = scene.object_pose(other.id)
        top = pose.translation[2] + other.half_height()
        if top <= below_z + 1e-6 and top > best and other.footprint_contains(pose, x, y):
            best = top
    return best


def try_grasp(scene: Scene, arm) -> GraspResult:
    """Attachment rule with hysteresis.

    Closing to >= 0.4 rad within 0.06 m of a graspable center attaches the
    nearest candidate; an attached object follows the EE until the gripper
    opens below 0.2 rad, at which point it rests where it is with its base
    snapped onto the surface below."""
    grip = min(arm.gripper_left, arm.gripper_right)
    ee = arm.ee_pose_world
    if scene.attachment is not None:
        obj_id, rel = scene.attachment
        if grip < GRASP_RELEASE_THRESHOLD:
            pose = ee @ rel
            obj = scene.by_id[obj_id]
            x, y, z = pose.translation
            bottom = z - obj.half_height()
            surface = _support_height(scene, obj_id, x, y, bottom + 1e-6)
            dropped = RigidTransform(
                pose.rotation, np.array([x, y, surface + obj.half_height()])
            )
            scene.attachment = None
            scene.set_object_pose(obj_id, dropped)
            return GraspResult(status="detached", object_id=obj_id)
        scene.sync_attachment(ee)
        return GraspResult(status="held", object_id=obj_id)
    if grip >= GRASP_CLOSE_THRESHOLD:
        grasp_point = ee.translation
        best_id, best_dist = None, GRASP_RADIUS
        for obj in scene.objects:
            if not obj.graspable:
                continue
            dist = float(np.linalg.norm(scene.object_pose(obj.id).translation - grasp_point))
            if dist <= best_dist:
                best_id, best_dist = obj.id, dist
        if best_id is not None:
            rel = ee.inverse() @ scene.object_pose(best_id)
            scene.attachment = (best_id, rel)
            scene.set_object_pose(best_id, ee @ rel)
            return GraspResult(status="attached", object_id=best_id)
    return GraspResult(status="no_candidate")


def held_drawer(scene: Scene, ee_pose: RigidTransform):
    """The articulated object whose handle is within grasp radius, or None."""
    for obj in scene.objects:
        if obj.articulation is None:
            continue
        handle_world = scene.object_pose(obj.id).apply(obj.articulation.handle_offset)
        if float(np.linalg.norm(handle_world - ee_pose.translation)) <= GRASP_RADIUS:
            return obj
    return None


def actuate_drawer(scene: Scene, ee_pose: RigidTransform, delta: float) -> float:
    """Slide the drawer whose handle the EE currently holds; returns the new
    displacement, clamped to the declared range."""
    obj = held_drawer(scene, ee_pose)
    if obj is None:
        raise OutOfReach("no articulated handle within grasp radius of the end-effector")
    art = obj.articulation
    lo, hi = art.range
    art.displacement = min(hi, max(lo, art.displacement + delta))
    return art.displacement
