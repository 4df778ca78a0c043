"""Scripted demonstration authoring.

A greedy closed-loop "operator" drives a live (non-recording) session and
freezes every command it issues, together with its tick time, into a Script.
Because replay applies commands at the same tick boundaries on the same
fixed-step physics, the frozen script reproduces the authored trajectory
exactly. Authoring asserts task success (grasp attached, drawer moved), so
shipped scripts cannot silently go stale when geometry changes.
"""

from __future__ import annotations

import math

import numpy as np

from .recorder import SessionManifest
from .scene import default_scene
from .se3 import wrap_to_pi
from .session import Script, TeleopCommand, TeleopSession

V_NOMINAL = 0.5  # m/s cruise
W_NOMINAL = 1.0  # rad/s turn
EE_TOL = 0.013  # just above half a click so greedy clicking terminates
CLOSE_CLICKS = 9  # 9 x 0.05 = 0.45 rad, past the 0.4 attach threshold
RELEASE_CLICKS = 6  # down to 0.15 rad, past the 0.2 release threshold


class AuthoringError(RuntimeError):
    """A task template failed against the current scene geometry."""


class ScriptAuthor:
    def __init__(self, scene=None):
        self.session = TeleopSession(scene=scene if scene is not None else default_scene())
        self.commands = []
        base = self.session.robot.base
        ee = self.session.robot.arm.ee_pose_world.translation
        # resting EE offset in the base frame, used to park so the arm
        # barely has to stretch
        rel = ee[:2] - base.pose_world.translation[:2]
        yaw = base.yaw
        c, s = math.cos(-yaw), math.sin(-yaw)
        self._rest_xy = np.array([c * rel[0] - s * rel[1], s * rel[0] + c * rel[1]])

    # --- primitives -------------------------------------------------------------

    def emit(self, **fields) -> dict:
        cmd = TeleopCommand.from_dict(fields)
        ack = self.session.handle_command(cmd)
        if not ack["ok"]:
            raise AuthoringError(f"{fields} rejected: {ack['error']}: {ack['message']}")
        self.commands.append((self.session.time, cmd))
        return ack

    def wait(self, ticks: int) -> None:
        for _ in range(int(ticks)):
            self.session.step()

    def pause(self, seconds: float = 0.25) -> None:
        self.wait(round(seconds * self.session.rate_hz))

    def rotate_to(self, heading: float) -> None:
        d = float(wrap_to_pi([heading - self.session.robot.base.yaw])[0])
        if abs(d) < 1e-9:
            return
        dt = self.session.dt
        ticks = max(1, math.ceil(abs(d) / (W_NOMINAL * dt)))
        self.emit(kind="base_velocity", linear=0.0, angular=d / (ticks * dt))
        self.wait(ticks)
        self.emit(kind="stop")

    def drive(self, distance: float) -> None:
        if abs(distance) < 1e-9:
            return
        dt = self.session.dt
        ticks = max(1, math.ceil(abs(distance) / (V_NOMINAL * dt)))
        self.emit(kind="base_velocity", linear=distance / (ticks * dt), angular=0.0)
        self.wait(ticks)
        self.emit(kind="stop")

    def go_to(self, x: float, y: float, heading: float = None) -> None:
        """Turn-drive-turn; exact under the fixed-step arc integrator."""
        base = self.session.robot.base.pose_world.translation
        dx, dy = x - base[0], y - base[1]
        dist = math.hypot(dx, dy)
        if dist > 1e-6:
            self.rotate_to(math.atan2(dy, dx))
            self.drive(dist)
        if heading is not None:
            self.rotate_to(heading)

    def park_for(self, target_xy, heading: float) -> None:
        """Place the base so the resting EE sits over target_xy."""
        c, s = math.cos(heading), math.sin(heading)
        off = np.array(
            [c * self._rest_xy[0] - s * self._rest_xy[1],
             s * self._rest_xy[0] + c * self._rest_xy[1]]
        )
        self.go_to(target_xy[0] - off[0], target_xy[1] - off[1], heading)

    def ee_to(self, target, tol: float = EE_TOL, max_clicks: int = 120) -> None:
        target = np.asarray(target, dtype=float)
        for _ in range(max_clicks):
            err = target - self.session.robot.arm.ee_pose_world.translation
            i = int(np.argmax(np.abs(err)))
            if abs(err[i]) <= tol:
                return
            self.emit(kind="ee_increment", axis="xyz"[i], direction=1 if err[i] > 0 else -1)
            self.wait(1)
        raise AuthoringError(f"ee_to({target}) did not converge")

    def ee_shift(self, dx=0.0, dy=0.0, dz=0.0) -> None:
        self.ee_to(self.session.robot.arm.ee_pose_world.translation + np.array([dx, dy, dz]))

    def grip(self, action: str, clicks: int) -> dict:
        ack = {}
        for _ in range(clicks):
            ack = self.emit(kind="gripper", action=action)
            self.wait(1)
        return ack

    # --- task templates -----------------------------------------------------------

    def pick(self, object_id: str, heading: float, lift: float = 0.15) -> None:
        scene = self.session.scene
        obj = scene.object_pose(object_id).translation
        self.park_for(obj[:2], heading)
        self.pause()
        self.ee_to(obj)
        ack = self.grip("close_step", CLOSE_CLICKS)
        if ack.get("grasp") not in ("attached", "held") or ack.get("object_id") != object_id:
            raise AuthoringError(f"grasp of {object_id} failed: {ack}")
        self.ee_shift(dz=lift)
        self.pause()

    def place(self, drop_xy, heading: float, release_z: float) -> None:
        self.park_for(drop_xy, heading)
        self.pause()
        self.ee_to([drop_xy[0], drop_xy[1], release_z])
        ack = self.grip("open_step", RELEASE_CLICKS)
        if ack.get("grasp") != "detached":
            raise AuthoringError(f"release failed: {ack}")
        self.ee_shift(dz=0.15)
        self.pause()

    def drawer_handle(self) -> np.ndarray:
        scene = self.session.scene
        drawer = next(o for o in scene.objects if o.articulation is not None)
        return scene.object_pose(drawer.id).apply(drawer.articulation.handle_offset)

    def slide_drawer(self, clicks: int, direction: int) -> None:
        for _ in range(clicks):
            ack = self.emit(kind="ee_increment", axis="x", direction=direction)
            if "drawer_displacement" not in ack:
                raise AuthoringError(f"drawer did not move: {ack}")
            self.wait(1)

    def reach_drawer_handle(self, heading: float = math.pi, pull_reserve: float = 0.2) -> None:
        # park with slack on the pull side, otherwise the retraction folds
        # the wrist past its limit
        handle = self.drawer_handle()
        self.park_for(handle[:2] + np.array([pull_reserve, 0.0]), heading)
        self.pause()
        self.ee_to(handle)
        self.grip("close_step", CLOSE_CLICKS)

    def finish(self, manifest: SessionManifest) -> Script:
        self.pause(0.5)
        return Script(manifest=manifest, duration=self.session.time, commands=self.commands)


def _manifest(name: str, instruction: str, task_label: str, seed: int) -> SessionManifest:
    return SessionManifest(
        session_id=f"demo-{name}",
        file_name=name,
        instruction=instruction,
        task_label=task_label,
        seed=seed,
    )


HALF_PI = math.pi / 2.0

# (name, instruction, builder); headings chosen so the parked base clears
# the furniture footprints
TASKS = {}


def _task(name, instruction, label, seed):
    def register(fn):
        def build():
            author = ScriptAuthor()
            fn(author)
            return author.finish(_manifest(name, instruction, label, seed))

        TASKS[name] = build
        return fn

    return register


@_task("pick_mustard", "Pick up the mustard bottle from the kitchen table.", "pick", 101)
def _pick_mustard(a):
    a.pick("mustard", 0.0)


@_task("pick_crackers", "Pick up the crackers box from the kitchen table.", "pick", 102)
def _pick_crackers(a):
    a.pick("crackers", 0.0)


@_task("pick_tomato_soup", "Pick up the tomato soup can from the kitchen table.", "pick", 103)
def _pick_tomato_soup(a):
    a.pick("tomato_soup", 0.0)


@_task("pick_coke", "Pick up the coke can from the coffee table.", "pick", 104)
def _pick_coke(a):
    a.pick("coke", HALF_PI)


@_task("pick_teddy_bear", "Pick up the teddy bear from the coffee table.", "pick", 105)
def _pick_teddy_bear(a):
    a.pick("teddy_bear", 0.0)


@_task("pick_meat_can", "Pick up the potted meat can from the workstation.", "pick", 106)
def _pick_meat_can(a):
    a.pick("meat_can", math.pi)


@_task("pick_bowl", "Pick up the bowl from the shelf.", "pick", 107)
def _pick_bowl(a):
    a.pick("bowl", -HALF_PI)


@_task(
    "place_mustard_coffee_table",
    "Move the mustard bottle from the kitchen table to the coffee table.",
    "pick_place",
    108,
)
def _place_mustard(a):
    a.pick("mustard", 0.0)
    a.place((-0.1, 2.35), HALF_PI, 0.7)


@_task(
    "place_coke_kitchen_table",
    "Move the coke can from the coffee table to the kitchen table.",
    "pick_place",
    109,
)
def _place_coke(a):
    a.pick("coke", HALF_PI)
    a.place((2.3, -0.1), 0.0, 0.95)


@_task(
    "place_bowl_workstation",
    "Move the bowl from the shelf to the kitchen workstation.",
    "pick_place",
    110,
)
def _place_bowl(a):
    a.pick("bowl", -HALF_PI)
    a.place((-2.35, 0.2), math.pi, 1.05)


@_task("open_drawer", "Navigate to the drawer and open it.", "articulation", 111)
def _open_drawer(a):
    a.reach_drawer_handle()
    a.slide_drawer(8, direction=1)  # 8 x 0.025 = 0.2 m out
    a.grip("open_step", RELEASE_CLICKS)
    a.ee_shift(dz=0.2)
    a.pause()


@_task(
    "open_close_drawer",
    "Navigate to the drawer, open it, then close it again.",
    "articulation",
    112,
)
def _open_close_drawer(a):
    a.reach_drawer_handle()
    a.slide_drawer(8, direction=1)
    a.pause()
    a.slide_drawer(8, direction=-1)  # back to exactly closed
    a.grip("open_step", RELEASE_CLICKS)
    a.ee_shift(dz=0.2)
    a.pause()


@_task(
    "navigate_tour",
    "Drive to each area of the apartment and return to the start.",
    "navigate",
    113,
)
def _navigate_tour(a):
    for area in a.session.scene.areas:
        x, y, heading = area.approach_pose
        a.go_to(x, y, heading)
        a.pause(0.5)
    a.go_to(0.0, 0.0, 0.0)


def author_task(name: str) -> Script:
    if name not in TASKS:
        raise KeyError(f"unknown task {name!r}; have {sorted(TASKS)}")
    return TASKS[name]()


def shipped_script_names() -> list:
    from importlib import resources

    root = resources.files("wheelarm").joinpath("data/scripts")
    return sorted(p.name[: -len(".json")] for p in root.iterdir() if p.name.endswith(".json"))


def load_shipped_script(name: str) -> Script:
    import json

    from importlib import resources

    from .session import parse_script

    ref = resources.files("wheelarm").joinpath(f"data/scripts/{name}.json")
    with ref.open("r", encoding="utf-8") as fh:
        return parse_script(json.load(fh))


MUSTARD_PHRASINGS = (
    "Pick up the mustard bottle from the kitchen table.",
    "Grab the mustard bottle off the kitchen table.",
    "Lift the mustard bottle from the table in the kitchen.",
    "Take the mustard bottle from the kitchen table.",
)


def mustard_variants(count: int, seed: int = 0) -> list:
    """Perturbed mustard-pick scripts for the learnability dataset: varied
    parking offsets, grasp heights, lift heights, and lead-in pauses."""
    scripts = []
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        author = ScriptAuthor()
        author.wait(int(rng.integers(0, 9)))
        scene = author.session.scene
        obj = scene.object_pose("mustard").translation.copy()
        park = obj[:2] + rng.uniform(-0.02, 0.02, 2)
        author.park_for(park, 0.0)
        author.pause(float(rng.uniform(0.1, 0.4)))
        grasp = obj + np.array([0.0, 0.0, float(rng.uniform(-0.01, 0.02))])
        author.ee_to(grasp)
        ack = author.grip("close_step", CLOSE_CLICKS)
        if ack.get("object_id") != "mustard":
            raise AuthoringError(f"variant {i} failed to grasp: {ack}")
        author.ee_shift(dz=float(rng.uniform(0.1, 0.2)))
        author.pause()
        manifest = _manifest(
            f"mustard_{i:02d}",
            MUSTARD_PHRASINGS[i % len(MUSTARD_PHRASINGS)],
            "pick",
            seed=1000 * (seed + 1) + i,
        )
        scripts.append(author.finish(manifest))
    return scripts
