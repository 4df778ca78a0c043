"""Raycast RGB-D renderer over scene primitives.

Two backends share one algorithm: a numba scalar kernel (default) and a
vectorized numpy fallback. Every floating-point expression is written with
the same structure and evaluation order in both, divisions are explicitly
guarded rather than relying on IEEE infinities, and objects are visited in
the same order, so the two backends produce bit-identical frames. The
parity test in the suite holds them to that.

Conventions: camera looks along +z of its frame with x right and y down in
the image; rays carry unit z in the camera frame so the ray parameter t is
the z-depth directly (a wall perpendicular to the axis at 1 m reads 1.0 at
every covered pixel). Depth 0 means no hit; hits outside [near, far] are
dropped. Shading is flat Lambertian from one directional light plus an
ambient floor. Bodies are convex, and only the entry intersection is kept,
so a camera inside an object sees through it.
"""

from __future__ import annotations

import numpy as np

from . import accel
from .scene import CameraModel, RgbdFrame, Scene
from .se3 import RigidTransform

_BIG = 1e30  # miss sentinel, beyond any far plane
_CODE = {"box": 0, "cylinder": 1, "sphere": 2}


def camera_rays(camera: CameraModel, camera_pose_world: RigidTransform):
    """World-frame ray origin and per-pixel directions (z-normalized)."""
    R = camera_pose_world.rotation
    h, w = camera.height, camera.width
    px = (np.arange(w, dtype=float) + 0.5 - camera.cx) / camera.fx
    py = (np.arange(h, dtype=float) + 0.5 - camera.cy) / camera.fy
    u = np.broadcast_to(px[None, :], (h, w))
    v = np.broadcast_to(py[:, None], (h, w))
    dirs = np.empty((h, w, 3))
    dirs[:, :, 0] = (R[0, 0] * u + R[0, 1] * v) + R[0, 2]
    dirs[:, :, 1] = (R[1, 0] * u + R[1, 1] * v) + R[1, 2]
    dirs[:, :, 2] = (R[2, 0] * u + R[2, 1] * v) + R[2, 2]
    return camera_pose_world.translation.copy(), dirs


def pack_scene(scene: Scene):
    """Flatten current object poses into kernel-ready arrays."""
    n = len(scene.objects)
    codes = np.zeros(n, dtype=np.int64)
    rot = np.zeros((n, 3, 3))
    inv_rot = np.zeros((n, 3, 3))
    pos = np.zeros((n, 3))
    params = np.zeros((n, 3))
    colors = np.zeros((n, 3))
    for i, obj in enumerate(scene.objects):
        T = scene.object_pose(obj.id)
        codes[i] = _CODE[obj.shape]
        rot[i] = T.rotation
        inv_rot[i] = T.rotation.T
        pos[i] = T.translation
        d = obj.dimensions
        if obj.shape == "box":
            params[i] = (d[0] / 2.0, d[1] / 2.0, d[2] / 2.0)
        elif obj.shape == "cylinder":
            params[i] = (d[0], d[1] / 2.0, 0.0)
        else:
            params[i] = (d[0], 0.0, 0.0)
        colors[i] = obj.color
    light = np.asarray(scene.light_direction, dtype=float)
    light = light / np.linalg.norm(light)
    bg = np.asarray(scene.background_rgb, dtype=np.uint8)
    return codes, rot, inv_rot, pos, params, colors, light, bg


def _raycast_scalar(
    origin, dirs, codes, rot, inv_rot, pos, params, colors, near, far, light, ambient, bg
):
    h, w = dirs.shape[0], dirs.shape[1]
    n = codes.shape[0]
    rgb = np.empty((h, w, 3), dtype=np.uint8)
    depth = np.zeros((h, w), dtype=np.float32)
    ox, oy, oz = origin[0], origin[1], origin[2]
    lx, ly, lz = light[0], light[1], light[2]
    for py in range(h):
        for px in range(w):
            dx = dirs[py, px, 0]
            dy = dirs[py, px, 1]
            dz = dirs[py, px, 2]
            t_best = _BIG
            k_best = -1
            nwx = 0.0
            nwy = 0.0
            nwz = 0.0
            for k in range(n):
                vx = ox - pos[k, 0]
                vy = oy - pos[k, 1]
                vz = oz - pos[k, 2]
                bx = (inv_rot[k, 0, 0] * vx + inv_rot[k, 0, 1] * vy) + inv_rot[k, 0, 2] * vz
                by = (inv_rot[k, 1, 0] * vx + inv_rot[k, 1, 1] * vy) + inv_rot[k, 1, 2] * vz
                bz = (inv_rot[k, 2, 0] * vx + inv_rot[k, 2, 1] * vy) + inv_rot[k, 2, 2] * vz
                ex = (inv_rot[k, 0, 0] * dx + inv_rot[k, 0, 1] * dy) + inv_rot[k, 0, 2] * dz
                ey = (inv_rot[k, 1, 0] * dx + inv_rot[k, 1, 1] * dy) + inv_rot[k, 1, 2] * dz
                ez = (inv_rot[k, 2, 0] * dx + inv_rot[k, 2, 1] * dy) + inv_rot[k, 2, 2] * dz
                t = _BIG
                nbx = 0.0
                nby = 0.0
                nbz = 0.0
                code = codes[k]
                if code == 0:
                    hx = params[k, 0]
                    hy = params[k, 1]
                    hz = params[k, 2]
                    ok = True
                    tmin = -_BIG
                    tmax = _BIG
                    axis = -1
                    if ex != 0.0:
                        t1 = (-hx - bx) / ex
                        t2 = (hx - bx) / ex
                        if t1 > t2:
                            t1, t2 = t2, t1
                        if t1 > tmin:
                            tmin = t1
                            axis = 0
                        if t2 < tmax:
                            tmax = t2
                    elif bx < -hx or bx > hx:
                        ok = False
                    if ey != 0.0:
                        t1 = (-hy - by) / ey
                        t2 = (hy - by) / ey
                        if t1 > t2:
                            t1, t2 = t2, t1
                        if t1 > tmin:
                            tmin = t1
                            axis = 1
                        if t2 < tmax:
                            tmax = t2
                    elif by < -hy or by > hy:
                        ok = False
                    if ez != 0.0:
                        t1 = (-hz - bz) / ez
                        t2 = (hz - bz) / ez
                        if t1 > t2:
                            t1, t2 = t2, t1
                        if t1 > tmin:
                            tmin = t1
                            axis = 2
                        if t2 < tmax:
                            tmax = t2
                    elif bz < -hz or bz > hz:
                        ok = False
                    if ok and axis >= 0 and tmin <= tmax:
                        t = tmin
                        if axis == 0:
                            nbx = -1.0 if ex > 0.0 else 1.0
                        elif axis == 1:
                            nby = -1.0 if ey > 0.0 else 1.0
                        else:
                            nbz = -1.0 if ez > 0.0 else 1.0
                elif code == 1:
                    r = params[k, 0]
                    hh = params[k, 1]
                    a = ex * ex + ey * ey
                    b = bx * ex + by * ey
                    c = (bx * bx + by * by) - r * r
                    disc = b * b - a * c
                    if disc >= 0.0 and a > 0.0:
                        ts = (-b - np.sqrt(disc)) / a
                        zs = bz + ts * ez
                        if zs >= -hh and zs <= hh and ts < t:
                            t = ts
                            nbx = (bx + ts * ex) / r
                            nby = (by + ts * ey) / r
                            nbz = 0.0
                    if ez != 0.0:
                        tc = (hh - bz) / ez
                        cx = bx + tc * ex
                        cy = by + tc * ey
                        if cx * cx + cy * cy <= r * r and tc < t:
                            t = tc
                            nbx = 0.0
                            nby = 0.0
                            nbz = 1.0
                        tc = (-hh - bz) / ez
                        cx = bx + tc * ex
                        cy = by + tc * ey
                        if cx * cx + cy * cy <= r * r and tc < t:
                            t = tc
                            nbx = 0.0
                            nby = 0.0
                            nbz = -1.0
                else:
                    r = params[k, 0]
                    a = (ex * ex + ey * ey) + ez * ez
                    b = (bx * ex + by * ey) + bz * ez
                    c = ((bx * bx + by * by) + bz * bz) - r * r
                    disc = b * b - a * c
                    if disc >= 0.0:
                        ts = (-b - np.sqrt(disc)) / a
                        if ts < t:
                            t = ts
                            nbx = (bx + ts * ex) / r
                            nby = (by + ts * ey) / r
                            nbz = (bz + ts * ez) / r
                if t >= near and t <= far and t < t_best:
                    t_best = t
                    k_best = k
                    nwx = (rot[k, 0, 0] * nbx + rot[k, 0, 1] * nby) + rot[k, 0, 2] * nbz
                    nwy = (rot[k, 1, 0] * nbx + rot[k, 1, 1] * nby) + rot[k, 1, 2] * nbz
                    nwz = (rot[k, 2, 0] * nbx + rot[k, 2, 1] * nby) + rot[k, 2, 2] * nbz
            if k_best >= 0:
                lit = -((lx * nwx + ly * nwy) + lz * nwz)
                if lit < 0.0:
                    lit = 0.0
                shade = ambient + (1.0 - ambient) * lit
                rgb[py, px, 0] = np.uint8(colors[k_best, 0] * shade * 255.0 + 0.5)
                rgb[py, px, 1] = np.uint8(colors[k_best, 1] * shade * 255.0 + 0.5)
                rgb[py, px, 2] = np.uint8(colors[k_best, 2] * shade * 255.0 + 0.5)
                depth[py, px] = np.float32(t_best)
            else:
                rgb[py, px, 0] = bg[0]
                rgb[py, px, 1] = bg[1]
                rgb[py, px, 2] = bg[2]
    return rgb, depth


_raycast_kernel = accel.njit(_raycast_scalar)


def _raycast_numpy(
    origin, dirs, codes, rot, inv_rot, pos, params, colors, near, far, light, ambient, bg
):
    """Vectorized mirror of the scalar kernel; same expressions, same order."""
    h, w = dirs.shape[0], dirs.shape[1]
    n = codes.shape[0]
    dx = dirs[:, :, 0].reshape(-1)
    dy = dirs[:, :, 1].reshape(-1)
    dz = dirs[:, :, 2].reshape(-1)
    hw = dx.shape[0]
    ox, oy, oz = origin[0], origin[1], origin[2]
    lx, ly, lz = light[0], light[1], light[2]
    t_best = np.full(hw, _BIG)
    k_best = np.full(hw, -1, dtype=np.int64)
    nwx = np.zeros(hw)
    nwy = np.zeros(hw)
    nwz = np.zeros(hw)
    with np.errstate(divide="ignore", invalid="ignore"):
        for k in range(n):
            vx = ox - pos[k, 0]
            vy = oy - pos[k, 1]
            vz = oz - pos[k, 2]
            bx = (inv_rot[k, 0, 0] * vx + inv_rot[k, 0, 1] * vy) + inv_rot[k, 0, 2] * vz
            by = (inv_rot[k, 1, 0] * vx + inv_rot[k, 1, 1] * vy) + inv_rot[k, 1, 2] * vz
            bz = (inv_rot[k, 2, 0] * vx + inv_rot[k, 2, 1] * vy) + inv_rot[k, 2, 2] * vz
            ex = (inv_rot[k, 0, 0] * dx + inv_rot[k, 0, 1] * dy) + inv_rot[k, 0, 2] * dz
            ey = (inv_rot[k, 1, 0] * dx + inv_rot[k, 1, 1] * dy) + inv_rot[k, 1, 2] * dz
            ez = (inv_rot[k, 2, 0] * dx + inv_rot[k, 2, 1] * dy) + inv_rot[k, 2, 2] * dz
            t = np.full(hw, _BIG)
            nbx = np.zeros(hw)
            nby = np.zeros(hw)
            nbz = np.zeros(hw)
            code = codes[k]
            if code == 0:
                hx, hy, hz = params[k, 0], params[k, 1], params[k, 2]
                ok = np.ones(hw, dtype=bool)
                tmin = np.full(hw, -_BIG)
                tmax = np.full(hw, _BIG)
                axis = np.full(hw, -1, dtype=np.int64)
                for comp, (e_c, b_c, h_c) in enumerate(((ex, bx, hx), (ey, by, hy), (ez, bz, hz))):
                    live = e_c != 0.0
                    t1 = (-h_c - b_c) / e_c
                    t2 = (h_c - b_c) / e_c
                    swap = t1 > t2
                    t1, t2 = np.where(swap, t2, t1), np.where(swap, t1, t2)
                    enter = live & (t1 > tmin)
                    tmin = np.where(enter, t1, tmin)
                    axis = np.where(enter, comp, axis)
                    tmax = np.where(live & (t2 < tmax), t2, tmax)
                    ok &= live | ((b_c >= -h_c) & (b_c <= h_c))
                hit_box = ok & (axis >= 0) & (tmin <= tmax)
                t = np.where(hit_box, tmin, _BIG)
                sign = (
                    np.where(ex > 0.0, -1.0, 1.0),
                    np.where(ey > 0.0, -1.0, 1.0),
                    np.where(ez > 0.0, -1.0, 1.0),
                )
                nbx = np.where(hit_box & (axis == 0), sign[0], 0.0)
                nby = np.where(hit_box & (axis == 1), sign[1], 0.0)
                nbz = np.where(hit_box & (axis == 2), sign[2], 0.0)
            elif code == 1:
                r, hh = params[k, 0], params[k, 1]
                a = ex * ex + ey * ey
                b = bx * ex + by * ey
                c = (bx * bx + by * by) - r * r
                disc = b * b - a * c
                quad = (disc >= 0.0) & (a > 0.0)
                ts = (-b - np.sqrt(np.where(quad, disc, 0.0))) / np.where(quad, a, 1.0)
                zs = bz + ts * ez
                side = quad & (zs >= -hh) & (zs <= hh) & (ts < t)
                t = np.where(side, ts, t)
                nbx = np.where(side, (bx + ts * ex) / r, nbx)
                nby = np.where(side, (by + ts * ey) / r, nby)
                nbz = np.where(side, 0.0, nbz)
                live = ez != 0.0
                for hz_c, nz_c in ((hh, 1.0), (-hh, -1.0)):
                    tc = (hz_c - bz) / np.where(live, ez, 1.0)
                    cx = bx + tc * ex
                    cy = by + tc * ey
                    cap = live & (cx * cx + cy * cy <= r * r) & (tc < t)
                    t = np.where(cap, tc, t)
                    nbx = np.where(cap, 0.0, nbx)
                    nby = np.where(cap, 0.0, nby)
                    nbz = np.where(cap, nz_c, nbz)
            else:
                r = params[k, 0]
                a = (ex * ex + ey * ey) + ez * ez
                b = (bx * ex + by * ey) + bz * ez
                c = ((bx * bx + by * by) + bz * bz) - r * r
                disc = b * b - a * c
                quad = disc >= 0.0
                ts = (-b - np.sqrt(np.where(quad, disc, 0.0))) / a
                sph = quad & (ts < t)
                t = np.where(sph, ts, t)
                nbx = np.where(sph, (bx + ts * ex) / r, nbx)
                nby = np.where(sph, (by + ts * ey) / r, nby)
                nbz = np.where(sph, (bz + ts * ez) / r, nbz)
            win = (t >= near) & (t <= far) & (t < t_best)
            t_best = np.where(win, t, t_best)
            k_best = np.where(win, k, k_best)
            nwx = np.where(win, (rot[k, 0, 0] * nbx + rot[k, 0, 1] * nby) + rot[k, 0, 2] * nbz, nwx)
            nwy = np.where(win, (rot[k, 1, 0] * nbx + rot[k, 1, 1] * nby) + rot[k, 1, 2] * nbz, nwy)
            nwz = np.where(win, (rot[k, 2, 0] * nbx + rot[k, 2, 1] * nby) + rot[k, 2, 2] * nbz, nwz)
    hit = k_best >= 0
    lit = -((lx * nwx + ly * nwy) + lz * nwz)
    lit = np.where(lit < 0.0, 0.0, lit)
    shade = ambient + (1.0 - ambient) * lit
    col = colors[np.where(hit, k_best, 0)] if n > 0 else np.zeros((hw, 3))
    rgb_f = col * shade[:, None] * 255.0 + 0.5
    rgb = np.where(hit[:, None], rgb_f.astype(np.uint8), bg[None, :])
    depth = np.where(hit, t_best, 0.0).astype(np.float32)
    return rgb.astype(np.uint8).reshape(h, w, 3), depth.reshape(h, w)


def render_rgbd(
    scene: Scene, camera: CameraModel, frames: dict, timestamp: float = 0.0
) -> RgbdFrame:
    """Render one RGB-D frame.

    ``frames`` maps parent-frame names ("chassis", "wrist") to world poses;
    the camera sits at frames[parent] o mount_offset."""
    parent = frames[camera.parent_frame]
    origin, dirs = camera_rays(camera, parent @ camera.mount_offset)
    packed = pack_scene(scene)
    args = (origin, dirs, *packed[:6], camera.near, camera.far, packed[6], scene.ambient, packed[7])
    if accel.NUMBA_ENABLED:
        rgb, depth = _raycast_kernel(*args)
    else:
        rgb, depth = _raycast_numpy(*args)
    return RgbdFrame(rgb=rgb, depth=depth, timestamp=timestamp, camera_id=camera.id)
