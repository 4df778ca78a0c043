#!/usr/bin/env python3
"""Compare the compiled and fallback variants of the two hot kernels.

Run with the default environment (compiled backend active); the script calls
both variants directly, checks they produce identical bytes, and reports
wall-clock ratios. Pass --frames/--megabytes to change the workload.
"""

import argparse
import sys
import time

import numpy as np

from wheelarm import accel
from wheelarm.render import _raycast_kernel, _raycast_numpy, camera_rays, pack_scene
from wheelarm.scene import default_scene
from wheelarm.session import TeleopSession


def timed(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return out, best


def bench_crc(megabytes: float) -> None:
    rng = np.random.default_rng(0)
    payload = rng.integers(0, 256, int(megabytes * 1e6), dtype=np.uint8)

    kernel_crc = None
    if accel.NUMBA_ENABLED:
        accel.crc32c(payload[:16])  # compile outside the timed region
        raw = (0 ^ 0xFFFFFFFF) & 0xFFFFFFFF
        kernel_crc, t_kernel = timed(
            lambda: int(accel._crc32c_kernel(payload, accel._CRC_TABLE, np.uint32(raw)))
            ^ 0xFFFFFFFF,
            repeats=3,
        )
    python_crc, t_python = timed(
        lambda: accel._crc32c_python(payload.tobytes(), 0xFFFFFFFF) ^ 0xFFFFFFFF,
        repeats=1,
    )
    python_crc &= 0xFFFFFFFF

    print(f"crc32c over {megabytes:.1f} MB")
    print(f"  python table loop : {t_python * 1e3:9.2f} ms")
    if kernel_crc is not None:
        kernel_crc &= 0xFFFFFFFF
        assert kernel_crc == python_crc, "backends disagree"
        print(f"  compiled kernel   : {t_kernel * 1e3:9.2f} ms  ({t_python / t_kernel:6.1f}x)")
    else:
        print("  compiled kernel   : unavailable (WHEELARM_NUMBA=0)")


def bench_raycast(frames: int) -> None:
    session = TeleopSession(scene=default_scene())
    scene = session.scene
    camera = scene.cameras["chassis"]
    parent = session.camera_frames()[camera.parent_frame]
    origin, dirs = camera_rays(camera, parent @ camera.mount_offset)
    packed = pack_scene(scene)
    args = (origin, dirs, *packed[:6], camera.near, camera.far,
            packed[6], scene.ambient, packed[7])

    (rgb_np, depth_np), t_numpy = timed(lambda: _raycast_numpy(*args), repeats=max(1, frames))
    print(f"raycast {camera.width}x{camera.height}, {len(scene.objects)} objects")
    print(f"  numpy vectorized  : {t_numpy * 1e3:9.2f} ms/frame")
    if accel.NUMBA_ENABLED:
        _raycast_kernel(*args)  # compile outside the timed region
        (rgb_nb, depth_nb), t_numba = timed(lambda: _raycast_kernel(*args), repeats=max(1, frames))
        assert np.array_equal(rgb_np, rgb_nb), "backends disagree on rgb"
        assert np.array_equal(depth_np, depth_nb), "backends disagree on depth"
        print(f"  compiled kernel   : {t_numba * 1e3:9.2f} ms/frame  ({t_numpy / t_numba:6.1f}x)")
    else:
        print("  compiled kernel   : unavailable (WHEELARM_NUMBA=0)")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--megabytes", type=float, default=8.0, help="crc payload size")
    parser.add_argument("--frames", type=int, default=5, help="raycast timing repeats")
    args = parser.parse_args(argv)
    print(f"active backend: {accel.backend_name()}")
    bench_crc(args.megabytes)
    bench_raycast(args.frames)
    return 0


if __name__ == "__main__":
    sys.exit(main())
