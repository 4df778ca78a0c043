"""Backend selection for the hot numeric kernels.

The raycast renderer and the container checksum are the only loops that
dominate runtime; they ship in two variants: a numba ``@njit`` kernel
(default) and a pure-numpy/python fallback. Set ``WHEELARM_NUMBA=0`` before
import to force the fallback; the flag is read once. Both variants produce
identical bytes for identical inputs, so containers do not depend on the
backend. ``benchmarks/bench_backends.py`` compares the two.
"""

import os

import numpy as np

_flag = os.environ.get("WHEELARM_NUMBA", "1").strip().lower()
NUMBA_REQUESTED = _flag not in ("0", "false", "off", "no")

if NUMBA_REQUESTED:
    try:
        from numba import njit as _numba_njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False
else:
    NUMBA_ENABLED = False


def njit(func):
    """Apply numba's njit when the backend is enabled, else return func."""
    if NUMBA_ENABLED:
        return _numba_njit(cache=True)(func)
    return func


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"


# --- CRC32C (Castagnoli), used by the dataset container ----------------------

def _make_crc32c_table() -> np.ndarray:
    poly = 0x82F63B78  # reflected Castagnoli polynomial
    table = np.empty(256, dtype=np.uint32)
    for i in range(256):
        crc = i
        for _ in range(8):
            crc = (crc >> 1) ^ poly if crc & 1 else crc >> 1
        table[i] = crc
    return table


_CRC_TABLE = _make_crc32c_table()
_CRC_TABLE_LIST = [int(x) for x in _CRC_TABLE]


@njit
def _crc32c_kernel(data: np.ndarray, table: np.ndarray, crc: np.uint32) -> np.uint32:
    for i in range(data.shape[0]):
        crc = table[(crc ^ data[i]) & np.uint32(0xFF)] ^ (crc >> np.uint32(8))
    return crc


def _crc32c_python(data: bytes, crc: int) -> int:
    table = _CRC_TABLE_LIST
    for b in data:
        crc = table[(crc ^ b) & 0xFF] ^ (crc >> 8)
    return crc


def crc32c(data, value: int = 0) -> int:
    """CRC-32C of ``data`` (bytes or uint8 array); chainable via ``value``."""
    crc = (value ^ 0xFFFFFFFF) & 0xFFFFFFFF
    if NUMBA_ENABLED:
        buf = np.frombuffer(data, dtype=np.uint8) if isinstance(
            data, (bytes, bytearray, memoryview)
        ) else np.ascontiguousarray(data, dtype=np.uint8)
        crc = int(_crc32c_kernel(buf, _CRC_TABLE, np.uint32(crc)))
    else:
        if isinstance(data, np.ndarray):
            data = data.tobytes()
        crc = _crc32c_python(bytes(data), crc)
    return (crc ^ 0xFFFFFFFF) & 0xFFFFFFFF
