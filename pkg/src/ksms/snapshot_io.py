"""Binary state snapshots: magic KSMS, version 1, little-endian throughout.

Layout: "<4sIII" header (magic, version, nx, ny), then "<ddd" (hx, hy, t),
then nx*ny f64 cell values of u followed by nx*ny f64 values of v, both
row-major with flat index i + nx*j.  Total size 40 + 16*nx*ny bytes.
v is stored although it is recoverable from u, so restarts skip the
elliptic solve and files stand on their own.
"""

import struct

import numpy as np

from .errors import SnapshotFormatError
from .grid_field import Grid2D, as_field

MAGIC = b"KSMS"
VERSION = 1
_HEADER = struct.Struct("<4sIII")
_GEOM = struct.Struct("<ddd")


def write_snapshot(state, g: Grid2D, path) -> None:
    u = np.ascontiguousarray(as_field(state.u, g), dtype="<f8")
    v = np.ascontiguousarray(as_field(state.v, g), dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, g.nx, g.ny))
        fh.write(_GEOM.pack(g.hx, g.hy, float(state.t)))
        fh.write(u.tobytes())
        fh.write(v.tobytes())


def read_snapshot(path):
    """Read a snapshot; returns (grid, u, v, t) with u, v bit-exact."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size + _GEOM.size:
        raise SnapshotFormatError(f"{path}: too short for a snapshot header")
    magic, version, nx, ny = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise SnapshotFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotFormatError(f"{path}: unsupported format version {version}")
    hx, hy, t = _GEOM.unpack_from(blob, _HEADER.size)
    expected = _HEADER.size + _GEOM.size + 16 * nx * ny
    if len(blob) != expected:
        raise SnapshotFormatError(
            f"{path}: payload is {len(blob)} bytes, expected {expected}"
        )
    n = nx * ny
    body = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size + _GEOM.size)
    u = body[:n].reshape(ny, nx).copy()
    v = body[n:].reshape(ny, nx).copy()
    g = Grid2D(nx=int(nx), ny=int(ny), lx=hx * nx, ly=hy * ny)
    return g, u, v, float(t)
