"""Binary and CSV artifact formats.

Grid file (``DDG1``), all little-endian::

    b"DDG1" | int64 d | d x (float64 lower, float64 upper, int64 cells) | float64 values (row-major)

Ensemble file (``DDP1``)::

    b"DDP1" | int64 d | int64 M | int64 k | uint64 seed | float64 positions (M x d, row-major)
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .grid import GridDensity, GridError, GridSpec
from .particles import ParticleEnsemble

GRID_MAGIC = b"DDG1"
ENSEMBLE_MAGIC = b"DDP1"


class FormatError(ValueError):
    pass


def grid_bytes(a: GridDensity) -> bytes:
    spec = a.spec
    parts = [GRID_MAGIC, struct.pack("<q", spec.dim)]
    for lo, hi, n in zip(spec.lower, spec.upper, spec.cells):
        parts.append(struct.pack("<ddq", lo, hi, n))
    parts.append(np.ascontiguousarray(a.values, dtype="<f8").tobytes())
    return b"".join(parts)


def grid_from_bytes(blob: bytes) -> GridDensity:
    try:
        return _grid_from_bytes(blob)
    except (struct.error, GridError) as exc:
        raise FormatError(f"corrupt grid file: {exc}") from None


def _grid_from_bytes(blob: bytes) -> GridDensity:
    if blob[:4] != GRID_MAGIC:
        raise FormatError("not a DDG1 grid file")
    (d,) = struct.unpack_from("<q", blob, 4)
    if d not in (1, 2):
        raise FormatError(f"unsupported dimension {d}")
    off = 12
    lower, upper, cells = [], [], []
    for _ in range(d):
        lo, hi, n = struct.unpack_from("<ddq", blob, off)
        off += 24
        lower.append(lo)
        upper.append(hi)
        cells.append(n)
    spec = GridSpec(tuple(lower), tuple(upper), tuple(cells))
    count = int(np.prod(cells))
    if len(blob) - off != 8 * count:
        raise FormatError(f"expected {count} values, file holds {(len(blob) - off) / 8:g}")
    values = np.frombuffer(blob, dtype="<f8", offset=off).reshape(spec.shape).astype(float)
    return GridDensity(spec, values)


def write_grid(path, a: GridDensity) -> Path:
    path = Path(path)
    path.write_bytes(grid_bytes(a))
    return path


def read_grid(path) -> GridDensity:
    return grid_from_bytes(Path(path).read_bytes())


def write_grid_csv(path, a: GridDensity) -> Path:
    """One row per cell: cell-center coordinates, then the value."""
    path = Path(path)
    spec = a.spec
    pts = spec.centers().reshape(-1, spec.dim)
    table = np.column_stack([pts, a.values.reshape(-1)])
    header = ",".join([f"x{i + 1}" for i in range(spec.dim)] + ["density"])
    np.savetxt(path, table, delimiter=",", header=header, comments="", fmt="%.17g")
    return path


def ensemble_bytes(e: ParticleEnsemble) -> bytes:
    head = ENSEMBLE_MAGIC + struct.pack("<qqqQ", e.dim, e.M, e.k, e.seed)
    return head + np.ascontiguousarray(e.positions, dtype="<f8").tobytes()


def ensemble_from_bytes(blob: bytes, time: float | None = None) -> ParticleEnsemble:
    if blob[:4] != ENSEMBLE_MAGIC:
        raise FormatError("not a DDP1 ensemble file")
    try:
        d, m, k, seed = struct.unpack_from("<qqqQ", blob, 4)
    except struct.error as exc:
        raise FormatError(f"corrupt ensemble header: {exc}") from None
    off = 36
    if len(blob) - off != 8 * d * m:
        raise FormatError(f"expected {d * m} coordinates, file holds {(len(blob) - off) / 8:g}")
    pos = np.frombuffer(blob, dtype="<f8", offset=off).reshape(m, d).astype(float)
    return ParticleEnsemble(pos, seed, k, 0.0 if time is None else time)


def write_ensemble(path, e: ParticleEnsemble) -> Path:
    path = Path(path)
    path.write_bytes(ensemble_bytes(e))
    return path


def read_ensemble(path, time: float | None = None) -> ParticleEnsemble:
    return ensemble_from_bytes(Path(path).read_bytes(), time)
