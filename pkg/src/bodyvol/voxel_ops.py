"""Voxel grids, probability thresholding and the height-scaled voxel volume.

The volume estimate converts an unscaled occupancy grid into physical units
from one known length, the body height::

    l_q   = h_m / h_v          edge length of one voxel
    V_q   = l_q ** 3           volume of one voxel
    V_tot = V_q * filled       volume of all filled voxels

``voxelize`` is the reference rasterizer used to produce grids from meshes:
a cell is filled when its center is inside the surface, decided by counting
crossings of an axis-parallel ray along +x.
"""

from __future__ import annotations

import enum
import logging
import math
import os
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import mesh_core
from .errors import (
    BoundsError,
    DomainError,
    EmptyInputError,
    FormatError,
    InputIOError,
    KindMismatchError,
    OpenMeshError,
)
from .mesh_core import TriangleMesh

logger = logging.getLogger(__name__)

MAGIC = b"VOLN"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHB3I")

# barycentric slack below which a ray counts as grazing an edge or vertex
_GRAZE_TOL = 1e-12
_JITTER = 1e-7
_MAX_RETRIES = 3
# irrational-ish ratios so successive retries never land on the same line
_JITTER_DIRS = (0.7548776662466927, 0.5698402909980532)
_MAX_PAIRS = 4_000_000


class GridKind(enum.IntEnum):
    BINARY = 0
    PROBABILITY = 1


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Dense grid indexed ``data[x, y, z]`` with y pointing up.

    ``origin`` and ``spacing`` are optional physical metadata (the corner of
    cell (0, 0, 0) and the cell edge lengths); they are not part of the
    file format.
    """

    data: np.ndarray
    kind: GridKind
    origin: Optional[np.ndarray] = None
    spacing: Optional[np.ndarray] = None

    def __post_init__(self):
        kind = GridKind(self.kind)
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise DomainError(f"voxel data must be 3-D, got shape {data.shape}")
        if kind is GridKind.BINARY:
            data = data.astype(bool)
        else:
            data = data.astype(np.float32)
            if data.size and (np.isnan(data).any() or data.min() < 0 or data.max() > 1):
                raise DomainError("probabilities must lie in [0, 1]")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "kind", kind)

    @property
    def dims(self) -> tuple:
        return tuple(int(n) for n in self.data.shape)

    def flat(self) -> np.ndarray:
        """Cell values in x-fastest, then y, then z order."""
        return self.data.ravel(order="F")

    @classmethod
    def from_flat(cls, values, dims, kind) -> "VoxelGrid":
        return cls(np.asarray(values).reshape(dims, order="F"), kind)

    @property
    def filled(self) -> int:
        if self.kind is not GridKind.BINARY:
            raise KindMismatchError("filled count is defined for binary grids")
        return int(np.count_nonzero(self.data))


@dataclass(frozen=True)
class BaselineEstimate:
    h_v: int
    h_m: float
    l_q: float
    V_q: float
    filled: int
    V_tot: float

    @property
    def V_tot_dm3(self) -> float:
        return self.V_tot * 1000.0


def threshold(grid: VoxelGrid, tau: float = 0.5) -> VoxelGrid:
    """Binary grid with a cell filled iff its probability is >= tau."""
    if grid.kind is not GridKind.PROBABILITY:
        raise KindMismatchError("threshold needs a probability grid")
    if not 0.0 < tau < 1.0:
        raise DomainError(f"threshold must lie in (0, 1), got {tau}")
    return VoxelGrid(grid.data >= np.float32(tau), GridKind.BINARY, grid.origin, grid.spacing)


def voxel_height(grid: VoxelGrid) -> int:
    """Inclusive span of filled y indices, in voxels."""
    if grid.kind is not GridKind.BINARY:
        raise KindMismatchError("voxel_height needs a binary grid")
    rows = np.flatnonzero(grid.data.any(axis=(0, 2)))
    if not len(rows):
        raise EmptyInputError("grid has no filled voxels")
    return int(rows[-1] - rows[0] + 1)


def baseline_volume(grid: VoxelGrid, h_m: float) -> BaselineEstimate:
    """Scale a binary grid to physical units using the known body height ``h_m``."""
    if not h_m > 0:
        raise DomainError(f"body height must be positive, got {h_m}")
    h_v = voxel_height(grid)
    filled = grid.filled
    l_q = h_m / h_v
    V_q = l_q ** 3
    return BaselineEstimate(h_v, float(h_m), l_q, V_q, filled, V_q * filled)


# ---------------------------------------------------------------------------
# Voxelization


def fit_cubic_bounds(mesh: TriangleMesh, pad: float = 0.0):
    """Cube around the mesh bounding box, centered on it, side = largest extent.

    ``pad`` widens the side by that fraction.
    """
    lo, hi = mesh.bounds()
    center = (lo + hi) / 2.0
    side = float((hi - lo).max()) * (1.0 + pad)
    if side <= 0:
        raise EmptyInputError("mesh has zero extent")
    half = side / 2.0
    return center - half, center + half


def _orient(uy, uz, vy, vz, py, pz):
    return (vy - uy) * (pz - uz) - (vz - uz) * (py - uy)


def _ray_hits(tri, py, pz):
    """Crossings of +x rays through (py, pz) with the paired triangles.

    ``tri`` is (n, 3, 3); py, pz broadcast against n. Returns (hit, graze, x).
    """
    ay, az = tri[:, 0, 1], tri[:, 0, 2]
    by, bz = tri[:, 1, 1], tri[:, 1, 2]
    cy, cz = tri[:, 2, 1], tri[:, 2, 2]
    wa = _orient(by, bz, cy, cz, py, pz)
    wb = _orient(cy, cz, ay, az, py, pz)
    wc = _orient(ay, az, by, bz, py, pz)
    area = wa + wb + wc
    scale = np.maximum.reduce([
        (by - ay) ** 2 + (bz - az) ** 2,
        (cy - by) ** 2 + (cz - bz) ** 2,
        (ay - cy) ** 2 + (az - cz) ** 2,
    ])
    # triangles seen edge-on from the ray never give a proper crossing
    proper = np.abs(area) > 1e-14 * scale
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(proper, 1.0 / np.where(proper, area, 1.0), 0.0)
    ba, bb, bc = wa * inv, wb * inv, wc * inv
    lo = np.minimum(np.minimum(ba, bb), bc)
    hit = proper & (lo > _GRAZE_TOL)
    graze = proper & (lo >= -_GRAZE_TOL) & ~hit
    x = ba * tri[:, 0, 0] + bb * tri[:, 1, 0] + bc * tri[:, 2, 0]
    return hit, graze, x


def _row_pairs(tri, lo, step, ny, nz):
    """Yield (tri_index, j, k) chunks for triangles whose yz box covers row centers."""
    ymin, ymax = tri[:, :, 1].min(axis=1), tri[:, :, 1].max(axis=1)
    zmin, zmax = tri[:, :, 2].min(axis=1), tri[:, :, 2].max(axis=1)
    j0 = np.clip(np.ceil((ymin - lo[1]) / step[1] - 0.5), 0, ny).astype(np.int64)
    j1 = np.clip(np.floor((ymax - lo[1]) / step[1] - 0.5), -1, ny - 1).astype(np.int64)
    k0 = np.clip(np.ceil((zmin - lo[2]) / step[2] - 0.5), 0, nz).astype(np.int64)
    k1 = np.clip(np.floor((zmax - lo[2]) / step[2] - 0.5), -1, nz - 1).astype(np.int64)
    nj = np.maximum(j1 - j0 + 1, 0)
    nk = np.maximum(k1 - k0 + 1, 0)
    counts = nj * nk
    starts = np.cumsum(counts) - counts
    t = 0
    n_tri = len(tri)
    while t < n_tri:
        # group triangles until the pair budget is reached
        end = int(np.searchsorted(np.cumsum(counts[t:]), _MAX_PAIRS, side="right")) + t
        end = max(end, t + 1)
        c = counts[t:end]
        total = int(c.sum())
        if total:
            idx = np.repeat(np.arange(t, end), c)
            local = np.arange(total) - np.repeat(starts[t:end] - starts[t], c)
            j = j0[idx] + local // nk[idx]
            k = k0[idx] + local % nk[idx]
            yield idx, j, k
        t = end


def voxelize(mesh: TriangleMesh, dims, bounds) -> VoxelGrid:
    """Center-sampled occupancy of a closed mesh inside an axis-aligned box.

    Parameters
    ----------
    mesh : TriangleMesh
        Closed, consistently oriented surface.
    dims : int or (nx, ny, nz)
        Cell counts; a single int gives a cube of cells.
    bounds : (lo, hi)
        Opposite corners of the gridded box; must contain the mesh.

    Rays that graze an edge or vertex are recast from a slightly jittered
    origin (up to three times); rows that stay ambiguous take the majority
    of their neighbouring rows.
    """
    report = mesh_core.validate_manifold(mesh)
    if not (report.is_closed and report.is_consistently_oriented):
        raise OpenMeshError("voxelize needs a closed, consistently oriented mesh", report)
    nx, ny, nz = (dims,) * 3 if np.isscalar(dims) else tuple(int(d) for d in dims)
    if min(nx, ny, nz) < 1:
        raise DomainError(f"grid dims must be positive, got {(nx, ny, nz)}")
    lo = np.asarray(bounds[0], dtype=float)
    hi = np.asarray(bounds[1], dtype=float)
    if not (hi > lo).all():
        raise BoundsError("bounds must have positive extent on every axis")
    step = (hi - lo) / np.array([nx, ny, nz])
    if mesh.n_vertices:
        mlo, mhi = mesh.bounds()
        slack = 1e-9 * float((hi - lo).max())
        if (mlo < lo - slack).any() or (mhi > hi + slack).any():
            raise BoundsError(f"mesh extent {mlo}..{mhi} exceeds bounds {lo}..{hi}")

    n_rows = ny * nz
    tri = mesh.vertices[mesh.faces]
    rows_x = []
    row_ids = []
    bad = np.zeros(n_rows, dtype=bool)
    for idx, j, k in _row_pairs(tri, lo, step, ny, nz):
        py = lo[1] + (j + 0.5) * step[1]
        pz = lo[2] + (k + 0.5) * step[2]
        hit, graze, x = _ray_hits(tri[idx], py, pz)
        row = j + ny * k
        bad[row[graze]] = True
        rows_x.append(x[hit])
        row_ids.append(row[hit])
    xs = np.concatenate(rows_x) if rows_x else np.zeros(0)
    rows = np.concatenate(row_ids) if row_ids else np.zeros(0, dtype=np.int64)
    counts = np.bincount(rows, minlength=n_rows)
    bad |= counts % 2 == 1
    keep = ~bad[rows]
    xs, rows = xs[keep], rows[keep]

    unresolved = []
    for row in np.flatnonzero(bad):
        j, k = int(row % ny), int(row // ny)
        for attempt in range(1, _MAX_RETRIES + 1):
            py = lo[1] + (j + 0.5) * step[1] + _JITTER * attempt * _JITTER_DIRS[0] * step[1]
            pz = lo[2] + (k + 0.5) * step[2] + _JITTER * attempt * _JITTER_DIRS[1] * step[2]
            near = ((tri[:, :, 1].min(axis=1) <= py) & (tri[:, :, 1].max(axis=1) >= py)
                    & (tri[:, :, 2].min(axis=1) <= pz) & (tri[:, :, 2].max(axis=1) >= pz))
            hit, graze, x = _ray_hits(tri[near], py, pz)
            if not graze.any() and np.count_nonzero(hit) % 2 == 0:
                xs = np.concatenate([xs, x[hit]])
                rows = np.concatenate([rows, np.full(np.count_nonzero(hit), row)])
                break
        else:
            unresolved.append(row)

    # count crossings left of each center; odd means inside
    first_right = np.clip(np.ceil((xs - lo[0]) / step[0] - 0.5), 0, nx).astype(np.int64)
    toggles = np.zeros((n_rows, nx + 1), dtype=np.int32)
    np.add.at(toggles, (rows, first_right), 1)
    occ = (np.cumsum(toggles[:, :nx], axis=1) % 2).astype(bool)

    if unresolved:
        logger.warning("voxelize: %d ray row(s) unresolved after jitter retries", len(unresolved))
        occ3 = occ.reshape(nz, ny, nx)
        known = np.ones((nz, ny), dtype=bool)
        for row in unresolved:
            known[row // ny, row % ny] = False
        for row in unresolved:
            k, j = row // ny, row % ny
            votes = np.zeros(nx, dtype=np.int32)
            n = 0
            for dk, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                kk, jj = k + dk, j + dj
                if 0 <= kk < nz and 0 <= jj < ny and known[kk, jj]:
                    votes += occ3[kk, jj]
                    n += 1
            occ3[k, j] = 2 * votes > n if n else False

    data = occ.reshape(nz, ny, nx).transpose(2, 1, 0)
    return VoxelGrid(data, GridKind.BINARY, origin=lo, spacing=step)


def point_inside(mesh: TriangleMesh, point) -> bool:
    """Ray-parity inside test for one point, with the same jitter retries."""
    p = np.asarray(point, dtype=float)
    tri = mesh.vertices[mesh.faces]
    scale = float(np.ptp(mesh.vertices, axis=0).max()) if mesh.n_vertices else 1.0
    for attempt in range(_MAX_RETRIES + 1):
        py = p[1] + _JITTER * attempt * _JITTER_DIRS[0] * scale
        pz = p[2] + _JITTER * attempt * _JITTER_DIRS[1] * scale
        hit, graze, x = _ray_hits(tri, py, pz)
        if not graze.any():
            return bool(np.count_nonzero(hit & (x > p[0])) % 2)
    return bool(np.count_nonzero(hit & (x > p[0])) % 2)


# ---------------------------------------------------------------------------
# Binary grid file


def dump_grid(grid: VoxelGrid) -> bytes:
    nx, ny, nz = grid.dims
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, int(grid.kind), nx, ny, nz)
    rows = grid.data.transpose(2, 1, 0)  # (z, y, x): x fastest on disk
    if grid.kind is GridKind.BINARY:
        payload = np.packbits(rows, axis=-1, bitorder="little").tobytes()
    else:
        payload = np.ascontiguousarray(rows, dtype="<f4").tobytes()
    return header + payload


def load_grid(source) -> VoxelGrid:
    """Read a VOLN grid from bytes, a binary stream or a path."""
    if isinstance(source, (str, os.PathLike)):
        try:
            with open(source, "rb") as fh:
                blob = fh.read()
        except OSError as exc:
            raise InputIOError(f"cannot read voxel grid {source}: {exc}") from exc
    elif isinstance(source, (bytes, bytearray)):
        blob = bytes(source)
    else:
        blob = source.read()
    if len(blob) < _HEADER.size:
        raise FormatError("voxel grid file too short for header")
    magic, version, kind, nx, ny, nz = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported grid format version {version}")
    try:
        kind = GridKind(kind)
    except ValueError:
        raise FormatError(f"unknown grid kind {kind}") from None
    body = memoryview(blob)[_HEADER.size:]
    if kind is GridKind.BINARY:
        row_bytes = math.ceil(nx / 8)
        need = row_bytes * ny * nz
        if len(body) != need:
            raise FormatError(f"expected {need} payload bytes, found {len(body)}")
        packed = np.frombuffer(body, dtype=np.uint8).reshape(nz, ny, row_bytes)
        rows = np.unpackbits(packed, axis=-1, count=nx, bitorder="little").astype(bool)
    else:
        need = 4 * nx * ny * nz
        if len(body) != need:
            raise FormatError(f"expected {need} payload bytes, found {len(body)}")
        rows = np.frombuffer(body, dtype="<f4").reshape(nz, ny, nx)
    return VoxelGrid(rows.transpose(2, 1, 0), kind)


def save_grid(grid: VoxelGrid, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dump_grid(grid))
