"""Closed triangle meshes: loading, manifold checks, hole filling and volume.

Faces are wound counter-clockwise when viewed from outside, so the
divergence-theorem sum over faces is positive for a correctly oriented
closed surface.
"""

from __future__ import annotations

import io
import logging
import math
import os
from dataclasses import dataclass, field
from typing import BinaryIO, Union

import numpy as np

from .errors import (
    EmptyInputError,
    InvalidTransformError,
    MeshStructureError,
    OpenMeshError,
    ParseError,
    UnsupportedFaceError,
    UnsupportedTopologyError,
)

logger = logging.getLogger(__name__)

ObjSource = Union[bytes, bytearray, BinaryIO, str, os.PathLike]


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Indexed triangle mesh.

    Attributes
    ----------
    vertices : (N, 3) float64 array, meters
    faces : (M, 3) int64 array of vertex indices
    """

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.array(self.faces, dtype=np.int64).reshape(-1, 3)
        if f.size:
            if f.min() < 0 or f.max() >= len(v):
                raise MeshStructureError(
                    f"face index out of range for {len(v)} vertices"
                )
            repeats = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
            if repeats.any():
                bad = int(np.flatnonzero(repeats)[0])
                raise MeshStructureError(f"face {bad} repeats a vertex index")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.n_vertices:
            raise EmptyInputError("mesh has no vertices")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def flipped(self) -> "TriangleMesh":
        """Same surface with every face winding reversed."""
        return TriangleMesh(self.vertices, self.faces[:, ::-1])


@dataclass(frozen=True)
class ManifoldReport:
    is_edge_manifold: bool
    is_closed: bool
    is_consistently_oriented: bool
    boundary_loops: list = field(default_factory=list)
    degenerate_face_count: int = 0

    def summary(self) -> str:
        return (
            f"edge-manifold: {self.is_edge_manifold}, closed: {self.is_closed}, "
            f"oriented: {self.is_consistently_oriented}, "
            f"boundary loops: {len(self.boundary_loops)} "
            f"({', '.join(str(len(l)) for l in self.boundary_loops) or '-'} edges), "
            f"degenerate faces: {self.degenerate_face_count}"
        )


@dataclass(frozen=True)
class HeightExtremes:
    p_h: np.ndarray
    p_l: np.ndarray
    height_m: float


# ---------------------------------------------------------------------------
# OBJ I/O


def _read_bytes(source: ObjSource) -> bytes:
    if isinstance(source, (bytes, bytearray)):
        return bytes(source)
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return fh.read()
    return source.read()


def load_obj(source: ObjSource) -> TriangleMesh:
    """Parse the ``v``/``f`` subset of Wavefront OBJ into a TriangleMesh.

    Face references may use the ``i/t/n`` form (only the vertex index is
    kept) and negative relative indices. Comments and blank lines are
    skipped; any other directive is ignored and counted.
    """
    text = _read_bytes(source).decode("utf-8", errors="replace")
    vertices = []
    faces = []
    face_lines = []
    ignored = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *rest = line.split()
        if tag == "v":
            if len(rest) < 3:
                raise ParseError("vertex needs 3 coordinates", lineno)
            try:
                vertices.append([float(x) for x in rest[:3]])
            except ValueError:
                raise ParseError(f"bad vertex coordinate in {raw.strip()!r}", lineno) from None
        elif tag == "f":
            if len(rest) > 3:
                raise UnsupportedFaceError(
                    f"{len(rest)}-sided face; only triangles are supported", lineno
                )
            if len(rest) < 3:
                raise ParseError("face needs 3 vertex references", lineno)
            idx = []
            for tok in rest:
                try:
                    i = int(tok.split("/", 1)[0])
                except ValueError:
                    raise ParseError(f"bad face index {tok!r}", lineno) from None
                if i == 0:
                    raise ParseError("face index 0 is invalid (indices are 1-based)", lineno)
                idx.append(i - 1 if i > 0 else len(vertices) + i)
            faces.append(idx)
            face_lines.append(lineno)
        else:
            ignored += 1
    if ignored:
        logger.warning("load_obj: ignored %d unsupported directive(s)", ignored)

    n = len(vertices)
    for tri, lineno in zip(faces, face_lines):
        for i in tri:
            if i < 0 or i >= n:
                raise MeshStructureError(
                    f"line {lineno}: face index {i + 1} out of range for {n} vertices"
                )
        if len(set(tri)) < 3:
            raise MeshStructureError(f"line {lineno}: face repeats a vertex index")
    return TriangleMesh(np.asarray(vertices, dtype=float).reshape(-1, 3),
                        np.asarray(faces, dtype=np.int64).reshape(-1, 3))


def dump_obj(mesh: TriangleMesh) -> bytes:
    out = io.StringIO()
    for x, y, z in mesh.vertices:
        out.write(f"v {float(x)!r} {float(y)!r} {float(z)!r}\n")
    for a, b, c in mesh.faces:
        out.write(f"f {a + 1} {b + 1} {c + 1}\n")
    return out.getvalue().encode("ascii")


def save_obj(mesh: TriangleMesh, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dump_obj(mesh))


# ---------------------------------------------------------------------------
# Topology


def _half_edges(faces: np.ndarray) -> np.ndarray:
    return faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)


def _face_cross(mesh: TriangleMesh) -> np.ndarray:
    tri = mesh.vertices[mesh.faces]
    return np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])


def _trace_loops(directed: np.ndarray) -> list:
    """Chain directed boundary half-edges into vertex cycles."""
    outgoing: dict = {}
    for a, b in directed.tolist():
        outgoing.setdefault(a, []).append(b)
    loops = []
    for start in sorted(outgoing):
        while outgoing.get(start):
            loop = [start]
            cur = outgoing[start].pop(0)
            while cur != start:
                loop.append(cur)
                nxt = outgoing.get(cur)
                if not nxt:
                    break
                cur = nxt.pop(0)
            loops.extend(_split_pinched(loop))
    return loops


def _split_pinched(loop: list) -> list:
    """Split a cycle that revisits a vertex into simple cycles."""
    out = []
    stack: list = []
    pos: dict = {}
    for v in loop:
        if v in pos:
            i = pos[v]
            out.append(stack[i:])
            for u in stack[i + 1:]:
                del pos[u]
            del stack[i + 1:]
        else:
            pos[v] = len(stack)
            stack.append(v)
    out.append(stack)
    return [c for c in out if len(c) >= 3]


def validate_manifold(mesh: TriangleMesh) -> ManifoldReport:
    """Report edge-manifoldness, closedness, orientation and boundary loops.

    Boundary loops are returned with the winding of the faces that own the
    boundary edges, which is the direction ``close_holes`` relies on.
    """
    faces = mesh.faces
    if not len(faces):
        return ManifoldReport(True, True, True, [], 0)
    directed = _half_edges(faces)
    undirected = np.sort(directed, axis=1)
    _, inverse, counts = np.unique(undirected, axis=0, return_inverse=True,
                                   return_counts=True)
    inverse = inverse.reshape(-1)
    edge_manifold = bool(counts.max() <= 2)
    closed = edge_manifold and bool((counts == 2).all())
    _, directed_counts = np.unique(directed, axis=0, return_counts=True)
    oriented = edge_manifold and bool(directed_counts.max() == 1)

    boundary = directed[counts[inverse] == 1]
    loops = _trace_loops(boundary) if len(boundary) else []

    cross = _face_cross(mesh)
    area2 = np.linalg.norm(cross, axis=1)
    tri = mesh.vertices[faces]
    edge_len2 = np.max(
        [np.sum((tri[:, i] - tri[:, (i + 1) % 3]) ** 2, axis=1) for i in range(3)], axis=0
    )
    degenerate = int(np.count_nonzero(area2 <= 1e-12 * edge_len2))
    return ManifoldReport(edge_manifold, closed, oriented, loops, degenerate)


def close_holes(mesh: TriangleMesh) -> TriangleMesh:
    """Fill every boundary loop with a triangle fan around the loop centroid.

    Fill faces traverse each boundary edge opposite to its owning face so the
    patch inherits the orientation of its neighbours. A closed input is
    returned as is.
    """
    report = validate_manifold(mesh)
    if not report.is_edge_manifold:
        raise UnsupportedTopologyError("cannot fill holes in a non-edge-manifold mesh")
    if not report.boundary_loops:
        return mesh
    vertices = [mesh.vertices]
    faces = [mesh.faces]
    next_index = mesh.n_vertices
    for loop in report.boundary_loops:
        ring = np.asarray(loop)
        vertices.append(mesh.vertices[ring].mean(axis=0, keepdims=True))
        fan = np.column_stack([np.roll(ring, -1), ring, np.full(len(ring), next_index)])
        faces.append(fan)
        next_index += 1
    return TriangleMesh(np.vstack(vertices), np.vstack(faces))


# ---------------------------------------------------------------------------
# Measures


def signed_volume_sum(mesh: TriangleMesh) -> float:
    """Raw signed-tetrahedron sum over faces, without any topology check.

    Only meaningful as a volume for closed, consistently oriented meshes;
    for open meshes the result depends on the position of the origin.
    """
    if not mesh.n_faces:
        return 0.0
    # start every face at its smallest index so a reversed winding yields the
    # bitwise negated triple product
    f = mesh.faces
    shift = np.argmin(f, axis=1)
    f = f[np.arange(len(f))[:, None], (shift[:, None] + np.arange(3)) % 3]
    tri = mesh.vertices[f]
    triple = np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2]))
    return math.fsum(triple.tolist()) / 6.0


def mesh_volume(mesh: TriangleMesh) -> float:
    """Enclosed volume in cubic mesh units (m³ for meshes in meters).

    Raises
    ------
    OpenMeshError
        If the mesh is not closed or not consistently oriented.
    """
    report = validate_manifold(mesh)
    if not report.is_closed:
        raise OpenMeshError(
            f"mesh is not closed ({len(report.boundary_loops)} boundary loop(s)); "
            "run close_holes first", report)
    if not report.is_consistently_oriented:
        raise OpenMeshError("mesh faces are not consistently oriented", report)
    return signed_volume_sum(mesh)


def volume_centroid(mesh: TriangleMesh) -> np.ndarray:
    """Centroid of the enclosed solid; falls back to the vertex mean when
    the enclosed volume is zero."""
    tri = mesh.vertices[mesh.faces]
    vol = np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2])) / 6.0
    total = vol.sum()
    if not len(tri) or abs(total) < 1e-300:
        return mesh.vertices.mean(axis=0)
    # tetra (origin, a, b, c) has centroid (a + b + c) / 4
    return (vol[:, None] * tri.sum(axis=1)).sum(axis=0) / (4.0 * total)


def height_extremes(mesh: TriangleMesh) -> HeightExtremes:
    """Highest and lowest vertex along +y and their vertical distance."""
    if not mesh.n_vertices:
        raise EmptyInputError("mesh has no vertices")
    y = mesh.vertices[:, 1]
    p_h = mesh.vertices[int(np.argmax(y))].copy()
    p_l = mesh.vertices[int(np.argmin(y))].copy()
    return HeightExtremes(p_h, p_l, float(p_h[1] - p_l[1]))


def transform_mesh(mesh: TriangleMesh, rotation, translation=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Apply ``v -> R v + t`` to every vertex."""
    R = np.asarray(rotation, dtype=float)
    t = np.asarray(translation, dtype=float).reshape(3)
    if R.shape != (3, 3):
        raise InvalidTransformError(f"rotation must be 3x3, got {R.shape}")
    if abs(np.linalg.det(R) - 1.0) > 1e-6 or not np.allclose(R @ R.T, np.eye(3), atol=1e-6):
        raise InvalidTransformError("rotation must be orthonormal with determinant +1")
    return TriangleMesh(mesh.vertices @ R.T + t, mesh.faces)


def rotation_matrix(axis, degrees: float) -> np.ndarray:
    """Right-handed rotation about a coordinate axis ('x', 'y', 'z') or a vector."""
    if isinstance(axis, str):
        axis = {"x": (1, 0, 0), "y": (0, 1, 0), "z": (0, 0, 1)}[axis.lower()]
    k = np.asarray(axis, dtype=float)
    k = k / np.linalg.norm(k)
    th = math.radians(degrees)
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + math.sin(th) * K + (1 - math.cos(th)) * (K @ K)
