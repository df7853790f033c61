"""Procedural meshes used by tests, the CLI demos and the experiments.

All generators return outward-oriented meshes in meters.
"""

from __future__ import annotations

import numpy as np

from .mesh_core import TriangleMesh

# quad (a, b, c, d) in CCW order seen from outside -> two triangles
_BOX_QUADS = [
    (0, 3, 2, 1),  # z = lo
    (4, 5, 6, 7),  # z = hi
    (0, 1, 5, 4),  # y = lo
    (2, 3, 7, 6),  # y = hi
    (0, 4, 7, 3),  # x = lo
    (1, 2, 6, 5),  # x = hi
]


def _quads_to_tris(quads):
    tris = []
    for a, b, c, d in quads:
        tris.append((a, b, c))
        tris.append((a, c, d))
    return tris


def box(lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0)) -> TriangleMesh:
    """Axis-aligned box with 8 vertices and 12 faces."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    corners = np.array([
        [lo[0], lo[1], lo[2]], [hi[0], lo[1], lo[2]], [hi[0], hi[1], lo[2]], [lo[0], hi[1], lo[2]],
        [lo[0], lo[1], hi[2]], [hi[0], lo[1], hi[2]], [hi[0], hi[1], hi[2]], [lo[0], hi[1], hi[2]],
    ])
    return TriangleMesh(corners, _quads_to_tris(_BOX_QUADS))


def unit_cube() -> TriangleMesh:
    return box()


def tetrahedron() -> TriangleMesh:
    """Corner tetrahedron (0,0,0), (1,0,0), (0,1,0), (0,0,1); volume 1/6."""
    v = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)]
    f = [(0, 2, 1), (0, 1, 3), (0, 3, 2), (1, 2, 3)]
    return TriangleMesh(v, f)


def regular_tetrahedron(edge: float = 1.0) -> TriangleMesh:
    """Regular tetrahedron inscribed in alternate cube corners; volume edge³/(6√2)."""
    s = edge / (2.0 * np.sqrt(2.0))
    v = s * np.array([(1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)], dtype=float)
    f = [(0, 1, 2), (0, 3, 1), (0, 2, 3), (1, 3, 2)]
    return TriangleMesh(v, f)


def icosphere(subdivisions: int = 3, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Subdivided icosahedron projected onto a sphere."""
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.asarray(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}

        def midpoint(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    v = np.asarray(verts) * radius + np.asarray(center, dtype=float)
    return TriangleMesh(v, faces)


def open_cylinder(radius: float = 1.0, height: float = 2.0, segments: int = 32) -> TriangleMesh:
    """Cylinder side wall along +y with both ends left open (two boundary loops)."""
    ang = 2 * np.pi * np.arange(segments) / segments
    ring = np.column_stack([radius * np.cos(ang), np.zeros(segments), radius * np.sin(ang)])
    top = ring + [0.0, height, 0.0]
    v = np.vstack([ring, top])
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        # seen from outside, going around -z -> +x is clockwise in xz, so wind (i, i+n, j)
        faces.append((i, segments + i, j))
        faces.append((j, segments + i, segments + j))
    return TriangleMesh(v, faces)


def stacked_cubes() -> TriangleMesh:
    """A 1 x 1 x 2 column built from two unit cubes sharing the face at y = 1.

    Vertices 0-3 are the y = 0 ring, 4-7 the shared y = 1 ring, 8-11 the top.
    """
    rings = []
    for y in (0.0, 1.0, 2.0):
        rings += [(0, y, 0), (1, y, 0), (1, y, 1), (0, y, 1)]
    faces = [(0, 1, 2), (0, 2, 3), (8, 10, 9), (8, 11, 10)]
    for base in (0, 4):
        for i in range(4):
            j = (i + 1) % 4
            a, b = base + i, base + j
            c, d = base + 4 + j, base + 4 + i
            faces += [(a, d, c), (a, c, b)]
    return TriangleMesh(rings, faces)


def stacked_cubes_labels() -> np.ndarray:
    """Vertex labels splitting ``stacked_cubes`` into two closed unit cubes.

    The shared ring alternates labels so every face touching it has a strict
    majority on its own side, which makes the part boundary the planar ring.
    """
    return np.array([1, 1, 1, 1, 2, 1, 2, 1, 2, 2, 2, 2])


def person_proxy(height: float = 1.8, arm_raised: bool = False) -> TriangleMesh:
    """Blocky standing figure: head, torso, two legs and two arms.

    The boxes touch but do not overlap, so the surface volume equals the sum
    of the box volumes. With ``arm_raised`` the right arm points straight up
    from the shoulder instead of hanging beside the torso.
    """
    s = height / 1.8
    leg_h, torso_h, head_h = 0.85 * s, 0.65 * s, 0.30 * s
    depth = 0.22 * s
    torso_w, leg_w, arm_w, head_w = 0.36 * s, 0.16 * s, 0.10 * s, 0.20 * s
    arm_len = 0.62 * s
    z0, z1 = -depth / 2, depth / 2
    parts = [
        ((-torso_w / 2, 0.0, z0), (-torso_w / 2 + leg_w, leg_h, z1)),
        ((torso_w / 2 - leg_w, 0.0, z0), (torso_w / 2, leg_h, z1)),
        ((-torso_w / 2, leg_h, z0), (torso_w / 2, leg_h + torso_h, z1)),
        ((-head_w / 2, leg_h + torso_h, z0 * 0.8), (head_w / 2, leg_h + torso_h + head_h, z1 * 0.8)),
    ]
    shoulder = leg_h + torso_h
    az0, az1 = -arm_w / 2, arm_w / 2
    parts.append(((-torso_w / 2 - arm_w, shoulder - arm_len, az0), (-torso_w / 2, shoulder, az1)))
    if arm_raised:
        parts.append(((torso_w / 2, shoulder, az0), (torso_w / 2 + arm_w, shoulder + arm_len, az1)))
    else:
        parts.append(((torso_w / 2, shoulder - arm_len, az0), (torso_w / 2 + arm_w, shoulder, az1)))
    return merge_meshes([box(lo, hi) for lo, hi in parts])


def merge_meshes(meshes) -> TriangleMesh:
    """Concatenate meshes into one vertex/face table without welding."""
    verts, faces, offset = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + offset)
        offset += m.n_vertices
    return TriangleMesh(np.vstack(verts), np.vstack(faces))
