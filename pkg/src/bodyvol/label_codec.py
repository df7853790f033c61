"""Encoders and decoders for pose heatmaps, part masks and depth-binned pose grids.

Pixel coordinates are (u, v) with u to the right and v down on a 256 x 256
image; pixel centres sit at integer coordinates, so the image spans
[-0.5, 255.5). A map of resolution r samples the image at scale
r / image_size, and cell (row, col) = (v, u) holds the value at that scaled
coordinate, rounded to the nearest cell.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, FormatError, InputIOError, ShapeError

JOINT_NAMES = (
    "head", "neck",
    "left_shoulder", "right_shoulder",
    "left_arm", "right_arm",
    "left_fore_arm", "right_fore_arm",
    "left_hand", "right_hand",
    "left_hip", "right_hip",
    "left_knee", "right_knee",
    "left_foot", "right_foot",
)
N_JOINTS = len(JOINT_NAMES)
IMAGE_SIZE = 256
N_CLASSES = 15
DEPTH_BINS = 12
POSE3D_RESOLUTION = 64
VISIBLE_EPS = 1e-6


@dataclass(frozen=True, eq=False)
class Skeleton2D:
    joints: np.ndarray  # (16, 2) u, v in pixels
    visible: np.ndarray  # (16,) bool

    def __post_init__(self):
        joints = np.asarray(self.joints, dtype=float).reshape(-1, 2)
        visible = np.asarray(self.visible, dtype=bool).reshape(-1)
        if len(joints) != N_JOINTS or len(visible) != N_JOINTS:
            raise ShapeError(f"skeleton needs {N_JOINTS} joints, got {len(joints)}")
        object.__setattr__(self, "joints", joints)
        object.__setattr__(self, "visible", visible)

    @classmethod
    def from_points(cls, points, visible=None) -> "Skeleton2D":
        points = np.asarray(points, dtype=float)
        if visible is None:
            visible = np.ones(len(points), dtype=bool)
        return cls(points, visible)


@dataclass(frozen=True, eq=False)
class Skeleton3D:
    joints: np.ndarray  # (16, 3) u, v in pixels, relative depth in [0, 1]
    visible: np.ndarray

    def __post_init__(self):
        joints = np.asarray(self.joints, dtype=float).reshape(-1, 3)
        visible = np.asarray(self.visible, dtype=bool).reshape(-1)
        if len(joints) != N_JOINTS or len(visible) != N_JOINTS:
            raise ShapeError(f"skeleton needs {N_JOINTS} joints, got {len(joints)}")
        d = joints[:, 2]
        if np.isnan(d).any() or (d < 0).any() or (d > 1).any():
            raise DomainError("relative depth must lie in [0, 1]")
        object.__setattr__(self, "joints", joints)
        object.__setattr__(self, "visible", visible)

    @classmethod
    def from_points(cls, points, visible=None) -> "Skeleton3D":
        points = np.asarray(points, dtype=float)
        if visible is None:
            visible = np.ones(len(points), dtype=bool)
        return cls(points, visible)

    def to_2d(self) -> Skeleton2D:
        return Skeleton2D(self.joints[:, :2], self.visible)


def _nearest_cell(coord, scale, size):
    c = np.floor(np.asarray(coord, dtype=float) * scale + 0.5).astype(np.int64)
    return np.clip(c, 0, size - 1)


def _check_in_image(joints, visible, image_size):
    # pixel i spans [i - 0.5, i + 0.5)
    uv = joints[visible, :2]
    if uv.size and ((uv < -0.5).any() or (uv >= image_size - 0.5).any()):
        raise DomainError(f"visible joints must lie inside the {image_size}px image "
                          f"[-0.5, {image_size - 0.5})")


def _gaussian_1d(size, mean, sigma):
    x = np.arange(size, dtype=float)
    return np.exp(-((x - mean) ** 2) / (2.0 * sigma ** 2))


# ---------------------------------------------------------------------------
# 2-D heatmaps


def encode_heatmaps(skel: Skeleton2D, resolution: int = 64, sigma: float = 1.0,
                    image_size: int = IMAGE_SIZE) -> np.ndarray:
    """One isotropic Gaussian per visible joint, peak 1 at the nearest cell.

    Returns a float32 array of shape (16, resolution, resolution) indexed
    [joint, v, u]. Invisible joints get all-zero channels.
    """
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    _check_in_image(skel.joints, skel.visible, image_size)
    scale = resolution / image_size
    out = np.zeros((N_JOINTS, resolution, resolution), dtype=np.float32)
    cols = _nearest_cell(skel.joints[:, 0], scale, resolution)
    rows = _nearest_cell(skel.joints[:, 1], scale, resolution)
    for j in np.flatnonzero(skel.visible):
        out[j] = np.outer(_gaussian_1d(resolution, rows[j], sigma),
                          _gaussian_1d(resolution, cols[j], sigma))
    return out


def decode_heatmaps(stack: np.ndarray, image_size: int = IMAGE_SIZE) -> Skeleton2D:
    """Argmax per channel; channels that never reach 1e-6 decode as invisible.

    Ties resolve to the smallest row-major index.
    """
    stack = np.asarray(stack)
    if stack.ndim != 3 or stack.shape[0] != N_JOINTS or stack.shape[1] != stack.shape[2]:
        raise ShapeError(f"expected ({N_JOINTS}, r, r) heatmaps, got {stack.shape}")
    res = stack.shape[1]
    flat = stack.reshape(N_JOINTS, -1)
    idx = flat.argmax(axis=1)
    peak = flat[np.arange(N_JOINTS), idx]
    visible = peak >= VISIBLE_EPS
    rows, cols = np.divmod(idx, res)
    scale = res / image_size
    joints = np.column_stack([cols / scale, rows / scale]).astype(float)
    joints[~visible] = 0.0
    return Skeleton2D(joints, visible)


# ---------------------------------------------------------------------------
# 3-D pose grids


def depth_bin(depth, bins: int = DEPTH_BINS):
    """Left-closed uniform bin of a relative depth; depth 1 falls in the last bin."""
    d = np.asarray(depth, dtype=float)
    if np.isnan(d).any() or (d < 0).any() or (d > 1).any():
        raise DomainError("relative depth must lie in [0, 1]")
    b = np.clip(np.floor(d * bins), 0, bins - 1).astype(np.int64)
    return int(b) if b.ndim == 0 else b


def bin_center(b, bins: int = DEPTH_BINS):
    return (np.asarray(b, dtype=float) + 0.5) / bins


def encode_pose3d(skel: Skeleton3D, resolution: int = POSE3D_RESOLUTION, sigma: float = 1.0,
                  depth_sigma: float = 1.0, image_size: int = IMAGE_SIZE) -> np.ndarray:
    """3-D Gaussian per joint on a (16, 12, r, r) grid indexed [joint, bin, v, u]."""
    if not (sigma > 0 and depth_sigma > 0):
        raise DomainError("sigma and depth_sigma must be positive")
    _check_in_image(skel.joints, skel.visible, image_size)
    scale = resolution / image_size
    out = np.zeros((N_JOINTS, DEPTH_BINS, resolution, resolution), dtype=np.float32)
    cols = _nearest_cell(skel.joints[:, 0], scale, resolution)
    rows = _nearest_cell(skel.joints[:, 1], scale, resolution)
    bins = depth_bin(skel.joints[:, 2])
    for j in np.flatnonzero(skel.visible):
        g_d = _gaussian_1d(DEPTH_BINS, bins[j], depth_sigma)
        g_v = _gaussian_1d(resolution, rows[j], sigma)
        g_u = _gaussian_1d(resolution, cols[j], sigma)
        out[j] = g_d[:, None, None] * g_v[None, :, None] * g_u[None, None, :]
    return out


def decode_pose3d(grid: np.ndarray, image_size: int = IMAGE_SIZE) -> Skeleton3D:
    grid = np.asarray(grid)
    if grid.ndim != 4 or grid.shape[0] != N_JOINTS or grid.shape[1] != DEPTH_BINS:
        raise ShapeError(f"expected ({N_JOINTS}, {DEPTH_BINS}, r, r) grid, got {grid.shape}")
    res = grid.shape[2]
    flat = grid.reshape(N_JOINTS, -1)
    idx = flat.argmax(axis=1)
    peak = flat[np.arange(N_JOINTS), idx]
    visible = peak >= VISIBLE_EPS
    b, rem = np.divmod(idx, res * res)
    rows, cols = np.divmod(rem, res)
    scale = res / image_size
    joints = np.column_stack([cols / scale, rows / scale, bin_center(b)])
    joints[~visible] = 0.0
    return Skeleton3D(joints, visible)


# ---------------------------------------------------------------------------
# Segmentation masks


def _check_mask(mask) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ShapeError(f"mask must be 2-D, got shape {mask.shape}")
    if mask.size and (mask.min() < 0 or mask.max() >= N_CLASSES):
        raise DomainError(f"class ids must lie in [0, {N_CLASSES - 1}], found {int(mask.max())}")
    return mask.astype(np.int64)


def one_hot_segmentation(mask) -> np.ndarray:
    """(H, W) class ids -> (15, H, W) uint8 one-hot stack."""
    mask = _check_mask(mask)
    return (np.arange(N_CLASSES)[:, None, None] == mask[None]).astype(np.uint8)


def segmentation_from_one_hot(stack) -> np.ndarray:
    stack = np.asarray(stack)
    if stack.ndim != 3 or stack.shape[0] != N_CLASSES:
        raise ShapeError(f"expected ({N_CLASSES}, H, W) stack, got {stack.shape}")
    return stack.argmax(axis=0).astype(np.uint8)


def read_pgm(path) -> np.ndarray:
    """8-bit binary PGM (P5) as a uint8 array."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise InputIOError(f"cannot read mask {path}: {exc}") from exc
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":
            pos = blob.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PGM header")
        tokens.append(blob[start:pos])
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (P5) file")
    width, height, maxval = (int(t) for t in tokens[1:])
    if maxval > 255:
        raise FormatError(f"{path}: only 8-bit PGM is supported")
    pixels = blob[pos + 1:pos + 1 + width * height]
    if len(pixels) != width * height:
        raise FormatError(f"{path}: expected {width * height} pixels, got {len(pixels)}")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(height, width).copy()


def write_pgm(mask, path) -> None:
    mask = np.asarray(mask)
    if mask.size and (mask.min() < 0 or mask.max() > 255):
        raise DomainError("PGM pixels must fit in 8 bits")
    h, w = mask.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(mask.astype(np.uint8).tobytes())


# ---------------------------------------------------------------------------
# Skeleton JSON


def skeleton_to_json(skel) -> list:
    out = []
    for name, p, vis in zip(JOINT_NAMES, skel.joints, skel.visible):
        item = {"name": name, "u": float(p[0]), "v": float(p[1]), "visible": bool(vis)}
        if len(p) == 3:
            item["depth"] = float(p[2])
        out.append(item)
    return out


def skeleton_from_json(doc, selection: dict | None = None):
    """Build a Skeleton2D or Skeleton3D from a JSON array of named joints.

    ``selection`` maps each of the 16 joint names to a source joint name, for
    files that carry a larger joint set under different names. The result is
    3-D when every selected joint has a ``depth``.
    """
    if not isinstance(doc, list):
        raise FormatError("skeleton JSON must be an array of joints")
    by_name = {}
    for item in doc:
        try:
            by_name[item["name"]] = item
        except (TypeError, KeyError):
            raise FormatError("every joint needs a 'name'") from None
    selection = selection or {n: n for n in JOINT_NAMES}
    rows = []
    for name in JOINT_NAMES:
        src = selection.get(name, name)
        if src not in by_name:
            raise FormatError(f"joint {src!r} missing from skeleton")
        rows.append(by_name[src])
    try:
        uv = [[float(r["u"]), float(r["v"])] for r in rows]
    except (KeyError, TypeError, ValueError):
        raise FormatError("every joint needs numeric 'u' and 'v'") from None
    visible = [bool(r.get("visible", True)) for r in rows]
    if all("depth" in r for r in rows):
        pts = [p + [float(r["depth"])] for p, r in zip(uv, rows)]
        return Skeleton3D(pts, visible)
    return Skeleton2D(uv, visible)


def load_skeleton(path, selection=None):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InputIOError(f"cannot read skeleton {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from exc
    return skeleton_from_json(doc, selection)
