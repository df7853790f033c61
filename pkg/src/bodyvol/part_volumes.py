"""Per-part body volumes from a vertex-labelled mesh.

Vertex labels come in the 25-segment source scheme (24 body segments plus
background) and are merged into 14 body parts. Every face goes to the
majority part of its three vertices; each part's submesh is then capped
with centroid fans so its volume is well defined.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import mesh_core
from .errors import (
    ConfigurationError,
    DomainError,
    EmptyInputError,
    FormatError,
    GeometryError,
    InputIOError,
    MissingPartError,
    OpenMeshError,
    UnknownSegmentError,
)
from .mesh_core import TriangleMesh

PART_NAMES = (
    "Head", "Torso",
    "Left Upper Arm", "Left Fore Arm", "Left Hand",
    "Right Upper Arm", "Right Fore Arm", "Right Hand",
    "Left Up Leg", "Left Lower Leg", "Left Foot",
    "Right Up Leg", "Right Lower Leg", "Right Foot",
)

BACKGROUND = 0


@dataclass(frozen=True)
class LabelScheme:
    name: str
    min_id: int
    max_id: int
    part_names: tuple = ()

    @property
    def part_ids(self) -> range:
        return range(self.min_id, self.max_id + 1)

    @property
    def n_parts(self) -> int:
        return self.max_id - self.min_id + 1

    def part_name(self, pid: int) -> str:
        return self.part_names[pid - self.min_id]


SOURCE_25 = LabelScheme("SOURCE_25", 0, 24)
MERGED_14 = LabelScheme("MERGED_14", 1, 14, PART_NAMES)


def reduced_scheme(n: int, names=None) -> LabelScheme:
    """An n-part merged scheme for small fixtures; production uses MERGED_14."""
    if n < 1:
        raise DomainError("a reduced scheme needs at least one part")
    names = tuple(names) if names is not None else tuple(f"Part {i}" for i in range(1, n + 1))
    if len(names) != n:
        raise DomainError(f"expected {n} part names, got {len(names)}")
    return LabelScheme(f"REDUCED_{n}", 1, n, names)


@dataclass(frozen=True, eq=False)
class PartLabeling:
    vertex_labels: np.ndarray
    scheme: LabelScheme = SOURCE_25

    def __post_init__(self):
        labels = np.asarray(self.vertex_labels)
        if labels.size and not np.issubdtype(labels.dtype, np.integer):
            if not np.all(labels == np.round(labels)):
                raise DomainError("vertex labels must be integers")
        labels = labels.astype(np.int64).reshape(-1)
        bad = (labels < self.scheme.min_id) | (labels > self.scheme.max_id)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise UnknownSegmentError(
                f"label {labels[i]} at vertex {i} is outside {self.scheme.name} "
                f"[{self.scheme.min_id}, {self.scheme.max_id}]")
        labels.setflags(write=False)
        object.__setattr__(self, "vertex_labels", labels)

    def __len__(self):
        return len(self.vertex_labels)


@dataclass(frozen=True)
class MergeMap:
    """Source segment id -> merged part id, plus display names for the parts.

    The background id 0 maps to 0 so the same table can merge raw
    segmentation masks; body segments 1..24 map onto 1..14.
    """

    mapping: dict
    names: dict = field(default_factory=lambda: dict(enumerate(PART_NAMES, start=1)))

    def __post_init__(self):
        mapping = {int(k): int(v) for k, v in self.mapping.items()}
        missing = [i for i in SOURCE_25.part_ids if i not in mapping]
        if missing:
            raise ConfigurationError(f"merge map has no entry for source ids {missing}")
        extra = sorted(set(mapping) - set(SOURCE_25.part_ids))
        if extra:
            raise ConfigurationError(f"merge map has ids outside [0, 24]: {extra}")
        if mapping[BACKGROUND] != BACKGROUND:
            raise ConfigurationError("background id 0 must map to 0")
        body = {mapping[i] for i in range(1, 25)}
        if not body <= set(MERGED_14.part_ids):
            raise ConfigurationError(f"merge map targets outside [1, 14]: {sorted(body - set(MERGED_14.part_ids))}")
        if body != set(MERGED_14.part_ids):
            raise ConfigurationError(f"merge map misses parts {sorted(set(MERGED_14.part_ids) - body)}")
        object.__setattr__(self, "mapping", mapping)
        object.__setattr__(self, "names", {int(k): str(v) for k, v in self.names.items()})

    def lookup_table(self) -> np.ndarray:
        table = np.zeros(25, dtype=np.int64)
        for k, v in self.mapping.items():
            table[k] = v
        return table

    def apply_to_mask(self, mask) -> np.ndarray:
        """Merge a 25-segment class mask into the 15-class (0 = background) form."""
        mask = np.asarray(mask)
        if mask.size and (mask.min() < 0 or mask.max() > 24):
            raise UnknownSegmentError("mask contains ids outside [0, 24]")
        return self.lookup_table()[mask].astype(np.uint8)

    @classmethod
    def from_json(cls, doc: dict) -> "MergeMap":
        names = doc.get("names", dict(enumerate(PART_NAMES, start=1)))
        mapping = {k: v for k, v in doc.items() if k.lstrip("-").isdigit()}
        return cls(mapping, names)

    @classmethod
    def load(cls, path) -> "MergeMap":
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise InputIOError(f"cannot read merge map {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_json(doc)

    @classmethod
    def default(cls) -> "MergeMap":
        text = resources.files("bodyvol.data").joinpath("surreal_merge_map.json").read_text()
        return cls.from_json(json.loads(text))

    def to_json(self) -> dict:
        doc = {str(k): v for k, v in sorted(self.mapping.items())}
        doc["names"] = {str(k): v for k, v in sorted(self.names.items())}
        return doc


@dataclass(frozen=True)
class PartMeshSet:
    parts: dict
    scheme: LabelScheme = MERGED_14

    def __post_init__(self):
        if sorted(self.parts) != list(self.scheme.part_ids):
            raise MissingPartError(
                f"expected parts {list(self.scheme.part_ids)}, got {sorted(self.parts)}")
        for pid, mesh in self.parts.items():
            if not mesh_core.validate_manifold(mesh).is_closed:
                raise OpenMeshError(f"part {self.scheme.part_name(pid)!r} is not closed")


@dataclass(frozen=True)
class PartVolumes:
    volumes_dm3: dict
    total_dm3: float

    def __post_init__(self):
        for name, vol in self.volumes_dm3.items():
            if not vol > 0:
                raise GeometryError(f"non-positive volume {vol} for part {name!r}")
        expected = math.fsum(self.volumes_dm3.values())
        if not math.isclose(self.total_dm3, expected, rel_tol=1e-9, abs_tol=1e-12):
            raise DomainError(f"total {self.total_dm3} != sum of parts {expected}")

    @classmethod
    def from_parts(cls, volumes_dm3: dict) -> "PartVolumes":
        return cls(dict(volumes_dm3), math.fsum(volumes_dm3.values()))

    def to_json(self) -> dict:
        doc = dict(self.volumes_dm3)
        doc["total"] = self.total_dm3
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "PartVolumes":
        vols = {k: float(v) for k, v in doc.items() if k != "total"}
        total = float(doc["total"]) if "total" in doc else math.fsum(vols.values())
        return cls(vols, total)


def merge_labels(labeling: PartLabeling, merge_map: MergeMap | None = None) -> PartLabeling:
    """Relabel a 25-segment vertex labelling into the 14 merged parts."""
    if labeling.scheme != SOURCE_25:
        raise DomainError(f"merge_labels expects SOURCE_25 labels, got {labeling.scheme.name}")
    merge_map = merge_map or MergeMap.default()
    merged = merge_map.lookup_table()[labeling.vertex_labels]
    if (merged == BACKGROUND).any():
        i = int(np.flatnonzero(merged == BACKGROUND)[0])
        raise UnknownSegmentError(f"vertex {i} carries the background label")
    return PartLabeling(merged, MERGED_14)


def face_parts(faces: np.ndarray, vertex_labels: np.ndarray) -> np.ndarray:
    """Majority label of each face's vertices; a three-way tie takes the smallest id."""
    l = vertex_labels[faces]
    a, b, c = l[:, 0], l[:, 1], l[:, 2]
    return np.where((a == b) | (a == c), a, np.where(b == c, b, l.min(axis=1)))


def split_parts(mesh: TriangleMesh, labeling: PartLabeling) -> PartMeshSet:
    """Cut a closed labelled mesh into one closed submesh per part."""
    scheme = labeling.scheme
    if scheme == SOURCE_25:
        raise DomainError("split_parts needs merged labels; run merge_labels first")
    if len(labeling) != mesh.n_vertices:
        raise DomainError(f"{len(labeling)} labels for {mesh.n_vertices} vertices")
    report = mesh_core.validate_manifold(mesh)
    if not report.is_closed:
        raise OpenMeshError("split_parts needs a closed mesh", report)
    owner = face_parts(mesh.faces, labeling.vertex_labels)
    parts = {}
    for pid in scheme.part_ids:
        sel = mesh.faces[owner == pid]
        if not len(sel):
            raise MissingPartError(f"part {scheme.part_name(pid)!r} (id {pid}) has no faces")
        used, local = np.unique(sel, return_inverse=True)
        sub = TriangleMesh(mesh.vertices[used], local.reshape(-1, 3))
        parts[pid] = mesh_core.close_holes(sub)
    return PartMeshSet(parts, scheme)


def part_volumes(parts: PartMeshSet) -> PartVolumes:
    """Volume of every part in dm³, keyed by part name in scheme order."""
    vols = {}
    for pid in parts.scheme.part_ids:
        vols[parts.scheme.part_name(pid)] = mesh_core.mesh_volume(parts.parts[pid]) * 1000.0
    return PartVolumes.from_parts(vols)


def neutral_height(neutral_mesh: TriangleMesh) -> float:
    """Body height in cm from the vertical extent of a neutral-pose mesh."""
    if not neutral_mesh.n_vertices:
        raise EmptyInputError("neutral mesh has no vertices")
    return mesh_core.height_extremes(neutral_mesh).height_m * 100.0


def read_labels(path) -> np.ndarray:
    """One integer label per line; line i labels vertex i."""
    try:
        with open(path) as fh:
            lines = fh.read().split("\n")
    except OSError as exc:
        raise InputIOError(f"cannot read labels {path}: {exc}") from exc
    labels = []
    for n, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            labels.append(int(line))
        except ValueError:
            raise FormatError(f"{path}: line {n}: not an integer label: {line!r}") from None
    return np.asarray(labels, dtype=np.int64)


def write_labels(labels, path) -> None:
    with open(path, "w") as fh:
        fh.writelines(f"{int(x)}\n" for x in np.asarray(labels).reshape(-1))
