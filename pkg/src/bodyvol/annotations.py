"""Clip and frame annotation records, split bookkeeping and dataset statistics.

Body shape is fixed within a clip, so height and part volumes live on the
clip record and every frame inherits them. Splits are assigned per clip.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

import numpy as np

from .errors import (
    ConfigurationError,
    ConsistencyError,
    DomainError,
    EmptyInputError,
    FormatError,
    InputIOError,
)
from .label_codec import Skeleton2D, Skeleton3D, skeleton_from_json, skeleton_to_json
from .part_volumes import PartVolumes

SPLITS = ("train", "val", "test")
MAX_FRAMES_PER_CLIP = 100

_CLIP_KEYS = ("split", "gender", "height_cm", "volumes_dm3")


@dataclass(frozen=True)
class HeightModel:
    """Per-gender Gaussian over body height in cm, clamped to a plausible range.

    The defaults are configuration, not measured values.
    """

    params: dict = field(default_factory=lambda: {"male": (175.0, 7.0), "female": (162.0, 6.5)})
    clamp: tuple = (140.0, 210.0)


DEFAULT_HEIGHTS = HeightModel()


def sample_height(gender: str, rng: np.random.Generator, model: HeightModel = DEFAULT_HEIGHTS) -> float:
    try:
        mean, std = model.params[gender]
    except KeyError:
        raise ConfigurationError(f"no height distribution configured for gender {gender!r}") from None
    lo, hi = model.clamp
    h = mean if std == 0 else rng.normal(mean, std)
    return float(min(max(h, lo), hi))


@dataclass(frozen=True, eq=False)
class FrameRecord:
    clip_id: str
    frame_index: int
    fully_visible: bool
    pose2d: Optional[Skeleton2D] = None
    pose3d: Optional[Skeleton3D] = None
    mask_path: Optional[str] = None
    image_path: Optional[str] = None

    def __eq__(self, other):
        if not isinstance(other, FrameRecord):
            return NotImplemented
        return _frame_doc(self) == _frame_doc(other)


@dataclass(frozen=True)
class ClipRecord:
    clip_id: str
    split: Optional[str]
    gender: str
    height_cm: float
    volumes: PartVolumes
    frames: tuple = ()

    def __post_init__(self):
        if self.split is not None and self.split not in SPLITS:
            raise DomainError(f"unknown split {self.split!r}")
        frames = tuple(self.frames)
        if not 1 <= len(frames) <= MAX_FRAMES_PER_CLIP:
            raise DomainError(
                f"clip {self.clip_id!r} has {len(frames)} frames, expected 1..{MAX_FRAMES_PER_CLIP}")
        seen = set()
        for f in frames:
            if f.clip_id != self.clip_id:
                raise ConsistencyError(f"frame of clip {f.clip_id!r} stored under {self.clip_id!r}")
            if f.frame_index in seen:
                raise ConsistencyError(f"clip {self.clip_id!r} repeats frame {f.frame_index}")
            seen.add(f.frame_index)
        object.__setattr__(self, "frames", tuple(sorted(frames, key=lambda f: f.frame_index)))


@dataclass(frozen=True)
class SplitCounts:
    clips: int = 0
    frames: int = 0
    fully_visible: int = 0


@dataclass(frozen=True)
class SplitSummary:
    per_split: dict
    mean_volumes_dm3: dict  # split -> part name (and "total") -> mean over clips

    @property
    def totals(self) -> SplitCounts:
        c = self.per_split.values()
        return SplitCounts(sum(x.clips for x in c), sum(x.frames for x in c),
                           sum(x.fully_visible for x in c))

    def to_json(self) -> dict:
        return {
            "per_split": {k: vars(v) for k, v in self.per_split.items()},
            "totals": vars(self.totals),
            "mean_volumes_dm3": self.mean_volumes_dm3,
        }


# ---------------------------------------------------------------------------
# Operations


def split_sizes(n: int, ratios) -> list:
    """Largest-remainder allocation of n items to the given ratios."""
    ratios = [float(r) for r in ratios]
    if len(ratios) != len(SPLITS) or any(r < 0 for r in ratios) or not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise DomainError(f"split ratios must be {len(SPLITS)} non-negative values summing to 1, got {ratios}")
    raw = [n * r for r in ratios]
    sizes = [math.floor(x) for x in raw]
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - sizes[i]), i))
    for i in order[: n - sum(sizes)]:
        sizes[i] += 1
    return sizes


def assign_splits(clips: Iterable[ClipRecord], ratios=(0.8, 0.1, 0.1), seed: int = 0) -> list:
    """Assign whole clips to train/val/test by a seeded shuffle of clip ids."""
    clips = list(clips)
    sizes = split_sizes(len(clips), ratios)
    ids = sorted(c.clip_id for c in clips)
    if len(set(ids)) != len(ids):
        raise ConsistencyError("duplicate clip ids")
    order = np.random.default_rng(seed).permutation(len(ids))
    split_of = {}
    pos = 0
    for name, size in zip(SPLITS, sizes):
        for i in order[pos:pos + size]:
            split_of[ids[i]] = name
        pos += size
    return [replace(c, split=split_of[c.clip_id]) for c in clips]


def validation_frame_selection(clips: Iterable[ClipRecord]) -> list:
    """First fully visible frame of every clip; clips without one are skipped."""
    out = []
    for clip in clips:
        for frame in clip.frames:
            if frame.fully_visible:
                out.append(frame)
                break
    return out


def dataset_stats(clips: Iterable[ClipRecord]) -> SplitSummary:
    clips = list(clips)
    if not clips:
        raise EmptyInputError("no clips")
    per_split = {}
    sums = {}
    for clip in clips:
        key = clip.split or "unassigned"
        c = per_split.get(key, SplitCounts())
        per_split[key] = SplitCounts(
            c.clips + 1, c.frames + len(clip.frames),
            c.fully_visible + sum(f.fully_visible for f in clip.frames))
        bucket = sums.setdefault(key, {})
        for name, v in clip.volumes.to_json().items():
            bucket.setdefault(name, []).append(v)
    means = {split: {name: math.fsum(vals) / len(vals) for name, vals in b.items()}
             for split, b in sums.items()}
    return SplitSummary(per_split, means)


# ---------------------------------------------------------------------------
# JSON lines


def _frame_doc(f: FrameRecord) -> dict:
    return {
        "clip_id": f.clip_id,
        "frame_index": f.frame_index,
        "fully_visible": f.fully_visible,
        "pose2d": skeleton_to_json(f.pose2d) if f.pose2d is not None else None,
        "pose3d": skeleton_to_json(f.pose3d) if f.pose3d is not None else None,
        "mask_path": f.mask_path,
        "image_path": f.image_path,
    }


def _clip_doc(c: ClipRecord) -> dict:
    return {
        "clip_id": c.clip_id,
        "split": c.split,
        "gender": c.gender,
        "height_cm": c.height_cm,
        "volumes_dm3": c.volumes.to_json(),
    }


def _frame_from_doc(doc: dict) -> FrameRecord:
    try:
        return FrameRecord(
            clip_id=str(doc["clip_id"]),
            frame_index=int(doc["frame_index"]),
            fully_visible=bool(doc.get("fully_visible", False)),
            pose2d=skeleton_from_json(doc["pose2d"]) if doc.get("pose2d") else None,
            pose3d=skeleton_from_json(doc["pose3d"]) if doc.get("pose3d") else None,
            mask_path=doc.get("mask_path"),
            image_path=doc.get("image_path"),
        )
    except KeyError as exc:
        raise FormatError(f"frame record missing {exc}") from None


def clip_to_lines(clip: ClipRecord, flat: bool = True) -> list:
    head = _clip_doc(clip)
    lines = []
    for f in clip.frames:
        doc = _frame_doc(f)
        if flat:
            doc.update({k: head[k] for k in _CLIP_KEYS})
        lines.append(json.dumps(doc, sort_keys=True))
    return lines


def dumps(clips: Iterable[ClipRecord]) -> tuple:
    """(frames text, clips text) for the sidecar layout."""
    frames, heads = [], []
    for c in clips:
        frames += clip_to_lines(c, flat=False)
        heads.append(json.dumps(_clip_doc(c), sort_keys=True))
    return "\n".join(frames) + "\n", "\n".join(heads) + "\n"


def write_store(clips: Iterable[ClipRecord], frames_path, clips_path=None) -> None:
    """Write frames as JSON lines; with ``clips_path`` per-clip constants go to a sidecar."""
    clips = list(clips)
    if clips_path is None:
        with open(frames_path, "w") as fh:
            for c in clips:
                for line in clip_to_lines(c, flat=True):
                    fh.write(line + "\n")
        return
    frames_text, clips_text = dumps(clips)
    with open(frames_path, "w") as fh:
        fh.write(frames_text)
    with open(clips_path, "w") as fh:
        fh.write(clips_text)


def _read_jsonl(path) -> list:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise InputIOError(f"cannot read {path}: {exc}") from exc
    docs = []
    for n, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            docs.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: line {n}: {exc}") from None
    return docs


def parse_records(frame_docs, clip_docs=None) -> list:
    """Group frame documents into ClipRecords, checking per-clip constancy."""
    heads = {}
    for doc in clip_docs or []:
        heads[str(doc["clip_id"])] = doc
    frames_by_clip = {}
    for doc in frame_docs:
        cid = str(doc.get("clip_id"))
        if cid not in heads:
            if "volumes_dm3" not in doc:
                raise FormatError(f"clip {cid!r} has no per-clip constants")
            heads[cid] = {k: doc.get(k) for k in ("clip_id",) + _CLIP_KEYS}
        else:
            for k in _CLIP_KEYS:
                if k in doc and doc[k] != heads[cid][k]:
                    raise ConsistencyError(f"clip {cid!r}: frames disagree on {k}")
        frames_by_clip.setdefault(cid, []).append(_frame_from_doc(doc))
    clips = []
    for cid, frames in frames_by_clip.items():
        h = heads[cid]
        clips.append(ClipRecord(
            clip_id=cid,
            split=h.get("split"),
            gender=h.get("gender"),
            height_cm=float(h["height_cm"]),
            volumes=PartVolumes.from_json(h["volumes_dm3"]),
            frames=tuple(frames),
        ))
    return clips


def read_store(frames_path, clips_path=None) -> list:
    return parse_records(_read_jsonl(frames_path), _read_jsonl(clips_path) if clips_path else None)


class AnnotationStore:
    """Append-only JSON-lines store: one writer, any number of readers.

    Appends hold a lock and write whole clips as one buffered write, so a
    reader never sees half of a clip written by this process.
    """

    def __init__(self, path):
        self.path = path
        self._lock = threading.Lock()

    def append(self, clip: ClipRecord) -> None:
        text = "".join(line + "\n" for line in clip_to_lines(clip, flat=True))
        with self._lock, open(self.path, "a") as fh:
            fh.write(text)

    def read(self) -> list:
        return read_store(self.path)
