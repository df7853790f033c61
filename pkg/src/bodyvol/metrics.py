"""Volume error statistics, cumulative error curves and pose/segmentation scores."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, EmptyInputError, ShapeError
from .label_codec import N_CLASSES, Skeleton2D, Skeleton3D, depth_bin

CURVE_STEP = 0.1
CURVE_MAX = 100.0
TOTAL = "total"


def ae(pred: float, truth: float) -> float:
    return abs(pred - truth)


def ape(pred: float, truth: float) -> float:
    """Absolute percentage error, 100 * |pred - truth| / truth."""
    if not truth > 0:
        raise DomainError(f"ground-truth volume must be positive, got {truth}")
    return 100.0 * abs(pred - truth) / truth


@dataclass(frozen=True)
class VolumePrediction:
    """Predicted and ground-truth volumes (dm³) for one sample, keyed by part name."""

    pred: dict
    truth: dict
    sample_id: str = ""

    def __post_init__(self):
        if set(self.pred) != set(self.truth):
            raise DomainError(
                f"sample {self.sample_id!r}: part names differ between prediction and truth")

    def value(self, side: dict, part: str) -> float:
        if part == TOTAL and TOTAL not in side:
            return math.fsum(side.values())
        return side[part]


@dataclass(frozen=True)
class ErrorStats:
    ae_mean: float
    ae_std: float
    ape_mean: float
    ape_std: float


@dataclass
class MetricReport:
    """Aggregated errors for one evaluated split.

    ``curve`` is the cumulative APE distribution of the total volume as
    (threshold %, ratio of samples with APE <= threshold); ``part_curves``
    holds the same for each part.
    """

    split: str
    n_samples: int
    stats: dict
    curve: list
    success_at: dict
    part_curves: dict = field(default_factory=dict)

    @property
    def mape_total(self) -> float:
        return self.stats[TOTAL].ape_mean

    def to_json(self) -> dict:
        return {
            "split": self.split,
            "n_samples": self.n_samples,
            "stats": {k: vars(v) for k, v in self.stats.items()},
            "success_at": {f"{k:g}": v for k, v in self.success_at.items()},
            "curve": [[t, r] for t, r in self.curve],
            "part_curves": {k: [[t, r] for t, r in c] for k, c in self.part_curves.items()},
        }

    def curve_csv(self, part: str = TOTAL) -> str:
        curve = self.curve if part == TOTAL else self.part_curves[part]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["error", "ratio"])
        for t, r in curve:
            w.writerow([f"{t:.1f}", repr(float(r))])
        return buf.getvalue()

    def write(self, json_path, csv_path) -> None:
        with open(json_path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)
        with open(csv_path, "w", newline="") as fh:
            fh.write(self.curve_csv())


def curve_thresholds(step: float = CURVE_STEP, upper: float = CURVE_MAX) -> np.ndarray:
    per_unit = round(1.0 / step)
    # divide rather than multiply so thresholds are the nearest doubles to k * step
    return np.arange(int(round(upper * per_unit)) + 1) / per_unit


def cumulative_curve(apes, thresholds=None) -> list:
    """Ratio of samples with APE <= t for each threshold t."""
    apes = np.sort(np.asarray(apes, dtype=float))
    if thresholds is None:
        thresholds = curve_thresholds()
    ratios = np.searchsorted(apes, thresholds, side="right") / len(apes)
    return [(float(t), float(r)) for t, r in zip(thresholds, ratios)]


def success_rate(apes, tolerance: float) -> float:
    apes = np.asarray(apes, dtype=float)
    return float(np.count_nonzero(apes <= tolerance)) / len(apes)


def aggregate(samples, tolerances=(5.0, 10.0), split: str = "test") -> MetricReport:
    """Per-part and total AE/APE mean and population std, plus error curves."""
    samples = list(samples)
    if not samples:
        raise EmptyInputError("no samples to aggregate")
    parts = [p for p in samples[0].truth if p != TOTAL]
    for s in samples[1:]:
        if [p for p in s.truth if p != TOTAL] != parts:
            raise DomainError(f"sample {s.sample_id!r} has a different part set")
    stats = {}
    apes_by_part = {}
    for part in parts + [TOTAL]:
        pred = np.array([s.value(s.pred, part) for s in samples], dtype=float)
        truth = np.array([s.value(s.truth, part) for s in samples], dtype=float)
        if (truth <= 0).any():
            raise DomainError(f"non-positive ground truth for {part!r}")
        abs_err = np.abs(pred - truth)
        pct = 100.0 * abs_err / truth
        apes_by_part[part] = pct
        stats[part] = ErrorStats(float(abs_err.mean()), float(abs_err.std()),
                                 float(pct.mean()), float(pct.std()))
    total = apes_by_part[TOTAL]
    return MetricReport(
        split=split,
        n_samples=len(samples),
        stats=stats,
        curve=cumulative_curve(total),
        success_at={float(t): success_rate(total, t) for t in tolerances},
        part_curves={p: cumulative_curve(apes_by_part[p]) for p in parts},
    )


# ---------------------------------------------------------------------------
# Pose and segmentation


@dataclass(frozen=True)
class PCKResult:
    correct: np.ndarray  # per-joint flags; joints invisible in truth are False
    evaluated: np.ndarray  # per-joint flags of joints visible in truth
    ratio: float


def default_pck_norm(truth: Skeleton2D) -> float:
    """Larger side of the bounding box of the visible ground-truth joints."""
    pts = truth.joints[truth.visible]
    if not len(pts):
        raise EmptyInputError("no visible joints to normalise by")
    return float(np.ptp(pts, axis=0).max())


def pck(pred: Skeleton2D, truth: Skeleton2D, alpha: float = 0.05, norm: float | None = None) -> PCKResult:
    """Percentage of correct keypoints: distance <= alpha * norm counts as correct."""
    if norm is None:
        norm = default_pck_norm(truth)
    if not norm > 0:
        raise DomainError(f"PCK normalisation length must be positive, got {norm}")
    dist = np.linalg.norm(pred.joints - truth.joints, axis=1)
    evaluated = truth.visible.copy()
    correct = evaluated & pred.visible & (dist <= alpha * norm)
    n = np.count_nonzero(evaluated)
    ratio = float(np.count_nonzero(correct)) / n if n else float("nan")
    return PCKResult(correct, evaluated, ratio)


@dataclass(frozen=True)
class IoUResult:
    per_class: np.ndarray  # (15,), NaN where a class is absent from both masks
    mean: float  # over classes 1..14 that are defined

    def as_dict(self) -> dict:
        return {c: float(v) for c, v in enumerate(self.per_class) if not np.isnan(v)}


def iou(pred, truth, n_classes: int = N_CLASSES) -> IoUResult:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ShapeError(f"mask shapes differ: {pred.shape} vs {truth.shape}")
    per_class = np.full(n_classes, np.nan)
    for c in range(n_classes):
        p, t = pred == c, truth == c
        union = np.count_nonzero(p | t)
        if union:
            per_class[c] = np.count_nonzero(p & t) / union
    fg = per_class[1:]
    fg = fg[~np.isnan(fg)]
    return IoUResult(per_class, float(fg.mean()) if len(fg) else float("nan"))


def pose3d_accuracy(pred: Skeleton3D, truth: Skeleton3D, spatial_tol: float = 12.0,
                    depth_tol: int = 2) -> float:
    """Fraction of joints within ``spatial_tol`` pixels and ``depth_tol`` depth bins."""
    if pred.joints.shape != truth.joints.shape:
        raise ShapeError("joint sets differ")
    dist = np.linalg.norm(pred.joints[:, :2] - truth.joints[:, :2], axis=1)
    dbins = np.abs(depth_bin(pred.joints[:, 2]) - depth_bin(truth.joints[:, 2]))
    ok = (dist <= spatial_tol) & (dbins <= depth_tol)
    return float(np.count_nonzero(ok)) / len(ok)
