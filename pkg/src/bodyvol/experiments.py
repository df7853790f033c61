"""Rotation sweep and height-reference experiments on the voxel baseline."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import mesh_core, voxel_ops
from .errors import DomainError
from .mesh_core import TriangleMesh

# Sweep names follow the rotation-plot convention: "y" is the front flip
# (about the lateral x axis), "z" the pirouette (about the vertical y axis).
SWEEP_AXES = {"y": "x", "z": "y"}


@dataclass(frozen=True)
class SweepResult:
    axis: str
    rows: list  # (degrees, signed percent error)

    def to_csv(self) -> str:
        lines = ["deg,PE"]
        lines += [f"{deg:d},{pe:.6f}" for deg, pe in self.rows]
        return "\n".join(lines) + "\n"

    @property
    def errors(self) -> np.ndarray:
        return np.array([pe for _, pe in self.rows])


def baseline_percent_error(mesh: TriangleMesh, height_m: float, true_volume: float,
                           grid: int = 128) -> float:
    """Voxelize ``mesh`` in a fitted cube and return 100 * (V_est - V_true) / V_true."""
    g = voxel_ops.voxelize(mesh, grid, voxel_ops.fit_cubic_bounds(mesh))
    est = voxel_ops.baseline_volume(g, height_m)
    return 100.0 * (est.V_tot - true_volume) / true_volume


def _sweep_one(args):
    mesh, world_axis, deg, center, height_m, true_volume, grid = args
    R = mesh_core.rotation_matrix(world_axis, deg)
    rotated = mesh_core.transform_mesh(mesh, R, center - R @ center)
    return baseline_percent_error(rotated, height_m, true_volume, grid)


def rotation_sweep(mesh: TriangleMesh, axis: str = "y", height_m: float | None = None,
                   grid: int = 128, degrees=range(360), jobs: int = 1) -> SweepResult:
    """Percent error of the voxel baseline while the mesh turns about its centroid.

    ``height_m`` defaults to the vertical extent of the mesh as given, i.e.
    the input orientation is treated as the neutral pose.
    """
    axis = axis.lower()
    if axis not in SWEEP_AXES:
        raise DomainError(f"sweep axis must be one of {sorted(SWEEP_AXES)}, got {axis!r}")
    true_volume = mesh_core.mesh_volume(mesh)
    if height_m is None:
        height_m = mesh_core.height_extremes(mesh).height_m
    center = mesh_core.volume_centroid(mesh)
    degrees = list(degrees)
    tasks = [(mesh, SWEEP_AXES[axis], d, center, height_m, true_volume, grid) for d in degrees]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            errors = list(pool.map(_sweep_one, tasks, chunksize=8))
    else:
        errors = [_sweep_one(t) for t in tasks]
    return SweepResult(axis, [(int(d), float(e)) for d, e in zip(degrees, errors)])


@dataclass(frozen=True)
class HazardResult:
    """Signed percent errors of the voxel baseline for three height references.

    neutral_pe: neutral-pose grid scaled by the neutral height.
    posed_neutral_ref_pe: posed grid scaled by the neutral height.
    posed_pose_ref_pe: posed grid scaled by the posed mesh's own extent.
    """

    neutral_pe: float
    posed_neutral_ref_pe: float
    posed_pose_ref_pe: float

    @property
    def excess(self) -> float:
        """How much larger the posed error magnitude is than the neutral one, in points."""
        return abs(self.posed_neutral_ref_pe) - abs(self.neutral_pe)


def height_reference_hazard(neutral: TriangleMesh, posed: TriangleMesh,
                            grid: int = 128) -> HazardResult:
    h_neutral = mesh_core.height_extremes(neutral).height_m
    h_posed = mesh_core.height_extremes(posed).height_m
    v_neutral = mesh_core.mesh_volume(neutral)
    v_posed = mesh_core.mesh_volume(posed)
    return HazardResult(
        baseline_percent_error(neutral, h_neutral, v_neutral, grid),
        baseline_percent_error(posed, h_neutral, v_posed, grid),
        baseline_percent_error(posed, h_posed, v_posed, grid),
    )
