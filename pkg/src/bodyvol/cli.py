"""Command-line entry point: ``bodyvol <command> ...``.

Exit codes: 0 success, 2 I/O, 3 geometry precondition, 4 empty result,
5 id mismatch, 6 format/domain error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import annotations as ann
from . import experiments, label_codec, mesh_core, metrics, part_volumes, voxel_ops
from .errors import (
    BodyVolError,
    FormatError,
    IdMismatchError,
    InputIOError,
    OpenMeshError,
)

log = logging.getLogger("bodyvol")


def _open_mesh(path) -> mesh_core.TriangleMesh:
    try:
        with open(path, "rb") as fh:
            return mesh_core.load_obj(fh)
    except OSError as exc:
        raise InputIOError(f"cannot read mesh {path}: {exc.strerror or exc}") from exc


def _emit(text: str, output) -> None:
    if output:
        with open(output, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


# ---------------------------------------------------------------------------
# volume


def cmd_volume(args) -> int:
    mesh = _open_mesh(args.mesh)
    report = mesh_core.validate_manifold(mesh)
    if not report.is_closed:
        if not args.close_holes:
            print(f"{args.mesh}: mesh is not closed; pass --close-holes to cap it", file=sys.stderr)
            print(report.summary(), file=sys.stderr)
            return OpenMeshError.exit_code
        mesh = mesh_core.close_holes(mesh)
    total_dm3 = mesh_core.mesh_volume(mesh) * 1000.0
    print(f"total: {total_dm3:.3f} dm3")
    doc = {"total_dm3": total_dm3}
    if args.labels:
        raw = part_volumes.read_labels(args.labels)
        if args.merged:
            labeling = part_volumes.PartLabeling(raw, part_volumes.MERGED_14)
        else:
            mm = part_volumes.MergeMap.load(args.merge_map) if args.merge_map else part_volumes.MergeMap.default()
            labeling = part_volumes.merge_labels(part_volumes.PartLabeling(raw, part_volumes.SOURCE_25), mm)
        vols = part_volumes.part_volumes(part_volumes.split_parts(mesh, labeling))
        width = max(len(n) for n in vols.volumes_dm3)
        for name, v in vols.volumes_dm3.items():
            print(f"  {name:<{width}}  {v:9.3f} dm3")
        print(f"sum of parts: {vols.total_dm3:.3f} dm3")
        doc["parts_dm3"] = vols.to_json()
    if args.output:
        with open(args.output, "w") as fh:
            json.dump(doc, fh, indent=2)
    return 0


# ---------------------------------------------------------------------------
# voxel grids


def cmd_baseline(args) -> int:
    grid = voxel_ops.load_grid(args.grid)
    if grid.kind is voxel_ops.GridKind.PROBABILITY:
        grid = voxel_ops.threshold(grid, 0.5 if args.threshold is None else args.threshold)
    elif args.threshold is not None:
        print("warning: grid is already binary; --threshold ignored", file=sys.stderr)
    est = voxel_ops.baseline_volume(grid, args.height_m)
    lines = [
        f"h_v: {est.h_v}",
        f"h_m: {est.h_m:.6f} m",
        f"l_q: {est.l_q:.9g} m",
        f"V_q: {est.V_q:.9g} m3",
        f"filled: {est.filled}",
        f"V_tot: {est.V_tot_dm3:.6f} dm3",
    ]
    _emit("\n".join(lines) + "\n", args.output)
    return 0


def cmd_voxelize(args) -> int:
    mesh = _open_mesh(args.mesh)
    grid = voxel_ops.voxelize(mesh, args.grid, voxel_ops.fit_cubic_bounds(mesh, args.pad))
    if not args.output:
        raise FormatError("voxelize needs --output for the grid file")
    voxel_ops.save_grid(grid, args.output)
    print(f"dims: {'x'.join(map(str, grid.dims))}  filled: {grid.filled}  cell: {grid.spacing[0]:.6g} m")
    return 0


def cmd_rotation_sweep(args) -> int:
    mesh = _open_mesh(args.mesh)
    result = experiments.rotation_sweep(mesh, args.axis, args.height_m, args.grid, jobs=args.jobs)
    _emit(result.to_csv(), args.output)
    return 0


# ---------------------------------------------------------------------------
# evaluation


def _load_predictions(path) -> list:
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise InputIOError(f"cannot read predictions {path}: {exc.strerror or exc}") from exc
    out = []
    for n, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            out.append((str(doc["clip_id"]), doc.get("frame_index"), doc["volumes_dm3"]))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise FormatError(f"{path}: line {n}: bad prediction record ({exc})") from None
    return out


def match_predictions(predictions, clips) -> list:
    by_clip = {c.clip_id: c for c in clips}
    samples, missing = [], []
    for clip_id, frame_index, vols in predictions:
        clip = by_clip.get(clip_id)
        key = clip_id if frame_index is None else f"{clip_id}/{frame_index}"
        if clip is None or (frame_index is not None
                            and all(f.frame_index != int(frame_index) for f in clip.frames)):
            missing.append(key)
            continue
        truth = clip.volumes.to_json()
        pred = {k: float(v) for k, v in vols.items()}
        if "total" not in pred:
            pred["total"] = sum(v for k, v in pred.items())
        samples.append(metrics.VolumePrediction(pred, truth, key))
    if missing:
        raise IdMismatchError(
            f"{len(missing)} prediction id(s) not found in annotations: {', '.join(missing[:10])}",
            missing)
    return samples


def cmd_evaluate(args) -> int:
    clips = ann.read_store(args.truth, args.clips)
    samples = match_predictions(_load_predictions(args.predictions), clips)
    splits = {c.split for c in clips if any(s.sample_id.split("/")[0] == c.clip_id for s in samples)}
    split = splits.pop() if len(splits) == 1 else "mixed"
    report = metrics.aggregate(samples, args.tolerances, split=split or "unassigned")
    out_dir = args.output or "."
    os.makedirs(out_dir, exist_ok=True)
    report.write(os.path.join(out_dir, "report.json"), os.path.join(out_dir, "curve.csv"))
    print(f"split: {report.split}  samples: {report.n_samples}")
    print(f"MAPE total: {report.mape_total:.3f}%")
    for tol, ratio in report.success_at.items():
        print(f"success@{tol:g}%: {ratio:.4f}")
    return 0


# ---------------------------------------------------------------------------
# codecs


def _read_codec_input(kind, path):
    if kind == "segmentation":
        if path.endswith(".npy"):
            return np.load(path)
        return label_codec.read_pgm(path)
    return label_codec.load_skeleton(path)


def cmd_encode(args) -> int:
    item = _read_codec_input(args.kind, args.input)
    if args.kind == "heatmap":
        skel = item if isinstance(item, label_codec.Skeleton2D) else item.to_2d()
        encoded = label_codec.encode_heatmaps(skel, args.resolution, args.sigma)
        if args.round_trip:
            back = label_codec.decode_heatmaps(encoded)
            vis = skel.visible
            dev = np.abs(back.joints[vis] - skel.joints[vis]).max() if vis.any() else 0.0
            print(f"max deviation: {dev:.6f} px")
    elif args.kind == "pose3d":
        if not isinstance(item, label_codec.Skeleton3D):
            raise FormatError(f"{args.input}: pose3d encoding needs a 'depth' on every joint")
        encoded = label_codec.encode_pose3d(item, args.resolution, args.sigma, args.depth_sigma)
        if args.round_trip:
            back = label_codec.decode_pose3d(encoded)
            vis = item.visible
            px = np.abs(back.joints[vis, :2] - item.joints[vis, :2]).max() if vis.any() else 0.0
            dd = np.abs(back.joints[vis, 2] - item.joints[vis, 2]).max() if vis.any() else 0.0
            print(f"max deviation: {px:.6f} px, depth {dd:.6f}")
    else:
        encoded = label_codec.one_hot_segmentation(item)
        if args.round_trip:
            back = label_codec.segmentation_from_one_hot(encoded)
            print(f"mismatched pixels: {int(np.count_nonzero(back != item))}")
    if args.output:
        np.save(args.output, encoded)
    elif not args.round_trip:
        raise FormatError("encode needs --output (or --round-trip)")
    return 0


def cmd_decode(args) -> int:
    try:
        arr = np.load(args.input)
    except OSError as exc:
        raise InputIOError(f"cannot read {args.input}: {exc}") from exc
    except ValueError as exc:
        raise FormatError(f"{args.input}: not a .npy array ({exc})") from exc
    if arr.ndim == 4:
        doc = label_codec.skeleton_to_json(label_codec.decode_pose3d(arr))
    elif arr.ndim == 3 and arr.shape[0] == label_codec.N_JOINTS:
        doc = label_codec.skeleton_to_json(label_codec.decode_heatmaps(arr))
    elif arr.ndim == 3 and arr.shape[0] == label_codec.N_CLASSES:
        mask = label_codec.segmentation_from_one_hot(arr)
        if not args.output:
            raise FormatError("decoding a segmentation stack needs --output for the PGM")
        label_codec.write_pgm(mask, args.output)
        return 0
    else:
        raise FormatError(f"{args.input}: cannot infer codec from shape {arr.shape}")
    _emit(json.dumps(doc, indent=2) + "\n", args.output)
    return 0


# ---------------------------------------------------------------------------
# annotations


def cmd_stats(args) -> int:
    summary = ann.dataset_stats(ann.read_store(args.annotations, args.clips))
    _emit(json.dumps(summary.to_json(), indent=2) + "\n", args.output)
    return 0


def cmd_split(args) -> int:
    clips = ann.read_store(args.annotations, args.clips)
    clips = ann.assign_splits(clips, args.ratios, args.seed)
    if not args.output:
        raise FormatError("split needs --output for the re-split annotations")
    ann.write_store(clips, args.output)
    counts = {s: sum(c.split == s for c in clips) for s in ann.SPLITS}
    print("  ".join(f"{s}: {n}" for s, n in counts.items()))
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (default 0)")
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="worker processes (default 1)")
    common.add_argument("--output", "-o", default=argparse.SUPPRESS, help="output file or directory")

    parser = argparse.ArgumentParser(prog="bodyvol", description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--output", "-o", default=None)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("volume", parents=[common], help="mesh and per-part volumes")
    p.add_argument("mesh")
    p.add_argument("--labels", help="per-vertex label file")
    p.add_argument("--merge-map", help="JSON merge map (default: bundled SURREAL map)")
    p.add_argument("--merged", action="store_true", help="labels are already the 14 merged parts")
    p.add_argument("--close-holes", action="store_true", help="cap boundary loops before measuring")
    p.set_defaults(func=cmd_volume)

    p = sub.add_parser("baseline", parents=[common], help="height-scaled voxel volume")
    p.add_argument("grid")
    p.add_argument("--height-m", type=float, required=True)
    p.add_argument("--threshold", type=float, default=None, help="probability cut-off (default 0.5)")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("voxelize", parents=[common], help="rasterize a closed mesh to a grid file")
    p.add_argument("mesh")
    p.add_argument("--grid", type=int, default=128)
    p.add_argument("--pad", type=float, default=0.0, help="relative padding of the fitted cube")
    p.set_defaults(func=cmd_voxelize)

    p = sub.add_parser("rotation-sweep", parents=[common], help="baseline error over 360 rotations")
    p.add_argument("mesh")
    p.add_argument("--axis", choices=sorted(experiments.SWEEP_AXES), default="y")
    p.add_argument("--height-m", type=float, default=None,
                   help="true height (default: vertical extent of the input mesh)")
    p.add_argument("--grid", type=int, default=128)
    p.set_defaults(func=cmd_rotation_sweep)

    p = sub.add_parser("evaluate", parents=[common], help="volume error report")
    p.add_argument("predictions")
    p.add_argument("truth")
    p.add_argument("--clips", help="sidecar clips file for the truth annotations")
    p.add_argument("--tolerances", type=_floats, default=[5.0, 10.0])
    p.set_defaults(func=cmd_evaluate)

    for name, func in (("encode", cmd_encode), ("decode", cmd_decode)):
        p = sub.add_parser(name, parents=[common], help=f"{name} label representations")
        p.add_argument("input")
        if name == "encode":
            p.add_argument("--kind", choices=("heatmap", "pose3d", "segmentation"), required=True)
            p.add_argument("--resolution", type=int, default=None)
            p.add_argument("--sigma", type=float, default=1.0)
            p.add_argument("--depth-sigma", type=float, default=1.0)
            p.add_argument("--round-trip", action="store_true")
        p.set_defaults(func=func)

    p = sub.add_parser("stats", parents=[common], help="split counts and mean volumes")
    p.add_argument("annotations")
    p.add_argument("--clips")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("split", parents=[common], help="assign clips to train/val/test")
    p.add_argument("annotations")
    p.add_argument("--clips")
    p.add_argument("--ratios", type=_floats, default=[0.8, 0.1, 0.1])
    p.set_defaults(func=cmd_split)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "resolution", 0) is None:
        args.resolution = 64 if args.kind == "pose3d" else 256
    try:
        return args.func(args)
    except BodyVolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc, OpenMeshError) and exc.report is not None:
            print(exc.report.summary(), file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc.filename}: {exc.strerror}", file=sys.stderr)
        return InputIOError.exit_code


if __name__ == "__main__":
    sys.exit(main())
