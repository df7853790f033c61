import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from bodyvol.errors import DomainError, FormatError, ShapeError
from bodyvol.label_codec import (
    DEPTH_BINS,
    JOINT_NAMES,
    N_CLASSES,
    N_JOINTS,
    Skeleton2D,
    Skeleton3D,
    bin_center,
    decode_heatmaps,
    decode_pose3d,
    depth_bin,
    encode_heatmaps,
    encode_pose3d,
    load_skeleton,
    one_hot_segmentation,
    read_pgm,
    segmentation_from_one_hot,
    skeleton_from_json,
    skeleton_to_json,
    write_pgm,
)


def skeleton(points, visible=None):
    return Skeleton2D.from_points(points, visible)


def random_skeleton(rng, size=256):
    return skeleton(rng.uniform(0, size - 1, (N_JOINTS, 2)))


class TestHeatmaps:
    def test_peak_at_joint(self):
        pts = np.zeros((N_JOINTS, 2))
        pts[0] = (10, 20)
        stack = encode_heatmaps(skeleton(pts), resolution=64, sigma=1.0, image_size=64)
        assert stack.shape == (N_JOINTS, 64, 64)
        row, col = np.unravel_index(stack[0].argmax(), stack[0].shape)
        assert (col, row) == (10, 20)
        assert stack[0, 20, 10] == 1.0

    def test_default_image_scale(self):
        pts = np.full((N_JOINTS, 2), 128.0)
        stack = encode_heatmaps(skeleton(pts), resolution=64)
        assert stack[5, 32, 32] == 1.0

    def test_invisible_channel_is_zero(self):
        vis = np.ones(N_JOINTS, bool)
        vis[3] = False
        stack = encode_heatmaps(skeleton(np.full((N_JOINTS, 2), 50.0), vis))
        assert not stack[3].any() and stack[2].any()
        assert not decode_heatmaps(stack).visible[3]

    def test_deterministic(self):
        s = random_skeleton(np.random.default_rng(0))
        np.testing.assert_array_equal(encode_heatmaps(s), encode_heatmaps(s))

    def test_round_trip_full_resolution(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            s = random_skeleton(rng)
            back = decode_heatmaps(encode_heatmaps(s, resolution=256))
            assert np.abs(back.joints - s.joints).max() <= 0.5

    def test_cell_centres_round_trip_exactly(self):
        pts = np.random.default_rng(2).integers(0, 64, (N_JOINTS, 2)) * 4.0
        back = decode_heatmaps(encode_heatmaps(skeleton(pts), resolution=64))
        np.testing.assert_array_equal(back.joints, pts)

    def test_uniform_channel_ties_to_origin(self):
        stack = np.full((N_JOINTS, 8, 8), 0.5, np.float32)
        out = decode_heatmaps(stack)
        assert out.visible.all() and (out.joints == 0).all()

    def test_sigma_must_be_positive(self):
        with pytest.raises(DomainError):
            encode_heatmaps(random_skeleton(np.random.default_rng(0)), sigma=0)

    def test_visible_joint_outside_image(self):
        with pytest.raises(DomainError):
            encode_heatmaps(skeleton(np.full((N_JOINTS, 2), 300.0)))

    def test_wrong_joint_count(self):
        with pytest.raises(ShapeError):
            skeleton(np.zeros((15, 2)))


class TestPose3D:
    def test_depth_examples(self):
        assert depth_bin(0.5) == 6
        assert bin_center(6) == pytest.approx(0.5416666666666666, abs=1e-15)
        assert depth_bin(0.0) == 0 and bin_center(0) == pytest.approx(1 / 24)
        assert depth_bin(1.0) == DEPTH_BINS - 1

    def test_depth_domain(self):
        with pytest.raises(DomainError):
            depth_bin(1.01)
        with pytest.raises(DomainError):
            Skeleton3D.from_points(np.full((N_JOINTS, 3), -0.1))

    @given(st.floats(0, 1))
    def test_quantization_half_bin(self, d):
        assert abs(bin_center(depth_bin(d)) - d) <= 1 / 24 + 1e-15

    def test_grid_round_trip(self):
        rng = np.random.default_rng(5)
        pts = np.column_stack([rng.integers(0, 64, (N_JOINTS, 2)) * 4.0, rng.random(N_JOINTS)])
        s = Skeleton3D.from_points(pts)
        grid = encode_pose3d(s)
        assert grid.shape == (N_JOINTS, DEPTH_BINS, 64, 64)
        back = decode_pose3d(grid)
        np.testing.assert_array_equal(back.joints[:, :2], pts[:, :2])
        assert np.abs(back.joints[:, 2] - pts[:, 2]).max() <= 1 / 24 + 1e-15


class TestSegmentation:
    def test_all_background(self):
        stack = one_hot_segmentation(np.zeros((4, 4), int))
        assert stack.shape == (N_CLASSES, 4, 4)
        assert stack[0].all() and not stack[1:].any()

    @settings(max_examples=50)
    @given(hnp.arrays(np.uint8, hnp.array_shapes(min_dims=2, max_dims=2, max_side=16),
                      elements=st.integers(0, N_CLASSES - 1)))
    def test_bijection(self, mask):
        stack = one_hot_segmentation(mask)
        assert (stack.sum(axis=0) == 1).all()
        np.testing.assert_array_equal(segmentation_from_one_hot(stack), mask)

    def test_class_15_rejected(self):
        with pytest.raises(DomainError):
            one_hot_segmentation(np.array([[0, 15]]))

    def test_pgm_round_trip(self, tmp_path):
        mask = np.random.default_rng(0).integers(0, 15, (7, 9)).astype(np.uint8)
        path = tmp_path / "m.pgm"
        write_pgm(mask, path)
        np.testing.assert_array_equal(read_pgm(path), mask)

    def test_pgm_with_comment(self, tmp_path):
        path = tmp_path / "m.pgm"
        path.write_bytes(b"P5\n# made by hand\n2 1\n255\n\x03\x07")
        assert read_pgm(path).tolist() == [[3, 7]]

    def test_pgm_wrong_magic(self, tmp_path):
        path = tmp_path / "m.pgm"
        path.write_bytes(b"P2\n1 1\n255\n0")
        with pytest.raises(FormatError):
            read_pgm(path)


class TestSkeletonJson:
    def test_round_trip_2d_and_3d(self):
        rng = np.random.default_rng(7)
        s2 = random_skeleton(rng)
        back = skeleton_from_json(skeleton_to_json(s2))
        assert isinstance(back, Skeleton2D)
        np.testing.assert_array_equal(back.joints, s2.joints)
        s3 = Skeleton3D.from_points(np.column_stack([s2.joints, rng.random(N_JOINTS)]))
        assert isinstance(skeleton_from_json(skeleton_to_json(s3)), Skeleton3D)

    def test_selection_from_larger_set(self, tmp_path):
        doc = [{"name": f"j{i}", "u": i, "v": 2 * i} for i in range(23)]
        selection = {name: f"j{i + 3}" for i, name in enumerate(JOINT_NAMES)}
        path = tmp_path / "s.json"
        path.write_text(json.dumps(doc))
        s = load_skeleton(path, selection)
        assert s.joints[0].tolist() == [3.0, 6.0]

    def test_missing_joint(self):
        with pytest.raises(FormatError):
            skeleton_from_json([{"name": "head", "u": 1, "v": 1}])
