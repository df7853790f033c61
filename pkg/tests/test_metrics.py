import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bodyvol.errors import DomainError, EmptyInputError, ShapeError
from bodyvol.label_codec import N_JOINTS, Skeleton2D, Skeleton3D
from bodyvol.metrics import (
    VolumePrediction,
    aggregate,
    ae,
    ape,
    cumulative_curve,
    curve_thresholds,
    iou,
    pck,
    pose3d_accuracy,
)


def sample(pred_total, truth_total, sid=""):
    # two parts splitting the total 1:3
    return VolumePrediction(
        {"A": pred_total / 4, "B": 3 * pred_total / 4},
        {"A": truth_total / 4, "B": 3 * truth_total / 4}, sid)


class TestApe:
    def test_examples(self):
        assert ape(110, 100) == 10.0
        assert ape(7.5, 7.5) == 0.0
        assert ae(3.0, 5.0) == 2.0

    def test_zero_truth(self):
        with pytest.raises(DomainError):
            ape(1.0, 0.0)


class TestAggregate:
    def test_constant_error(self):
        rep = aggregate([sample(110, 100), sample(55, 50)])
        assert rep.mape_total == pytest.approx(10.0, rel=1e-12)
        assert rep.stats["total"].ape_std == pytest.approx(0.0, abs=1e-12)

    def test_success_counting(self):
        rep = aggregate([sample(105, 100), sample(115, 100)], tolerances=(10,))
        assert rep.success_at[10.0] == 0.5

    def test_perfect_sample_curve(self):
        rep = aggregate([sample(50, 50)])
        assert all(r == 1.0 for _, r in rep.curve)
        assert len(rep.curve) == 1001 and rep.curve[-1][0] == 100.0

    def test_population_std(self):
        rep = aggregate([sample(100, 100), sample(120, 100)])
        assert rep.stats["total"].ape_std == pytest.approx(10.0)
        assert rep.stats["total"].ae_mean == pytest.approx(10.0)

    def test_part_stats(self):
        rep = aggregate([sample(120, 100)])
        assert rep.stats["A"].ae_mean == pytest.approx(5.0)
        assert rep.stats["B"].ape_mean == pytest.approx(20.0)

    def test_empty(self):
        with pytest.raises(EmptyInputError):
            aggregate([])

    def test_mismatched_parts(self):
        with pytest.raises(DomainError):
            VolumePrediction({"A": 1.0}, {"B": 1.0})

    def test_thresholds_are_exact_tenths(self):
        t = curve_thresholds()
        assert t[100] == 10.0 and t[3] == 0.3

    def test_report_files(self, tmp_path):
        rep = aggregate([sample(105, 100), sample(90, 100)])
        rep.write(tmp_path / "r.json", tmp_path / "c.csv")
        doc = json.loads((tmp_path / "r.json").read_text())
        assert doc["n_samples"] == 2 and doc["success_at"]["10"] == 1.0
        lines = (tmp_path / "c.csv").read_text().splitlines()
        assert lines[0] == "error,ratio" and lines[51] == "5.0,0.5"

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0, 150), min_size=1, max_size=60))
    def test_curve_monotone_and_ends_at_one(self, apes):
        curve = cumulative_curve(apes)
        ratios = [r for _, r in curve]
        assert all(a <= b for a, b in zip(ratios, ratios[1:]))
        assert all(0 <= r <= 1 for r in ratios)
        for t, r in curve:
            if t >= max(apes):
                assert r == 1.0

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.tuples(st.integers(1, 2**20), st.integers(1, 2**20)), min_size=1, max_size=30),
           st.sampled_from([2.0, 4.0, 0.5]))
    def test_scale_invariance(self, pairs, s):
        base = [sample(p / 1024, t / 1024) for p, t in pairs]
        scaled = [sample(p / 1024 * s, t / 1024 * s) for p, t in pairs]
        a, b = aggregate(base), aggregate(scaled)
        assert a.curve == b.curve and a.success_at == b.success_at
        assert a.stats["total"].ape_mean == b.stats["total"].ape_mean

    def test_ae_translation_covariance(self):
        a = aggregate([sample(110, 100)]).stats["total"].ae_mean
        b = aggregate([sample(110 + 7, 100)]).stats["total"].ae_mean
        assert b - a == pytest.approx(7.0, abs=1e-12)


def skel(points, visible=None):
    return Skeleton2D.from_points(points, visible)


class TestPck:
    def base(self):
        pts = np.zeros((N_JOINTS, 2))
        pts[:, 0] = np.linspace(0, 100, N_JOINTS)
        return pts

    def test_threshold_examples(self):
        truth = self.base()
        pred = truth.copy()
        pred[0, 1] += 4.0
        pred[1, 1] += 6.0
        r = pck(skel(pred), skel(truth), alpha=0.05, norm=100.0)
        assert r.correct[0] and not r.correct[1]
        assert r.ratio == pytest.approx(15 / 16)

    def test_default_norm_is_bbox_side(self):
        truth = self.base()
        pred = truth.copy()
        pred[2, 1] += 5.0
        assert pck(skel(pred), skel(truth)).correct[2]
        pred[2, 1] += 0.01
        assert not pck(skel(pred), skel(truth)).correct[2]

    def test_permutation_invariance(self):
        rng = np.random.default_rng(0)
        truth = rng.uniform(0, 200, (N_JOINTS, 2))
        pred = truth + rng.normal(0, 8, truth.shape)
        perm = rng.permutation(N_JOINTS)
        a = pck(skel(pred), skel(truth)).ratio
        b = pck(skel(pred[perm]), skel(truth[perm])).ratio
        assert a == b

    def test_bad_norm(self):
        with pytest.raises(DomainError):
            pck(skel(self.base()), skel(self.base()), norm=0.0)


class TestIoU:
    def test_identical(self):
        m = np.array([[0, 1], [2, 2]])
        r = iou(m, m)
        assert r.mean == 1.0 and r.as_dict() == {0: 1.0, 1: 1.0, 2: 1.0}

    def test_disjoint(self):
        r = iou(np.array([[1, 0]]), np.array([[0, 1]]))
        assert r.per_class[1] == 0.0 and r.mean == 0.0

    def test_one_of_three(self):
        pred = np.array([[1, 1], [0, 0]])
        truth = np.array([[1, 0], [1, 0]])
        assert iou(pred, truth).per_class[1] == pytest.approx(1 / 3)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            iou(np.zeros((2, 2)), np.zeros((2, 3)))

    @settings(max_examples=40)
    @given(st.integers(0, 2**32 - 1))
    def test_symmetric(self, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.integers(0, 15, (2, 8, 8))
        np.testing.assert_array_equal(iou(a, b).per_class, iou(b, a).per_class)


class TestPose3D:
    def pts(self):
        p = np.zeros((N_JOINTS, 3))
        p[:, 0] = np.arange(N_JOINTS) * 10.0
        p[:, 2] = 0.5
        return p

    def test_spatial_threshold(self):
        truth = self.pts()
        pred = truth.copy()
        pred[0, 0] += 13.0
        pred[1, 1] += 12.0
        acc = pose3d_accuracy(Skeleton3D.from_points(pred), Skeleton3D.from_points(truth))
        assert acc == pytest.approx(15 / 16)

    def test_depth_two_bins_inclusive(self):
        truth = self.pts()
        pred = truth.copy()
        pred[:, 2] = 0.5 + 2 / 12  # bin 6 -> bin 8
        assert pose3d_accuracy(Skeleton3D.from_points(pred), Skeleton3D.from_points(truth)) == 1.0
        pred[:, 2] = 0.5 + 3 / 12
        assert pose3d_accuracy(Skeleton3D.from_points(pred), Skeleton3D.from_points(truth)) == 0.0

    def test_permutation_invariance(self):
        rng = np.random.default_rng(9)
        truth = np.column_stack([rng.uniform(0, 255, (N_JOINTS, 2)), rng.random(N_JOINTS)])
        pred = np.column_stack([truth[:, :2] + rng.normal(0, 10, (N_JOINTS, 2)), rng.random(N_JOINTS)])
        perm = rng.permutation(N_JOINTS)
        a = pose3d_accuracy(Skeleton3D.from_points(pred), Skeleton3D.from_points(truth))
        b = pose3d_accuracy(Skeleton3D.from_points(pred[perm]), Skeleton3D.from_points(truth[perm]))
        assert a == b
