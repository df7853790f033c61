import json
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bodyvol.annotations import (
    AnnotationStore,
    ClipRecord,
    FrameRecord,
    HeightModel,
    assign_splits,
    clip_to_lines,
    dataset_stats,
    parse_records,
    read_store,
    sample_height,
    split_sizes,
    validation_frame_selection,
    write_store,
)
from bodyvol.errors import ConfigurationError, ConsistencyError, DomainError, EmptyInputError
from builders import clip, volumes


class TestRecords:
    def test_frame_count_bounds(self):
        with pytest.raises(DomainError):
            ClipRecord("c", None, "male", 170.0, volumes(), ())
        with pytest.raises(DomainError):
            clip("c", n_frames=101)

    def test_duplicate_frame_index(self):
        frames = (FrameRecord("c", 0, True), FrameRecord("c", 0, False))
        with pytest.raises(ConsistencyError):
            ClipRecord("c", None, "male", 170.0, volumes(), frames)

    def test_unknown_split(self):
        with pytest.raises(DomainError):
            clip("c", split="holdout")


class TestSplits:
    def test_eight_one_one(self):
        clips = assign_splits([clip(f"c{i}") for i in range(10)], (0.8, 0.1, 0.1), seed=3)
        counts = {s: sum(c.split == s for c in clips) for s in ("train", "val", "test")}
        assert counts == {"train": 8, "val": 1, "test": 1}

    def test_deterministic_and_order_independent(self):
        clips = [clip(f"c{i}") for i in range(30)]
        a = {c.clip_id: c.split for c in assign_splits(clips, seed=11)}
        b = {c.clip_id: c.split for c in assign_splits(clips[::-1], seed=11)}
        assert a == b

    def test_bad_ratios(self):
        with pytest.raises(DomainError):
            assign_splits([clip("a")], (0.5, 0.5, 0.5))
        with pytest.raises(DomainError):
            split_sizes(5, (0.5, 0.5))

    @settings(max_examples=50)
    @given(st.integers(0, 500), st.tuples(st.integers(0, 10), st.integers(0, 10), st.integers(1, 10)))
    def test_sizes_partition(self, n, weights):
        ratios = [w / sum(weights) for w in weights]
        sizes = split_sizes(n, ratios)
        assert sum(sizes) == n
        assert all(abs(s - n * r) < 1 for s, r in zip(sizes, ratios))


class TestHeights:
    def test_zero_sigma(self):
        model = HeightModel({"female": (160.0, 0.0)})
        rng = np.random.default_rng(0)
        assert {sample_height("female", rng, model) for _ in range(10)} == {160.0}

    def test_law_of_large_numbers(self):
        rng = np.random.default_rng(1)
        n = 100_000
        draws = np.array([sample_height("male", rng) for _ in range(n)])
        assert abs(draws.mean() - 175.0) <= 3 * 7.0 / np.sqrt(n)

    def test_clamped(self):
        model = HeightModel({"x": (175.0, 60.0)}, clamp=(140.0, 210.0))
        rng = np.random.default_rng(2)
        draws = [sample_height("x", rng, model) for _ in range(5000)]
        assert min(draws) >= 140.0 and max(draws) <= 210.0
        assert 140.0 in draws and 210.0 in draws

    def test_unknown_gender(self):
        with pytest.raises(ConfigurationError):
            sample_height("other", np.random.default_rng(0))


class TestValidationSelection:
    def test_first_visible(self):
        assert validation_frame_selection([clip("a", 10, {3, 7})])[0].frame_index == 3

    def test_none_visible_skipped(self):
        assert validation_frame_selection([clip("a", 4, set()), clip("b", 2)]) == [clip("b", 2).frames[0]]

    def test_all_visible(self):
        assert validation_frame_selection([clip("a", 5)])[0].frame_index == 0


class TestStats:
    def test_single_clip(self):
        s = dataset_stats([clip("a", 4, {1}, total=80.0, split="train")])
        assert s.mean_volumes_dm3["train"]["total"] == pytest.approx(80.0)
        assert s.per_split["train"].frames == 4 and s.per_split["train"].fully_visible == 1

    def test_two_clip_mean(self):
        s = dataset_stats([clip("a", total=70.0, split="val"), clip("b", total=90.0, split="val")])
        assert s.mean_volumes_dm3["val"]["total"] == pytest.approx(80.0)

    def test_totals_are_sums(self):
        clips = assign_splits([clip(f"c{i}", n_frames=i % 5 + 1) for i in range(40)], seed=0)
        s = dataset_stats(clips)
        assert s.totals.clips == 40
        assert s.totals.frames == sum(len(c.frames) for c in clips)
        assert json.loads(json.dumps(s.to_json()))["totals"]["clips"] == 40

    def test_empty(self):
        with pytest.raises(EmptyInputError):
            dataset_stats([])


class TestJsonLines:
    def clips(self):
        return assign_splits([clip(f"c{i}", 3, {1}, total=60.0 + i, poses=True) for i in range(5)], seed=1)

    def test_flat_round_trip(self, tmp_path):
        clips = self.clips()
        write_store(clips, tmp_path / "frames.jsonl")
        assert read_store(tmp_path / "frames.jsonl") == clips

    def test_sidecar_round_trip(self, tmp_path):
        clips = self.clips()
        write_store(clips, tmp_path / "frames.jsonl", tmp_path / "clips.jsonl")
        first = json.loads((tmp_path / "frames.jsonl").read_text().splitlines()[0])
        assert "volumes_dm3" not in first
        assert read_store(tmp_path / "frames.jsonl", tmp_path / "clips.jsonl") == clips

    def test_flat_line_fields(self, tmp_path):
        write_store(self.clips()[:1], tmp_path / "f.jsonl")
        doc = json.loads((tmp_path / "f.jsonl").read_text().splitlines()[0])
        assert {"clip_id", "frame_index", "split", "gender", "height_cm", "volumes_dm3",
                "fully_visible", "pose2d", "pose3d", "mask_path", "image_path"} <= set(doc)
        assert len(doc["volumes_dm3"]) == 15

    def test_inconsistent_volumes_rejected(self):
        lines = [json.loads(l) for l in clip_to_lines(clip("a", 2))]
        lines[1]["volumes_dm3"] = volumes(99.0).to_json()
        with pytest.raises(ConsistencyError):
            parse_records(lines)

    def test_store_append_and_concurrent_read(self, tmp_path):
        store = AnnotationStore(tmp_path / "store.jsonl")
        clips = self.clips()
        seen = []

        def reader():
            for _ in range(20):
                if (tmp_path / "store.jsonl").exists():
                    seen.append(len(store.read()))

        t = threading.Thread(target=reader)
        t.start()
        for c in clips:
            store.append(c)
        t.join()
        assert store.read() == clips
        assert all(0 <= n <= len(clips) for n in seen)

