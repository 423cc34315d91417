import json

import numpy as np
import pytest

from conftest import make_sequence, write_dataset
from uotkit.attributes import AttributeSet
from uotkit.dataset import (
    SequenceAnnotation,
    StatsAccumulator,
    TrackerResult,
    dataset_stats,
    load_manifest,
    load_result_file,
    load_results,
    load_sequence,
    validate_dataset,
    write_result_file,
    write_sequence,
)
from uotkit.errors import DatasetError, MissingResultError, SchemaError


def _write_seq_dir(tmp_path, name="seq1", gt_lines=None, absent_lines=None, meta=None):
    d = tmp_path / name
    d.mkdir()
    if gt_lines is not None:
        (d / "groundtruth_rect.txt").write_text("".join(l + "\n" for l in gt_lines))
    if absent_lines is not None:
        (d / "absent.txt").write_text("".join(l + "\n" for l in absent_lines))
    meta = meta or {"class": "clownfish", "superclass": "fish",
                    "width": 640, "height": 480, "fps": 30}
    (d / "meta.json").write_text(json.dumps(meta))
    return d


class TestLoadSequence:
    def test_lengths_agree(self, tmp_path):
        d = _write_seq_dir(
            tmp_path,
            gt_lines=["10,10,20,20"] * 100,
            absent_lines=["0"] * 100,
        )
        seq = load_sequence(d)
        assert len(seq) == 100
        assert not seq.absent.any()

    def test_float_line_format(self, tmp_path):
        d = _write_seq_dir(tmp_path, gt_lines=["10.5,20,30,40"])
        seq = load_sequence(d)
        assert seq.box(0).as_tuple() == (10.5, 20.0, 30.0, 40.0)

    def test_tab_separator_and_crlf(self, tmp_path):
        d = tmp_path / "s"
        d.mkdir()
        (d / "groundtruth_rect.txt").write_bytes(b"1\t2\t3\t4\r\n5\t6\t7\t8\r\n")
        (d / "meta.json").write_text(json.dumps(
            {"class": "c", "superclass": "fish", "width": 100, "height": 100}))
        seq = load_sequence(d)
        assert seq.boxes.tolist() == [[1, 2, 3, 4], [5, 6, 7, 8]]

    def test_length_mismatch(self, tmp_path):
        d = _write_seq_dir(
            tmp_path,
            gt_lines=["10,10,20,20"] * 100,
            absent_lines=["0"] * 99,
        )
        with pytest.raises(SchemaError):
            load_sequence(d)

    def test_missing_absent_defaults_false(self, tmp_path):
        d = _write_seq_dir(tmp_path, gt_lines=["1,1,5,5"] * 3)
        seq = load_sequence(d)
        assert seq.absent.tolist() == [False, False, False]

    def test_malformed_line_names_file_and_line(self, tmp_path):
        d = _write_seq_dir(tmp_path, gt_lines=["1,2,3,4", "bad,line,x,y"])
        with pytest.raises(SchemaError) as err:
            load_sequence(d)
        assert "groundtruth_rect.txt:2" in str(err.value)

    def test_unknown_superclass_rejected(self, tmp_path):
        d = _write_seq_dir(
            tmp_path, gt_lines=["1,1,5,5"],
            meta={"class": "x", "superclass": "dragon", "width": 10, "height": 10})
        with pytest.raises(SchemaError):
            load_sequence(d)

    def test_present_frame_with_zero_size_rejected(self, tmp_path):
        d = _write_seq_dir(tmp_path, gt_lines=["1,1,0,5"])
        with pytest.raises(SchemaError):
            load_sequence(d)

    def test_absent_frame_any_box_accepted(self, tmp_path):
        d = _write_seq_dir(
            tmp_path,
            gt_lines=["1,1,5,5", "0,0,0,0"],
            absent_lines=["0", "1"],
        )
        seq = load_sequence(d)
        assert seq.absent.tolist() == [False, True]


class TestRoundTrip:
    def test_write_then_load_bit_identical(self, tmp_path, rng):
        seq = make_sequence(rng, name="round", n_frames=40, absent_rate=0.2,
                            attributes=AttributeSet({"CAM": True, "UV": "low"}))
        write_sequence(seq, tmp_path / "round")
        loaded = load_sequence(tmp_path / "round")
        assert np.array_equal(loaded.boxes, seq.boxes)
        assert np.array_equal(loaded.absent, seq.absent)
        assert loaded.language_prompt == seq.language_prompt
        assert loaded.class_name == seq.class_name
        assert loaded.superclass == seq.superclass
        assert loaded.frame_size == seq.frame_size
        assert loaded.fps == seq.fps
        assert loaded.attributes == seq.attributes

    def test_result_round_trip(self, tmp_path, rng):
        boxes = rng.uniform(0, 100, size=(25, 4))
        conf = rng.uniform(0, 1, size=25)
        result = TrackerResult(tracker="t", sequence="s", boxes=boxes, confidence=conf)
        write_result_file(result, tmp_path / "t" / "s.txt")
        loaded = load_result_file(tmp_path / "t" / "s.txt", "t", "s")
        assert np.array_equal(loaded.boxes, boxes)
        assert np.array_equal(loaded.confidence, conf)


class TestLoadResults:
    def test_accepts_matching_length(self, tmp_path):
        (tmp_path / "trk").mkdir(parents=True)
        (tmp_path / "trk" / "a.txt").write_text("1,2,3,4\n5,6,7,8\n")
        results = load_results(tmp_path, "trk", sequences=["a"])
        assert len(results["a"]) == 2

    def test_confidence_column(self, tmp_path):
        (tmp_path / "trk").mkdir(parents=True)
        (tmp_path / "trk" / "a.txt").write_text("1,2,3,4,0.9\n")
        result = load_results(tmp_path, "trk", sequences=["a"])["a"]
        assert result.confidence.tolist() == [0.9]
        assert result.boxes.tolist() == [[1, 2, 3, 4]]

    def test_missing_sequence_named(self, tmp_path):
        (tmp_path / "trk").mkdir(parents=True)
        with pytest.raises(MissingResultError) as err:
            load_results(tmp_path, "trk", sequences=["ghost"])
        assert "ghost" in str(err.value)


class TestValidate:
    def test_clean_dataset(self, tmp_path, rng):
        seqs = [make_sequence(rng, name=f"s{i}", n_frames=10) for i in range(3)]
        write_dataset(tmp_path, seqs)
        assert validate_dataset(tmp_path) == []

    def test_zero_size_present_frame_is_error(self, tmp_path, rng):
        seq = make_sequence(rng, name="bad", n_frames=5)
        seq.boxes[2, 2] = 0.0
        write_dataset(tmp_path, [seq])
        issues = validate_dataset(tmp_path)
        assert [i.severity for i in issues] == ["error"]
        assert "frame 2" in issues[0].message

    def test_out_of_bounds_box_is_warning(self, tmp_path, rng):
        seq = make_sequence(rng, name="wide", n_frames=5, frame_size=(100, 100))
        seq.boxes[1] = [90, 10, 30, 20]
        write_dataset(tmp_path, [seq])
        issues = validate_dataset(tmp_path)
        assert [i.severity for i in issues] == ["warning"]

    def test_never_raises_on_junk(self, tmp_path):
        d = tmp_path / "junk"
        d.mkdir()
        (d / "groundtruth_rect.txt").write_text("not,a,box\n")
        (tmp_path / "test.txt").write_text("junk\nmissing_dir\n")
        (tmp_path / "train.txt").write_text("")
        issues = validate_dataset(tmp_path)
        severities = {i.severity for i in issues}
        assert severities == {"error"}
        assert {i.sequence for i in issues} == {"junk", "missing_dir"}


class TestStats:
    def test_split_counts_and_bins(self, tmp_path, rng):
        seqs = [
            make_sequence(rng, name="a", n_frames=100),
            make_sequence(rng, name="b", n_frames=700),
            make_sequence(rng, name="c", n_frames=2000),
        ]
        write_dataset(tmp_path, seqs, test_names=["a"], train_names=["b", "c"])
        stats = dataset_stats(tmp_path)
        assert stats.video_count == 3
        assert stats.split_counts == {"train": 2, "test": 1, "total": 3}
        assert stats.video_length_histogram == {
            "1-600": 1, "601-1200": 1, "1201-1800": 0, ">1800": 1}
        assert stats.total_frames == 2800

    def test_centered_target_hits_center_bin(self, tmp_path):
        boxes = np.tile([310.0, 230.0, 20.0, 20.0], (10, 1))  # center (320, 240)
        seq = SequenceAnnotation(
            name="center", boxes=boxes, absent=np.zeros(10, bool),
            class_name="c", superclass="fish", frame_size=(640, 480))
        write_dataset(tmp_path, [seq])
        stats = dataset_stats(tmp_path)
        assert stats.center_histogram[25, 25] == 10
        assert stats.center_histogram.sum() == 10

    def test_histogram_mass(self, tmp_path, rng):
        seqs = [make_sequence(rng, name=f"s{i}", n_frames=30, absent_rate=0.3)
                for i in range(4)]
        write_dataset(tmp_path, seqs)
        stats = dataset_stats(tmp_path)
        present_total = sum(int((~s.absent).sum()) for s in seqs)
        assert stats.center_histogram.sum() == present_total
        assert sum(stats.video_length_histogram.values()) == 4
        assert sum(stats.size_histogram.values()) == 4

    def test_merge_equals_single_pass(self, rng):
        seqs = [make_sequence(rng, name=f"s{i}", n_frames=20) for i in range(6)]
        whole = StatsAccumulator()
        for s in seqs:
            whole.add(s)
        left = StatsAccumulator()
        right = StatsAccumulator()
        for s in seqs[:3]:
            left.add(s)
        for s in seqs[3:]:
            right.add(s)
        left.merge(right)
        assert left.video_count == whole.video_count
        assert left.per_class_video_counts == whole.per_class_video_counts
        assert np.array_equal(left.center_histogram, whole.center_histogram)

    def test_order_invariance(self, tmp_path, rng):
        seqs = [make_sequence(rng, name=f"s{i}", n_frames=15) for i in range(5)]
        write_dataset(tmp_path, seqs, test_names=["s4", "s2", "s0", "s1", "s3"])
        first = dataset_stats(tmp_path)
        (tmp_path / "test.txt").write_text("".join(f"s{i}\n" for i in range(5)))
        second = dataset_stats(tmp_path)
        assert first.to_json_dict() == second.to_json_dict()

    def test_empty_dataset(self, tmp_path):
        tmp_path.mkdir(exist_ok=True)
        (tmp_path / "test.txt").write_text("")
        (tmp_path / "train.txt").write_text("")
        with pytest.raises(DatasetError):
            dataset_stats(tmp_path)


def test_manifest_reads_names(tmp_path):
    (tmp_path / "test.txt").write_text("b\na\n\n")
    assert load_manifest(tmp_path, "test") == ["b", "a"]
    assert load_manifest(tmp_path, "train") == []
