"""Release gate: every criterion at its stated tolerance, one printed
pass line each. Run with `pytest tests/test_acceptance.py -v -s`."""

import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import make_result, make_sequence, write_dataset
from drift_fixture import build_scenario, on_target_fraction
from oracles import (
    TextbookKalman,
    complete_iou_reference,
    giou_reference,
    iou_rasterized,
    recount_metrics,
    scan_attributes,
)
from uotkit.attributes import auto_attributes
from uotkit.cli import main
from uotkit.dataset import SequenceAnnotation, TrackerResult, dataset_stats, load_results, load_sequence, write_result_file
from uotkit.distill import ckd_loss
from uotkit.gradcheck import run_suite
from uotkit.geometry import BoundingBox, complete_iou, giou, iou
from uotkit.matp import (
    DEFAULT_PARAMS,
    kf_init,
    kf_predict,
    kf_update,
    matp_run_arrays,
    write_response_container,
)
from uotkit.metrics import ResampleSpec, evaluate, framerate_stability, retained_indices, score_sequence


def _report(name: str) -> None:
    print(f"PASS {name}")


class TestMetricOracleEquivalence:
    def test_curves_and_scalars_match_recount(self):
        started = time.perf_counter()
        rng = np.random.default_rng(2024)
        for trial in range(50):
            n = int(rng.integers(5, 201))
            gt = make_sequence(rng, name=f"acc{trial}", n_frames=n, absent_rate=0.2)
            pr = make_result(rng, gt, noise=float(rng.uniform(0, 30)))
            scores = score_sequence(gt, pr)
            expected = recount_metrics(gt.boxes, gt.absent.tolist(), pr.boxes)
            for key in ("pre", "npre", "auc", "cauc", "macc"):
                assert abs(getattr(scores, key) - expected[key]) < 1e-12, (trial, key)
            for engine, oracle in (
                (scores.success_curve, expected["success_curve"]),
                (scores.complete_success_curve, expected["complete_success_curve"]),
                (scores.precision_curve, expected["precision_curve"]),
                (scores.norm_precision_curve, expected["norm_precision_curve"]),
            ):
                assert np.max(np.abs(engine - np.array(oracle))) < 1e-12, trial
        elapsed = time.perf_counter() - started
        assert elapsed < 5.0, f"metric oracle run took {elapsed:.2f}s"
        _report(f"metric oracle equivalence (50 sequences, 1e-12, {elapsed:.2f}s)")


class TestGeometryOracle:
    def test_iou_against_rasterization(self):
        rng = np.random.default_rng(77)
        worst = 0.0
        for _ in range(1000):
            a = (rng.uniform(0, 40), rng.uniform(0, 40),
                 rng.uniform(20, 70), rng.uniform(20, 70))
            b = (rng.uniform(0, 40), rng.uniform(0, 40),
                 rng.uniform(20, 70), rng.uniform(20, 70))
            worst = max(worst, abs(iou(BoundingBox(*a), BoundingBox(*b))
                                   - iou_rasterized(a, b, side=1000)))
        assert worst < 2e-3, worst
        _report(f"geometry rasterization oracle (1000 pairs, worst {worst:.2e} < 2e-3)")

    def test_giou_and_complete_iou_against_arithmetic(self):
        rng = np.random.default_rng(78)
        for _ in range(1000):
            a = BoundingBox(rng.uniform(-50, 50), rng.uniform(-50, 50),
                            rng.uniform(1, 80), rng.uniform(1, 80))
            b = BoundingBox(rng.uniform(-50, 50), rng.uniform(-50, 50),
                            rng.uniform(1, 80), rng.uniform(1, 80))
            assert abs(giou(a, b) - giou_reference(a.as_tuple(), b.as_tuple())) < 1e-12
            assert abs(complete_iou(a, b)
                       - complete_iou_reference(a.as_tuple(), b.as_tuple())) < 1e-12
        _report("geometry giou/complete-iou arithmetic oracle (1e-12)")


class TestGradientSuite:
    def test_all_kernels_100_inputs(self):
        started = time.perf_counter()
        report = run_suite(seed=2024, trials=100, step=1e-3,
                           tolerance=1e-4, fkd_tolerance=1e-6)
        elapsed = time.perf_counter() - started
        assert report["passed"], report["kernels"]
        assert report["kernels"]["fkd"]["max_rel_error"] < 1e-6
        for name, entry in report["kernels"].items():
            assert entry["max_rel_error"] < entry["tolerance"], name
        assert elapsed < 30.0, f"gradient suite took {elapsed:.2f}s"
        worst = max(v["max_rel_error"] for v in report["kernels"].values())
        _report(f"gradient suite (7 kernels x 100 inputs, worst {worst:.2e}, {elapsed:.1f}s)")


class TestCkdClosedForms:
    def test_identical_batches(self):
        for k in (2, 8, 32):
            row = np.linspace(0.5, 1.5, 16)
            batch = np.tile(row, (k, 1))
            loss, _ = ckd_loss(batch, batch, batch, tau=0.5)
            assert abs(loss - 4 * math.log(k)) < 1e-9, k
        _report("ckd closed form 4 ln K for K in {2, 8, 32} (1e-9)")

    def test_orthogonal_pair(self):
        batch = np.eye(2)
        loss, _ = ckd_loss(batch, batch, batch, tau=0.5)
        assert abs(loss - 4 * math.log(1 + math.exp(-2))) < 1e-9
        _report("ckd closed form 4 ln(1+e^-2) for orthogonal K=2 (tau 0.5, 1e-9)")


class TestKalmanOracle:
    def test_10k_cycles_match_textbook(self):
        rng = np.random.default_rng(13)
        params = DEFAULT_PARAMS
        start = BoundingBox(50, 50, 20, 30)
        state = kf_init(start, params)
        oracle = TextbookKalman(start.as_tuple(), params.p0_diag, params.q_diag,
                                params.r_diag, area_scaled=params.p0_area_scaled)
        worst_gap = 0.0
        worst_sym = 0.0
        for _ in range(10_000):
            state, _ = kf_predict(state, params)
            oracle.predict()
            box = BoundingBox(50 + rng.uniform(-30, 30), 50 + rng.uniform(-30, 30),
                              rng.uniform(5, 60), rng.uniform(5, 60))
            state = kf_update(state, box, params)
            oracle.update(box.as_tuple())
            scale_m = np.maximum(1.0, np.maximum(np.abs(state.mean), np.abs(oracle.x)))
            scale_p = np.maximum(1.0, np.maximum(np.abs(state.covariance), np.abs(oracle.P)))
            worst_gap = max(worst_gap,
                            float(np.max(np.abs(state.mean - oracle.x) / scale_m)),
                            float(np.max(np.abs(state.covariance - oracle.P) / scale_p)))
            worst_sym = max(worst_sym,
                            float(np.abs(state.covariance - state.covariance.T).max()))
        assert worst_gap < 1e-9, worst_gap
        assert worst_sym < 1e-9, worst_sym
        _report(f"kalman textbook oracle (1e4 cycles, gap {worst_gap:.1e}, symmetry {worst_sym:.1e})")


class TestMatpBehavior:
    def test_pass_through_and_drift_recovery(self):
        started = time.perf_counter()

        # (a) agreeing raw chain passes through bit-identically
        n = 60
        boxes = np.array([[10 + t, 5 + 0.5 * t, 20.0, 20.0] for t in range(n)])
        maps = np.zeros((n - 1, 16, 16))
        maps[:, 8, 8] = 1.0
        trajectory, fired = matp_run_arrays(BoundingBox(*boxes[0]), maps, boxes[1:])
        out = np.array([b.as_tuple() for b in trajectory])
        assert fired == 0
        assert np.array_equal(out, boxes)

        # (b) two-blob distractor fixture: matp recovers, raw does not
        true_boxes, raw_boxes, drift_maps = build_scenario()
        raw_frac = on_target_fraction(raw_boxes, true_boxes)
        trajectory, fired = matp_run_arrays(
            BoundingBox(*raw_boxes[0]), drift_maps, raw_boxes[1:])
        matp_frac = on_target_fraction(
            np.array([b.as_tuple() for b in trajectory]), true_boxes)
        assert matp_frac >= 0.9, matp_frac
        assert raw_frac < 0.6, raw_frac
        assert fired > 0
        elapsed = time.perf_counter() - started
        assert elapsed < 10.0, f"matp behavior run took {elapsed:.2f}s"
        _report(f"matp pass-through + drift recovery (matp {matp_frac:.0%} vs raw {raw_frac:.0%}, {elapsed:.2f}s)")


class TestAttributeRules:
    def test_brute_force_scan_200_sequences(self):
        rng = np.random.default_rng(42)
        for trial in range(200):
            n = int(rng.integers(2, 80))
            seq = make_sequence(
                rng, name=f"attr{trial}", n_frames=n, absent_rate=0.25,
                frame_size=(int(rng.integers(320, 1920)), int(rng.integers(240, 1080))))
            expected = scan_attributes(seq.boxes.tolist(), seq.absent.tolist(),
                                       seq.frame_size, n)
            got = auto_attributes(seq)
            for code, value in expected.items():
                assert got.get(code) == value, (trial, code)
        _report("attribute rules match brute-force scan (200 sequences)")

    def test_boundary_cases(self):
        def seq(boxes, frame_size=(640, 480)):
            boxes = np.asarray(boxes, float)
            return SequenceAnnotation(name="b", boxes=boxes,
                                      absent=np.zeros(len(boxes), bool),
                                      class_name="c", superclass="fish",
                                      frame_size=frame_size)

        # Area exactly 400 is not low resolution (strict <).
        assert auto_attributes(seq([[0, 0, 20, 20]])).get("LR") is False
        assert auto_attributes(seq([[0, 0, 19, 20]])).get("LR") is True
        # Center jump of exactly 20 px is not fast motion (strict >).
        assert auto_attributes(seq([[0, 0, 10, 10], [20, 0, 10, 10]])).get("FM") is False
        assert auto_attributes(seq([[0, 0, 10, 10], [21, 0, 10, 10]])).get("FM") is True
        # Length exactly 600 is short (inclusive <=).
        assert auto_attributes(seq(np.tile([0, 0, 30, 30], (600, 1)))).get("LEN") == "short"
        assert auto_attributes(seq(np.tile([0, 0, 30, 30], (601, 1)))).get("LEN") == "medium"
        _report("attribute boundary cases (area 400, jump 20, length 600)")


class TestFramerateProtocol:
    def test_factor_one_and_stride_two(self, rng):
        seqs = [make_sequence(rng, name=f"s{i}", n_frames=30) for i in range(3)]
        results = {s.name: make_result(rng, s) for s in seqs}
        report = evaluate(seqs, results)
        points = framerate_stability(seqs, results, [ResampleSpec(factor=1)])
        assert abs(points[0]["auc"] - report.mean["auc"]) < 1e-12
        idx = retained_indices(ResampleSpec(mode="stride", factor=2), 10)
        assert idx.tolist() == [0, 2, 4, 6, 8]
        _report("frame-rate protocol (factor-1 identity 1e-12, stride-2 indices)")


class TestCliDeterminism:
    def test_every_command_twice_byte_identical(self, tmp_path):
        rng = np.random.default_rng(3)
        seqs = [make_sequence(rng, name=f"s{i}", n_frames=20, absent_rate=0.1)
                for i in range(2)]
        write_dataset(tmp_path / "data", seqs)
        for s in seqs:
            write_result_file(make_result(rng, s),
                              tmp_path / "results" / "toy" / f"{s.name}.txt")
        true_boxes, raw_boxes, drift_maps = build_scenario()
        write_result_file(TrackerResult(tracker="toy", sequence="drift", boxes=raw_boxes),
                          tmp_path / "matp_in" / "toy" / "drift.txt")
        (tmp_path / "maps").mkdir()
        write_response_container(drift_maps.astype(np.float32),
                                 tmp_path / "maps" / "drift.rmap")

        commands = {
            "evaluate": ["evaluate", "--dataset", str(tmp_path / "data"),
                         "--results", str(tmp_path / "results"), "--tracker", "toy",
                         "--seed", "5", "--output", "{out}"],
            "attrs": ["attrs", "--dataset", str(tmp_path / "data"), "--output", "{out}/attrs.json"],
            "stats": ["stats", "--dataset", str(tmp_path / "data"), "--output", "{out}/stats.json"],
            "validate": ["validate", "--dataset", str(tmp_path / "data"),
                         "--output", "{out}/issues.json"],
            "matp": ["matp", "--results", str(tmp_path / "matp_in"), "--tracker", "toy",
                     "--maps", str(tmp_path / "maps"), "--output", "{out}"],
            "framerate": ["framerate", "--dataset", str(tmp_path / "data"),
                          "--results", str(tmp_path / "results"), "--tracker", "toy",
                          "--factors", "1,2,5", "--mode", "random", "--seed", "11",
                          "--output", "{out}/fr.json"],
            "distill-check": ["distill-check", "--seed", "7", "--trials", "3",
                              "--output", "{out}/grad.json"],
        }
        for name, template in commands.items():
            outputs = []
            for run in ("a", "b"):
                out = tmp_path / f"{name}_{run}"
                out.mkdir()
                argv = [part.replace("{out}", str(out)) for part in template]
                assert main(argv) == 0, name
                outputs.append({p.relative_to(out).as_posix(): p.read_bytes()
                                for p in sorted(out.rglob("*")) if p.is_file()})
            assert outputs[0] == outputs[1], f"{name} output differs between runs"
        _report("cli determinism (7 commands, byte-identical reruns)")


class TestWebuotIngestion:
    """Contingent criterion: runs only against the released dataset."""

    def test_real_dataset_reproduction(self):
        root = os.environ.get("UOTKIT_WEBUOT_ROOT")
        if not root:
            pytest.skip("UOTKIT_WEBUOT_ROOT not set; released WebUOT-1M data not available")
        stats = dataset_stats(root)
        assert stats.video_count == 1500
        assert stats.split_counts["test"] == 480
        assert stats.split_counts["train"] == 1020

        results_dir = os.environ.get("UOTKIT_WEBUOT_RESULTS")
        tracker = os.environ.get("UOTKIT_WEBUOT_TRACKER", "OKTrack")
        if results_dir:
            names = sorted(Path(root).joinpath("test.txt").read_text().split())
            sequences = [load_sequence(Path(root) / n) for n in names]
            results = load_results(results_dir, tracker, sequences=names)
            report = evaluate(sequences, results, tracker=tracker)
            published = {"pre": 0.575, "npre": 0.638, "auc": 0.600,
                         "cauc": 0.593, "macc": 0.610}
            for key, value in published.items():
                assert abs(report.mean[key] - value) <= 0.003, key
        _report("webuot ingestion (split counts and published scores)")
