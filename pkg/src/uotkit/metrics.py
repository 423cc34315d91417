"""One-pass evaluation: the five scores, attribute breakdowns, and the
frame-rate stability protocol.

Frames where the target is absent are excluded from Pre/nPre/AUC/cAUC and
included in mACC, which rewards predicting "absent" (a zero-area box or an
explicit flag) on those frames. Dataset-level scores are unweighted means
over sequences. Scores are stored as unit-interval values; reports format
them x100 with one decimal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import rng
from .attributes import BINARY_CODES, full_attributes
from .dataset import SequenceAnnotation, TrackerResult
from .errors import EvaluationError, MissingResultError, SchemaError
from .geometry import center_error, complete_iou, iou, normalized_center_error

__all__ = [
    "SUCCESS_THRESHOLDS",
    "PRECISION_THRESHOLDS",
    "NORM_PRECISION_THRESHOLDS",
    "SequenceScores",
    "EvaluationReport",
    "ResampleSpec",
    "success_auc",
    "precision",
    "normalized_precision",
    "macc",
    "score_sequence",
    "evaluate",
    "attribute_breakdown",
    "retained_indices",
    "framerate_stability",
]

# Overlap thresholds 0..1 step 0.05; success counts strict ">".
SUCCESS_THRESHOLDS = np.arange(21) * 0.05
# Pixel thresholds 0..50 step 1; precision counts "<=". Pre reads 20 px.
PRECISION_THRESHOLDS = np.arange(51, dtype=np.float64)
# Normalized thresholds 0..0.5 step 0.01.
NORM_PRECISION_THRESHOLDS = np.arange(51) * 0.01

SCORE_NAMES = ("pre", "npre", "auc", "cauc", "macc")


@dataclass
class SequenceScores:
    pre: float
    npre: float
    auc: float
    cauc: float
    macc: float
    precision_curve: np.ndarray
    norm_precision_curve: np.ndarray
    success_curve: np.ndarray
    complete_success_curve: np.ndarray

    def scalars(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in SCORE_NAMES}

    def to_json_dict(self) -> dict:
        out: dict = self.scalars()
        out["curves"] = {
            "precision": self.precision_curve.tolist(),
            "normalized_precision": self.norm_precision_curve.tolist(),
            "success": self.success_curve.tolist(),
            "complete_success": self.complete_success_curve.tolist(),
        }
        return out


@dataclass
class EvaluationReport:
    protocol: str
    tracker: str
    sequences: dict[str, SequenceScores]
    mean: dict[str, float]
    attributes: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "protocol": self.protocol,
            "tracker": self.tracker,
            "mean": self.mean,
            "sequences": {
                name: self.sequences[name].to_json_dict() for name in sorted(self.sequences)
            },
            "attributes": self.attributes,
        }

    def per_sequence_csv(self) -> str:
        lines = ["sequence," + ",".join(SCORE_NAMES)]
        for name in sorted(self.sequences):
            scores = self.sequences[name]
            lines.append(name + "," + ",".join(repr(getattr(scores, s)) for s in SCORE_NAMES))
        return "\n".join(lines) + "\n"


def _check_lengths(gt: SequenceAnnotation, pr: TrackerResult) -> None:
    if len(pr) != len(gt):
        raise SchemaError(
            f"{gt.name}: result has {len(pr)} frames, annotation has {len(gt)}")


def _evaluable_mask(gt: SequenceAnnotation) -> np.ndarray:
    return (~gt.absent) & (gt.boxes[:, 2] > 0) & (gt.boxes[:, 3] > 0)


def _frame_values(gt: SequenceAnnotation, pr: TrackerResult):
    """Per-evaluable-frame overlap, complete overlap, pixel error, and
    normalized error arrays."""
    _check_lengths(gt, pr)
    idx = np.flatnonzero(_evaluable_mask(gt))
    if idx.size == 0:
        raise EvaluationError(f"{gt.name}: no evaluable frames (present, non-degenerate gt)")
    ov = np.empty(idx.size)
    cov = np.empty(idx.size)
    err = np.empty(idx.size)
    nerr = np.empty(idx.size)
    for k, i in enumerate(idx):
        g = gt.box(int(i))
        p = pr.pred_box(int(i))
        ov[k] = iou(g, p)
        cov[k] = complete_iou(g, p)
        err[k] = center_error(g, p)
        nerr[k] = normalized_center_error(g, p)
    return ov, cov, err, nerr


def success_auc(
    gt: SequenceAnnotation, pr: TrackerResult, overlap: str = "iou"
) -> tuple[np.ndarray, float]:
    """Success curve over 21 overlap thresholds and its mean (the AUC).

    `overlap` selects plain "iou" or "complete_iou". A frame succeeds at
    threshold t when its overlap is strictly greater than t.
    """
    if overlap not in ("iou", "complete_iou"):
        raise ValueError(f"unknown overlap kind {overlap!r}")
    ov, cov, _, _ = _frame_values(gt, pr)
    values = ov if overlap == "iou" else cov
    curve = np.array([
        np.count_nonzero(values > t) / values.size for t in SUCCESS_THRESHOLDS
    ])
    return curve, float(np.mean(curve))


def precision(gt: SequenceAnnotation, pr: TrackerResult) -> tuple[np.ndarray, float]:
    """Pixel-precision curve over 0..50 px and the 20 px score."""
    _, _, err, _ = _frame_values(gt, pr)
    curve = np.array([
        np.count_nonzero(err <= t) / err.size for t in PRECISION_THRESHOLDS
    ])
    return curve, float(curve[20])


def normalized_precision(gt: SequenceAnnotation, pr: TrackerResult) -> tuple[np.ndarray, float]:
    """Size-normalized precision curve over 0..0.5 and its mean."""
    _, _, _, nerr = _frame_values(gt, pr)
    curve = np.array([
        np.count_nonzero(nerr <= t) / nerr.size for t in NORM_PRECISION_THRESHOLDS
    ])
    return curve, float(np.mean(curve))


def macc(gt: SequenceAnnotation, pr: TrackerResult) -> float:
    """Mean per-frame accuracy over all frames, absent ones included.

    Present frames score their IoU; absent frames score 1 when the
    tracker predicts absent (zero-area box or explicit flag), else 0.
    """
    _check_lengths(gt, pr)
    total = 0.0
    for i in range(len(gt)):
        if gt.absent[i]:
            total += 1.0 if pr.pred_absent(i) else 0.0
        else:
            total += iou(gt.box(i), pr.pred_box(i))
    return total / len(gt)


def score_sequence(gt: SequenceAnnotation, pr: TrackerResult) -> SequenceScores:
    """All five metrics plus curves in one pass over the frames."""
    ov, cov, err, nerr = _frame_values(gt, pr)
    n = ov.size
    success_curve = np.array([np.count_nonzero(ov > t) / n for t in SUCCESS_THRESHOLDS])
    csuccess_curve = np.array([np.count_nonzero(cov > t) / n for t in SUCCESS_THRESHOLDS])
    precision_curve = np.array([np.count_nonzero(err <= t) / n for t in PRECISION_THRESHOLDS])
    nprecision_curve = np.array(
        [np.count_nonzero(nerr <= t) / n for t in NORM_PRECISION_THRESHOLDS])
    return SequenceScores(
        pre=float(precision_curve[20]),
        npre=float(np.mean(nprecision_curve)),
        auc=float(np.mean(success_curve)),
        cauc=float(np.mean(csuccess_curve)),
        macc=macc(gt, pr),
        precision_curve=precision_curve,
        norm_precision_curve=nprecision_curve,
        success_curve=success_curve,
        complete_success_curve=csuccess_curve,
    )


def evaluate(
    sequences: Sequence[SequenceAnnotation],
    results: Mapping[str, TrackerResult],
    protocol: str = "cross_domain",
    tracker: str = "",
) -> EvaluationReport:
    """Score a tracker over a sequence set.

    Every sequence must have a result (missing ones raise, never skip).
    Output ordering is lexicographic by sequence name, so identical
    inputs serialize byte-identically.
    """
    if protocol not in ("cross_domain", "within_domain"):
        raise ValueError(f"unknown protocol {protocol!r}")
    by_name = {seq.name: seq for seq in sequences}
    missing = sorted(name for name in by_name if name not in results)
    if missing:
        raise MissingResultError(
            f"tracker {tracker!r} is missing results for: " + ", ".join(missing))
    per_seq: dict[str, SequenceScores] = {}
    for name in sorted(by_name):
        per_seq[name] = score_sequence(by_name[name], results[name])
    mean = {
        score: float(np.mean([getattr(per_seq[name], score) for name in sorted(per_seq)]))
        for score in SCORE_NAMES
    }
    return EvaluationReport(protocol=protocol, tracker=tracker, sequences=per_seq, mean=mean)


def attribute_breakdown(
    report: EvaluationReport,
    annotations: Sequence[SequenceAnnotation],
    reference: str = "first",
) -> dict:
    """Mean scores per attribute value.

    Binary attributes form one group (the sequences carrying the flag);
    categorical attributes one group per observed value. Groups no
    sequence belongs to are omitted entirely.
    """
    by_name = {seq.name: seq for seq in annotations}
    groups: dict[str, dict[str, list[str]]] = {}
    for name in sorted(report.sequences):
        if name not in by_name:
            continue
        attrs, _ = full_attributes(by_name[name], reference=reference)
        for code, value in attrs.as_dict().items():
            if code in BINARY_CODES:
                if not value:
                    continue
                key = "true"
            else:
                key = str(value)
            groups.setdefault(code, {}).setdefault(key, []).append(name)

    out: dict = {}
    for code in sorted(groups):
        out[code] = {}
        for key in sorted(groups[code]):
            members = groups[code][key]
            entry = {
                score: float(np.mean([getattr(report.sequences[m], score) for m in members]))
                for score in SCORE_NAMES
            }
            entry["count"] = len(members)
            out[code][key] = entry
    return out


@dataclass(frozen=True)
class ResampleSpec:
    """Frame subsampling: stride keeps every factor-th frame, random keeps
    frame 0 plus a seeded uniform sample of ceil(N/factor)-1 others."""

    mode: str = "stride"
    factor: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in ("stride", "random"):
            raise ValueError(f"resample mode must be stride or random, got {self.mode!r}")
        if self.factor < 1:
            raise ValueError(f"resample factor must be >= 1, got {self.factor}")


def retained_indices(spec: ResampleSpec, n_frames: int, sequence: str = "") -> np.ndarray:
    """Sorted frame indices kept at this resample factor; frame 0 always stays."""
    if spec.factor > n_frames:
        raise EvaluationError(
            f"resample factor {spec.factor} exceeds sequence length {n_frames}")
    if spec.mode == "stride":
        return np.arange(0, n_frames, spec.factor, dtype=np.int64)
    keep = math.ceil(n_frames / spec.factor) - 1
    gen = rng.stream(spec.seed, label=sequence, tag=spec.factor)
    rest = gen.choice(np.arange(1, n_frames, dtype=np.int64), size=keep, replace=False)
    return np.concatenate(([0], np.sort(rest)))


def _subsample(gt: SequenceAnnotation, pr: TrackerResult, idx: np.ndarray):
    sub_gt = SequenceAnnotation(
        name=gt.name, boxes=gt.boxes[idx], absent=gt.absent[idx],
        language_prompt=gt.language_prompt, class_name=gt.class_name,
        superclass=gt.superclass, attributes=gt.attributes,
        frame_size=gt.frame_size, fps=gt.fps,
    )
    sub_pr = TrackerResult(
        tracker=pr.tracker, sequence=pr.sequence, boxes=pr.boxes[idx],
        confidence=None if pr.confidence is None else pr.confidence[idx],
        absent=None if pr.absent is None else pr.absent[idx],
    )
    return sub_gt, sub_pr


def framerate_stability(
    sequences: Sequence[SequenceAnnotation],
    results: Mapping[str, TrackerResult],
    specs: Iterable[ResampleSpec],
) -> list[dict]:
    """Mean AUC over the retained frames, one point per resample spec.

    Self-test protocol: both the annotation and the stored dense result
    are subsampled with the same retained index set.
    """
    by_name = {seq.name: seq for seq in sequences}
    points = []
    for spec in specs:
        aucs = []
        for name in sorted(by_name):
            gt = by_name[name]
            if name not in results:
                raise MissingResultError(f"missing result for sequence {name!r}")
            pr = results[name]
            _check_lengths(gt, pr)
            idx = retained_indices(spec, len(gt), sequence=name)
            sub_gt, sub_pr = _subsample(gt, pr, idx)
            _, auc = success_auc(sub_gt, sub_pr)
            aucs.append(auc)
        points.append({
            "mode": spec.mode,
            "factor": spec.factor,
            "auc": float(np.mean(aucs)),
        })
    return points
