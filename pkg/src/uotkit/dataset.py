"""Dataset and tracker-result file I/O.

Each sequence is a directory named after the sequence:

    <root>/<sequence>/groundtruth_rect.txt   one "x,y,w,h" line per frame
    <root>/<sequence>/absent.txt             one 0/1 per frame, 1 = absent (optional)
    <root>/<sequence>/language.txt           one-line language prompt (optional)
    <root>/<sequence>/attributes.txt         CODE=value lines (optional)
    <root>/<sequence>/meta.json              class, superclass, width, height, fps

Split manifests `train.txt` / `test.txt` at the root list one sequence
name per line. Tracker results live in `<results>/<tracker>/<sequence>.txt`
with the groundtruth line format plus an optional 5th confidence column.

All text is UTF-8; comma and tab separators and LF/CRLF endings are both
accepted. Floats are written with shortest round-trip formatting, so a
write/load cycle reproduces bit-identical values.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .attributes import AttributeSet
from .errors import DatasetError, MissingResultError, ParseError, SchemaError
from .geometry import BoundingBox

__all__ = [
    "SUPERCLASSES",
    "SequenceAnnotation",
    "TrackerResult",
    "DatasetStats",
    "StatsAccumulator",
    "Issue",
    "load_manifest",
    "load_sequence",
    "write_sequence",
    "load_results",
    "load_result_file",
    "write_result_file",
    "dataset_stats",
    "validate_dataset",
]

SUPERCLASSES = (
    "amphibian", "arthropod", "bird", "chordate", "coelenterate",
    "crustacean", "fish", "mollusc", "person", "mammal (except humans)",
    "reptile", "inanimate object",
)

# Video-length histogram bin edges (frames), upper-inclusive.
LENGTH_BIN_EDGES = (600, 1200, 1800)
CENTER_HIST_BINS = 51


def format_float(v: float) -> str:
    """Shortest decimal that round-trips the double exactly."""
    return repr(float(v))


@dataclass
class SequenceAnnotation:
    """Ground truth for one video sequence."""

    name: str
    boxes: np.ndarray          # (N, 4) float64, raw [x, y, w, h] per frame
    absent: np.ndarray         # (N,) bool, True = target absent
    language_prompt: str = ""
    class_name: str = ""
    superclass: str = ""
    attributes: AttributeSet | None = None
    frame_size: tuple[int, int] = (0, 0)   # (width, height) pixels
    fps: float = 30.0

    def __post_init__(self) -> None:
        self.boxes = np.asarray(self.boxes, dtype=np.float64)
        self.absent = np.asarray(self.absent, dtype=bool)
        if self.boxes.ndim != 2 or self.boxes.shape[1] != 4:
            raise SchemaError(f"{self.name}: boxes must be (N, 4), got {self.boxes.shape}")
        if self.absent.shape != (self.boxes.shape[0],):
            raise SchemaError(
                f"{self.name}: absent length {self.absent.shape[0]} != "
                f"box count {self.boxes.shape[0]}"
            )

    def __len__(self) -> int:
        return self.boxes.shape[0]

    def box(self, i: int) -> BoundingBox:
        x, y, w, h = self.boxes[i]
        return BoundingBox(x, y, w, h)


@dataclass
class TrackerResult:
    """Predicted boxes of one tracker on one sequence.

    Boxes are kept exactly as parsed; degenerate or negative-size
    predictions are legal and mean "target reported absent". The optional
    `absent` flags are a programmatic alternative to zero-area boxes (the
    file format has no absent column).
    """

    tracker: str
    sequence: str
    boxes: np.ndarray                    # (N, 4) float64
    confidence: np.ndarray | None = None  # (N,) float64 in [0, 1]
    absent: np.ndarray | None = None      # (N,) bool

    def __post_init__(self) -> None:
        self.boxes = np.asarray(self.boxes, dtype=np.float64)
        if self.boxes.ndim != 2 or self.boxes.shape[1] != 4:
            raise SchemaError(f"{self.sequence}: result boxes must be (N, 4)")
        if self.confidence is not None:
            self.confidence = np.asarray(self.confidence, dtype=np.float64)
            if self.confidence.shape != (len(self),):
                raise SchemaError(f"{self.sequence}: confidence length mismatch")
        if self.absent is not None:
            self.absent = np.asarray(self.absent, dtype=bool)
            if self.absent.shape != (len(self),):
                raise SchemaError(f"{self.sequence}: absent length mismatch")

    def __len__(self) -> int:
        return self.boxes.shape[0]

    def pred_box(self, i: int) -> BoundingBox:
        """Prediction as geometry; negative sizes collapse to empty boxes."""
        x, y, w, h = self.boxes[i]
        return BoundingBox(x, y, max(w, 0.0), max(h, 0.0))

    def pred_absent(self, i: int) -> bool:
        """Whether the tracker declared the target absent at frame i."""
        if self.absent is not None and self.absent[i]:
            return True
        w, h = self.boxes[i, 2], self.boxes[i, 3]
        return w <= 0.0 or h <= 0.0


@dataclass(frozen=True)
class Issue:
    sequence: str
    severity: str  # "error" | "warning"
    message: str


@dataclass
class DatasetStats:
    """Aggregate counters over a dataset."""

    video_count: int
    class_count: int
    superclass_histogram: dict[str, int]
    per_class_video_counts: dict[str, int]
    video_length_histogram: dict[str, int]
    center_histogram: np.ndarray           # (51, 51) int64 over [0,1]^2
    size_histogram: dict[str, int]
    split_counts: dict[str, int]
    total_frames: int

    def to_json_dict(self) -> dict:
        return {
            "video_count": self.video_count,
            "class_count": self.class_count,
            "superclass_histogram": dict(sorted(self.superclass_histogram.items())),
            "per_class_video_counts": dict(sorted(self.per_class_video_counts.items())),
            "video_length_histogram": self.video_length_histogram,
            "center_histogram": self.center_histogram.tolist(),
            "size_histogram": self.size_histogram,
            "split_counts": self.split_counts,
            "total_frames": self.total_frames,
        }


def _read_lines(path: Path) -> list[str]:
    return path.read_text(encoding="utf-8").splitlines()


def _parse_box_line(line: str, path: Path, lineno: int, allow_confidence: bool = False):
    sep = "\t" if "\t" in line else ","
    parts = [p.strip() for p in line.split(sep)]
    if allow_confidence and len(parts) == 5:
        pass
    elif len(parts) != 4:
        raise ParseError(f"{path}:{lineno}: expected 4 comma/tab separated values, got {line!r}")
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise ParseError(f"{path}:{lineno}: non-numeric value in {line!r}") from None
    return values


def _parse_boxes_file(path: Path, allow_confidence: bool = False):
    """Returns (boxes (N,4), confidence (N,) or None)."""
    if not path.is_file():
        raise ParseError(f"missing file: {path}")
    rows = []
    confs = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        values = _parse_box_line(line, path, lineno, allow_confidence)
        rows.append(values[:4])
        if allow_confidence:
            confs.append(values[4] if len(values) == 5 else None)
    boxes = np.array(rows, dtype=np.float64).reshape(len(rows), 4)
    confidence = None
    if allow_confidence and any(c is not None for c in confs):
        if any(c is None for c in confs):
            raise ParseError(f"{path}: confidence column present on some lines only")
        confidence = np.array(confs, dtype=np.float64)
    return boxes, confidence


def _parse_absent_file(path: Path) -> np.ndarray:
    flags = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        s = line.strip()
        if not s:
            continue
        if s not in ("0", "1"):
            raise ParseError(f"{path}:{lineno}: absent flag must be 0 or 1, got {s!r}")
        flags.append(s == "1")
    return np.array(flags, dtype=bool)


def _collect_sequence(seq_dir: Path, issues: list[Issue]) -> SequenceAnnotation | None:
    """Tolerant loader: records problems as issues, returns None when the
    sequence cannot be represented at all."""
    name = seq_dir.name
    try:
        boxes, _ = _parse_boxes_file(seq_dir / "groundtruth_rect.txt")
    except DatasetError as exc:
        issues.append(Issue(name, "error", str(exc)))
        return None
    if boxes.shape[0] == 0:
        issues.append(Issue(name, "error", "groundtruth_rect.txt has no frames"))
        return None

    absent_path = seq_dir / "absent.txt"
    if absent_path.is_file():
        try:
            absent = _parse_absent_file(absent_path)
        except DatasetError as exc:
            issues.append(Issue(name, "error", str(exc)))
            return None
        if absent.shape[0] != boxes.shape[0]:
            issues.append(Issue(
                name, "error",
                f"absent.txt has {absent.shape[0]} lines, groundtruth has {boxes.shape[0]}",
            ))
            return None
    else:
        absent = np.zeros(boxes.shape[0], dtype=bool)

    if not np.isfinite(boxes).all():
        bad = int(np.argwhere(~np.isfinite(boxes).all(axis=1))[0][0])
        issues.append(Issue(name, "error", f"non-finite box at frame {bad}"))
        return None

    present = ~absent
    sizes = boxes[:, 2:4]
    bad_present = present & ((sizes[:, 0] <= 0) | (sizes[:, 1] <= 0))
    for i in np.flatnonzero(bad_present):
        issues.append(Issue(
            name, "error",
            f"present frame {int(i)} has non-positive size "
            f"w={boxes[i, 2]}, h={boxes[i, 3]}",
        ))

    language = ""
    lang_path = seq_dir / "language.txt"
    if lang_path.is_file():
        lines = _read_lines(lang_path)
        language = lines[0].strip() if lines else ""

    attributes = None
    attr_path = seq_dir / "attributes.txt"
    if attr_path.is_file():
        try:
            attributes = AttributeSet.from_lines(_read_lines(attr_path), source=str(attr_path))
        except DatasetError as exc:
            issues.append(Issue(name, "error", str(exc)))

    class_name = ""
    superclass = ""
    frame_size = (0, 0)
    fps = 30.0
    meta_path = seq_dir / "meta.json"
    if meta_path.is_file():
        try:
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            issues.append(Issue(name, "error", f"{meta_path}: {exc}"))
            meta = {}
        class_name = str(meta.get("class", ""))
        superclass = str(meta.get("superclass", ""))
        frame_size = (int(meta.get("width", 0)), int(meta.get("height", 0)))
        fps = float(meta.get("fps", 30.0))
        if superclass and superclass not in SUPERCLASSES:
            issues.append(Issue(name, "error", f"unknown superclass {superclass!r}"))
    else:
        issues.append(Issue(name, "error", "missing meta.json"))

    if frame_size[0] > 0 and frame_size[1] > 0:
        x2 = boxes[:, 0] + np.maximum(boxes[:, 2], 0.0)
        y2 = boxes[:, 1] + np.maximum(boxes[:, 3], 0.0)
        outside = present & (
            (boxes[:, 0] < 0) | (boxes[:, 1] < 0)
            | (x2 > frame_size[0]) | (y2 > frame_size[1])
        )
        for i in np.flatnonzero(outside):
            issues.append(Issue(
                name, "warning", f"frame {int(i)} box extends past frame bounds"))

    return SequenceAnnotation(
        name=name, boxes=boxes, absent=absent, language_prompt=language,
        class_name=class_name, superclass=superclass, attributes=attributes,
        frame_size=frame_size, fps=fps,
    )


def load_sequence(seq_dir: str | Path) -> SequenceAnnotation:
    """Load and fully validate one sequence directory.

    Raises ParseError/SchemaError on malformed content; a missing
    absent.txt defaults to all-present and the language prompt may be
    empty.
    """
    seq_dir = Path(seq_dir)
    if not seq_dir.is_dir():
        raise DatasetError(f"sequence directory not found: {seq_dir}")
    issues: list[Issue] = []
    seq = _collect_sequence(seq_dir, issues)
    errors = [i for i in issues if i.severity == "error"]
    if errors or seq is None:
        message = errors[0].message if errors else "unreadable sequence"
        raise SchemaError(f"{seq_dir.name}: {message}")
    return seq


def write_sequence(seq: SequenceAnnotation, seq_dir: str | Path) -> None:
    """Write a sequence directory in the canonical format."""
    seq_dir = Path(seq_dir)
    seq_dir.mkdir(parents=True, exist_ok=True)
    lines = [",".join(format_float(v) for v in row) for row in seq.boxes]
    (seq_dir / "groundtruth_rect.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (seq_dir / "absent.txt").write_text(
        "\n".join("1" if a else "0" for a in seq.absent) + "\n", encoding="utf-8")
    (seq_dir / "language.txt").write_text(seq.language_prompt + "\n", encoding="utf-8")
    if seq.attributes is not None:
        (seq_dir / "attributes.txt").write_text(
            "\n".join(seq.attributes.to_lines()) + "\n", encoding="utf-8")
    meta = {
        "class": seq.class_name,
        "superclass": seq.superclass,
        "width": seq.frame_size[0],
        "height": seq.frame_size[1],
        "fps": seq.fps,
    }
    (seq_dir / "meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_manifest(root: str | Path, split: str) -> list[str]:
    """Sequence names in `<root>/<split>.txt`, in file order."""
    path = Path(root) / f"{split}.txt"
    if not path.is_file():
        return []
    return [line.strip() for line in _read_lines(path) if line.strip()]


def load_split(root: str | Path, split: str | None = None) -> list[SequenceAnnotation]:
    """Load all sequences of a split (or of both manifests when None)."""
    root = Path(root)
    if split is not None:
        names = load_manifest(root, split)
        if not names:
            raise DatasetError(f"split manifest {split}.txt missing or empty under {root}")
    else:
        names = list(dict.fromkeys(load_manifest(root, "train") + load_manifest(root, "test")))
        if not names:
            raise DatasetError(f"no split manifests under {root}")
    return [load_sequence(root / name) for name in names]


def load_result_file(path: str | Path, tracker: str, sequence: str) -> TrackerResult:
    boxes, confidence = _parse_boxes_file(Path(path), allow_confidence=True)
    if not np.isfinite(boxes).all():
        raise ParseError(f"{path}: non-finite value in result boxes")
    if confidence is not None and not np.isfinite(confidence).all():
        raise ParseError(f"{path}: non-finite confidence value")
    return TrackerResult(tracker=tracker, sequence=sequence, boxes=boxes, confidence=confidence)


def write_result_file(result: TrackerResult, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for i, row in enumerate(result.boxes):
        cells = [format_float(v) for v in row]
        if result.confidence is not None:
            cells.append(format_float(result.confidence[i]))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_results(
    results_dir: str | Path,
    tracker: str,
    sequences: Sequence[str] | None = None,
) -> dict[str, TrackerResult]:
    """Load `<results_dir>/<tracker>/<sequence>.txt` result files.

    With `sequences` given, a missing file raises MissingResultError
    naming the sequence; otherwise every *.txt file present is loaded.
    """
    tracker_dir = Path(results_dir) / tracker
    if sequences is None:
        if not tracker_dir.is_dir():
            raise MissingResultError(f"no result directory for tracker {tracker!r}: {tracker_dir}")
        names = sorted(p.stem for p in tracker_dir.glob("*.txt"))
    else:
        names = list(sequences)
    out: dict[str, TrackerResult] = {}
    for name in names:
        path = tracker_dir / f"{name}.txt"
        if not path.is_file():
            raise MissingResultError(f"tracker {tracker!r} has no result for sequence {name!r}")
        out[name] = load_result_file(path, tracker, name)
    return out


def _size_category(frame_size: tuple[int, int]) -> str:
    s = math.sqrt(frame_size[0] * frame_size[1])
    if s < math.sqrt(640 * 480):
        return "small"
    if s >= math.sqrt(1280 * 720):
        return "large"
    return "medium"


def _length_bin(n_frames: int) -> str:
    if n_frames <= LENGTH_BIN_EDGES[0]:
        return "1-600"
    if n_frames <= LENGTH_BIN_EDGES[1]:
        return "601-1200"
    if n_frames <= LENGTH_BIN_EDGES[2]:
        return "1201-1800"
    return ">1800"


class StatsAccumulator:
    """Associative dataset-statistics accumulator; partial accumulators
    over disjoint sequence subsets can be merged."""

    def __init__(self) -> None:
        self.video_count = 0
        self.total_frames = 0
        self.superclass_histogram: dict[str, int] = {}
        self.per_class_video_counts: dict[str, int] = {}
        self.video_length_histogram = {"1-600": 0, "601-1200": 0, "1201-1800": 0, ">1800": 0}
        self.center_histogram = np.zeros((CENTER_HIST_BINS, CENTER_HIST_BINS), dtype=np.int64)
        self.size_histogram = {"small": 0, "medium": 0, "large": 0}

    def add(self, seq: SequenceAnnotation) -> None:
        self.video_count += 1
        self.total_frames += len(seq)
        if seq.superclass:
            self.superclass_histogram[seq.superclass] = (
                self.superclass_histogram.get(seq.superclass, 0) + 1)
        if seq.class_name:
            self.per_class_video_counts[seq.class_name] = (
                self.per_class_video_counts.get(seq.class_name, 0) + 1)
        self.video_length_histogram[_length_bin(len(seq))] += 1
        self.size_histogram[_size_category(seq.frame_size)] += 1

        w, h = seq.frame_size
        if w > 0 and h > 0:
            present = ~seq.absent
            boxes = seq.boxes[present]
            if boxes.shape[0]:
                u = np.clip((boxes[:, 0] + boxes[:, 2] / 2.0) / w, 0.0, 1.0)
                v = np.clip((boxes[:, 1] + boxes[:, 3] / 2.0) / h, 0.0, 1.0)
                iu = np.minimum((u * CENTER_HIST_BINS).astype(np.int64), CENTER_HIST_BINS - 1)
                iv = np.minimum((v * CENTER_HIST_BINS).astype(np.int64), CENTER_HIST_BINS - 1)
                np.add.at(self.center_histogram, (iv, iu), 1)

    def merge(self, other: "StatsAccumulator") -> None:
        self.video_count += other.video_count
        self.total_frames += other.total_frames
        for key, n in other.superclass_histogram.items():
            self.superclass_histogram[key] = self.superclass_histogram.get(key, 0) + n
        for key, n in other.per_class_video_counts.items():
            self.per_class_video_counts[key] = self.per_class_video_counts.get(key, 0) + n
        for key in self.video_length_histogram:
            self.video_length_histogram[key] += other.video_length_histogram[key]
        self.center_histogram += other.center_histogram
        for key in self.size_histogram:
            self.size_histogram[key] += other.size_histogram[key]

    def finalize(self, split_counts: dict[str, int]) -> DatasetStats:
        return DatasetStats(
            video_count=self.video_count,
            class_count=len(self.per_class_video_counts),
            superclass_histogram=dict(self.superclass_histogram),
            per_class_video_counts=dict(self.per_class_video_counts),
            video_length_histogram=dict(self.video_length_histogram),
            center_histogram=self.center_histogram.copy(),
            size_histogram=dict(self.size_histogram),
            split_counts=dict(split_counts),
            total_frames=self.total_frames,
        )


def dataset_stats(root: str | Path) -> DatasetStats:
    """Counters over all sequences named by the split manifests."""
    root = Path(root)
    train = load_manifest(root, "train")
    test = load_manifest(root, "test")
    names = list(dict.fromkeys(train + test))
    if not names:
        raise DatasetError(f"empty dataset: no sequences listed under {root}")
    acc = StatsAccumulator()
    for name in sorted(names):
        acc.add(load_sequence(root / name))
    split_counts = {"train": len(train), "test": len(test), "total": len(names)}
    return acc.finalize(split_counts)


def validate_dataset(root: str | Path) -> list[Issue]:
    """Collect data problems without raising.

    Issues cover NaN boxes, non-positive sizes on present frames, length
    mismatches, unknown superclasses, and (as warnings) boxes extending
    past the frame bounds.
    """
    root = Path(root)
    issues: list[Issue] = []
    train = load_manifest(root, "train")
    test = load_manifest(root, "test")
    names = list(dict.fromkeys(train + test))
    if not names:
        names = sorted(p.name for p in root.iterdir() if p.is_dir()) if root.is_dir() else []
    for name in sorted(names):
        seq_dir = root / name
        if not seq_dir.is_dir():
            issues.append(Issue(name, "error", "sequence directory missing"))
            continue
        _collect_sequence(seq_dir, issues)
    return issues
