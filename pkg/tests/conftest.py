"""Shared synthetic-data builders."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from uotkit.attributes import AttributeSet
from uotkit.dataset import SequenceAnnotation, TrackerResult, write_sequence


def make_sequence(
    rng: np.random.Generator,
    name: str = "seq",
    n_frames: int = 50,
    frame_size: tuple[int, int] = (640, 480),
    absent_rate: float = 0.0,
    superclass: str = "fish",
    class_name: str = "clownfish",
    attributes: AttributeSet | None = None,
) -> SequenceAnnotation:
    """Random annotation with positive sizes on present frames."""
    w = rng.uniform(8, 80, size=n_frames)
    h = rng.uniform(8, 80, size=n_frames)
    x = rng.uniform(0, frame_size[0] - 80, size=n_frames)
    y = rng.uniform(0, frame_size[1] - 80, size=n_frames)
    boxes = np.stack([x, y, w, h], axis=1)
    absent = rng.random(n_frames) < absent_rate
    if absent.all():
        absent[0] = False
    return SequenceAnnotation(
        name=name, boxes=boxes, absent=absent, language_prompt="a fish swimming",
        class_name=class_name, superclass=superclass, attributes=attributes,
        frame_size=frame_size, fps=30.0,
    )


def make_result(
    rng: np.random.Generator,
    gt: SequenceAnnotation,
    tracker: str = "toy",
    noise: float = 6.0,
    absent_zero_rate: float = 0.5,
) -> TrackerResult:
    """Noisy copy of the ground truth; some absent frames get zero boxes."""
    boxes = gt.boxes.copy()
    boxes[:, :2] += rng.normal(0, noise, size=(len(gt), 2))
    boxes[:, 2:] *= rng.uniform(0.8, 1.25, size=(len(gt), 2))
    for i in np.flatnonzero(gt.absent):
        if rng.random() < absent_zero_rate:
            boxes[i] = [boxes[i, 0], boxes[i, 1], 0.0, 0.0]
    return TrackerResult(tracker=tracker, sequence=gt.name, boxes=boxes)


def write_dataset(root: Path, sequences, test_names=None, train_names=None) -> None:
    """Lay a dataset tree out on disk with split manifests."""
    root.mkdir(parents=True, exist_ok=True)
    names = [seq.name for seq in sequences]
    for seq in sequences:
        write_sequence(seq, root / seq.name)
    test_names = names if test_names is None else test_names
    train_names = [] if train_names is None else train_names
    (root / "test.txt").write_text("".join(n + "\n" for n in test_names), encoding="utf-8")
    (root / "train.txt").write_text("".join(n + "\n" for n in train_names), encoding="utf-8")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
