"""The 23 per-sequence tracking attributes.

Six attributes follow mechanical rules over the annotation (LR, FM, SV,
ARV, SIZ, LEN) and are computed here; the remaining 17 reflect human
judgement (camera motion, camouflage, watercolor, ...) and are only ever
read from a sequence's `attributes.txt`, one `CODE=value` line each.
Binary attributes use 0/1 (also accepts true/false); categorical values
come from closed vocabularies.
"""

from __future__ import annotations

import math
from typing import TYPE_CHECKING, Iterable, Union

import numpy as np

from .errors import SchemaError

if TYPE_CHECKING:
    from .dataset import SequenceAnnotation

__all__ = [
    "AttributeSet",
    "auto_attributes",
    "merge_attributes",
    "full_attributes",
    "BINARY_CODES",
    "CATEGORICAL_VOCABS",
    "AUTO_CODES",
    "ALL_CODES",
]

BINARY_CODES = (
    "LR", "FM", "SV", "ARV", "CM", "VC", "PO", "FO", "OV", "ROT",
    "DEF", "SD", "IV", "MB", "PTI", "CAM",
)

CATEGORICAL_VOCABS: dict[str, tuple[str, ...]] = {
    "NAO": ("natural", "artificial"),
    "UV": ("low", "medium", "high"),
    "WCV": (
        "colorless", "ash", "green", "light blue", "gray", "light green",
        "deep blue", "dark", "gray-blue", "partly blue", "light yellow",
        "light brown", "blue", "cyan", "light purple", "blue-black",
    ),
    "US": (
        "sea", "river", "lake", "pool", "water tank", "fish tank",
        "basin", "bowl", "cup", "aquarium", "pond", "puddle",
    ),
    "SP": ("underwater", "outside-water", "fish-eye"),
    "SIZ": ("small", "medium", "large"),
    "LEN": ("short", "medium", "long"),
}

ALL_CODES = BINARY_CODES + tuple(CATEGORICAL_VOCABS)

# Rule-based subset, recomputable from the annotation alone.
AUTO_CODES = ("LR", "FM", "SV", "ARV", "SIZ", "LEN")

Value = Union[bool, str]

_TRUE = {"1", "true", "yes"}
_FALSE = {"0", "false", "no"}


class AttributeSet:
    """Possibly partial assignment of the 23 attribute codes."""

    __slots__ = ("_values",)

    def __init__(self, values: dict[str, Value] | None = None):
        self._values: dict[str, Value] = {}
        if values:
            for code, value in values.items():
                self.set(code, value)

    def set(self, code: str, value: Value) -> None:
        if code in BINARY_CODES:
            if not isinstance(value, bool):
                raise SchemaError(f"attribute {code} expects a boolean, got {value!r}")
        elif code in CATEGORICAL_VOCABS:
            if value not in CATEGORICAL_VOCABS[code]:
                raise SchemaError(
                    f"attribute {code} value {value!r} not in vocabulary "
                    f"{CATEGORICAL_VOCABS[code]}"
                )
        else:
            raise SchemaError(f"unknown attribute code {code!r}")
        self._values[code] = value

    def get(self, code: str) -> Value | None:
        return self._values.get(code)

    def __contains__(self, code: str) -> bool:
        return code in self._values

    def __eq__(self, other: object) -> bool:
        return isinstance(other, AttributeSet) and self._values == other._values

    def __repr__(self) -> str:
        inner = ", ".join(f"{c}={v}" for c, v in sorted(self._values.items()))
        return f"AttributeSet({inner})"

    def as_dict(self) -> dict[str, Value]:
        return dict(self._values)

    def codes(self) -> tuple[str, ...]:
        return tuple(sorted(self._values))

    @staticmethod
    def parse_value(code: str, text: str) -> Value:
        text = text.strip()
        if code in BINARY_CODES:
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise SchemaError(f"attribute {code} expects 0/1, got {text!r}")
        return text

    @classmethod
    def from_lines(cls, lines: Iterable[str], source: str = "attributes.txt") -> "AttributeSet":
        """Parse `CODE=value` lines; blank lines and #-comments are skipped."""
        out = cls()
        for lineno, raw in enumerate(lines, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise SchemaError(f"{source}:{lineno}: expected CODE=value, got {line!r}")
            code, _, text = line.partition("=")
            code = code.strip()
            out.set(code, cls.parse_value(code, text))
        return out

    def to_lines(self) -> list[str]:
        lines = []
        for code in ALL_CODES:
            if code in self._values:
                value = self._values[code]
                rendered = ("1" if value else "0") if isinstance(value, bool) else value
                lines.append(f"{code}={rendered}")
        return lines


def _present_boxes(seq: "SequenceAnnotation"):
    present = ~np.asarray(seq.absent, dtype=bool)
    if not present.any():
        raise SchemaError(f"sequence {seq.name!r} has no present frames")
    return np.asarray(seq.boxes, dtype=float)[present]


def auto_attributes(seq: "SequenceAnnotation", reference: str = "first") -> AttributeSet:
    """Compute the rule-based attributes {LR, FM, SV, ARV, SIZ, LEN}.

    All box rules scan present frames only. `reference` controls the
    baseline for SV/ARV ratios: "first" compares each present frame
    against the first present frame, "previous" against the preceding
    present frame.

    Raises SchemaError when every frame is absent.
    """
    if reference not in ("first", "previous"):
        raise ValueError(f"reference must be 'first' or 'previous', got {reference!r}")

    boxes = _present_boxes(seq)
    w = boxes[:, 2]
    h = boxes[:, 3]
    out = AttributeSet()

    # LR: any present frame covering fewer than 400 pixels.
    out.set("LR", bool(np.any(w * h < 400.0)))

    # FM: center moves more than 20 px between adjacent frames, both present.
    absent = np.asarray(seq.absent, dtype=bool)
    all_boxes = np.asarray(seq.boxes, dtype=float)
    cx = all_boxes[:, 0] + all_boxes[:, 2] / 2.0
    cy = all_boxes[:, 1] + all_boxes[:, 3] / 2.0
    fm = False
    for i in range(len(absent) - 1):
        if absent[i] or absent[i + 1]:
            continue
        if math.hypot(cx[i + 1] - cx[i], cy[i + 1] - cy[i]) > 20.0:
            fm = True
            break
    out.set("FM", fm)

    # SV / ARV: size and aspect ratios relative to the reference frame.
    if reference == "first":
        base_w = np.full_like(w, w[0])
        base_h = np.full_like(h, h[0])
        cur_w, cur_h = w, h
    else:
        base_w, base_h = w[:-1], h[:-1]
        cur_w, cur_h = w[1:], h[1:]
    size_ratio = np.sqrt((cur_w * cur_h) / (base_w * base_h))
    ar_ratio = (cur_w / cur_h) / (base_w / base_h)
    out.set("SV", bool(np.any((size_ratio < 0.5) | (size_ratio > 2.0))))
    out.set("ARV", bool(np.any((ar_ratio < 0.5) | (ar_ratio > 2.0))))

    # SIZ: geometric-mean side of the video frame.
    frame_w, frame_h = seq.frame_size
    s = math.sqrt(frame_w * frame_h)
    if s < math.sqrt(640 * 480):
        out.set("SIZ", "small")
    elif s >= math.sqrt(1280 * 720):
        out.set("SIZ", "large")
    else:
        out.set("SIZ", "medium")

    # LEN: total frame count, absent frames included.
    n = len(seq.boxes)
    if n <= 600:
        out.set("LEN", "short")
    elif n > 1800:
        out.set("LEN", "long")
    else:
        out.set("LEN", "medium")

    return out


def merge_attributes(auto: AttributeSet, manual: AttributeSet) -> tuple[AttributeSet, list[str]]:
    """Overlay file-provided attributes on the computed set.

    The file value wins on conflicts; a conflict on an auto-computable
    code is reported as a warning string rather than an error.
    """
    merged = AttributeSet(auto.as_dict())
    warnings = []
    for code, value in manual.as_dict().items():
        if code in AUTO_CODES and code in auto and auto.get(code) != value:
            warnings.append(
                f"attribute {code}: file value {value!r} overrides computed {auto.get(code)!r}"
            )
        merged.set(code, value)
    return merged, warnings


def full_attributes(seq: "SequenceAnnotation", reference: str = "first") -> tuple[AttributeSet, list[str]]:
    """Computed attributes merged with the sequence's attributes.txt set."""
    auto = auto_attributes(seq, reference=reference)
    manual = seq.attributes if seq.attributes is not None else AttributeSet()
    return merge_attributes(auto, manual)
