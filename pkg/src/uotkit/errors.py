"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: input/validation problems exit 2,
internal invariant violations exit 3.
"""


class UotkitError(Exception):
    """Base class for all toolkit errors."""


class GeometryError(UotkitError, ValueError):
    """Invalid geometry: non-finite coordinates or negative sizes."""


class DegenerateBoxError(GeometryError):
    """An operation required a box with positive width and height."""


class DatasetError(UotkitError):
    """Problems reading or validating dataset / result files."""


class ParseError(DatasetError):
    """Malformed file content; message carries file and line number."""


class SchemaError(DatasetError):
    """Structurally inconsistent annotation (length mismatch, bad values)."""


class MissingResultError(DatasetError):
    """A sequence in the evaluation set has no tracker result file."""


class EvaluationError(UotkitError):
    """Metric computation is impossible (no evaluable frames, bad resample)."""


class MatpError(UotkitError):
    """Match-processing failures (empty candidates, corrupt map container)."""


class DistillError(UotkitError, ValueError):
    """Invalid loss-kernel input: bad hyperparameter, degenerate batch,
    shape mismatch, or an input too close to a non-smooth boundary."""


class InternalError(UotkitError):
    """An internal invariant was violated; indicates a toolkit bug."""
