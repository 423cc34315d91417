"""Motion-aware target prediction: training-free Kalman-filter match
processing over per-frame response maps.

The filter tracks a 7-dim constant-velocity state [u, v, s, r, du, dv, ds]
(center, area, aspect ratio w/h, velocities; the aspect ratio carries no
velocity). Each frame, the filter's predicted box gates the tracker's raw
argmax: when their IoU drops below `conf`, the raw box is replaced by the
response-map candidate maximizing a blend of similarity and IoU with the
prediction, and the filter is updated with whichever box won.

State values are passed in and returned, never mutated, so distinct
sequences can be processed concurrently; a single sequence runs in frame
order.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable, Sequence

import numpy as np

from .errors import GeometryError, MatpError
from .geometry import BoundingBox, iou

__all__ = [
    "MatpParams",
    "KalmanState",
    "Candidate",
    "ResponseMap",
    "kf_init",
    "kf_predict",
    "kf_update",
    "extract_candidates",
    "nms",
    "location_scores",
    "matp_step",
    "matp_run",
    "matp_run_arrays",
    "write_response_container",
    "read_response_container",
]

# Constant-velocity transition: identity plus unit-step coupling of
# (u, v, s) to their velocities.
_F = np.eye(7)
_F[0, 4] = _F[1, 5] = _F[2, 6] = 1.0

# Observation picks (u, v, s, r) out of the state.
_H = np.zeros((4, 7))
_H[:4, :4] = np.eye(4)


@dataclass(frozen=True)
class MatpParams:
    """Tunables of the match-processing loop.

    Defaults: the gating threshold conf=0.6, response threshold 0.8 and
    NMS threshold 0.5 of the processing loop; grid n=16 (a 256 px search
    region at stride 16), top_n=10 candidates, equal similarity/IoU blend
    alpha=0.5, and a search region of 4x the box scale. Noise diagonals
    are in the state's native units; entries marked `*s` scale with the
    initial box area.
    """

    grid_n: int = 16
    top_n: int = 10
    alpha: float = 0.5
    conf: float = 0.6
    threshold: float = 0.8
    iou_threshold: float = 0.5
    search_factor: float = 4.0
    p0_diag: tuple[float, ...] = (10.0, 10.0, 10.0, 1e-2, 1e4, 1e4, 1e4)
    p0_area_scaled: tuple[int, ...] = (2, 6)   # indices multiplied by init area
    q_diag: tuple[float, ...] = (1.0, 1.0, 1.0, 1e-2, 1e-2, 1e-2, 1e-4)
    r_diag: tuple[float, ...] = (1.0, 1.0, 10.0, 1e-1)

    def __post_init__(self) -> None:
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if not (0.0 < self.conf <= 1.0):
            raise ValueError(f"conf must be in (0, 1], got {self.conf}")
        if not (0.0 <= self.threshold <= 1.0):
            raise ValueError(f"threshold must be in [0, 1], got {self.threshold}")
        if not (0.0 <= self.iou_threshold <= 1.0):
            raise ValueError(f"iou_threshold must be in [0, 1], got {self.iou_threshold}")
        if self.top_n < 1 or self.grid_n < 1:
            raise ValueError("grid_n and top_n must be >= 1")
        if self.search_factor <= 0:
            raise ValueError("search_factor must be positive")


DEFAULT_PARAMS = MatpParams()


@dataclass(frozen=True)
class KalmanState:
    mean: np.ndarray        # (7,)
    covariance: np.ndarray  # (7, 7) symmetric PSD

    def __post_init__(self) -> None:
        object.__setattr__(self, "mean", np.array(self.mean, dtype=np.float64))
        object.__setattr__(self, "covariance", np.array(self.covariance, dtype=np.float64))
        if self.mean.shape != (7,) or self.covariance.shape != (7, 7):
            raise MatpError("Kalman state must have a 7-vector mean and 7x7 covariance")


@dataclass(frozen=True)
class Candidate:
    box: BoundingBox
    similarity: float   # max-normalized response value in [0, 1]
    cell: int = 0       # row-major grid index, used for tie breaks

    def __post_init__(self) -> None:
        if not (0.0 <= self.similarity <= 1.0):
            raise MatpError(f"candidate similarity must be in [0, 1], got {self.similarity}")


@dataclass(frozen=True)
class ResponseMap:
    """Dense n x n score grid plus its placement in frame coordinates.

    `region` is the (x, y, w, h) rectangle the grid covers; `box_size`
    is the size prior for decoded candidate boxes (the raw tracker's
    current box size -- the grid localizes position, not scale).
    """

    scores: np.ndarray
    region: tuple[float, float, float, float]
    box_size: tuple[float, float]

    def __post_init__(self) -> None:
        scores = np.asarray(self.scores, dtype=np.float64)
        object.__setattr__(self, "scores", scores)
        if scores.ndim != 2 or scores.shape[0] != scores.shape[1] or scores.shape[0] < 1:
            raise MatpError(f"response map must be square n x n with n >= 1, got {scores.shape}")
        if not np.isfinite(scores).all() or (scores < 0).any():
            raise MatpError("response map scores must be finite and non-negative")

    @property
    def n(self) -> int:
        return self.scores.shape[0]

    def cell_box(self, row: int, col: int) -> BoundingBox:
        """Box of the given cell: the size prior centered at the cell center."""
        x0, y0, rw, rh = self.region
        cw = rw / self.n
        ch = rh / self.n
        cx = x0 + (col + 0.5) * cw
        cy = y0 + (row + 0.5) * ch
        w, h = self.box_size
        return BoundingBox(cx - w / 2.0, cy - h / 2.0, w, h)


def _box_to_obs(box: BoundingBox) -> np.ndarray:
    return np.array([box.cx, box.cy, box.w * box.h, box.w / box.h])


def _state_box(mean: np.ndarray) -> BoundingBox:
    u, v, s, r = mean[0], mean[1], mean[2], mean[3]
    w = math.sqrt(max(s * r, 0.0))
    h = math.sqrt(max(s / r, 0.0)) if r > 0 else 0.0
    return BoundingBox(u - w / 2.0, v - h / 2.0, w, h)


def kf_init(box: BoundingBox, params: MatpParams = DEFAULT_PARAMS) -> KalmanState:
    """Filter state from the first-frame box, zero velocities."""
    if box.is_degenerate:
        raise GeometryError("cannot initialize the filter from a degenerate box")
    mean = np.zeros(7)
    mean[:4] = _box_to_obs(box)
    p = np.array(params.p0_diag, dtype=np.float64)
    for i in params.p0_area_scaled:
        p[i] *= mean[2]
    return KalmanState(mean=mean, covariance=np.diag(p))


def kf_predict(
    state: KalmanState, params: MatpParams = DEFAULT_PARAMS
) -> tuple[KalmanState, BoundingBox]:
    """Constant-velocity time step; returns the new state and its box.

    A predicted non-positive area is clamped back to the previous value
    with its velocity zeroed.
    """
    mean = _F @ state.mean
    if mean[2] <= 0.0:
        mean[2] = state.mean[2]
        mean[6] = 0.0
    cov = _F @ state.covariance @ _F.T + np.diag(params.q_diag)
    new_state = KalmanState(mean=mean, covariance=cov)
    return new_state, _state_box(mean)


def kf_update(
    state: KalmanState, box: BoundingBox, params: MatpParams = DEFAULT_PARAMS
) -> KalmanState:
    """Standard Kalman correction with observation [cx, cy, area, aspect]."""
    if box.is_degenerate:
        raise GeometryError("cannot update the filter with a degenerate box")
    z = _box_to_obs(box)
    residual = z - _H @ state.mean
    s_mat = _H @ state.covariance @ _H.T + np.diag(params.r_diag)
    gain = np.linalg.solve(s_mat.T, (state.covariance @ _H.T).T).T
    mean = state.mean + gain @ residual
    cov = (np.eye(7) - gain @ _H) @ state.covariance
    cov = (cov + cov.T) / 2.0   # keep symmetry exact under roundoff
    return KalmanState(mean=mean, covariance=cov)


def _local_maxima(scores: np.ndarray) -> np.ndarray:
    """Boolean mask of cells not exceeded by any 8-neighbor."""
    n = scores.shape[0]
    padded = np.full((n + 2, n + 2), -np.inf)
    padded[1:-1, 1:-1] = scores
    center = padded[1:-1, 1:-1]
    mask = np.ones_like(scores, dtype=bool)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            mask &= center >= padded[1 + dr: 1 + dr + n, 1 + dc: 1 + dc + n]
    return mask


def extract_candidates(
    response: ResponseMap, threshold: float, top_n: int = DEFAULT_PARAMS.top_n
) -> list[Candidate]:
    """Local maxima with max-normalized score >= threshold, best first.

    Scores are normalized by the grid maximum, the list is ranked by
    score (grid order breaks ties) and truncated to `top_n`; the global
    maximum therefore always survives. An all-zero grid yields a single
    zero-similarity candidate at the grid center.
    """
    scores = response.scores
    peak = float(scores.max())
    n = response.n
    if peak <= 0.0:
        mid = n // 2
        return [Candidate(box=response.cell_box(mid, mid), similarity=0.0, cell=mid * n + mid)]
    normalized = scores / peak
    mask = _local_maxima(normalized) & (normalized >= threshold)
    rows, cols = np.nonzero(mask)
    order = sorted(range(rows.size), key=lambda k: (-normalized[rows[k], cols[k]],
                                                    rows[k] * n + cols[k]))
    picked = order[:top_n]
    return [
        Candidate(
            box=response.cell_box(int(rows[k]), int(cols[k])),
            similarity=float(normalized[rows[k], cols[k]]),
            cell=int(rows[k]) * n + int(cols[k]),
        )
        for k in picked
    ]


def nms(candidates: Sequence[Candidate], iou_threshold: float) -> list[Candidate]:
    """Greedy suppression: keep the best-scoring candidate, drop anything
    overlapping a kept box by more than `iou_threshold`, repeat."""
    ranked = sorted(candidates, key=lambda c: (-c.similarity, c.cell))
    kept: list[Candidate] = []
    for cand in ranked:
        if all(iou(cand.box, k.box) <= iou_threshold for k in kept):
            kept.append(cand)
    return kept


def location_scores(
    b_e: BoundingBox, candidates: Sequence[Candidate], alpha: float = DEFAULT_PARAMS.alpha
) -> list[float]:
    """Blend of response similarity and IoU against the predicted box."""
    if not candidates:
        raise MatpError("no candidates to score")
    return [alpha * c.similarity + (1.0 - alpha) * iou(b_e, c.box) for c in candidates]


def matp_step(
    state: KalmanState,
    response: ResponseMap,
    max_response_box: BoundingBox,
    params: MatpParams = DEFAULT_PARAMS,
) -> tuple[BoundingBox, KalmanState, bool]:
    """One frame of match processing.

    Predicts the motion box b_E, passes the raw argmax box through when
    it agrees with b_E (IoU >= conf), otherwise re-matches against the
    NMS-pruned candidate set by location score (ties prefer higher
    similarity, then lower grid index). The filter is updated with the
    winning box. Returns (output box, new state, whether match mode fired).
    """
    state, b_e = kf_predict(state, params)
    match_mode = iou(max_response_box, b_e) < params.conf
    if match_mode:
        candidates = nms(
            extract_candidates(response, params.threshold, params.top_n),
            params.iou_threshold,
        )
        scores = location_scores(b_e, candidates, params.alpha)
        best = max(
            range(len(candidates)),
            key=lambda i: (scores[i], candidates[i].similarity, -candidates[i].cell),
        )
        b_m = candidates[best].box
    else:
        b_m = max_response_box
    state = kf_update(state, b_m, params)
    return b_m, state, match_mode


def matp_run(
    initial_box: BoundingBox,
    frames: Iterable[tuple[ResponseMap, BoundingBox]],
    params: MatpParams = DEFAULT_PARAMS,
) -> tuple[list[BoundingBox], int]:
    """Run the loop over a sequence; frames cover everything after the
    first. Returns the trajectory (initial box first) and the number of
    frames where match mode fired.

    A zero-area raw box means the tracker declared the target absent:
    the declaration passes through untouched and the filter coasts on
    its prediction (no update), instead of fabricating a detection from
    a size-less candidate prior.
    """
    state = kf_init(initial_box, params)
    trajectory = [initial_box]
    match_frames = 0
    for index, (response, raw_box) in enumerate(frames):
        if raw_box.is_degenerate:
            state, _ = kf_predict(state, params)
            trajectory.append(raw_box)
            continue
        try:
            box, state, matched = matp_step(state, response, raw_box, params)
        except (MatpError, GeometryError) as exc:
            raise MatpError(f"frame {index + 1}: {exc}") from exc
        trajectory.append(box)
        match_frames += int(matched)
    return trajectory, match_frames


def derive_region(
    prev_box: BoundingBox,
    params: MatpParams = DEFAULT_PARAMS,
    fallback: tuple[float, float, float, float] | None = None,
) -> tuple[float, float, float, float]:
    """Square search region centered on the previous box.

    Side length is `search_factor * sqrt(area)`; a degenerate previous
    box keeps the prior region (or a unit region when there is none).
    """
    area = prev_box.w * prev_box.h
    if area <= 0.0:
        if fallback is not None:
            return fallback
        return (prev_box.cx - 0.5, prev_box.cy - 0.5, 1.0, 1.0)
    side = params.search_factor * math.sqrt(area)
    return (prev_box.cx - side / 2.0, prev_box.cy - side / 2.0, side, side)


def matp_run_arrays(
    initial_box: BoundingBox,
    maps: np.ndarray,
    raw_boxes: np.ndarray,
    params: MatpParams = DEFAULT_PARAMS,
) -> tuple[list[BoundingBox], int]:
    """Convenience path over raw grids: maps is (T, n, n) for frames 2..T+1
    and raw_boxes is (T, 4). The search region of each frame is derived
    from the previous raw box (the tracker's own crop chain); the initial
    box anchors the first region."""
    maps = np.asarray(maps, dtype=np.float64)
    raw_boxes = np.asarray(raw_boxes, dtype=np.float64)
    if maps.ndim != 3 or maps.shape[1] != maps.shape[2]:
        raise MatpError(f"maps must be (T, n, n), got {maps.shape}")
    if raw_boxes.shape != (maps.shape[0], 4):
        raise MatpError(
            f"raw_boxes must be ({maps.shape[0]}, 4) to match maps, got {raw_boxes.shape}")

    def frames():
        prev = initial_box
        region = None
        for t in range(maps.shape[0]):
            region = derive_region(prev, params, fallback=region)
            x, y, w, h = raw_boxes[t]
            raw = BoundingBox(x, y, max(w, 0.0), max(h, 0.0))
            try:
                response = ResponseMap(scores=maps[t], region=region, box_size=(raw.w, raw.h))
            except MatpError as exc:
                raise MatpError(f"frame {t + 1}: {exc}") from exc
            yield response, raw
            prev = raw

    return matp_run(initial_box, frames(), params)


_HEADER = struct.Struct("<II")


def write_response_container(maps: np.ndarray, path: str | Path | BinaryIO) -> None:
    """Binary map container: header {frame-count, n} as little-endian
    uint32, then frame-major row-major float32 grids."""
    maps = np.ascontiguousarray(maps, dtype=np.float32)
    if maps.ndim != 3 or maps.shape[1] != maps.shape[2]:
        raise MatpError(f"maps must be (T, n, n), got {maps.shape}")
    payload = _HEADER.pack(maps.shape[0], maps.shape[1]) + maps.tobytes(order="C")
    if hasattr(path, "write"):
        path.write(payload)
    else:
        Path(path).write_bytes(payload)


def read_response_container(path: str | Path | BinaryIO) -> np.ndarray:
    """Read a map container back as a (T, n, n) float32 array."""
    data = path.read() if hasattr(path, "read") else Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise MatpError(f"response container too short for header: {len(data)} bytes")
    count, n = _HEADER.unpack_from(data)
    expected = _HEADER.size + count * n * n * 4
    if len(data) != expected:
        have = (len(data) - _HEADER.size) // (n * n * 4) if n else 0
        raise MatpError(
            f"corrupt response container: expected {count} frames of {n}x{n}, "
            f"payload holds {have} complete frames (failing at frame {have})")
    grids = np.frombuffer(data, dtype="<f4", offset=_HEADER.size)
    return grids.reshape(count, n, n).copy()
