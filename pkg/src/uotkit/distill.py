"""Distillation and tracking loss kernels with closed-form gradients.

Four distillation terms (contrastive token alignment, similarity-matrix
and feature mimicking, response-map focal mimicking) plus the GIoU /
focal / L1 tracking trio and their weighted total. Every kernel returns
its analytic gradients; `grad_check` verifies them against central
finite differences.

Everything runs in float64. Squared-difference kernels reduce by mean
per tensor (shape-independent magnitudes); pass reduction="sum" for raw
sums.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DistillError
from .geometry import BoundingBox

__all__ = [
    "LossBatch",
    "ckd_loss",
    "skd_loss",
    "fkd_loss",
    "rkd_loss",
    "tracking_losses",
    "total_loss",
    "grad_check",
]

CLAMP_EPS = 1e-6
FOCAL_PEAK_THRESHOLD = 0.99
FOCAL_A = 2.0
FOCAL_B = 4.0


def _as_float_array(name: str, value, min_dim: int = 1) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim < min_dim:
        raise DistillError(f"{name} must have at least {min_dim} dimensions")
    if not np.isfinite(arr).all():
        raise DistillError(f"{name} contains non-finite values")
    return arr


def _info_nce(anchors: np.ndarray, targets: np.ndarray, tau: float):
    """Softmax contrastive loss with diagonal positives.

    loss = -(1/K) sum_i log softmax_j(cos(anchor_i, target_j)/tau)[i]
    Returns (loss, d/d anchors, d/d targets).
    """
    k = anchors.shape[0]
    a_norm = np.linalg.norm(anchors, axis=1)
    b_norm = np.linalg.norm(targets, axis=1)
    if (a_norm == 0).any() or (b_norm == 0).any():
        raise DistillError("token rows must have non-zero norm for cosine similarity")
    an = anchors / a_norm[:, None]
    bn = targets / b_norm[:, None]
    sim = an @ bn.T
    z = sim / tau
    z_max = z.max(axis=1, keepdims=True)
    lse = z_max[:, 0] + np.log(np.exp(z - z_max).sum(axis=1))
    loss = float(np.mean(lse - np.diag(z)))

    probs = np.exp(z - lse[:, None])
    g = (probs - np.eye(k)) / (k * tau)   # d loss / d sim
    row_dots = (g * sim).sum(axis=1)
    col_dots = (g * sim).sum(axis=0)
    d_anchors = (g @ bn - row_dots[:, None] * an) / a_norm[:, None]
    d_targets = (g.T @ an - col_dots[:, None] * bn) / b_norm[:, None]
    return loss, d_anchors, d_targets


def ckd_loss(t_s: np.ndarray, t_t: np.ndarray, t_enh: np.ndarray, tau: float):
    """Contrastive token alignment, four symmetric terms.

    Student tokens are pulled toward the teacher's enhanced-view tokens
    (both directions) and toward the teacher's underwater-view tokens
    (both directions). Cosine similarity with temperature tau; rows of a
    batch are per-sample token vectors and in-batch rows act as
    negatives.

    Returns (loss, {"t_s": g, "t_t": g, "t_enh": g}).
    """
    if tau <= 0:
        raise DistillError(f"temperature must be positive, got {tau}")
    t_s = _as_float_array("t_s", t_s, min_dim=2)
    t_t = _as_float_array("t_t", t_t, min_dim=2)
    t_enh = _as_float_array("t_enh", t_enh, min_dim=2)
    if not (t_s.shape == t_t.shape == t_enh.shape):
        raise DistillError(
            f"token batches must share a shape, got {t_s.shape}, {t_t.shape}, {t_enh.shape}")
    if t_s.shape[0] < 2:
        raise DistillError("contrastive loss needs a batch of at least 2 rows")

    l_u2e, d_s1, d_e1 = _info_nce(t_s, t_enh, tau)
    l_e2u, d_e2, d_s2 = _info_nce(t_enh, t_s, tau)
    l_u2e_t, d_s3, d_t1 = _info_nce(t_s, t_t, tau)
    l_e2u_t, d_t2, d_s4 = _info_nce(t_t, t_s, tau)
    loss = l_u2e + l_e2u + l_u2e_t + l_e2u_t
    grads = {
        "t_s": d_s1 + d_s2 + d_s3 + d_s4,
        "t_t": d_t1 + d_t2,
        "t_enh": d_e1 + d_e2,
    }
    return loss, grads


def skd_loss(s_t: Sequence[np.ndarray], s_s: Sequence[np.ndarray], reduction: str = "mean"):
    """Per-layer squared difference of attention similarity matrices,
    summed over layers. Returns (loss, list of gradients w.r.t. each
    student matrix)."""
    if reduction not in ("mean", "sum"):
        raise DistillError(f"reduction must be mean or sum, got {reduction!r}")
    if len(s_t) != len(s_s):
        raise DistillError(f"layer count mismatch: {len(s_t)} teacher vs {len(s_s)} student")
    if not s_t:
        raise DistillError("need at least one layer")
    loss = 0.0
    grads = []
    for i, (teacher, student) in enumerate(zip(s_t, s_s)):
        teacher = _as_float_array(f"s_t[{i}]", teacher)
        student = _as_float_array(f"s_s[{i}]", student)
        if teacher.shape != student.shape:
            raise DistillError(
                f"layer {i}: shape mismatch {teacher.shape} vs {student.shape}")
        diff = student - teacher
        scale = diff.size if reduction == "mean" else 1
        loss += float(np.sum(diff * diff)) / scale
        grads.append(2.0 * diff / scale)
    return loss, grads


def fkd_loss(f_t: np.ndarray, f_s: np.ndarray, reduction: str = "mean"):
    """Squared difference of feature embeddings.

    Returns (loss, gradient w.r.t. the student features).
    """
    if reduction not in ("mean", "sum"):
        raise DistillError(f"reduction must be mean or sum, got {reduction!r}")
    f_t = _as_float_array("f_t", f_t)
    f_s = _as_float_array("f_s", f_s)
    if f_t.shape != f_s.shape:
        raise DistillError(f"feature shape mismatch {f_t.shape} vs {f_s.shape}")
    diff = f_s - f_t
    scale = diff.size if reduction == "mean" else 1
    return float(np.sum(diff * diff)) / scale, 2.0 * diff / scale


def _focal_terms(q: np.ndarray, p: np.ndarray):
    """Penalty-reduced focal loss per pixel and its d/dp.

    Peak pixels (q >= 0.99) get -(1-p)^a log p; the rest get
    -(1-q)^b p^a log(1-p) so confident background predictions near
    soft-target peaks are penalized gently.
    """
    peak = q >= FOCAL_PEAK_THRESHOLD
    one_m_p = 1.0 - p
    pos = -(one_m_p ** FOCAL_A) * np.log(p)
    neg_w = (1.0 - q) ** FOCAL_B
    neg = -neg_w * (p ** FOCAL_A) * np.log(one_m_p)
    loss_px = np.where(peak, pos, neg)
    d_pos = FOCAL_A * one_m_p * np.log(p) - (one_m_p ** FOCAL_A) / p
    d_neg = -neg_w * (FOCAL_A * p * np.log(one_m_p) - (p ** FOCAL_A) / one_m_p)
    d_px = np.where(peak, d_pos, d_neg)
    return loss_px, d_px


def _clamped(raw: np.ndarray):
    clamped = np.clip(raw, CLAMP_EPS, 1.0 - CLAMP_EPS)
    active = (raw > CLAMP_EPS) & (raw < 1.0 - CLAMP_EPS)
    return clamped, active


def rkd_loss(r_t: np.ndarray, r_s: np.ndarray, mu: float):
    """Response-map mimicking with the focal form above.

    Both maps are divided by the scale factor mu and clamped to
    [eps, 1-eps] before the loss; the teacher map acts as the soft
    target. Returns (loss, gradient w.r.t. the student map).
    """
    if mu <= 0:
        raise DistillError(f"scale factor must be positive, got {mu}")
    r_t = _as_float_array("r_t", r_t)
    r_s = _as_float_array("r_s", r_s)
    if r_t.shape != r_s.shape:
        raise DistillError(f"response shape mismatch {r_t.shape} vs {r_s.shape}")
    q, _ = _clamped(r_t / mu)
    p, p_active = _clamped(r_s / mu)
    loss_px, d_px = _focal_terms(q, p)
    size = loss_px.size
    grad = np.where(p_active, d_px, 0.0) / (mu * size)
    return float(np.sum(loss_px)) / size, grad


def _giou_with_grad(gt: BoundingBox, pred: np.ndarray):
    """GIoU of gt vs the pred box [x, y, w, h] and d giou / d pred.

    Piecewise-smooth; gradients use the active min/max branches, which is
    exact away from ties.
    """
    px, py, pw, ph = pred
    if pw <= 0 or ph <= 0:
        raise DistillError("pred box must have positive size for the GIoU loss")
    ax1, ay1 = gt.x, gt.y
    ax2, ay2 = gt.x + gt.w, gt.y + gt.h
    bx1, by1 = px, py
    bx2, by2 = px + pw, py + ph

    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    overlap = iw > 0 and ih > 0
    inter = iw * ih if overlap else 0.0
    area_a = gt.w * gt.h
    area_b = pw * ph
    union = area_a + area_b - inter
    hw = max(ax2, bx2) - min(ax1, bx1)
    hh = max(ay2, by2) - min(ay1, by1)
    hull = hw * hh
    value = inter / union - (hull - union) / hull

    # Branch indicators for the active min/max arguments.
    ix_right = 1.0 if bx2 < ax2 else 0.0    # d min(ax2,bx2) tracks bx2
    ix_left = 1.0 if bx1 > ax1 else 0.0     # d max(ax1,bx1) tracks bx1
    iy_bottom = 1.0 if by2 < ay2 else 0.0
    iy_top = 1.0 if by1 > ay1 else 0.0
    hx_right = 1.0 - ix_right
    hx_left = 1.0 - ix_left
    hy_bottom = 1.0 - iy_bottom
    hy_top = 1.0 - iy_top

    # d(iw)/d(px, pw): bx1 and bx2 both shift with px; only bx2 with pw.
    diw = {
        "px": ix_right - ix_left,
        "pw": ix_right,
    }
    dih = {
        "py": iy_bottom - iy_top,
        "ph": iy_bottom,
    }
    dhw = {"px": hx_right - hx_left, "pw": hx_right}
    dhh = {"py": hy_bottom - hy_top, "ph": hy_bottom}

    grad = np.zeros(4)
    names = ("px", "py", "pw", "ph")
    darea_b = {"px": 0.0, "py": 0.0, "pw": ph, "ph": pw}
    for idx, name in enumerate(names):
        d_iw = diw.get(name, 0.0)
        d_ih = dih.get(name, 0.0)
        d_inter = (d_iw * ih + iw * d_ih) if overlap else 0.0
        d_union = darea_b[name] - d_inter
        d_hull = dhw.get(name, 0.0) * hh + hw * dhh.get(name, 0.0)
        d_value = (d_inter * union - inter * d_union) / (union * union)
        d_value += (d_union * hull - union * d_hull) / (hull * hull)
        grad[idx] = d_value
    return value, grad


def tracking_losses(
    gt_box: BoundingBox,
    pred_box: np.ndarray,
    gt_heatmap: np.ndarray,
    pred_heatmap: np.ndarray,
    frame_size: tuple[float, float],
):
    """GIoU, focal, and L1 tracking losses with gradients.

    The focal term reuses the response-map form with the binary gt
    heatmap as target. L1 compares box coordinates normalized per axis
    by the frame size. Returns (losses dict, grads dict with "pred_box"
    gradients for giou/l1 and "pred_heatmap" for focal).
    """
    pred_box = _as_float_array("pred_box", pred_box)
    if pred_box.shape != (4,):
        raise DistillError(f"pred_box must be a 4-vector, got {pred_box.shape}")
    gt_heatmap = _as_float_array("gt_heatmap", gt_heatmap)
    pred_heatmap = _as_float_array("pred_heatmap", pred_heatmap)
    if gt_heatmap.shape != pred_heatmap.shape:
        raise DistillError(
            f"heatmap shape mismatch {gt_heatmap.shape} vs {pred_heatmap.shape}")
    frame_w, frame_h = frame_size
    if frame_w <= 0 or frame_h <= 0:
        raise DistillError("frame size must be positive")

    giou_value, d_giou = _giou_with_grad(gt_box, pred_box)
    giou_loss = 1.0 - giou_value

    q, _ = _clamped(gt_heatmap)
    p, p_active = _clamped(pred_heatmap)
    loss_px, d_px = _focal_terms(q, p)
    focal = float(np.sum(loss_px)) / loss_px.size
    d_heatmap = np.where(p_active, d_px, 0.0) / loss_px.size

    gt_vec = np.array([gt_box.x, gt_box.y, gt_box.w, gt_box.h])
    norms = np.array([frame_w, frame_h, frame_w, frame_h], dtype=np.float64)
    diff = (pred_box - gt_vec) / norms
    l1 = float(np.mean(np.abs(diff)))
    d_l1 = np.sign(diff) / (4.0 * norms)

    losses = {"giou": giou_loss, "focal": focal, "l1": l1}
    grads = {
        "giou_pred_box": -d_giou,
        "focal_pred_heatmap": d_heatmap,
        "l1_pred_box": d_l1,
    }
    return losses, grads


@dataclass
class LossBatch:
    """All tensors and hyperparameters of one distillation step."""

    t_s: np.ndarray
    t_t: np.ndarray
    t_enh: np.ndarray
    s_t: list[np.ndarray]
    s_s: list[np.ndarray]
    f_t: np.ndarray
    f_s: np.ndarray
    r_t: np.ndarray
    r_s: np.ndarray
    tau: float = 0.5
    mu: float = 2.0
    lambdas: tuple[float, float, float] = (1.0, 1.0, 14.0)


def total_loss(
    batch: LossBatch,
    giou_loss: float = 0.0,
    focal_loss: float = 0.0,
    l1_loss: float = 0.0,
) -> tuple[float, dict[str, float]]:
    """Distillation total plus balance-weighted tracking components.

    Returns (total, per-component dict). Default balance factors are
    (1, 1, 14) for (GIoU, focal, L1).
    """
    ckd, _ = ckd_loss(batch.t_s, batch.t_t, batch.t_enh, batch.tau)
    skd, _ = skd_loss(batch.s_t, batch.s_s)
    fkd, _ = fkd_loss(batch.f_t, batch.f_s)
    rkd, _ = rkd_loss(batch.r_t, batch.r_s, batch.mu)
    okd = ckd + skd + fkd + rkd
    lam1, lam2, lam3 = batch.lambdas
    total = okd + lam1 * giou_loss + lam2 * focal_loss + lam3 * l1_loss
    components = {
        "ckd": ckd, "skd": skd, "fkd": fkd, "rkd": rkd, "okd": okd,
        "giou": giou_loss, "focal": focal_loss, "l1": l1_loss, "total": total,
    }
    return total, components


def grad_check(
    name: str,
    fn: Callable[[dict[str, np.ndarray]], tuple[float, dict[str, np.ndarray]]],
    arrays: dict[str, np.ndarray],
    step: float = 1e-3,
    tolerance: float = 1e-4,
    max_coords: int = 64,
    rng: np.random.Generator | None = None,
    margin_check: Callable[[dict[str, np.ndarray]], bool] | None = None,
) -> dict:
    """Compare analytic gradients against central finite differences.

    `fn` maps the array dict to (loss, gradient dict); every gradient
    entry is checked on all coordinates, or a random subset of
    `max_coords` for large tensors. Relative error uses
    |g_a - g_fd| / max(|g_a|, |g_fd|, 1e-8).

    Coordinates where analytic and difference values both sit below
    `step` times the tensor's gradient scale are counted as agreeing at
    zero. The difference quotient carries O(step^2) truncation noise
    relative to the gradient scale, so entries that far down measure the
    noise, not the gradient; a sign or scale bug on them would also be
    invisible at this step size.

    Raises DistillError when `margin_check` rejects the inputs (too close
    to a non-smooth boundary); callers re-sample.
    """
    if margin_check is not None and not margin_check(arrays):
        raise DistillError(f"{name}: input within margin of a non-smooth boundary, re-sample")
    _, grads = fn(arrays)
    per_input: dict[str, float] = {}
    checked = 0
    for key, grad in grads.items():
        base = arrays[key]
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != np.asarray(base).shape:
            raise DistillError(f"{name}: gradient {key} shape {grad.shape} != input")
        flat_n = grad.size
        if flat_n <= max_coords:
            coords = np.arange(flat_n)
        else:
            gen = rng if rng is not None else np.random.default_rng(0)
            coords = gen.choice(flat_n, size=max_coords, replace=False)
        zero_gate = max(1e-8, step * float(np.abs(grad).max(initial=0.0)))
        worst = 0.0
        for c in coords:
            idx = np.unravel_index(int(c), np.asarray(base).shape)
            bumped = {k: np.array(v, dtype=np.float64) for k, v in arrays.items()}
            bumped[key][idx] += step
            up, _ = fn(bumped)
            bumped[key][idx] -= 2 * step
            down, _ = fn(bumped)
            fd = (float(up) - float(down)) / (2 * step)
            ga = float(grad[idx])
            checked += 1
            if abs(ga) < zero_gate and abs(fd) < zero_gate:
                continue
            rel = abs(ga - fd) / max(abs(ga), abs(fd), 1e-8)
            worst = max(worst, rel)
        per_input[key] = float(worst)
    max_rel = float(max(per_input.values())) if per_input else 0.0
    return {
        "kernel": name,
        "max_rel_error": max_rel,
        "per_input": per_input,
        "coords_checked": checked,
        "tolerance": tolerance,
        "passed": bool(max_rel < tolerance),
    }
