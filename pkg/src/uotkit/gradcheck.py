"""Ready-made gradient-check suite over all loss kernels.

Each entry samples random valid inputs away from the kernel's
non-smooth boundaries (clamps, min/max ties, absolute values), then runs
the central-difference comparison. The `distill-check` CLI command and
the verification tests both drive `run_suite`.
"""

from __future__ import annotations

import numpy as np

from . import rng as rng_mod
from .distill import (
    ckd_loss,
    fkd_loss,
    grad_check,
    rkd_loss,
    skd_loss,
    tracking_losses,
)
from .errors import DistillError
from .geometry import BoundingBox

__all__ = ["KERNELS", "run_suite", "sample_inputs"]

# Margin kept from clamp/kink boundaries, in input units; 2x the default
# finite-difference step with slack.
DEFAULT_MARGIN = 4e-3


def _sample_ckd(gen: np.random.Generator, shapes: dict) -> dict:
    k = shapes.get("k", 8)
    d = shapes.get("d", 24)
    return {
        "t_s": gen.normal(size=(k, d)),
        "t_t": gen.normal(size=(k, d)),
        "t_enh": gen.normal(size=(k, d)),
    }


def _sample_skd(gen: np.random.Generator, shapes: dict) -> dict:
    layers = shapes.get("layers", 2)
    m = shapes.get("m", 6)
    out = {}
    for i in range(layers):
        out[f"s_t_{i}"] = gen.normal(size=(m, m))
        out[f"s_s_{i}"] = gen.normal(size=(m, m))
    return out


def _sample_fkd(gen: np.random.Generator, shapes: dict) -> dict:
    m = shapes.get("m", 8)
    return {"f_t": gen.normal(size=(m, m)), "f_s": gen.normal(size=(m, m))}


def _sample_rkd(gen: np.random.Generator, shapes: dict, mu: float = 2.0) -> dict:
    m = shapes.get("m", 12)
    # Student responses away from the [eps, 1-eps] clamp; a few teacher
    # peaks exercise the positive branch.
    r_s = mu * gen.uniform(0.05, 0.9, size=(m, m))
    r_t = mu * gen.uniform(0.0, 0.8, size=(m, m))
    peaks = gen.integers(0, m, size=(3, 2))
    for row, col in peaks:
        r_t[row, col] = mu * (1.0 - 2e-6)
    return {"r_t": r_t, "r_s": r_s}


def _sample_tracking(gen: np.random.Generator, shapes: dict) -> dict:
    m = shapes.get("m", 8)
    gt = np.array([
        gen.uniform(10, 60), gen.uniform(10, 60),
        gen.uniform(10, 40), gen.uniform(10, 40),
    ])
    # Overlapping but distinct pred box.
    pred = gt + gen.uniform(1.0, 6.0, size=4) * gen.choice([-1.0, 1.0], size=4)
    pred[2:] = np.maximum(pred[2:], 5.0)
    hm_gt = np.zeros((m, m))
    hm_gt[tuple(gen.integers(0, m, size=2))] = 1.0
    # Keep predictions off both log branches' steep ends: the 1/p^3 and
    # 1/(1-p)^3 third derivatives would eat the finite-difference digits.
    hm_pred = gen.uniform(0.1, 0.9, size=(m, m))
    return {"gt_box": gt, "pred_box": pred, "gt_heatmap": hm_gt, "pred_heatmap": hm_pred}


def _margin_ckd(arrays: dict) -> bool:
    return all(
        np.linalg.norm(arrays[k], axis=1).min() > 10 * DEFAULT_MARGIN
        for k in ("t_s", "t_t", "t_enh")
    )


def _margin_rkd(arrays: dict, mu: float = 2.0) -> bool:
    p = arrays["r_s"] / mu
    return bool((p > DEFAULT_MARGIN).all() and (p < 1.0 - DEFAULT_MARGIN).all())


def _margin_tracking(arrays: dict) -> bool:
    gt = arrays["gt_box"]
    pred = arrays["pred_box"]
    ax1, ay1, aw, ah = gt
    px, py, pw, ph = pred
    edges = [
        abs(px - ax1), abs(py - ay1),
        abs((px + pw) - (ax1 + aw)), abs((py + ph) - (ay1 + ah)),
    ]
    iw = min(ax1 + aw, px + pw) - max(ax1, px)
    ih = min(ay1 + ah, py + ph) - max(ay1, py)
    coords_ok = min(edges) > DEFAULT_MARGIN          # min/max ties and L1 kinks
    overlap_ok = abs(iw) > DEFAULT_MARGIN and abs(ih) > DEFAULT_MARGIN
    sizes_ok = pw > DEFAULT_MARGIN and ph > DEFAULT_MARGIN
    p = arrays["pred_heatmap"]
    heat_ok = bool((p > DEFAULT_MARGIN).all() and (p < 1.0 - DEFAULT_MARGIN).all())
    return coords_ok and overlap_ok and sizes_ok and heat_ok


def _fn_ckd(tau: float):
    def fn(arrays):
        return ckd_loss(arrays["t_s"], arrays["t_t"], arrays["t_enh"], tau)
    return fn


def _fn_skd(layers: int):
    def fn(arrays):
        s_t = [arrays[f"s_t_{i}"] for i in range(layers)]
        s_s = [arrays[f"s_s_{i}"] for i in range(layers)]
        loss, grads = skd_loss(s_t, s_s)
        return loss, {f"s_s_{i}": grads[i] for i in range(layers)}
    return fn


def _fn_fkd(arrays):
    loss, grad = fkd_loss(arrays["f_t"], arrays["f_s"])
    return loss, {"f_s": grad}


def _fn_rkd(mu: float):
    def fn(arrays):
        loss, grad = rkd_loss(arrays["r_t"], arrays["r_s"], mu)
        return loss, {"r_s": grad}
    return fn


def _fn_tracking(which: str, frame_size=(100.0, 100.0)):
    def fn(arrays):
        gt = BoundingBox(*arrays["gt_box"])
        losses, grads = tracking_losses(
            gt, arrays["pred_box"], arrays["gt_heatmap"], arrays["pred_heatmap"], frame_size)
        if which == "giou":
            return losses["giou"], {"pred_box": grads["giou_pred_box"]}
        if which == "l1":
            return losses["l1"], {"pred_box": grads["l1_pred_box"]}
        return losses["focal"], {"pred_heatmap": grads["focal_pred_heatmap"]}
    return fn


KERNELS = ("ckd", "skd", "fkd", "rkd", "tracking_giou", "tracking_focal", "tracking_l1")


def _kernel_entry(name: str, shapes: dict, tau: float, mu: float):
    if name == "ckd":
        return _sample_ckd, _margin_ckd, _fn_ckd(tau)
    if name == "skd":
        layers = shapes.get("layers", 2)
        return _sample_skd, None, _fn_skd(layers)
    if name == "fkd":
        return _sample_fkd, None, _fn_fkd
    if name == "rkd":
        return (
            lambda gen, sh: _sample_rkd(gen, sh, mu),
            lambda arrays: _margin_rkd(arrays, mu),
            _fn_rkd(mu),
        )
    if name in ("tracking_giou", "tracking_focal", "tracking_l1"):
        return _sample_tracking, _margin_tracking, _fn_tracking(name.split("_", 1)[1])
    raise DistillError(f"unknown kernel {name!r}")


def sample_inputs(
    name: str,
    gen: np.random.Generator,
    shapes: dict | None = None,
    tau: float = 0.5,
    mu: float = 2.0,
    max_attempts: int = 100,
) -> dict:
    """Random valid inputs for a kernel, re-sampled until clear of
    non-smooth boundaries."""
    shapes = shapes or {}
    sampler, margin, _ = _kernel_entry(name, shapes, tau, mu)
    for _ in range(max_attempts):
        arrays = sampler(gen, shapes)
        if margin is None or margin(arrays):
            return arrays
    raise DistillError(f"{name}: could not sample inputs clear of boundaries")


def run_suite(
    seed: int = 0,
    trials: int = 10,
    step: float = 1e-3,
    tolerance: float = 1e-4,
    fkd_tolerance: float = 1e-6,
    shapes: dict | None = None,
    kernels: tuple[str, ...] = KERNELS,
    max_coords: int = 64,
) -> dict:
    """Gradient-check every kernel on `trials` random inputs each.

    Returns a report dict with one entry per kernel carrying the worst
    relative error observed, plus an overall pass flag.
    """
    shapes = shapes or {}
    report: dict = {"seed": seed, "trials": trials, "step": step, "kernels": {}}
    all_passed = True
    for name in kernels:
        tol = fkd_tolerance if name == "fkd" else tolerance
        sampler, margin, fn = _kernel_entry(name, shapes, shapes.get("tau", 0.5),
                                            shapes.get("mu", 2.0))
        worst = 0.0
        checked = 0
        for trial in range(trials):
            gen = rng_mod.stream(seed, label=f"gradcheck/{name}", tag=trial)
            arrays = sample_inputs(name, gen, shapes)
            result = grad_check(
                name, fn, arrays, step=step, tolerance=tol,
                max_coords=max_coords, rng=gen, margin_check=margin,
            )
            worst = max(worst, result["max_rel_error"])
            checked += result["coords_checked"]
        passed = bool(worst < tol)
        all_passed = all_passed and passed
        report["kernels"][name] = {
            "max_rel_error": float(worst),
            "tolerance": tol,
            "coords_checked": checked,
            "passed": passed,
        }
    report["passed"] = all_passed
    return report
