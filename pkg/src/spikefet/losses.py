"""Training objectives.

Boxes are (cx, cy, w, h) rows in normalised search coordinates. Loss
functions take Tensors and return scalar Tensors so they backpropagate.
"""
import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T

PROB_EPS = 1e-6
TERMS = ("cls_F", "iou_F", "L1_F", "cls_E", "iou_E", "L1_E", "res", "sim")


@dataclass(frozen=True)
class LossWeights:
    lambda_iou: float = 2.0
    lambda_l1: float = 5.0
    alpha: float = 1.0
    beta: float = 0.5
    tau: float = 2.0
    focal_a: float = 2.0
    focal_b: float = 4.0

    def __post_init__(self):
        for k, v in vars(self).items():
            if v < 0:
                raise ValueError(f"{k} must be nonnegative")


# ----------------------------------------------------------------- targets


def gaussian_radius(h, w, min_overlap=0.7):
    """Smallest radius keeping IoU >= min_overlap for corner jitter (CornerNet)."""
    a1, b1 = 1.0, h + w
    c1 = w * h * (1 - min_overlap) / (1 + min_overlap)
    r1 = (b1 + math.sqrt(b1**2 - 4 * a1 * c1)) / 2
    a2, b2 = 4.0, 2 * (h + w)
    c2 = (1 - min_overlap) * w * h
    r2 = (b2 + math.sqrt(b2**2 - 4 * a2 * c2)) / 2
    a3, b3 = 4 * min_overlap, -2 * min_overlap * (h + w)
    c3 = (min_overlap - 1) * w * h
    r3 = (b3 + math.sqrt(b3**2 - 4 * a3 * c3)) / 2
    return min(r1, r2, r3)


@dataclass
class GroundTruthMaps:
    heat: np.ndarray  # [Hs, Ws], peak 1 at the centre cell
    center: tuple  # (row, col)
    offset: np.ndarray  # (dx, dy) in [0, 1)
    size: np.ndarray  # (w, h)
    box: np.ndarray  # (cx, cy, w, h)


def make_targets(box, hs, ws):
    cx, cy, w, h = (float(v) for v in box)
    col = min(max(int(math.floor(cx * ws)), 0), ws - 1)
    row = min(max(int(math.floor(cy * hs)), 0), hs - 1)
    r = max(0.0, gaussian_radius(h * hs, w * ws))
    sigma = (2 * r + 1) / 6
    ii, jj = np.mgrid[0:hs, 0:ws]
    heat = np.exp(-((ii - row) ** 2 + (jj - col) ** 2) / (2 * sigma**2))
    off = np.array([cx * ws - col, cy * hs - row])
    return GroundTruthMaps(heat, (row, col), np.clip(off, 0.0, 1.0 - 1e-9), np.array([w, h]), np.array([cx, cy, w, h]))


# ----------------------------------------------------------------- classification


def gwf_focal(pred, gt, weights=None):
    """Penalty-reduced Gaussian-weighted focal loss.

    Peaks are cells where ``gt == 1``; the sum is divided by the number of
    peaks (at least 1).
    """
    w = weights or LossWeights()
    gt = np.asarray(gt, dtype=np.float64)
    pred = T.as_tensor(pred)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    p = T.clip(pred, PROB_EPS, 1 - PROB_EPS)
    pos = gt == 1.0
    n_pos = max(1, int(pos.sum()))
    pos_term = T.power(1.0 - p, w.focal_a) * T.log(p)
    neg_term = ((1.0 - gt) ** w.focal_b) * T.power(p, w.focal_a) * T.log(1.0 - p)
    per_cell = T.where(pos, pos_term, neg_term)
    return T.tsum(per_cell) * (-1.0 / n_pos)


def soft_focal(pred, target, a=2.0):
    """Focal loss against a soft target: ``-|y-p|^a [y log p + (1-y) log(1-p)]``,
    normalised by the target mass. Zero iff ``pred == target``."""
    p = T.clip(T.as_tensor(pred), PROB_EPS, 1 - PROB_EPS)
    y = T.clip(T.as_tensor(target), PROB_EPS, 1 - PROB_EPS)
    bce = y * T.log(p) + (1.0 - y) * T.log(1.0 - p)
    mass = T.maximum(T.tsum(y), 1.0)
    return T.tsum(T.power(T.tabs(y - p), a) * bce) * -1.0 / mass


def response_loss(logits_f, logits_e, tau=2.0, a=2.0):
    """Symmetric response-consistency loss on temperature-softened maps.

    Inputs are the response maps at the logit level; both are divided by
    ``tau`` and squashed back to (0, 1) before comparison.
    """
    pf = T.sigmoid(T.as_tensor(logits_f) * (1.0 / tau))
    pe = T.sigmoid(T.as_tensor(logits_e) * (1.0 / tau))
    return (soft_focal(pf, pe, a) + soft_focal(pe, pf, a)) * 0.5


# ----------------------------------------------------------------- regression


def box_to_corners(b):
    """[M, 4] (cx, cy, w, h) Tensor -> four [M] Tensors x0, y0, x1, y1."""
    cx, cy, w, h = (b[:, i] for i in range(4))
    return cx - w * 0.5, cy - h * 0.5, cx + w * 0.5, cy + h * 0.5


def giou(pred, gt):
    px0, py0, px1, py1 = box_to_corners(T.as_tensor(pred))
    gx0, gy0, gx1, gy1 = box_to_corners(T.as_tensor(gt))
    area_p = (px1 - px0) * (py1 - py0)
    area_g = (gx1 - gx0) * (gy1 - gy0)
    iw = T.maximum(T.minimum(px1, gx1) - T.maximum(px0, gx0), 0.0)
    ih = T.maximum(T.minimum(py1, gy1) - T.maximum(py0, gy0), 0.0)
    inter = iw * ih
    union = area_p + area_g - inter
    hull = (T.maximum(px1, gx1) - T.minimum(px0, gx0)) * (T.maximum(py1, gy1) - T.minimum(py0, gy0))
    return inter / union - (hull - union) / hull


def giou_loss(pred, gt):
    """Mean of ``1 - GIoU`` over box rows. Accepts BoundingBox-like 4-tuples too."""
    pred, gt = _as_rows(pred), _as_rows(gt)
    return T.mean(1.0 - giou(pred, gt))


def l1_loss(pred, gt):
    pred, gt = _as_rows(pred), _as_rows(gt)
    return T.mean(T.tabs(pred - gt))


def _as_rows(b):
    if isinstance(b, T.Tensor):
        return b if b.ndim == 2 else T.reshape(b, (1, 4))
    if hasattr(b, "cx"):
        b = (b.cx, b.cy, b.w, b.h)
    return T.Tensor(np.asarray(b, dtype=np.float64).reshape(-1, 4))


def corner_to_center(x, y, w, h):
    """(left, top, w, h) -> (cx, cy, w, h)."""
    return (x + w / 2, y + h / 2, w, h)


# ----------------------------------------------------------------- STR


def str_loss(f1, f2):
    """Mean squared difference over every compared scalar."""
    f1, f2 = T.as_tensor(f1), T.as_tensor(f2)
    if f1.shape != f2.shape:
        raise ValueError(f"template feature shapes differ: {f1.shape} vs {f2.shape}")
    return T.mean(T.power(f1 - f2, 2))


# ----------------------------------------------------------------- aggregate


def total_loss(terms, weights=None):
    """Weighted sum of the eight named terms.

    ``terms`` maps each name in :data:`TERMS` to a scalar (Tensor or float).
    Returns ``(L_track, breakdown)`` where the breakdown holds the weighted
    contributions, which sum to L_track.
    """
    w = weights or LossWeights()
    coef = {
        "cls_F": 1.0,
        "iou_F": w.lambda_iou,
        "L1_F": w.lambda_l1,
        "cls_E": 1.0,
        "iou_E": w.lambda_iou,
        "L1_E": w.lambda_l1,
        "res": w.alpha,
        "sim": w.beta,
    }
    missing = set(TERMS) - set(terms)
    if missing:
        raise KeyError(f"missing loss terms: {sorted(missing)}")
    total = None
    breakdown = {}
    for name in TERMS:
        contrib = T.as_tensor(terms[name]) * coef[name]
        breakdown[name] = float(contrib.data)
        total = contrib if total is None else total + contrib
    return total, breakdown
