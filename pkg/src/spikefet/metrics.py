"""Success (AUC) and precision metrics for single-object tracking.

Boxes are (left, top, w, h) in pixels.
"""
import numpy as np

IOU_THRESHOLDS = np.linspace(0.0, 1.0, 21)
PRECISION_PX = 20.0


def iou(a, b):
    """Row-wise IoU of [..., 4] corner-size boxes."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    ax1, ay1 = a[..., 0] + a[..., 2], a[..., 1] + a[..., 3]
    bx1, by1 = b[..., 0] + b[..., 2], b[..., 1] + b[..., 3]
    iw = np.clip(np.minimum(ax1, bx1) - np.maximum(a[..., 0], b[..., 0]), 0, None)
    ih = np.clip(np.minimum(ay1, by1) - np.maximum(a[..., 1], b[..., 1]), 0, None)
    inter = iw * ih
    union = a[..., 2] * a[..., 3] + b[..., 2] * b[..., 3] - inter
    return np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)


def center_error(a, b):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    ca = a[..., :2] + a[..., 2:] / 2
    cb = b[..., :2] + b[..., 2:] / 2
    return np.sqrt(((ca - cb) ** 2).sum(axis=-1))


def success_curve(ious):
    ious = np.asarray(ious, dtype=np.float64)
    return np.array([(ious >= t).mean() for t in IOU_THRESHOLDS])


def auc(pred, gt):
    """Mean success rate over IoU thresholds 0, 0.05, ..., 1."""
    return float(success_curve(iou(pred, gt)).mean())


def precision(pred, gt, px=PRECISION_PX):
    return float((center_error(pred, gt) <= px).mean())


def evaluate_boxes(pred_by_seq, gt_by_seq):
    """Pool all frames of all sequences; returns (AUC, PR)."""
    p = np.concatenate([np.asarray(v) for v in pred_by_seq])
    g = np.concatenate([np.asarray(v) for v in gt_by_seq])
    return auc(p, g), precision(p, g)
