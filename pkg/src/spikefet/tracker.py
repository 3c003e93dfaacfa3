"""Online tracking loop and per-frame output files."""
from pathlib import Path

import numpy as np

from .data import box_center, crop_box_to_image, crop_resize, crop_side
from .head import decode_fused
from .metrics import evaluate_boxes
from .patchwork import default_layout
from .tensor import no_grad


class SpikeTracker:
    """Templates fixed at the first frame (Z2 duplicates Z1); each new frame is
    searched around the previous box."""

    def __init__(self, model, template_factor=2.0, search_factor=4.0, lam=0.5, hanning=True):
        self.model = model
        self.cfg = model.cfg
        self.template_factor = template_factor
        self.search_factor = search_factor
        self.lam = lam
        self.hanning = hanning
        self.layout = default_layout(self.cfg.template_size, self.cfg.search_size)

    def init(self, seq, box):
        cx, cy = box_center(box)
        side = crop_side(box, self.template_factor)
        tz = self.cfg.template_size
        self.z_frame = crop_resize(seq.frame_image(0), cx, cy, side, tz)[None]
        self.z_event = crop_resize(seq.event_image(0, self.cfg.event_bins), cx, cy, side, tz)[None]
        self.box = np.asarray(box, dtype=np.float64)
        self.shape = seq.frames.shape[1:]

    def track(self, seq, k):
        cx, cy = box_center(self.box)
        side = crop_side(self.box, self.search_factor)
        tx = self.cfg.search_size
        xf = crop_resize(seq.frame_image(k), cx, cy, side, tx)[None]
        xe = crop_resize(seq.event_image(k, self.cfg.event_bins), cx, cy, side, tx)[None]
        with no_grad():
            out = self.model((self.z_frame, self.z_frame, xf), (self.z_event, self.z_event, xe), self.layout)
        nbox, score = decode_fused(out["frame"], out["event"], self.lam, self.hanning)
        box = crop_box_to_image((nbox.cx, nbox.cy, nbox.w, nbox.h), cx, cy, side)
        self.box = _clamp_box(box, self.shape)
        return self.box.copy(), score


def _clamp_box(box, shape):
    h, w = shape
    bw = float(np.clip(box[2], 4.0, w))
    bh = float(np.clip(box[3], 4.0, h))
    cx = float(np.clip(box[0] + box[2] / 2, 0, w))
    cy = float(np.clip(box[1] + box[3] / 2, 0, h))
    return np.array([cx - bw / 2, cy - bh / 2, bw, bh])


def run_sequence(tracker, seq):
    """Boxes and scores for frames 1..L-1 (frame 0 initialises)."""
    tracker.init(seq, seq.boxes[0])
    boxes, scores = [], []
    for k in range(1, len(seq)):
        b, s = tracker.track(seq, k)
        boxes.append(b)
        scores.append(s)
    return np.array(boxes), np.array(scores)


def static_boxes(seq):
    return np.repeat(seq.boxes[:1], len(seq) - 1, axis=0)


def evaluate_tracker(tracker, seqs):
    """Returns (AUC, PR, per-sequence outputs)."""
    outputs = {}
    for seq in seqs:
        outputs[seq.name] = run_sequence(tracker, seq)
    a, p = evaluate_boxes([outputs[s.name][0] for s in seqs], [s.boxes[1:] for s in seqs])
    return a, p, outputs


def write_tracking_output(path, boxes, scores, shape):
    """``frame_index cx cy w h score`` lines, coordinates normalised by the image size."""
    h, w = shape
    lines = []
    for i, (b, s) in enumerate(zip(boxes, scores), start=1):
        cx, cy = (b[0] + b[2] / 2) / w, (b[1] + b[3] / 2) / h
        lines.append(f"{i} {cx:.9f} {cy:.9f} {b[2] / w:.9f} {b[3] / h:.9f} {s:.9f}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_tracking_output(path, shape):
    h, w = shape
    boxes, scores, idx = [], [], []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        i, cx, cy, bw, bh, s = line.split()
        bw, bh = float(bw) * w, float(bh) * h
        boxes.append([float(cx) * w - bw / 2, float(cy) * h - bh / 2, bw, bh])
        scores.append(float(s))
        idx.append(int(i))
    return np.array(idx), np.array(boxes), np.array(scores)
