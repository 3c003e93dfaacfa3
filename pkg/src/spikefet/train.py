"""Desk-scale training loop."""
import logging
from pathlib import Path

import numpy as np

from . import tensor as T
from .data import collate, make_sample
from .losses import TERMS, giou_loss, gwf_focal, l1_loss, make_targets, response_loss, str_loss, total_loss
from .model import SpikeFET, save_checkpoint
from .patchwork import default_layout, sample_layout

log = logging.getLogger(__name__)

LOG_COLUMNS = ("step", "L_track") + tuple(f"L_{t}" for t in TERMS)


class DivergenceError(RuntimeError):
    pass


class MomentumSGD:
    def __init__(self, params, lr, momentum=0.9, clip=None):
        self.params = params
        self.lr, self.momentum, self.clip = lr, momentum, clip
        self.velocity = [np.zeros_like(p.data) for p in params]

    def step(self):
        grads = [np.zeros_like(p.data) if p.grad is None else p.grad for p in self.params]
        if self.clip:
            norm = float(np.sqrt(sum((g * g).sum() for g in grads)))
            if norm > self.clip:
                grads = [g * (self.clip / norm) for g in grads]
        for p, v, g in zip(self.params, self.velocity, grads):
            v *= self.momentum
            v += g
            p.data = p.data - self.lr * v


def _pred_boxes(out, rows, cols, hs, ws):
    n = np.arange(len(rows))
    off_x = out.offset[(n, 0, rows, cols)]
    off_y = out.offset[(n, 1, rows, cols)]
    w = out.size[(n, 0, rows, cols)]
    h = out.size[(n, 1, rows, cols)]
    cx = (off_x + cols.astype(np.float64)) * (1.0 / ws)
    cy = (off_y + rows.astype(np.float64)) * (1.0 / hs)
    cols_ = [T.reshape(v, (-1, 1)) for v in (cx, cy, w, h)]
    return T.concat(cols_, axis=1)


def compute_losses(outputs, boxes, weights):
    """Raw per-term losses for one batch (dict of scalar Tensors)."""
    out_f, out_e = outputs["frame"], outputs["event"]
    _, _, hs, ws = out_f.response.shape
    tg = [make_targets(b, hs, ws) for b in boxes]
    heat = np.stack([t.heat for t in tg])[:, None]
    rows = np.array([t.center[0] for t in tg])
    cols = np.array([t.center[1] for t in tg])
    gt_boxes = T.Tensor(np.stack([t.box for t in tg]))
    terms = {}
    for tag, out in (("F", out_f), ("E", out_e)):
        terms[f"cls_{tag}"] = gwf_focal(out.response, heat, weights)
        pred = _pred_boxes(out, rows, cols, hs, ws)
        terms[f"iou_{tag}"] = giou_loss(pred, gt_boxes)
        terms[f"L1_{tag}"] = l1_loss(pred, gt_boxes)
    # a zero coefficient removes the term outright (ablations log it as 0)
    if weights.alpha > 0:
        terms["res"] = response_loss(out_f.logits, out_e.logits, weights.tau, weights.focal_a)
    else:
        terms["res"] = T.Tensor(0.0)
    if weights.beta > 0:
        sims = [str_loss(p[0], p[1]) for p in outputs["parts"].values()]
        terms["sim"] = (sims[0] + sims[1]) * 0.5
    else:
        terms["sim"] = T.Tensor(0.0)
    return terms


def draw_batch(seqs, cfg, rng):
    samples = []
    for _ in range(cfg.batch):
        seq = seqs[int(rng.integers(len(seqs)))]
        L = len(seq)
        i = int(rng.integers(0, L - 1))
        j = int(rng.integers(i + 1, min(L, i + 1 + cfg.max_template_gap)))
        k = int(rng.integers(0, L))
        samples.append(make_sample(seq, i, j, k, cfg, rng, jitter=True, bins=cfg.model.event_bins))
    return collate(samples)


def format_log_line(step, total, raw):
    vals = [total] + [raw[t] for t in TERMS]
    return f"{step} " + " ".join(f"{v:.10e}" for v in vals)


def train(cfg, seqs, out_dir=None, model=None, progress=None):
    """Optimise L_track; returns (model, log lines).

    Writes ``checkpoint.bin`` and ``train.log`` into ``out_dir`` when given.
    On a non-finite loss the last good parameters are restored (and saved)
    before :class:`DivergenceError` is raised.
    """
    rng = np.random.default_rng(cfg.seed)
    model = model or SpikeFET(cfg.model, seed=cfg.seed)
    model.train()
    params = model.parameters()
    opt = MomentumSGD(params, cfg.lr, cfg.momentum, cfg.grad_clip)
    lines = []
    out_dir = Path(out_dir) if out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    tz, tx = cfg.model.template_size, cfg.model.search_size
    last_good = model.state()
    last_good = {k: v.copy() for k, v in last_good.items()}
    for step in range(1, cfg.steps + 1):
        frames, events, boxes = draw_batch(seqs, cfg, rng)
        layout = sample_layout(rng, tz, tx) if cfg.use_rpm else default_layout(tz, tx)
        model.zero_grad()
        outputs = model(frames, events, layout)
        terms = compute_losses(outputs, boxes, cfg.weights)
        total, _ = total_loss(terms, cfg.weights)
        value = float(total.data)
        if not np.isfinite(value):
            model.load_state(last_good)
            if out_dir:
                save_checkpoint(out_dir / "checkpoint.bin", model, {"step": step - 1, "status": "diverged"})
                (out_dir / "train.log").write_text("\n".join(lines) + "\n")
            raise DivergenceError(f"non-finite loss at step {step}")
        total.backward()
        opt.step()
        last_good = {k: v.copy() for k, v in model.state().items()}
        raw = {t: float(terms[t].data) for t in TERMS}
        lines.append(format_log_line(step, value, raw))
        if progress:
            progress(step, value, raw)
        log.debug(lines[-1])
    model.eval()
    if out_dir:
        save_checkpoint(out_dir / "checkpoint.bin", model, {"step": cfg.steps, "seed": cfg.seed})
        (out_dir / "train.log").write_text("\n".join(lines) + "\n")
    return model, lines


def parse_log(lines):
    """Rows of floats from log lines (header-free)."""
    return np.array([[float(v) for v in ln.split()] for ln in lines if ln.strip()])
