"""Decoupled center-point heads, response fusion and box decoding."""
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .nn import Conv2d, ConvBN, Module, SpikeNeuron


@dataclass
class HeadOutput:
    response: T.Tensor  # [N, 1, Hs, Ws], in (0, 1)
    offset: T.Tensor  # [N, 2, Hs, Ws], (dx, dy) in (0, 1)
    size: T.Tensor  # [N, 2, Hs, Ws], (w, h) normalised by the search side
    logits: T.Tensor  # pre-squash response


@dataclass(frozen=True)
class BoundingBox:
    """Centre/size box in normalised search-region coordinates."""

    cx: float
    cy: float
    w: float
    h: float

    def corners(self):
        return (self.cx - self.w / 2, self.cy - self.h / 2, self.cx + self.w / 2, self.cy + self.h / 2)


class SubHead(Module):
    def __init__(self, cin, hidden, cout, rng, D=4, layers=3):
        self.sn_in = SpikeNeuron(D)
        self.convs = []
        self.sns = []
        c = cin
        for _ in range(layers):
            self.convs.append(ConvBN(c, hidden, 3, rng))
            self.sns.append(SpikeNeuron(D))
            c = hidden
        self.out = Conv2d(hidden, cout, 1, rng, bias=True)
        self.out.weight.data *= 0.1

    def forward(self, x):
        x = self.sn_in(x)
        for conv, sn in zip(self.convs, self.sns):
            x = sn(conv(x))
        return self.out(x)


class TrackingHead(Module):
    """Response, offset and size sub-heads for one modality."""

    def __init__(self, channels, hidden, rng, D=4, response_bias=-2.19):
        self.response = SubHead(channels, hidden, 1, rng, D)
        self.offset = SubHead(channels, hidden, 2, rng, D)
        self.size = SubHead(channels, hidden, 2, rng, D)
        self.response.out.bias.data[:] = response_bias

    def forward(self, fx):
        logits = self.response(fx)
        return HeadOutput(T.sigmoid(logits), T.sigmoid(self.offset(fx)), T.sigmoid(self.size(fx)), logits)


def head_forward(fx, head):
    return head(fx)


def fuse_responses(r_f, r_e, lam=0.5):
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    r_f, r_e = np.asarray(r_f, dtype=np.float64), np.asarray(r_e, dtype=np.float64)
    if r_f.shape != r_e.shape:
        raise ValueError(f"response shapes differ: {r_f.shape} vs {r_e.shape}")
    return lam * r_f + (1.0 - lam) * r_e


def hann2d(h, w):
    """Outer product of 1-D Hann windows with the zero end-points trimmed."""
    return np.outer(np.hanning(h + 2)[1:-1], np.hanning(w + 2)[1:-1])


def decode(response, offsets, sizes, hanning=True):
    """Arg-max readout of one box.

    response [Hs, Ws]; offsets and sizes [2, Hs, Ws] (x then y / w then h).
    Ties go to the smallest row-major index.
    """
    r = np.asarray(response, dtype=np.float64)
    offsets, sizes = np.asarray(offsets), np.asarray(sizes)
    if offsets.shape != (2,) + r.shape or sizes.shape != (2,) + r.shape:
        raise ValueError("offset/size maps must be [2, Hs, Ws] matching the response")
    hs, ws = r.shape
    score = r * hann2d(hs, ws) if hanning else r
    idx = int(np.argmax(score))
    i, j = divmod(idx, ws)
    box = BoundingBox((j + offsets[0, i, j]) / ws, (i + offsets[1, i, j]) / hs, float(sizes[0, i, j]), float(sizes[1, i, j]))
    return box, float(r[i, j])


def decode_fused(out_f, out_e, lam=0.5, hanning=True, index=0):
    """Fuse the two heads' maps with weight ``lam`` and decode sample ``index``."""
    r = fuse_responses(out_f.response.data[index, 0], out_e.response.data[index, 0], lam)
    off = fuse_responses(out_f.offset.data[index], out_e.offset.data[index], lam)
    sz = fuse_responses(out_f.size.data[index], out_e.size.data[index], lam)
    return decode(r, off, sz, hanning)
