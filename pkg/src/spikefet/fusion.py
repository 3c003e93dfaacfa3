"""Cross-modal fusion: learnable encodings, cross-shaped-window spiking
self-attention, and Transformer spike blocks over the stacked modalities.

The two modality grids are stacked along the row axis (frame on top), so a
vertical stripe spans both modalities while a horizontal stripe of height
``sw`` stays within one whenever ``sw`` divides the grid height.
"""
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .backbone import SepSpikeConv
from .neurons import spike
from .nn import ConvBN, Module, SpikeNeuron, active_trace, param
from .patchwork import place_tensor, split_features, type_map

MODALITIES = ("frame", "event")


@dataclass(frozen=True)
class AttentionConfig:
    heads: int = 4
    stripe_width: int = 4
    gamma: int = 2
    scale: float = None  # None -> 1 / (d_head * D)
    mlp_ratio: int = 4

    def __post_init__(self):
        if self.heads < 2 or self.heads % 2:
            raise ValueError("heads must be even (half horizontal, half vertical)")
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1")
        if self.stripe_width < 1:
            raise ValueError("stripe_width must be >= 1")

    def resolved_scale(self, channels, D):
        if channels % self.heads:
            raise ValueError(f"channels {channels} not divisible by heads {self.heads}")
        return self.scale if self.scale is not None else 1.0 / ((channels // self.heads) * D)


def stripe_bounds(n, sw):
    """Stripe extents along one axis; the last one shrinks, never wraps."""
    return [(s, min(s + sw, n)) for s in range(0, n, sw)]


def _stripes(arr, orient, lo, hi):
    # arr [N, G, d, H, W] -> tokens [N, G, n, d]
    blk = arr[..., lo:hi, :] if orient == "h" else arr[..., lo:hi]
    n_, g, d = blk.shape[:3]
    return blk.reshape(n_, g, d, -1).transpose(0, 1, 3, 2)


def _unstripe(tok, shape):
    # tokens [N, G, n, d] -> [N, G, d, h, w]
    return tok.transpose(0, 1, 3, 2).reshape(shape)


def stripe_attention(q, k, v, heads, sw, scale, trace_name=None):
    """Pre-spike attention ``(Q K^T) V * scale`` inside cross-shaped stripes.

    q, k: [N, C, H, W]; v: [N, gamma*C, H, W]. Heads ``[0, heads/2)`` use
    horizontal stripes of height ``sw``; the rest use vertical stripes of
    width ``sw``. Returns [N, gamma*C, H, W].
    """
    q, k, v = T.as_tensor(q), T.as_tensor(k), T.as_tensor(v)
    n, c, h, w = q.shape
    cv = v.shape[1]
    if c % heads or cv % heads:
        raise ValueError("channels not divisible by heads")
    dq, dv = c // heads, cv // heads
    half = heads // 2
    Q = q.data.reshape(n, heads, dq, h, w)
    K = k.data.reshape(n, heads, dq, h, w)
    V = v.data.reshape(n, heads, dv, h, w)
    out = np.zeros((n, heads, dv, h, w))
    groups = (("h", slice(0, half), h), ("v", slice(half, heads), w))
    trace = active_trace()
    saved = []
    for orient, hs, extent in groups:
        for lo, hi in stripe_bounds(extent, sw):
            qs = _stripes(Q[:, hs], orient, lo, hi)
            ks = _stripes(K[:, hs], orient, lo, hi)
            vs = _stripes(V[:, hs], orient, lo, hi)
            a = qs @ ks.transpose(0, 1, 3, 2)
            o = (a @ vs) * scale
            blk = out[:, hs, :, lo:hi, :] if orient == "h" else out[:, hs, :, :, lo:hi]
            blk[...] = _unstripe(o, blk.shape)
            saved.append((orient, hs, lo, hi, qs, ks, vs, a))
            if trace is not None:
                ntok = qs.shape[2]
                g = qs.shape[1]
                trace.log_op(f"{trace_name}.qk", n * g * ntok * ntok * dq, "spike_input", qs.mean())
                trace.log_op(f"{trace_name}.av", n * g * ntok * ntok * dv, "spike_input", vs.mean())

    def backward(g):
        G = g.reshape(n, heads, dv, h, w)
        gQ = np.zeros_like(Q)
        gK = np.zeros_like(K)
        gV = np.zeros_like(V)
        for orient, hs, lo, hi, qs, ks, vs, a in saved:
            gblk = G[:, hs, :, lo:hi, :] if orient == "h" else G[:, hs, :, :, lo:hi]
            go = _stripes(gblk, orient, 0, gblk.shape[-2] if orient == "h" else gblk.shape[-1]) * scale
            ga = go @ vs.transpose(0, 1, 3, 2)
            gvs = a.transpose(0, 1, 3, 2) @ go
            gqs = ga @ ks
            gks = ga.transpose(0, 1, 3, 2) @ qs
            for dst, src in ((gQ, gqs), (gK, gks), (gV, gvs)):
                view = dst[:, hs, :, lo:hi, :] if orient == "h" else dst[:, hs, :, :, lo:hi]
                view += _unstripe(src, view.shape)
        return gQ.reshape(q.shape), gK.reshape(k.shape), gV.reshape(v.shape)

    return T._make(out.reshape(n, cv, h, w), (q, k, v), backward)


class CSWinSSA(Module):
    def __init__(self, channels, cfg, rng, D=4):
        self.cfg, self.D = cfg, D
        self.scale = cfg.resolved_scale(channels, D)
        self.sn_in = SpikeNeuron(D)
        self.q = ConvBN(channels, channels, 1, rng)
        self.k = ConvBN(channels, channels, 1, rng)
        self.v = ConvBN(channels, channels * cfg.gamma, 1, rng)
        self.sn_q, self.sn_k, self.sn_v = SpikeNeuron(D), SpikeNeuron(D), SpikeNeuron(D)
        self.sn_attn = SpikeNeuron(D)
        self.proj = ConvBN(channels * cfg.gamma, channels, 1, rng)

    def qkv(self, u):
        s = self.sn_in(u)
        return self.sn_q(self.q(s)), self.sn_k(self.k(s)), self.sn_v(self.v(s))

    def attend(self, qs, ks, vs):
        pre = stripe_attention(qs, ks, vs, self.cfg.heads, self.cfg.stripe_width, self.scale, self._name)
        return self.sn_attn(pre)

    def forward(self, u):
        return self.proj(self.attend(*self.qkv(u)))


class ChannelMLP(Module):
    def __init__(self, channels, ratio, rng, D=4):
        self.sn1 = SpikeNeuron(D)
        self.fc1 = ConvBN(channels, channels * ratio, 1, rng)
        self.sn2 = SpikeNeuron(D)
        self.fc2 = ConvBN(channels * ratio, channels, 1, rng)

    def forward(self, u):
        return self.fc2(self.sn2(self.fc1(self.sn1(u))))


class TransformerBlock(Module):
    def __init__(self, channels, cfg, rng, D=4, dw_kernel=7):
        self.token_mixer = SepSpikeConv(channels, rng, dw_kernel, D)
        self.attn = CSWinSSA(channels, cfg, rng, D)
        self.mlp = ChannelMLP(channels, cfg.mlp_ratio, rng, D)

    def forward(self, u):
        u1 = u + self.token_mixer(u)
        u2 = u1 + self.attn(u1)
        return u2 + self.mlp(u2)


class FusionEncodings(Module):
    """Positional (per template / search cell), modality and type encodings."""

    def __init__(self, channels, template_cells, search_cells, rng, std=0.02):
        self.pos_template = param(rng.normal(0, std, (channels, template_cells, template_cells)))
        self.pos_search = param(rng.normal(0, std, (channels, search_cells, search_cells)))
        self.modality = param(rng.normal(0, std, (2, channels)))
        self.types = param(rng.normal(0, std, (3, channels)))

    def positional(self, layout):
        return place_tensor((self.pos_template, self.pos_template, self.pos_search), layout, 1)

    def modal(self, modality):
        idx = MODALITIES.index(modality)
        return T.reshape(self.modality[idx], (1, -1, 1, 1))

    def typed(self, layout, stride):
        ids = type_map(layout, stride)
        emb = self.types[ids]  # [h, w, C]
        return T.transpose(emb, (2, 0, 1))


def add_encodings(u, enc, modality, layout, stride, use_type=True):
    """U + E_p + E_m (+ E_t)."""
    u = T.as_tensor(u)
    ep = enc.positional(layout)
    if u.shape[1] != ep.shape[0]:
        raise ValueError(f"channel width {u.shape[1]} != encoding width {ep.shape[0]}")
    if u.shape[-2:] != ep.shape[-2:]:
        raise ValueError(f"grid {u.shape[-2:]} != encoding grid {ep.shape[-2:]}")
    out = u + ep + enc.modal(modality)
    if use_type:
        out = out + enc.typed(layout, stride)
    return out


class FusionNetwork(Module):
    def __init__(self, channels, cfg, depth, template_cells, search_cells, rng, D=4, use_type=True):
        self.encodings = FusionEncodings(channels, template_cells, search_cells, rng)
        self.blocks = [TransformerBlock(channels, cfg, rng, D) for _ in range(depth)]
        self.use_type = use_type

    def forward(self, u_frame, u_event, layout, stride):
        return fuse(u_frame, u_event, self, layout, stride)


def fuse(u_frame, u_event, net, layout, stride):
    """Encode, stack, run the blocks, split back.

    Returns ``(fused_frame, fused_event, parts)`` where ``parts[modality]``
    is the (F_Z1, F_Z2, F_X) triple cropped from that modality's map.
    """
    if u_frame.shape != u_event.shape:
        raise ValueError(f"branch grids differ: {u_frame.shape} vs {u_event.shape}")
    a = add_encodings(u_frame, net.encodings, "frame", layout, stride, net.use_type)
    b = add_encodings(u_event, net.encodings, "event", layout, stride, net.use_type)
    h = a.shape[2]
    u = T.concat([a, b], axis=2)
    for blk in net.blocks:
        u = blk(u)
    ff = u[:, :, :h]
    fe = u[:, :, h:]
    parts = {m: split_features(f, layout, stride) for m, f in zip(MODALITIES, (ff, fe))}
    return ff, fe, parts


def ssa_reference(q, k, v, scale, D):
    """Single-stripe spiking attention on raw [n, d] token matrices."""
    return spike(T.Tensor(np.asarray(q) @ np.asarray(k).T @ np.asarray(v) * scale), D).data
