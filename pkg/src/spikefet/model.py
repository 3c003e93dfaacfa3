"""The assembled tracker and its checkpoint format."""
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backbone import Backbone, StagePlan, extract
from .fusion import AttentionConfig, FusionNetwork
from .head import TrackingHead
from .neurons import SpikeNeuronConfig
from .nn import Module
from .patchwork import compose

CKPT_MAGIC = "SPIKEFET-CKPT 1"


@dataclass(frozen=True)
class ModelConfig:
    plan: StagePlan = field(default_factory=StagePlan)
    attention: AttentionConfig = field(default_factory=AttentionConfig)
    D: int = 4
    fusion_depth: int = 2
    head_hidden: int = 32
    template_size: int = 128
    search_size: int = 256
    event_bins: int = 3
    frame_channels: int = 1
    dw_kernel: int = 7
    expansion: int = 2
    use_type_encoding: bool = True

    @property
    def stride(self):
        return self.plan.total_stride

    @property
    def event_channels(self):
        return 2 * self.event_bins


class SpikeFET(Module):
    def __init__(self, cfg, seed=0):
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        neuron = SpikeNeuronConfig(cfg.D)
        kw = dict(neuron=neuron, dw_kernel=cfg.dw_kernel, expansion=cfg.expansion)
        self.frame_branch = Backbone(cfg.frame_channels, cfg.plan, rng, **kw)
        self.event_branch = Backbone(cfg.event_channels, cfg.plan, rng, **kw)
        s = cfg.stride
        self.fusion = FusionNetwork(
            cfg.plan.out_channels,
            cfg.attention,
            cfg.fusion_depth,
            cfg.template_size // s,
            cfg.search_size // s,
            rng,
            cfg.D,
            cfg.use_type_encoding,
        )
        self.head_frame = TrackingHead(cfg.plan.out_channels, cfg.head_hidden, rng, cfg.D)
        self.head_event = TrackingHead(cfg.plan.out_channels, cfg.head_hidden, rng, cfg.D)
        self.assign_names()

    def forward(self, frames, events, layout):
        """``frames`` / ``events`` are (Z1, Z2, X) triples of [N, C, H, W] arrays
        sharing one layout. Returns a dict with both head outputs and the
        fused per-template features."""
        s = self.cfg.stride
        canvas_f = compose(*frames, layout)
        canvas_e = compose(*events, layout)
        uf = extract(canvas_f, self.frame_branch)
        ue = extract(canvas_e, self.event_branch)
        ff, fe, parts = self.fusion(uf, ue, layout, s)
        out_f = self.head_frame(parts["frame"][2])
        out_e = self.head_event(parts["event"][2])
        return {"frame": out_f, "event": out_e, "parts": parts}


# ----------------------------------------------------------------- checkpoint


def save_checkpoint(path, model, meta=None):
    """Text manifest (name, shape, offset per entry) then raw little-endian float64."""
    st = model.state()
    names = sorted(st)
    lines = [CKPT_MAGIC]
    for k, v in sorted((meta or {}).items()):
        lines.append(f"meta {k} {v}")
    offset = 0
    for name in names:
        arr = st[name]
        shape = "x".join(str(d) for d in arr.shape) or "scalar"
        lines.append(f"param {name} {shape} {offset}")
        offset += arr.size
    lines.append(f"end {offset}")
    header = ("\n".join(lines) + "\n").encode("ascii")
    body = np.concatenate([np.asarray(st[n], dtype="<f8").ravel() for n in names]) if names else np.zeros(0)
    Path(path).write_bytes(header + body.astype("<f8").tobytes())


def read_checkpoint(path):
    raw = Path(path).read_bytes()
    pos = 0
    meta, entries = {}, []
    total = None
    first = True
    while total is None:
        nl = raw.index(b"\n", pos)
        line = raw[pos:nl].decode("ascii")
        pos = nl + 1
        if first:
            if line != CKPT_MAGIC:
                raise ValueError(f"{path}: not a checkpoint")
            first = False
            continue
        parts = line.split(" ")
        if parts[0] == "meta":
            meta[parts[1]] = " ".join(parts[2:])
        elif parts[0] == "param":
            shape = () if parts[2] == "scalar" else tuple(int(d) for d in parts[2].split("x"))
            entries.append((parts[1], shape, int(parts[3])))
        elif parts[0] == "end":
            total = int(parts[1])
        else:
            raise ValueError(f"{path}: bad manifest line {line!r}")
    body = np.frombuffer(raw[pos:], dtype="<f8")
    if body.size != total:
        raise ValueError(f"{path}: expected {total} values, found {body.size}")
    st = {}
    for name, shape, off in entries:
        n = int(np.prod(shape)) if shape else 1
        st[name] = body[off : off + n].reshape(shape).astype(np.float64)
    return st, meta


def load_checkpoint(path, model):
    st, meta = read_checkpoint(path)
    model.load_state(st)
    return meta
