"""Modality-specific feature extractor: downsampling layers and ConvFormer
spike blocks."""
from dataclasses import dataclass, field

import numpy as np

from .neurons import SpikeNeuronConfig
from .nn import ConvBN, Module, SpikeNeuron


@dataclass(frozen=True)
class ConvFormerBlockConfig:
    channels: int
    dw_kernel: int = 7
    channel_conv_expansion: int = 2
    channel_conv_kernel: int = 3
    neuron: SpikeNeuronConfig = field(default_factory=SpikeNeuronConfig)

    def __post_init__(self):
        if self.channel_conv_expansion < 1:
            raise ValueError("expansion must be >= 1")
        if self.dw_kernel % 2 == 0:
            raise ValueError("dw_kernel must be odd")


@dataclass(frozen=True)
class StagePlan:
    depths: tuple = (1, 1, 2)
    channels: tuple = (16, 32, 64)
    strides: tuple = (4, 2, 2)
    stem_kernel: int = 7

    def __post_init__(self):
        if not (len(self.depths) == len(self.channels) == len(self.strides)):
            raise ValueError("depths, channels and strides must have equal length")
        if any(b < a for a, b in zip(self.channels, self.channels[1:])):
            raise ValueError("channels must be nondecreasing")

    @property
    def total_stride(self):
        return int(np.prod(self.strides))

    @property
    def out_channels(self):
        return self.channels[-1]


class SepSpikeConv(Module):
    """pw1 -> dw -> pw2, each conv preceded by a spike layer and followed by BN."""

    def __init__(self, channels, rng, dw_kernel=7, D=4):
        self.sn1 = SpikeNeuron(D)
        self.pw1 = ConvBN(channels, channels, 1, rng)
        self.sn2 = SpikeNeuron(D)
        self.dw = ConvBN(channels, channels, dw_kernel, rng, depthwise=True)
        self.sn3 = SpikeNeuron(D)
        self.pw2 = ConvBN(channels, channels, 1, rng)

    def forward(self, u):
        return self.pw2(self.sn3(self.dw(self.sn2(self.pw1(self.sn1(u))))))


class ChannelConv(Module):
    def __init__(self, channels, rng, expansion=2, kernel=3, D=4):
        hidden = channels * expansion
        self.sn1 = SpikeNeuron(D)
        self.conv1 = ConvBN(channels, hidden, kernel, rng)
        self.sn2 = SpikeNeuron(D)
        self.conv2 = ConvBN(hidden, channels, kernel, rng)

    def forward(self, u):
        return self.conv2(self.sn2(self.conv1(self.sn1(u))))


class ConvFormerBlock(Module):
    def __init__(self, cfg, rng):
        D = cfg.neuron.D
        self.token_mixer = SepSpikeConv(cfg.channels, rng, cfg.dw_kernel, D)
        self.channel_mixer = ChannelConv(cfg.channels, rng, cfg.channel_conv_expansion, cfg.channel_conv_kernel, D)

    def forward(self, u):
        u1 = u + self.token_mixer(u)
        return u1 + self.channel_mixer(u1)


class DownSampling(Module):
    """Strided conv + BN. The stem sees the analog image; later stages fire
    a spike layer first so every conv after the stem is spike-driven."""

    def __init__(self, cin, cout, stride, rng, kernel, first, D=4):
        self.first = first
        self.sn = None if first else SpikeNeuron(D)
        self.proj = ConvBN(cin, cout, kernel, rng, stride=stride, spike_input=not first)

    def forward(self, x):
        return self.proj(x if self.first else self.sn(x))


class Backbone(Module):
    """One branch. Two instances never share parameters."""

    def __init__(self, in_channels, plan, rng, neuron=None, dw_kernel=7, expansion=2, channel_conv_kernel=3):
        neuron = neuron or SpikeNeuronConfig()
        self.plan = plan
        self.downs, self.blocks = [], []
        cin = in_channels
        for i, (depth, ch, st) in enumerate(zip(plan.depths, plan.channels, plan.strides)):
            kernel = plan.stem_kernel if i == 0 else 3
            self.downs.append(DownSampling(cin, ch, st, rng, kernel, first=(i == 0), D=neuron.D))
            cfg = ConvFormerBlockConfig(ch, dw_kernel, expansion, channel_conv_kernel, neuron)
            self.blocks.append([ConvFormerBlock(cfg, rng) for _ in range(depth)])
            cin = ch
        # flatten for naming
        self.stages = [blk for stage in self.blocks for blk in stage]
        del self.blocks
        self._depths = list(plan.depths)

    def forward(self, x):
        k = 0
        for down, depth in zip(self.downs, self._depths):
            x = down(x)
            for blk in self.stages[k : k + depth]:
                x = blk(x)
            k += depth
        return x


def extract(canvas, branch, plan=None):
    """Run one branch over a [N, C, H, W] canvas; output is canvas / total stride."""
    plan = plan or branch.plan
    h, w = canvas.shape[-2:]
    if h % plan.total_stride or w % plan.total_stride:
        raise ValueError(f"canvas {h}x{w} not divisible by total stride {plan.total_stride}")
    return branch(canvas)
