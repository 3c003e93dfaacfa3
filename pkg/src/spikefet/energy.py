"""Theoretical energy from operation counts and recorded firing rates.

Layers fed by an analog image pay a multiply-accumulate per dense op; layers
fed by spike counts pay one accumulate per emitted spike, so their cost is
``flops * firing_rate * e_ac`` (a count of k in [0, D] unrolls to k binary
spikes over D timesteps).
"""
from dataclasses import dataclass

import numpy as np

from .nn import tracing
from .patchwork import default_layout
from .tensor import no_grad

FAN_IN_TYPES = ("analog_input", "spike_input")
E_MAC_PJ = 4.6
E_AC_PJ = 0.9


class EnergyError(ValueError):
    pass


@dataclass(frozen=True)
class LayerOpCount:
    name: str
    flops: float
    fan_in: str
    firing_rate: float = 0.0
    D: int = 4

    def __post_init__(self):
        if self.flops < 0:
            raise EnergyError(f"{self.name}: negative flops")
        if not 0.0 <= self.firing_rate <= self.D:
            raise EnergyError(f"{self.name}: firing rate {self.firing_rate} outside [0, {self.D}]")


@dataclass(frozen=True)
class LayerEnergy:
    name: str
    fan_in: str
    flops: float
    firing_rate: float
    ops: float  # MACs for analog layers, ACs for spike layers
    energy_pj: float


@dataclass(frozen=True)
class EnergyReport:
    layers: tuple
    mac_ops: float
    ac_ops: float
    energy_pj: float

    @property
    def energy_mj(self):
        return self.energy_pj * 1e-9


def estimate(counts, e_mac=E_MAC_PJ, e_ac=E_AC_PJ):
    """Per-layer and total energy (pJ) for a list of :class:`LayerOpCount`."""
    layers = []
    for c in counts:
        if c.fan_in == "analog_input":
            ops, e = c.flops, c.flops * e_mac
        elif c.fan_in == "spike_input":
            ops = c.flops * c.firing_rate
            e = ops * e_ac
        else:
            raise EnergyError(f"{c.name}: unknown fan-in type {c.fan_in!r}")
        layers.append(LayerEnergy(c.name, c.fan_in, c.flops, c.firing_rate, ops, e))
    # sorted sums keep totals independent of layer order
    mac = sum(sorted(x.ops for x in layers if x.fan_in == "analog_input"))
    ac = sum(sorted(x.ops for x in layers if x.fan_in == "spike_input"))
    total = sum(sorted(x.energy_pj for x in layers))
    return EnergyReport(tuple(layers), float(mac), float(ac), float(total))


def run_traced(model, frames, events, layout=None):
    """One inference pass with tracing on; returns the trace."""
    cfg = model.cfg
    layout = layout or default_layout(cfg.template_size, cfg.search_size)
    was_training = model.training
    model.eval()
    try:
        with no_grad(), tracing() as trace:
            model(frames, events, layout)
    finally:
        if was_training:
            model.train()
    return trace


def _batched(sample):
    frames = tuple(np.asarray(a)[None] if np.asarray(a).ndim == 3 else np.asarray(a) for a in sample.frames)
    events = tuple(np.asarray(a)[None] if np.asarray(a).ndim == 3 else np.asarray(a) for a in sample.events)
    return frames, events


def record_firing(model, sample, layout=None):
    """Mean spike count at every SN output, keyed by layer name."""
    frames, events = _batched(sample)
    return dict(run_traced(model, frames, events, layout).rates)


def layer_counts(trace, D=4):
    """Merge trace records per layer name (flop-weighted rate) into counts."""
    merged = {}
    for name, flops, fan_in, rate in trace.ops:
        f, fr, kind = merged.get(name, (0.0, 0.0, fan_in))
        if kind != fan_in:
            raise EnergyError(f"{name}: mixed fan-in types")
        merged[name] = (f + flops, fr + flops * rate, fan_in)
    out = []
    for name, (f, fr, kind) in merged.items():
        rate = fr / f if f > 0 else 0.0
        out.append(LayerOpCount(name, f, kind, min(max(rate, 0.0), float(D)), D))
    return out


def profile(model, sample, e_mac=E_MAC_PJ, e_ac=E_AC_PJ, layout=None):
    frames, events = _batched(sample)
    trace = run_traced(model, frames, events, layout)
    return estimate(layer_counts(trace, model.cfg.D), e_mac, e_ac)


def format_report(report):
    """Aligned ASCII table."""
    rows = [("layer", "fan_in", "flops", "rate", "ops", "energy_pJ")]
    for x in report.layers:
        rows.append((x.name, x.fan_in, f"{x.flops:.0f}", f"{x.firing_rate:.4f}", f"{x.ops:.1f}", f"{x.energy_pj:.1f}"))
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = []
    for r in rows:
        cells = [r[0].ljust(widths[0]), r[1].ljust(widths[1])] + [c.rjust(w) for c, w in zip(r[2:], widths[2:])]
        lines.append("  ".join(cells))
    lines.append("")
    lines.append(f"MAC ops   {report.mac_ops:.0f}")
    lines.append(f"AC ops    {report.ac_ops:.1f}")
    lines.append(f"energy    {report.energy_mj:.6f} mJ")
    return "\n".join(lines) + "\n"


def report_kv(report):
    """Machine-readable ``key = value`` lines."""
    lines = [
        f"mac_ops = {report.mac_ops!r}",
        f"ac_ops = {report.ac_ops!r}",
        f"energy_pj = {report.energy_pj!r}",
        f"energy_mj = {report.energy_mj!r}",
    ]
    for x in report.layers:
        lines.append(f"layer.{x.name} = {x.fan_in} {x.flops!r} {x.firing_rate!r} {x.energy_pj!r}")
    return "\n".join(lines) + "\n"


def parse_report_kv(text):
    out = {}
    for line in text.splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out
