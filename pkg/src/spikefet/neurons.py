"""Integer spike-count neurons with a straight-through surrogate.

At train time a neuron emits ``clamp(round(x), 0, D)`` spikes per position and
passes gradient through wherever ``0 < x < D``. At inference the same count
``k`` is unrolled into ``D`` binary steps (``k`` ones then ``D - k`` zeros), so
both views carry identical spike totals.
"""
import contextlib
from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, _make, as_tensor

_SURROGATE_FORWARD = False


@contextlib.contextmanager
def surrogate_forward():
    """Replace the rounding forward by ``clamp(x, 0, D)``.

    The derivative of that clamp is exactly the declared surrogate, so
    finite differences of a network run in this mode validate the
    hand-written backward passes end to end.
    """
    global _SURROGATE_FORWARD
    prev, _SURROGATE_FORWARD = _SURROGATE_FORWARD, True
    try:
        yield
    finally:
        _SURROGATE_FORWARD = prev


class SpikeIntegrityError(ValueError):
    pass


@dataclass(frozen=True)
class SpikeNeuronConfig:
    D: int = 4

    def __post_init__(self):
        if int(self.D) != self.D or self.D < 1:
            raise ValueError(f"D must be an integer >= 1, got {self.D}")

    @property
    def surrogate_window(self):
        return (0.0, float(self.D))


@dataclass
class SpikeTensor:
    """Spike counts (``mode='train'``) or binary steps (``mode='inference'``,
    extra leading axis of length D)."""

    values: np.ndarray
    D: int
    mode: str = "train"

    def validate(self):
        v = self.values
        if self.mode == "train":
            ok = np.all(v == np.round(v)) and np.all((v >= 0) & (v <= self.D))
        elif self.mode == "inference":
            ok = v.shape[0] == self.D and np.all((v == 0) | (v == 1))
        else:
            raise SpikeIntegrityError(f"unknown spike mode {self.mode!r}")
        if not ok:
            raise SpikeIntegrityError(f"values violate the {self.mode}-mode spike contract")
        return self


def spike_count(x, D):
    """Raw array version of the forward rule (round half up, then clamp)."""
    return np.clip(np.floor(np.asarray(x, dtype=np.float64) + 0.5), 0, D)


def surrogate_grad(x, D):
    x = np.asarray(x, dtype=np.float64)
    return ((x > 0) & (x < D)).astype(np.float64)


def spike(x, D):
    """Autodiff SN(.) op."""
    x = as_tensor(x)
    mask = surrogate_grad(x.data, D)
    if _SURROGATE_FORWARD:
        out = np.clip(x.data, 0, D)
    else:
        out = spike_count(x.data, D)
    return _make(out, (x,), lambda g: (g * mask,))


def sn_forward(x, cfg):
    x = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    return SpikeTensor(spike_count(x, cfg.D), cfg.D, "train")


def unroll_to_binary(a, cfg=None):
    D = a.D if cfg is None else cfg.D
    if a.mode != "train":
        raise SpikeIntegrityError("unroll expects a train-mode spike tensor")
    v = a.values
    if not (np.all(v == np.round(v)) and np.all((v >= 0) & (v <= D))):
        raise SpikeIntegrityError(f"spike counts must be integers in [0, {D}]")
    steps = np.arange(D).reshape((D,) + (1,) * v.ndim)
    return SpikeTensor((steps < v[None]).astype(np.float64), D, "inference")


def firing_rate(s):
    """Mean spike count per position, in [0, D]."""
    v = s.values
    if v.size == 0:
        raise ValueError("firing rate of an empty spike tensor")
    if s.mode == "inference":
        return float(v.sum(axis=0).mean())
    return float(v.mean())
