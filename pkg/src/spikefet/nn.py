"""Layer objects on top of the autodiff ops: parameters, buffers, naming,
and an optional forward trace used by the energy profiler."""
import contextlib

import numpy as np

from . import tensor as T
from .neurons import spike
from .tensor import Tensor

_TRACE = None


class ForwardTrace:
    """Collects per-layer records during one forward pass."""

    def __init__(self):
        self.ops = []  # (name, flops, fan_in, firing_rate)
        self.rates = {}  # SN output name -> mean spike count

    def log_op(self, name, flops, fan_in, rate):
        self.ops.append((name, float(flops), fan_in, float(rate)))

    def log_rate(self, name, rate):
        self.rates[name] = float(rate)


@contextlib.contextmanager
def tracing():
    global _TRACE
    prev, _TRACE = _TRACE, ForwardTrace()
    try:
        yield _TRACE
    finally:
        _TRACE = prev


def active_trace():
    return _TRACE


class Module:
    training = True
    _name = ""

    def children(self):
        for key, val in vars(self).items():
            if isinstance(val, Module):
                yield key, val
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield f"{key}.{i}", item

    def named_modules(self, prefix=""):
        yield prefix, self
        for key, child in self.children():
            yield from child.named_modules(f"{prefix}.{key}" if prefix else key)

    def own_params(self):
        return {k: v for k, v in vars(self).items() if isinstance(v, Tensor) and v.requires_grad}

    def own_buffers(self):
        return {k: v for k, v in vars(self).items() if isinstance(v, np.ndarray)}

    def named_parameters(self):
        out = {}
        for prefix, mod in self.named_modules():
            for k, v in mod.own_params().items():
                out[f"{prefix}.{k}" if prefix else k] = v
        return out

    def named_buffers(self):
        out = {}
        for prefix, mod in self.named_modules():
            for k, v in mod.own_buffers().items():
                out[f"{prefix}.{k}" if prefix else k] = v
        return out

    def parameters(self):
        return list(self.named_parameters().values())

    def state(self):
        """Every persistent array keyed by dotted name (params then buffers)."""
        st = {k: v.data for k, v in self.named_parameters().items()}
        st.update(self.named_buffers())
        return st

    def load_state(self, st):
        params, bufs = self.named_parameters(), self.named_buffers()
        missing = (set(params) | set(bufs)) - set(st)
        if missing:
            raise KeyError(f"state is missing entries: {sorted(missing)[:5]}")
        for k, p in params.items():
            if p.data.shape != st[k].shape:
                raise ValueError(f"{k}: shape {st[k].shape} != {p.data.shape}")
            p.data = np.array(st[k], dtype=np.float64)
        for k, b in bufs.items():
            b[...] = st[k]

    def assign_names(self):
        for prefix, mod in self.named_modules():
            mod._name = prefix
        return self

    def train(self, mode=True):
        for _, mod in self.named_modules():
            mod.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def param(data):
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)


class Conv2d(Module):
    """Standard, pointwise (k=1) or depthwise convolution."""

    def __init__(self, cin, cout, kernel, rng, stride=1, padding=None, depthwise=False, bias=False, spike_input=True):
        if depthwise and cin != cout:
            raise ValueError("depthwise convolution requires in_channels == out_channels")
        self.cin, self.cout, self.kernel, self.stride = cin, cout, kernel, stride
        self.padding = kernel // 2 if padding is None else padding
        self.depthwise = depthwise
        self.spike_input = spike_input
        fan_in = kernel * kernel * (1 if depthwise else cin)
        shape = (cout, 1, kernel, kernel) if depthwise else (cout, cin, kernel, kernel)
        self.weight = param(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape))
        self.bias = param(np.zeros(cout)) if bias else None

    def flops(self, x_shape):
        _, _, h, w = x_shape
        ho = T.conv_output_size(h, self.kernel, self.stride, self.padding)
        wo = T.conv_output_size(w, self.kernel, self.stride, self.padding)
        per_out = self.kernel * self.kernel * (1 if self.depthwise else self.cin)
        return ho * wo * self.cout * per_out

    def forward(self, x):
        if _TRACE is not None:
            n = x.shape[0]
            rate = float(x.data.mean()) if self.spike_input else 0.0
            _TRACE.log_op(self._name, self.flops(x.shape) * n, "spike_input" if self.spike_input else "analog_input", rate)
        return T.conv2d(x, self.weight, self.bias, self.stride, self.padding, self.depthwise)


class BatchNorm2d(Module):
    def __init__(self, channels, momentum=0.1, eps=1e-5):
        self.gamma = param(np.ones(channels))
        self.beta = param(np.zeros(channels))
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum, self.eps = momentum, eps

    def forward(self, x):
        return T.batch_norm(
            x, self.gamma, self.beta, self.running_mean, self.running_var, self.training, self.momentum, self.eps
        )

    def invert(self, y):
        """Inverse of the inference-mode affine map (raw arrays)."""
        shp = (1, -1, 1, 1)
        scale = self.gamma.data / np.sqrt(self.running_var + self.eps)
        return (y - self.beta.data.reshape(shp)) / scale.reshape(shp) + self.running_mean.reshape(shp)


class ConvBN(Module):
    def __init__(self, cin, cout, kernel, rng, stride=1, depthwise=False, spike_input=True):
        self.conv = Conv2d(cin, cout, kernel, rng, stride=stride, depthwise=depthwise, spike_input=spike_input)
        self.bn = BatchNorm2d(cout)

    def forward(self, x):
        return self.bn(self.conv(x))


class SpikeNeuron(Module):
    def __init__(self, D):
        self.D = D

    def forward(self, x):
        out = spike(x, self.D)
        if _TRACE is not None:
            _TRACE.log_rate(self._name, out.data.mean())
        return out
