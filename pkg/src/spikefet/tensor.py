"""Minimal reverse-mode autodiff over float64 numpy arrays.

Each op builds its output eagerly and attaches a closure mapping the output
gradient to one gradient per parent. Graph recording is skipped entirely
when no parent needs a gradient or inside :func:`no_grad`.
"""
import contextlib

import numpy as np

from . import kernels

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")
    # make numpy defer to the reflected Tensor operators
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        if grad is None:
            grad = np.ones_like(self.data)
        order, seen = [], set()

        def visit(node):
            stack = [(node, False)]
            while stack:
                cur, done = stack.pop()
                if done:
                    order.append(cur)
                    continue
                if id(cur) in seen:
                    continue
                seen.add(id(cur))
                stack.append((cur, True))
                for par in cur._parents:
                    if par.requires_grad and id(par) not in seen:
                        stack.append((par, False))

        visit(self)
        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for par, pg in zip(node._parents, node._backward(g)):
                if pg is None or not par.requires_grad:
                    continue
                key = id(par)
                grads[key] = pg if key not in grads else grads[key] + pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, k):
        return power(self, k)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward):
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ----------------------------------------------------------------- elementwise


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return _make(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)),
    )


def power(a, k):
    a = as_tensor(a)
    return _make(a.data**k, (a,), lambda g: (g * k * a.data ** (k - 1),))


def log(a):
    a = as_tensor(a)
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def sigmoid(a):
    a = as_tensor(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def tabs(a):
    a = as_tensor(a)
    return _make(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def clip(a, lo, hi):
    """Clamp with zero gradient outside [lo, hi]."""
    a = as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,))


def maximum(a, b):
    a, b = as_tensor(a), as_tensor(b)
    pick = a.data >= b.data
    return _make(
        np.where(pick, a.data, b.data),
        (a, b),
        lambda g: (_unbroadcast(g * pick, a.shape), _unbroadcast(g * ~pick, b.shape)),
    )


def minimum(a, b):
    a, b = as_tensor(a), as_tensor(b)
    pick = a.data <= b.data
    return _make(
        np.where(pick, a.data, b.data),
        (a, b),
        lambda g: (_unbroadcast(g * pick, a.shape), _unbroadcast(g * ~pick, b.shape)),
    )


def where(mask, a, b):
    a, b = as_tensor(a), as_tensor(b)
    mask = np.asarray(mask, dtype=bool)
    return _make(
        np.where(mask, a.data, b.data),
        (a, b),
        lambda g: (_unbroadcast(g * mask, a.shape), _unbroadcast(g * ~mask, b.shape)),
    )


# ----------------------------------------------------------------- reductions & shape


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    n = a.data.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
    return tsum(a, axis, keepdims) * (1.0 / n)


def reshape(a, shape):
    a = as_tensor(a)
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes):
    a = as_tensor(a)
    inv = np.argsort(axes)
    return _make(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def getitem(a, idx):
    a = as_tensor(a)

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g) if _fancy(idx) else full.__setitem__(idx, g)
        return (full,)

    return _make(a.data[idx], (a,), backward)


def _fancy(idx):
    items = idx if isinstance(idx, tuple) else (idx,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]
    return _make(
        np.concatenate([t.data for t in tensors], axis=axis),
        tensors,
        lambda g: tuple(np.split(g, cuts, axis=axis)),
    )


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(a.data @ b.data, (a, b), backward)


# ----------------------------------------------------------------- convolution


def conv_output_size(n, kernel, stride, padding):
    return (n + 2 * padding - kernel) // stride + 1


def conv2d(x, w, bias=None, stride=1, padding=0, depthwise=False):
    """2-D cross-correlation with zero padding.

    x is [N, C_in, H, W]. Standard kernels are [C_out, C_in, kh, kw];
    depthwise kernels are [C, 1, kh, kw] with C_out == C_in.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4:
        raise ShapeError(f"conv2d input must be 4-D [N, C, H, W], got shape {x.shape}")
    if w.ndim != 4:
        raise ShapeError(f"conv2d kernel must be 4-D, got shape {w.shape}")
    n, c, h, wd = x.shape
    co, ci, kh, kw = w.shape
    if depthwise:
        if ci != 1 or co != c:
            raise ShapeError(f"depthwise kernel {w.shape} does not match input channel axis C={c}")
    elif ci != c:
        raise ShapeError(f"channel axis mismatch: input C={c}, kernel expects C_in={ci}")
    if padding < 0 or stride < 1:
        raise ShapeError("padding must be >= 0 and stride >= 1")
    ho = conv_output_size(h, kh, stride, padding)
    wo = conv_output_size(wd, kw, stride, padding)
    if ho < 1:
        raise ShapeError(f"height axis too small: H={h}, kernel={kh}, padding={padding}")
    if wo < 1:
        raise ShapeError(f"width axis too small: W={wd}, kernel={kw}, padding={padding}")
    xd = np.ascontiguousarray(x.data)
    if bias is not None:
        bias = as_tensor(bias)
    parents = (x, w) if bias is None else (x, w, bias)

    if depthwise:
        wk = np.ascontiguousarray(w.data[:, 0])
        out = kernels.dwconv_forward(xd, wk, stride, padding)
        if bias is not None:
            out += bias.data[None, :, None, None]

        def backward(g):
            g = np.ascontiguousarray(g)
            dx, dwk = kernels.dwconv_backward(g, xd, wk, stride, padding)
            grads = (dx, dwk[:, None])
            return grads if bias is None else grads + (g.sum(axis=(0, 2, 3)),)

        return _make(out, parents, backward)

    wm = w.data.reshape(co, -1)
    if kh == 1 and kw == 1 and stride == 1 and padding == 0:
        cols = xd.reshape(n, c, h * wd)
    else:
        cols = kernels.im2col(xd, kh, kw, stride, padding)
    out = np.matmul(wm, cols).reshape(n, co, ho, wo)
    if bias is not None:
        out += bias.data[None, :, None, None]

    def backward(g):
        gm = g.reshape(n, co, ho * wo)
        dw = np.tensordot(gm, cols, axes=([0, 2], [0, 2])).reshape(w.shape)
        dcols = np.matmul(wm.T, gm)
        if kh == 1 and kw == 1 and stride == 1 and padding == 0:
            dx = dcols.reshape(x.shape)
        else:
            dx = kernels.col2im(dcols, n, c, h, wd, kh, kw, stride, padding)
        grads = (dx, dw)
        return grads if bias is None else grads + (g.sum(axis=(0, 2, 3)),)

    return _make(out, parents, backward)


def batch_norm(x, gamma, beta, running_mean, running_var, training, momentum=0.1, eps=1e-5):
    """Per-channel batch norm over (N, H, W); updates running stats in place when training."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    c = x.shape[1]
    shp = (1, c, 1, 1)
    if training:
        m = x.data.shape[0] * x.data.shape[2] * x.data.shape[3]
        mu = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var * (m / max(m - 1, 1))
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (x.data - mu.reshape(shp)) * inv.reshape(shp)
        out = xhat * gamma.data.reshape(shp) + beta.data.reshape(shp)

        def backward(g):
            dgamma = (g * xhat).sum(axis=(0, 2, 3))
            dbeta = g.sum(axis=(0, 2, 3))
            gx = g * gamma.data.reshape(shp)
            dx = (inv.reshape(shp) / m) * (
                m * gx - gx.sum(axis=(0, 2, 3), keepdims=True) - xhat * (gx * xhat).sum(axis=(0, 2, 3), keepdims=True)
            )
            return dx, dgamma, dbeta

        return _make(out, (x, gamma, beta), backward)

    inv = 1.0 / np.sqrt(running_var + eps)
    xhat = (x.data - running_mean.reshape(shp)) * inv.reshape(shp)
    out = xhat * gamma.data.reshape(shp) + beta.data.reshape(shp)

    def backward(g):
        return (
            g * (gamma.data * inv).reshape(shp),
            (g * xhat).sum(axis=(0, 2, 3)),
            g.sum(axis=(0, 2, 3)),
        )

    return _make(out, (x, gamma, beta), backward)


# ----------------------------------------------------------------- gradient oracle


def grad_check(f, x, eps=1e-4, analytic=None):
    """Max relative error between the analytic gradient of scalar ``f`` at ``x``
    and central differences.

    ``f`` maps a Tensor to a scalar Tensor. Relative error per coordinate is
    ``|analytic - numeric| / max(1, |numeric|)``.
    """
    if not 1e-4 <= eps <= 1e-2:
        raise ValueError("eps must lie in [1e-4, 1e-2]")
    x0 = np.array(as_tensor(x).data, dtype=np.float64)
    xt = Tensor(x0.copy(), requires_grad=True)
    y = f(xt)
    if not np.all(np.isfinite(y.data)):
        raise FloatingPointError("f(x) is not finite")
    if analytic is None:
        y.backward()
        analytic = np.zeros_like(x0) if xt.grad is None else xt.grad
    numeric = np.zeros_like(x0)
    flat = numeric.reshape(-1)
    probe = x0.copy()
    pflat = probe.reshape(-1)
    with no_grad():
        for i in range(pflat.size):
            orig = pflat[i]
            pflat[i] = orig + eps
            fp = float(f(Tensor(probe)).data)
            pflat[i] = orig - eps
            fm = float(f(Tensor(probe)).data)
            pflat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise FloatingPointError("f is not finite near x")
            flat[i] = (fp - fm) / (2.0 * eps)
    err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))
    return float(err.max()) if err.size else 0.0
