"""Pure numpy implementations of the hot kernels.

Every function here has a twin in ``_ckernels.pyx`` with the same signature
and semantics. Inputs are float64 C-contiguous arrays; outputs are freshly
allocated.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _out_size(n, k, stride, pad):
    return (n + 2 * pad - k) // stride + 1


def im2col(x, kh, kw, stride, pad):
    """[N, C, H, W] -> [N, C*kh*kw, Ho*Wo] patch matrix (zero padding)."""
    n, c, h, w = x.shape
    ho, wo = _out_size(h, kh, stride, pad), _out_size(w, kw, stride, pad)
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win[:, :, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]
    # [N, C, Ho, Wo, kh, kw] -> [N, C, kh, kw, Ho, Wo]
    cols = np.ascontiguousarray(win.transpose(0, 1, 4, 5, 2, 3))
    return cols.reshape(n, c * kh * kw, ho * wo)


def col2im(cols, n, c, h, w, kh, kw, stride, pad):
    """Adjoint of :func:`im2col`: scatter-add patches back onto the image."""
    ho, wo = _out_size(h, kh, stride, pad), _out_size(w, kw, stride, pad)
    cols = cols.reshape(n, c, kh, kw, ho, wo)
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad))
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += cols[:, :, i, j]
    return np.ascontiguousarray(xp[:, :, pad : pad + h, pad : pad + w])


def dwconv_forward(x, w, stride, pad):
    """Depthwise convolution, x [N, C, H, W], w [C, kh, kw]."""
    n, c, h, wd = x.shape
    _, kh, kw = w.shape
    ho, wo = _out_size(h, kh, stride, pad), _out_size(wd, kw, stride, pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    out = np.zeros((n, c, ho, wo))
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
            out += patch * w[None, :, i, j, None, None]
    return out


def dwconv_backward(g, x, w, stride, pad):
    """Gradients of :func:`dwconv_forward` wrt input and kernel."""
    n, c, h, wd = x.shape
    _, kh, kw = w.shape
    ho, wo = g.shape[2], g.shape[3]
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    dxp = np.zeros_like(xp)
    dw = np.zeros_like(w)
    for i in range(kh):
        for j in range(kw):
            sl = (slice(None), slice(None), slice(i, i + stride * ho, stride), slice(j, j + stride * wo, stride))
            dw[:, i, j] = np.einsum("nchw,nchw->c", g, xp[sl])
            dxp[sl] += g * w[None, :, i, j, None, None]
    dx = np.ascontiguousarray(dxp[:, :, pad : pad + h, pad : pad + wd]) if pad else dxp
    return dx, dw


def bin_events(t, x, y, p, t0, t1, bins, height, width):
    """Count events into [bins, 2, H, W]; channel 0 is positive polarity.

    Timestamps are int64 microseconds; the bin index is computed with
    integer floor division so an event sitting on a bin edge lands in the
    later bin.
    """
    t = np.asarray(t, dtype=np.int64)
    keep = (t >= t0) & (t < t1)
    t, x, y, p = t[keep], np.asarray(x)[keep], np.asarray(y)[keep], np.asarray(p)[keep]
    b = (bins * (t - t0)) // (t1 - t0)
    ch = (p < 0).astype(np.int64)
    flat = ((b * 2 + ch) * height + y.astype(np.int64)) * width + x.astype(np.int64)
    counts = np.bincount(flat, minlength=bins * 2 * height * width)
    return counts.astype(np.float64).reshape(bins, 2, height, width)
