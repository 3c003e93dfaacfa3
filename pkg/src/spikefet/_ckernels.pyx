# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the kernels in ``_pykernels``.

Signatures and semantics match the numpy versions exactly; results agree to
floating-point summation order.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t _out_size(Py_ssize_t n, Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pad) nogil:
    return (n + 2 * pad - k) // stride + 1


def im2col(x, Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride, Py_ssize_t pad):
    cdef double[:, :, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], c = xv.shape[1], h = xv.shape[2], w = xv.shape[3]
    cdef Py_ssize_t ho = _out_size(h, kh, stride, pad), wo = _out_size(w, kw, stride, pad)
    out = np.zeros((n, c * kh * kw, ho * wo), dtype=np.float64)
    cdef double[:, :, ::1] ov = out
    cdef Py_ssize_t b, ci, i, j, oy, ox, iy, ix, row
    with nogil:
        for b in range(n):
            for ci in range(c):
                for i in range(kh):
                    for j in range(kw):
                        row = (ci * kh + i) * kw + j
                        for oy in range(ho):
                            iy = oy * stride + i - pad
                            if iy < 0 or iy >= h:
                                continue
                            for ox in range(wo):
                                ix = ox * stride + j - pad
                                if ix >= 0 and ix < w:
                                    ov[b, row, oy * wo + ox] = xv[b, ci, iy, ix]
    return out


def col2im(cols, Py_ssize_t n, Py_ssize_t c, Py_ssize_t h, Py_ssize_t w,
           Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride, Py_ssize_t pad):
    cdef Py_ssize_t ho = _out_size(h, kh, stride, pad), wo = _out_size(w, kw, stride, pad)
    cdef double[:, :, ::1] cv = np.ascontiguousarray(cols, dtype=np.float64).reshape(n, c * kh * kw, ho * wo)
    out = np.zeros((n, c, h, w), dtype=np.float64)
    cdef double[:, :, :, ::1] ov = out
    cdef Py_ssize_t b, ci, i, j, oy, ox, iy, ix, row
    with nogil:
        for b in range(n):
            for ci in range(c):
                for i in range(kh):
                    for j in range(kw):
                        row = (ci * kh + i) * kw + j
                        for oy in range(ho):
                            iy = oy * stride + i - pad
                            if iy < 0 or iy >= h:
                                continue
                            for ox in range(wo):
                                ix = ox * stride + j - pad
                                if ix >= 0 and ix < w:
                                    ov[b, ci, iy, ix] += cv[b, row, oy * wo + ox]
    return out


def dwconv_forward(x, wt, Py_ssize_t stride, Py_ssize_t pad):
    cdef double[:, :, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, :, ::1] wv = np.ascontiguousarray(wt, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], c = xv.shape[1], h = xv.shape[2], w = xv.shape[3]
    cdef Py_ssize_t kh = wv.shape[1], kw = wv.shape[2]
    cdef Py_ssize_t ho = _out_size(h, kh, stride, pad), wo = _out_size(w, kw, stride, pad)
    out = np.zeros((n, c, ho, wo), dtype=np.float64)
    cdef double[:, :, :, ::1] ov = out
    cdef Py_ssize_t b, ci, i, j, oy, ox, iy, ix
    cdef double acc
    with nogil:
        for b in range(n):
            for ci in range(c):
                for oy in range(ho):
                    for ox in range(wo):
                        acc = 0.0
                        for i in range(kh):
                            iy = oy * stride + i - pad
                            if iy < 0 or iy >= h:
                                continue
                            for j in range(kw):
                                ix = ox * stride + j - pad
                                if ix >= 0 and ix < w:
                                    acc = acc + xv[b, ci, iy, ix] * wv[ci, i, j]
                        ov[b, ci, oy, ox] = acc
    return out


def dwconv_backward(g, x, wt, Py_ssize_t stride, Py_ssize_t pad):
    cdef double[:, :, :, ::1] gv = np.ascontiguousarray(g, dtype=np.float64)
    cdef double[:, :, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, :, ::1] wv = np.ascontiguousarray(wt, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], c = xv.shape[1], h = xv.shape[2], w = xv.shape[3]
    cdef Py_ssize_t kh = wv.shape[1], kw = wv.shape[2]
    cdef Py_ssize_t ho = gv.shape[2], wo = gv.shape[3]
    dx = np.zeros((n, c, h, w), dtype=np.float64)
    dw = np.zeros((c, kh, kw), dtype=np.float64)
    cdef double[:, :, :, ::1] dxv = dx
    cdef double[:, :, ::1] dwv = dw
    cdef Py_ssize_t b, ci, i, j, oy, ox, iy, ix
    cdef double gval
    with nogil:
        for b in range(n):
            for ci in range(c):
                for oy in range(ho):
                    for ox in range(wo):
                        gval = gv[b, ci, oy, ox]
                        if gval == 0.0:
                            continue
                        for i in range(kh):
                            iy = oy * stride + i - pad
                            if iy < 0 or iy >= h:
                                continue
                            for j in range(kw):
                                ix = ox * stride + j - pad
                                if ix >= 0 and ix < w:
                                    dxv[b, ci, iy, ix] += gval * wv[ci, i, j]
                                    dwv[ci, i, j] += gval * xv[b, ci, iy, ix]
    return dx, dw


def bin_events(t, x, y, p, long long t0, long long t1, Py_ssize_t bins,
               Py_ssize_t height, Py_ssize_t width):
    cdef long long[::1] tv = np.ascontiguousarray(t, dtype=np.int64)
    cdef long long[::1] xv = np.ascontiguousarray(x, dtype=np.int64)
    cdef long long[::1] yv = np.ascontiguousarray(y, dtype=np.int64)
    cdef long long[::1] pv = np.ascontiguousarray(p, dtype=np.int64)
    out = np.zeros((bins, 2, height, width), dtype=np.float64)
    cdef double[:, :, :, ::1] ov = out
    cdef Py_ssize_t k, m = tv.shape[0]
    cdef long long b, span = t1 - t0
    with nogil:
        for k in range(m):
            if tv[k] < t0 or tv[k] >= t1:
                continue
            b = (bins * (tv[k] - t0)) // span
            ov[b, 1 if pv[k] < 0 else 0, yv[k], xv[k]] += 1.0
    return out
