# cython: boundscheck=False, wraparound=False, language_level=3
"""Python bindings for the direct convolution kernels in _convcore.c.

The C kernels run branch-free on physically padded buffers; this wrapper
owns the zero-padding of inputs and the cropping of input gradients.
"""
import numpy as np

from libc.stdint cimport int64_t


cdef extern from "_convcore.h" nogil:
    void conv2d_fwd_f32(const float *xp, const float *w, float *out,
                        int64_t N, int64_t Cin, int64_t Hp, int64_t Wp,
                        int64_t Cout, int64_t kh, int64_t kw,
                        int64_t Ho, int64_t Wo, int64_t stride, int64_t groups)
    void conv2d_fwd_f64(const double *xp, const double *w, double *out,
                        int64_t N, int64_t Cin, int64_t Hp, int64_t Wp,
                        int64_t Cout, int64_t kh, int64_t kw,
                        int64_t Ho, int64_t Wo, int64_t stride, int64_t groups)
    void conv2d_bwdx_gather_f32(const float *gyq, const float *w, float *gxp,
                                int64_t N, int64_t Cin, int64_t Hp, int64_t Wp,
                                int64_t Cout, int64_t kh, int64_t kw,
                                int64_t Hq, int64_t Wq, int64_t groups)
    void conv2d_bwdx_gather_f64(const double *gyq, const double *w, double *gxp,
                                int64_t N, int64_t Cin, int64_t Hp, int64_t Wp,
                                int64_t Cout, int64_t kh, int64_t kw,
                                int64_t Hq, int64_t Wq, int64_t groups)
    void conv2d_bwdx_scatter_f32(const float *gy, const float *w, float *gxp,
                                 int64_t N, int64_t Cin, int64_t Hp, int64_t Wp,
                                 int64_t Cout, int64_t kh, int64_t kw,
                                 int64_t Ho, int64_t Wo,
                                 int64_t stride, int64_t groups)
    void conv2d_bwdx_scatter_f64(const double *gy, const double *w, double *gxp,
                                 int64_t N, int64_t Cin, int64_t Hp, int64_t Wp,
                                 int64_t Cout, int64_t kh, int64_t kw,
                                 int64_t Ho, int64_t Wo,
                                 int64_t stride, int64_t groups)
    void conv2d_bwdw_f32(const float *gy, const float *xp, float *gw,
                         int64_t N, int64_t Cin, int64_t Hp, int64_t Wp,
                         int64_t Cout, int64_t kh, int64_t kw,
                         int64_t Ho, int64_t Wo, int64_t stride, int64_t groups)
    void conv2d_bwdw_f64(const double *gy, const double *xp, double *gw,
                         int64_t N, int64_t Cin, int64_t Hp, int64_t Wp,
                         int64_t Cout, int64_t kh, int64_t kw,
                         int64_t Ho, int64_t Wo, int64_t stride, int64_t groups)


cdef inline const float* fptr(const float[:, :, :, ::1] mv) nogil:
    return &mv[0, 0, 0, 0]

cdef inline const double* dptr(const double[:, :, :, ::1] mv) nogil:
    return &mv[0, 0, 0, 0]


def _padded(x, int pad):
    if pad == 0:
        return x
    n, c, h, w = x.shape
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
    xp[:, :, pad:pad + h, pad:pad + w] = x
    return xp


def conv2d_forward(x, w, int stride, int pad, int groups):
    cdef int64_t N = x.shape[0], Cin = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef int64_t Cout = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef int64_t Ho = (H + 2 * pad - kh) // stride + 1
    cdef int64_t Wo = (W + 2 * pad - kw) // stride + 1
    cdef int64_t Hp = H + 2 * pad, Wp = W + 2 * pad
    xp = _padded(x, pad)
    out = np.zeros((N, Cout, Ho, Wo), dtype=x.dtype)
    cdef const float[:, :, :, ::1] xf
    cdef const float[:, :, :, ::1] wf
    cdef float[:, :, :, ::1] of
    cdef const double[:, :, :, ::1] xd
    cdef const double[:, :, :, ::1] wd
    cdef double[:, :, :, ::1] od
    if x.dtype == np.float32:
        xf, wf, of = xp, w, out
        with nogil:
            conv2d_fwd_f32(fptr(xf), fptr(wf), &of[0, 0, 0, 0],
                           N, Cin, Hp, Wp, Cout, kh, kw, Ho, Wo, stride, groups)
    else:
        xd, wd, od = xp, w, out
        with nogil:
            conv2d_fwd_f64(dptr(xd), dptr(wd), &od[0, 0, 0, 0],
                           N, Cin, Hp, Wp, Cout, kh, kw, Ho, Wo, stride, groups)
    return out


def conv2d_backward(gy, x, w, int stride, int pad, int groups):
    """Fused input+weight gradients: returns (gx, gw)."""
    gx = _backward_input(gy, w, x.shape[2], x.shape[3], stride, pad, groups)
    gw = _backward_weight(gy, x, w.shape[2], w.shape[3], stride, pad, groups)
    return gx, gw


def _backward_input(gy, w, int64_t H, int64_t W, int stride, int pad, int groups):
    cdef int64_t N = gy.shape[0], Cout = gy.shape[1], Ho = gy.shape[2], Wo = gy.shape[3]
    cdef int64_t Cing = w.shape[1], kh = w.shape[2], kw = w.shape[3]
    cdef int64_t Cin = Cing * groups
    cdef int64_t Hp = H + 2 * pad, Wp = W + 2 * pad
    cdef int64_t Hq = Ho + 2 * (kh - 1), Wq = Wo + 2 * (kw - 1)
    gxp = np.zeros((N, Cin, Hp, Wp), dtype=gy.dtype)
    cdef const float[:, :, :, ::1] gyf
    cdef const float[:, :, :, ::1] wf
    cdef float[:, :, :, ::1] gxf
    cdef const double[:, :, :, ::1] gyd
    cdef const double[:, :, :, ::1] wd
    cdef double[:, :, :, ::1] gxd
    if stride == 1:
        gyq = np.zeros((N, Cout, Hq, Wq), dtype=gy.dtype)
        gyq[:, :, kh - 1:kh - 1 + Ho, kw - 1:kw - 1 + Wo] = gy
        if gy.dtype == np.float32:
            gyf, wf, gxf = gyq, w, gxp
            with nogil:
                conv2d_bwdx_gather_f32(fptr(gyf), fptr(wf), &gxf[0, 0, 0, 0],
                                       N, Cin, Hp, Wp, Cout, kh, kw, Hq, Wq, groups)
        else:
            gyd, wd, gxd = gyq, w, gxp
            with nogil:
                conv2d_bwdx_gather_f64(dptr(gyd), dptr(wd), &gxd[0, 0, 0, 0],
                                       N, Cin, Hp, Wp, Cout, kh, kw, Hq, Wq, groups)
    else:
        if gy.dtype == np.float32:
            gyf, wf, gxf = gy, w, gxp
            with nogil:
                conv2d_bwdx_scatter_f32(fptr(gyf), fptr(wf), &gxf[0, 0, 0, 0],
                                        N, Cin, Hp, Wp, Cout, kh, kw, Ho, Wo,
                                        stride, groups)
        else:
            gyd, wd, gxd = gy, w, gxp
            with nogil:
                conv2d_bwdx_scatter_f64(dptr(gyd), dptr(wd), &gxd[0, 0, 0, 0],
                                        N, Cin, Hp, Wp, Cout, kh, kw, Ho, Wo,
                                        stride, groups)
    if pad == 0:
        return gxp
    return np.ascontiguousarray(gxp[:, :, pad:pad + H, pad:pad + W])


def _backward_weight(gy, x, int64_t kh, int64_t kw, int stride, int pad, int groups):
    cdef int64_t N = gy.shape[0], Cout = gy.shape[1], Ho = gy.shape[2], Wo = gy.shape[3]
    cdef int64_t Cin = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef int64_t Hp = H + 2 * pad, Wp = W + 2 * pad
    xp = _padded(x, pad)
    gw = np.zeros((Cout, Cin // groups, kh, kw), dtype=gy.dtype)
    cdef const float[:, :, :, ::1] gyf
    cdef const float[:, :, :, ::1] xf
    cdef float[:, :, :, ::1] gwf
    cdef const double[:, :, :, ::1] gyd
    cdef const double[:, :, :, ::1] xd
    cdef double[:, :, :, ::1] gwd
    if gy.dtype == np.float32:
        gyf, xf, gwf = gy, xp, gw
        with nogil:
            conv2d_bwdw_f32(fptr(gyf), fptr(xf), &gwf[0, 0, 0, 0],
                            N, Cin, Hp, Wp, Cout, kh, kw, Ho, Wo, stride, groups)
    else:
        gyd, xd, gwd = gy, xp, gw
        with nogil:
            conv2d_bwdw_f64(dptr(gyd), dptr(xd), &gwd[0, 0, 0, 0],
                            N, Cin, Hp, Wp, Cout, kh, kw, Ho, Wo, stride, groups)
    return gw
