"""Convolution kernel lanes.

Three interchangeable implementations of the grouped 2-D cross-correlation
(forward and fused backward):

* ``cython`` — compiled direct kernels from :mod:`scanet._convext`, running
  branch-free over physically padded buffers. Summation order is fixed in
  the source (ascending in-channel/kernel-row, taps fused left-to-right),
  so results are bit-stable across builds and thread counts. Fastest when
  the output rows are long (large spatial extent, few channels).
* ``numpy`` — pure-NumPy fallback: im2col + BLAS matmul. Mathematically the
  same cross-correlation; per-element reduction order is the BLAS build's,
  fixed per platform and run-to-run deterministic. Fastest when channel
  counts dominate (small spatial extent).
* ``auto`` (default) — picks per call site by output-row length, using the
  compiled lane for long rows and the BLAS lane otherwise. The dispatch
  depends only on tensor shapes, so a given network always runs the same
  mix deterministically.

``SCANET_KERNELS=auto|cython|numpy`` selects the lane at import.
``python -m scanet.bench`` times the lanes against each other.
"""

import os

import numpy as np

try:
    from . import _convext
except ImportError:  # extension not built; fallback lane only
    _convext = None

# measured crossover on the reference box: the direct kernels win for 3x3
# stride-1 convolutions with output rows of >= 32 elements (long branch-free
# bodies); BLAS wins for strided, 1x1, and channel-heavy small-spatial cases
_ROW_CUTOVER = 32


def _direct_wins(wo, kw, stride):
    return stride == 1 and kw == 3 and wo >= _ROW_CUTOVER


def _out_extent(extent, k, stride, pad):
    return (extent + 2 * pad - k) // stride + 1


def _padded(x, pad):
    if pad == 0:
        return x
    n, c, h, w = x.shape
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
    xp[:, :, pad:pad + h, pad:pad + w] = x
    return xp


def _im2col(xg, kh, kw, ho, wo, stride):
    """[N, C, Hp, Wp] -> [C*kh*kw, N*ho*wo] patch matrix."""
    n, c = xg.shape[:2]
    cols = np.empty((c, kh, kw, n, ho, wo), dtype=xg.dtype)
    for i in range(kh):
        for j in range(kw):
            src = xg[:, :, i:i + (ho - 1) * stride + 1:stride,
                     j:j + (wo - 1) * stride + 1:stride]
            cols[:, i, j] = src.transpose(1, 0, 2, 3)
    return cols.reshape(c * kh * kw, n * ho * wo)


def _np_conv2d_forward(x, w, stride, pad, groups):
    n, cin, h, wid = x.shape
    cout, cing, kh, kw = w.shape
    ho, wo = _out_extent(h, kh, stride, pad), _out_extent(wid, kw, stride, pad)
    if kh == kw == 1 and pad == 0 and groups == 1:
        xs = x if stride == 1 else np.ascontiguousarray(
            x[:, :, ::stride, ::stride])
        y = np.matmul(w.reshape(cout, cin), xs.reshape(n, cin, -1))
        return y.reshape(n, cout, ho, wo)
    xp = _padded(x, pad)
    cog = cout // groups
    out = np.empty((n, cout, ho, wo), dtype=x.dtype)
    for g in range(groups):
        ci0, co0 = g * cing, g * cog
        cols = _im2col(xp[:, ci0:ci0 + cing], kh, kw, ho, wo, stride)
        y = w[co0:co0 + cog].reshape(cog, -1) @ cols
        out[:, co0:co0 + cog] = y.reshape(cog, n, ho, wo).transpose(1, 0, 2, 3)
    return out


def _np_conv2d_backward(gy, x, w, stride, pad, groups):
    n, cout, ho, wo = gy.shape
    cout_, cing, kh, kw = w.shape
    h, wid = x.shape[2], x.shape[3]
    cog = cout // groups
    if kh == kw == 1 and pad == 0 and groups == 1:
        cin = x.shape[1]
        xs = x if stride == 1 else np.ascontiguousarray(
            x[:, :, ::stride, ::stride])
        gym = gy.reshape(n, cout, -1)
        xm = xs.reshape(n, cin, -1)
        w2 = w.reshape(cout, cin)
        gw = np.tensordot(gym, xm, axes=([0, 2], [0, 2])).reshape(w.shape)
        gxs = np.matmul(w2.T, gym).reshape(xs.shape)
        if stride == 1:
            return gxs, gw
        gx = np.zeros_like(x)
        gx[:, :, ::stride, ::stride] = gxs
        return gx, gw
    xp = _padded(x, pad)
    gxp = np.zeros_like(xp)
    gw = np.empty_like(w)
    for g in range(groups):
        ci0, co0 = g * cing, g * cog
        cols = _im2col(xp[:, ci0:ci0 + cing], kh, kw, ho, wo, stride)
        gyf = np.ascontiguousarray(
            gy[:, co0:co0 + cog].transpose(1, 0, 2, 3)).reshape(cog, -1)
        gw[co0:co0 + cog] = (gyf @ cols.T).reshape(cog, cing, kh, kw)
        gcols = w[co0:co0 + cog].reshape(cog, -1).T @ gyf
        c6 = gcols.reshape(cing, kh, kw, n, ho, wo)
        for i in range(kh):
            for j in range(kw):
                gxp[:, ci0:ci0 + cing,
                    i:i + (ho - 1) * stride + 1:stride,
                    j:j + (wo - 1) * stride + 1:stride] += \
                    c6[:, i, j].transpose(1, 0, 2, 3)
    if pad == 0:
        return gxp, gw
    return np.ascontiguousarray(gxp[:, :, pad:pad + h, pad:pad + wid]), gw


def _ext_conv2d_forward(x, w, stride, pad, groups):
    return _convext.conv2d_forward(x, w, stride, pad, groups)


def _ext_conv2d_backward(gy, x, w, stride, pad, groups):
    return _convext.conv2d_backward(gy, x, w, stride, pad, groups)


def _auto_conv2d_forward(x, w, stride, pad, groups):
    wo = _out_extent(x.shape[3], w.shape[3], stride, pad)
    if _direct_wins(wo, w.shape[3], stride):
        return _ext_conv2d_forward(x, w, stride, pad, groups)
    return _np_conv2d_forward(x, w, stride, pad, groups)


def _auto_conv2d_backward(gy, x, w, stride, pad, groups):
    if _direct_wins(gy.shape[3], w.shape[3], stride):
        return _ext_conv2d_backward(gy, x, w, stride, pad, groups)
    return _np_conv2d_backward(gy, x, w, stride, pad, groups)


_REQUESTED = os.environ.get("SCANET_KERNELS", "auto")
if _REQUESTED not in ("auto", "cython", "numpy"):
    raise ValueError(f"SCANET_KERNELS must be auto|cython|numpy, got {_REQUESTED!r}")
if _REQUESTED == "cython" and _convext is None:
    raise ImportError("SCANET_KERNELS=cython but scanet._convext is not built")

if _convext is None or _REQUESTED == "numpy":
    _LANE = "numpy"
    conv2d_forward = _np_conv2d_forward
    conv2d_backward = _np_conv2d_backward
elif _REQUESTED == "cython":
    _LANE = "cython"
    conv2d_forward = _ext_conv2d_forward
    conv2d_backward = _ext_conv2d_backward
else:
    _LANE = "auto"
    conv2d_forward = _auto_conv2d_forward
    conv2d_backward = _auto_conv2d_backward


def lane():
    """Name of the active kernel lane: 'auto', 'cython' or 'numpy'."""
    return _LANE


def lanes():
    """Importable lanes as {name: (forward, backward)}."""
    out = {"numpy": (_np_conv2d_forward, _np_conv2d_backward)}
    if _convext is not None:
        out["cython"] = (_ext_conv2d_forward, _ext_conv2d_backward)
        out["auto"] = (_auto_conv2d_forward, _auto_conv2d_backward)
    return out
