"""Minimal deterministic tensor engine with tape-based reverse-mode gradients.

Tensors wrap C-contiguous NumPy arrays of rank <= 4 in batch/channel/
height/width order (W fastest-varying). Primitive operations execute
eagerly; when a :class:`Tape` is active they also record a node holding the
inputs, the output, and a backward rule. :func:`backward` replays the tape
once in reverse, accumulating gradients into every :class:`Parameter` that
participated. With no tape active the same functions run in inference mode
at zero bookkeeping cost.

Reference precision is float64 (default); training code passes float32
explicitly. All reductions either run in NumPy's fixed internal order or in
the kernel lane's documented order, so identical inputs give bit-identical
outputs run to run.
"""

import numpy as np

from . import kernels


class ShapeError(ValueError):
    """A tensor argument has an incompatible shape or extent."""


class NonFiniteError(ArithmeticError):
    """A computation produced or received NaN/Inf values."""


_TAPE_STACK = []


def _active_tape():
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class Tensor:
    """Rank-<=4 real array, row-major, W fastest-varying."""

    __slots__ = ("data", "param")

    def __init__(self, data, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        if arr.ndim > 4:
            raise ShapeError(f"tensor rank {arr.ndim} exceeds 4")
        self.data = np.ascontiguousarray(arr)
        self.param = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name})"

    def _coerce(self, other):
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.dtype))

    def __add__(self, other):
        return add(self, self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, self._coerce(other))

    def __rsub__(self, other):
        return sub(self._coerce(other), self)

    def __mul__(self, other):
        return mul(self, self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, self._coerce(other))

    def __neg__(self):
        return neg(self)

    def sum(self):
        return sum_all(self)

    def mean(self):
        return mean_all(self)

    def reshape(self, shape):
        return reshape(self, shape)


class Parameter:
    """A named learnable tensor with a persistent gradient slot."""

    def __init__(self, value, name):
        self.value = value if isinstance(value, Tensor) else Tensor(value)
        self.value.param = self
        self.grad = Tensor(np.zeros_like(self.value.data))
        self.name = name

    def zero_grad(self):
        self.grad.data[...] = 0.0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


class Tape:
    """Ordered record of executed primitives, topological by construction."""

    def __init__(self):
        self.nodes = []
        self._output_ids = set()

    def record(self, inputs, output, backward_fn):
        self.nodes.append((inputs, output, backward_fn))
        self._output_ids.add(id(output))

    def produced(self, t):
        return id(t) in self._output_ids

    def __len__(self):
        return len(self.nodes)

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False


def backward(tape, loss):
    """Accumulate d(loss)/d(param) into every Parameter used on the tape.

    The reverse sweep visits each node exactly once; gradients of
    non-parameter intermediates are dropped as soon as their producing node
    has been processed. Parameters never touched by the tape keep whatever
    is in their grad slot (the training loop zeroes grads beforehand, so
    disconnected parameters read as zero).
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not tape.produced(loss):
        raise ValueError("loss tensor was not produced on this tape")
    grads = {id(loss): np.ones_like(loss.data)}
    leaves = {}
    for inputs, output, backward_fn in reversed(tape.nodes):
        gy = grads.pop(id(output), None)
        if gy is None:
            continue
        for t, g in zip(inputs, backward_fn(gy)):
            if g is None:
                continue
            acc = grads.get(id(t))
            grads[id(t)] = g if acc is None else acc + g
            if t.param is not None:
                leaves[id(t)] = t
    for key, t in leaves.items():
        t.param.grad.data += grads[key]


def _emit(inputs, out_data, backward_fn):
    out = Tensor(out_data)
    tape = _active_tape()
    if tape is not None:
        tape.record(tuple(inputs), out, backward_fn)
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    keep = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if keep:
        g = g.sum(axis=keep, keepdims=True)
    return g


def _check_same_dtype(name, *tensors):
    dt = tensors[0].dtype
    for t in tensors[1:]:
        if t.dtype != dt:
            raise ShapeError(f"{name}: mixed dtypes {dt.name} vs {t.dtype.name}")


# ---------------------------------------------------------------------------
# elementwise / structural primitives


def add(a, b):
    _check_same_dtype("add", a, b)
    out = a.data + b.data

    def bwd(gy):
        return _unbroadcast(gy, a.data.shape), _unbroadcast(gy, b.data.shape)

    return _emit((a, b), out, bwd)


def sub(a, b):
    _check_same_dtype("sub", a, b)
    out = a.data - b.data

    def bwd(gy):
        return _unbroadcast(gy, a.data.shape), _unbroadcast(-gy, b.data.shape)

    return _emit((a, b), out, bwd)


def mul(a, b):
    _check_same_dtype("mul", a, b)
    out = a.data * b.data

    def bwd(gy):
        return (_unbroadcast(gy * b.data, a.data.shape),
                _unbroadcast(gy * a.data, b.data.shape))

    return _emit((a, b), out, bwd)


def div(a, b):
    _check_same_dtype("div", a, b)
    out = a.data / b.data

    def bwd(gy):
        return (_unbroadcast(gy / b.data, a.data.shape),
                _unbroadcast(-gy * a.data / (b.data * b.data), b.data.shape))

    return _emit((a, b), out, bwd)


def neg(a):
    return _emit((a,), -a.data, lambda gy: (-gy,))


def log(a):
    out = np.log(a.data)

    def bwd(gy):
        return (gy / a.data,)

    return _emit((a,), out, bwd)


def clip(a, lo, hi):
    out = np.clip(a.data, lo, hi)
    inside = (a.data > lo) & (a.data < hi)

    def bwd(gy):
        return (gy * inside,)

    return _emit((a,), out, bwd)


def sum_all(a):
    shape, dtype = a.data.shape, a.dtype

    def bwd(gy):
        return (np.full(shape, gy, dtype=dtype),)

    return _emit((a,), a.data.sum(), bwd)


def mean_all(a):
    shape, dtype = a.data.shape, a.dtype
    n = a.size

    def bwd(gy):
        return (np.full(shape, gy / n, dtype=dtype),)

    return _emit((a,), a.data.mean(), bwd)


def reshape(a, shape):
    old = a.data.shape
    out = a.data.reshape(shape)

    def bwd(gy):
        return (gy.reshape(old),)

    return _emit((a,), out, bwd)


def narrow(a, axis, start, stop):
    """Contiguous slice along one axis."""
    if not 0 <= start < stop <= a.data.shape[axis]:
        raise ShapeError(f"narrow: [{start},{stop}) out of range for axis {axis} "
                         f"of extent {a.data.shape[axis]}")
    index = tuple(slice(None) if i != axis else slice(start, stop)
                  for i in range(a.ndim))
    out = a.data[index]

    def bwd(gy):
        gx = np.zeros_like(a.data)
        gx[index] = gy
        return (gx,)

    return _emit((a,), out, bwd)


def concat(tensors, axis):
    _check_same_dtype("concat", *tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    extents = [t.data.shape[axis] for t in tensors]

    def bwd(gy):
        grads, at = [], 0
        for e in extents:
            index = tuple(slice(None) if i != axis else slice(at, at + e)
                          for i in range(gy.ndim))
            grads.append(np.ascontiguousarray(gy[index]))
            at += e
        return tuple(grads)

    return _emit(tuple(tensors), out, bwd)


# ---------------------------------------------------------------------------
# activations


def activation(a, kind):
    """Elementwise nonlinearity, kind in {'relu', 'sigmoid'}.

    Sigmoid uses the branch form (no exp of large positives) and clamps the
    result into the open interval (0, 1) at one ulp, so saturated inputs
    stay finite and strictly inside the gate codomain.
    """
    if kind == "relu":
        out = np.maximum(a.data, 0)
        mask = a.data > 0

        def bwd(gy):
            return (gy * mask,)

        return _emit((a,), out, bwd)
    if kind == "sigmoid":
        z = a.data
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        one = np.array(1.0, dtype=z.dtype)
        np.clip(out, np.finfo(z.dtype).tiny, np.nextafter(one, 0.0), out=out)

        def bwd(gy):
            return (gy * out * (1.0 - out),)

        return _emit((a,), out, bwd)
    raise ValueError(f"unknown activation kind {kind!r}")


def relu(a):
    return activation(a, "relu")


def sigmoid(a):
    return activation(a, "sigmoid")


# ---------------------------------------------------------------------------
# affine maps


def dense(x, w, b):
    """Affine map over the last axis: y[..., o] = sum_i x[..., i] w[o, i] + b[o]."""
    _check_same_dtype("dense", x, w, b)
    if w.ndim != 2 or b.ndim != 1 or b.shape[0] != w.shape[0]:
        raise ShapeError(f"dense: weight {w.shape} / bias {b.shape} malformed")
    cin = w.shape[1]
    if x.shape[-1] != cin:
        raise ShapeError(f"dense: input last extent {x.shape[-1]} != Cin {cin}")
    out = x.data @ w.data.T + b.data

    def bwd(gy):
        gyf = gy.reshape(-1, w.shape[0])
        xf = x.data.reshape(-1, cin)
        return gy @ w.data, gyf.T @ xf, gyf.sum(axis=0)

    return _emit((x, w, b), out, bwd)


def channel_dense(x, w, b):
    """Affine map over the channel axis (axis 1), applied at every position.

    Equivalent to a 1x1 convolution on [N, C, ...] data.
    """
    _check_same_dtype("channel_dense", x, w, b)
    if x.ndim < 2:
        raise ShapeError("channel_dense: input needs a channel axis")
    n, c = x.shape[0], x.shape[1]
    if w.shape[1] != c:
        raise ShapeError(f"channel_dense: weight expects Cin {w.shape[1]}, input has {c}")
    spatial = x.shape[2:]
    xm = x.data.reshape(n, c, -1)
    out = (np.matmul(w.data, xm) + b.data[:, None]).reshape(n, w.shape[0], *spatial)

    def bwd(gy):
        gym = gy.reshape(n, w.shape[0], -1)
        gx = np.matmul(w.data.T, gym).reshape(x.data.shape)
        gw = np.tensordot(gym, xm, axes=([0, 2], [0, 2]))
        return gx, gw, gym.sum(axis=(0, 2))

    return _emit((x, w, b), out, bwd)


def conv2d(x, w, b, stride=1, pad=0, groups=1):
    """Grouped 2-D cross-correlation (no kernel flip) with bias.

    x: [N, Cin, H, W]; w: [Cout, Cin/groups, kh, kw]; b: [Cout].
    """
    _check_same_dtype("conv2d", x, w, b)
    if x.ndim != 4:
        raise ShapeError(f"conv2d: input rank {x.ndim} != 4")
    if w.ndim != 4:
        raise ShapeError(f"conv2d: weight rank {w.ndim} != 4")
    if stride < 1:
        raise ShapeError(f"conv2d: stride {stride} < 1")
    if pad < 0:
        raise ShapeError(f"conv2d: pad {pad} < 0")
    n, cin, h, wid = x.shape
    cout, cing, kh, kw = w.shape
    if cin % groups or cout % groups:
        raise ShapeError(f"conv2d: channels in={cin} out={cout} not divisible "
                         f"by groups={groups}")
    if cing != cin // groups:
        raise ShapeError(f"conv2d: weight in-channels {cing} != Cin/groups "
                         f"{cin // groups}")
    if b.shape != (cout,):
        raise ShapeError(f"conv2d: bias shape {b.shape} != ({cout},)")
    if h + 2 * pad < kh or wid + 2 * pad < kw:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} exceeds padded input "
                         f"{h + 2 * pad}x{wid + 2 * pad}")
    out = kernels.conv2d_forward(x.data, w.data, stride, pad, groups)
    out += b.data.reshape(1, cout, 1, 1)

    def bwd(gy):
        gy = np.ascontiguousarray(gy)
        gx, gw = kernels.conv2d_backward(gy, x.data, w.data, stride, pad, groups)
        return gx, gw, gy.sum(axis=(0, 2, 3))

    return _emit((x, w, b), out, bwd)


# ---------------------------------------------------------------------------
# pooling / strip plumbing


def global_avg_pool(x):
    """Mean over both spatial axes: [N, C, H, W] -> [N, C]."""
    if x.ndim != 4:
        raise ShapeError(f"global_avg_pool: input rank {x.ndim} != 4")
    n, c, h, w = x.shape
    out = x.data.mean(axis=(2, 3))

    def bwd(gy):
        return (np.broadcast_to(gy[:, :, None, None], (n, c, h, w)) * (1.0 / (h * w)),)

    return _emit((x,), out, bwd)


def mean_over_w(x):
    """Row descriptor: mean over W, [N, C, H, W] -> [N, C, H]."""
    w = x.shape[3]

    def bwd(gy):
        return (np.broadcast_to(gy[:, :, :, None], x.shape) * (1.0 / w),)

    return _emit((x,), x.data.mean(axis=3), bwd)


def mean_over_h(x):
    """Column descriptor: mean over H, [N, C, H, W] -> [N, C, W]."""
    h = x.shape[2]

    def bwd(gy):
        return (np.broadcast_to(gy[:, :, None, :], x.shape) * (1.0 / h),)

    return _emit((x,), x.data.mean(axis=2), bwd)


def directional_avg_pool(x):
    """Directional strip pooling: returns (s_h [N,C,H], s_w [N,C,W]).

    s_h pools each row with a (1, W) kernel, s_w each column with (H, 1).
    """
    if x.ndim != 4:
        raise ShapeError(f"directional_avg_pool: input rank {x.ndim} != 4")
    return mean_over_w(x), mean_over_h(x)


def concat_strip(sh, sw):
    """Join the two directional descriptors along the spatial axis, h first."""
    if sh.ndim != 3 or sw.ndim != 3:
        raise ShapeError("concat_strip: inputs must be [N, C, L]")
    if sh.shape[0] != sw.shape[0]:
        raise ShapeError(f"concat_strip: batch {sh.shape[0]} != {sw.shape[0]}")
    if sh.shape[1] != sw.shape[1]:
        raise ShapeError(f"concat_strip: channels {sh.shape[1]} != {sw.shape[1]}")
    return concat((sh, sw), axis=2)


def split_strip(strip, h):
    """Exact inverse of concat_strip: ([N,C,H+W], H) -> ([N,C,H], [N,C,W])."""
    if strip.ndim != 3:
        raise ShapeError("split_strip: input must be [N, C, H+W]")
    length = strip.shape[2]
    if not 1 <= h < length:
        raise ShapeError(f"split_strip: H={h} out of range for strip length {length}")
    return narrow(strip, 2, 0, h), narrow(strip, 2, h, length)


def upsample_nearest2(x):
    """Nearest-neighbour doubling of both spatial extents."""
    if x.ndim != 4:
        raise ShapeError(f"upsample_nearest2: input rank {x.ndim} != 4")
    n, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def bwd(gy):
        return (gy.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return _emit((x,), out, bwd)


def instance_norm(x, gamma, beta, eps=1e-5):
    """Per-sample, per-channel normalization over all trailing axes.

    Statistics come from the tensor itself (no running averages), so the op
    behaves identically in training and inference.
    """
    _check_same_dtype("instance_norm", x, gamma, beta)
    if x.ndim < 3:
        raise ShapeError("instance_norm: input needs spatial axes")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"instance_norm: affine shape must be ({c},)")
    axes = tuple(range(2, x.ndim))
    m = x.data.mean(axis=axes, keepdims=True)
    xhat = x.data - m
    v = (xhat * xhat).mean(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(v + eps)
    xhat *= inv
    bshape = (1, c) + (1,) * (x.ndim - 2)
    gr = gamma.data.reshape(bshape)
    out = gr * xhat + beta.data.reshape(bshape)

    def bwd(gy):
        # gx = inv * gamma * (gy - mean(gy) - xhat * mean(gy * xhat))
        u = gy * xhat
        gx = gy - gy.mean(axis=axes, keepdims=True)
        gx -= xhat * u.mean(axis=axes, keepdims=True)
        gx *= inv * gr
        sum_axes = (0,) + axes
        return gx, u.sum(axis=sum_axes), gy.sum(axis=sum_axes)

    return _emit((x, gamma, beta), out, bwd)
