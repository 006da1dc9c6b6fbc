"""Finite-difference gradient oracle and tape-vs-numeric comparison helper."""

import numpy as np

from .tensor import NonFiniteError, Parameter, Tape, Tensor, backward


def finite_diff_grad(f, x, eps=1e-5):
    """Central-difference gradient of a scalar function at x, per coordinate.

    Evaluates (f(x + eps*e_i) - f(x - eps*e_i)) / (2*eps) by perturbing
    x.data in place, restoring it afterwards. f may return a Tensor or a
    plain float and must be free of side effects.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    flat = x.data.reshape(-1)
    g = np.empty_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = _scalar(f(x))
        flat[i] = orig - eps
        fm = _scalar(f(x))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteError(f"non-finite function value at coordinate {i}")
        g[i] = (fp - fm) / (2.0 * eps)
    return Tensor(g.reshape(x.data.shape))


def _scalar(v):
    return v.item() if isinstance(v, Tensor) else float(v)


def max_rel_error(analytic, numeric):
    """max_i |analytic_i - numeric_i| / max(1, |analytic_i|)."""
    a = analytic.data if isinstance(analytic, Tensor) else np.asarray(analytic)
    n = numeric.data if isinstance(numeric, Tensor) else np.asarray(numeric)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - n) / np.maximum(1.0, np.abs(a))))


def gradcheck(f, inputs, eps=1e-5):
    """Worst relative error between tape gradients and finite differences.

    f maps the given Tensors to a scalar Tensor using tape ops; every input
    is treated as differentiable. Inputs should be float64 for the check to
    be meaningful.
    """
    for i, t in enumerate(inputs):
        if t.param is None:
            Parameter(t, f"gradcheck_x{i}")
        t.param.zero_grad()
    with Tape() as tape:
        out = f(*inputs)
    backward(tape, out)
    worst = 0.0
    for t in inputs:
        numeric = finite_diff_grad(lambda _t: f(*inputs), t, eps=eps)
        worst = max(worst, max_rel_error(t.param.grad, numeric))
    return worst
