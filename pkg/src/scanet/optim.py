"""First-order optimizer: adaptive moments with decoupled weight decay."""

import numpy as np

from .tensor import NonFiniteError


class AdamW:
    """Bias-corrected adaptive-moment update; weight decay applied directly
    to parameter values, decoupled from the gradient term.

    Moment buffers are keyed by parameter name and lazily initialized to
    zeros of the parameter's shape and dtype.
    """

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8,
                 weight_decay=1e-2):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = {}
        self.v = {}

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        optimizer_step(self, self.params)


def optimizer_step(state, params):
    """Apply one optimizer update to params in place.

    Rejects the whole step (state untouched) if any gradient is non-finite.
    """
    for p in params:
        g = p.grad.data
        if g.size and not (np.isfinite(g.min()) and np.isfinite(g.max())):
            raise NonFiniteError(f"non-finite gradient in parameter {p.name!r}")
    state.step_count += 1
    b1, b2 = state.betas
    bc1 = 1.0 - b1 ** state.step_count
    bc2 = 1.0 - b2 ** state.step_count
    for p in params:
        g = p.grad.data
        m = state.m.get(p.name)
        if m is None:
            m = state.m[p.name] = np.zeros_like(p.value.data)
        v = state.v.get(p.name)
        if v is None:
            v = state.v[p.name] = np.zeros_like(p.value.data)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        update = (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        if state.weight_decay:
            update = update + state.weight_decay * p.value.data
        p.value.data -= state.lr * update
