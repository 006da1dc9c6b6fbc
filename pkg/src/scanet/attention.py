"""Split coordinate attention blocks and their ablation baselines.

One block transforms its input with a grouped 3x3 convolution into
cardinality x radix feature groups, sums the splits of each cardinal group,
and gates the sum. The gating differs per variant:

* ``sca`` — directional strip pooling of the cardinal sum, a per-split
  reduced 1x1 strip transform, and per-split sigmoid gates along height and
  width whose outer product reweights the sum.
* ``sa``  — global average pooling with a per-split dense bottleneck and
  per-channel sigmoid gate, broadcast over space.
* ``ca``  — the sca block pinned to cardinality 1, radix 1 (single group on
  a plain residual transform).
* ``baseline`` — no gating at all; cardinal sums pass straight through.

All variants add an identity or projected shortcut.
"""

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .tensor import (NonFiniteError, Parameter, ShapeError, activation, add,
                     channel_dense, concat, concat_strip, conv2d, dense,
                     directional_avg_pool, global_avg_pool, instance_norm, mul,
                     narrow, reshape, sigmoid, split_strip)

NORM_EPS = 1e-5

VARIANTS = ("baseline", "sa", "ca", "sca")


@dataclass
class SCAConfig:
    """Block hyperparameters: cardinality K, radix R, channel reduction r."""

    cardinality: int = 2
    radix: int = 2
    reduction: int = 4
    strip_activation: str = "relu"
    strip_norm: bool = True
    share_splits: bool = False

    @property
    def groups(self):
        return self.cardinality * self.radix

    def validate(self, channels):
        if min(self.cardinality, self.radix, self.reduction) < 1:
            raise ShapeError("cardinality, radix and reduction must be >= 1")
        if self.strip_activation not in ("relu", "sigmoid"):
            raise ShapeError(f"unsupported strip activation {self.strip_activation!r}")
        if channels % self.cardinality:
            raise ShapeError(f"channels {channels} not divisible by "
                             f"cardinality {self.cardinality}")
        if (channels // self.cardinality) % self.reduction:
            raise ShapeError(f"group width {channels // self.cardinality} not "
                             f"divisible by reduction {self.reduction}")


@dataclass
class StripTransform:
    """Reduced 1x1 transform of the pooled H+W strip, one per split."""

    conv_w: Parameter
    conv_b: Parameter
    gamma: Optional[Parameter]
    beta: Optional[Parameter]

    def parameters(self):
        ps = [self.conv_w, self.conv_b]
        if self.gamma is not None:
            ps += [self.gamma, self.beta]
        return ps


@dataclass
class GatePair:
    """Dense maps restoring channel width along height and width."""

    h_w: Parameter
    h_b: Parameter
    w_w: Parameter
    w_b: Parameter

    def parameters(self):
        return [self.h_w, self.h_b, self.w_w, self.w_b]


@dataclass
class SplitGate:
    """Dense bottleneck + expansion for the globally pooled descriptor."""

    fc1_w: Parameter
    fc1_b: Parameter
    fc2_w: Parameter
    fc2_b: Parameter

    def parameters(self):
        return [self.fc1_w, self.fc1_b, self.fc2_w, self.fc2_b]


@dataclass
class Shortcut:
    """Identity when empty, else 1x1 projection + normalization."""

    conv_w: Optional[Parameter] = None
    conv_b: Optional[Parameter] = None
    gamma: Optional[Parameter] = None
    beta: Optional[Parameter] = None

    def parameters(self):
        if self.conv_w is None:
            return []
        return [self.conv_w, self.conv_b, self.gamma, self.beta]


@dataclass
class SCABlockParams:
    config: SCAConfig
    cin: int
    cout: int
    stride: int
    name: str
    group_w: Parameter
    group_b: Parameter
    strips: list
    gates: list
    shortcut: Shortcut

    def parameters(self):
        ps = [self.group_w, self.group_b]
        for s in self.strips:
            ps += s.parameters()
        for g in self.gates:
            ps += g.parameters()
        return ps + self.shortcut.parameters()


@dataclass
class SABlockParams:
    config: SCAConfig
    cin: int
    cout: int
    stride: int
    name: str
    group_w: Parameter
    group_b: Parameter
    gates: list
    shortcut: Shortcut

    def parameters(self):
        ps = [self.group_w, self.group_b]
        for g in self.gates:
            ps += g.parameters()
        return ps + self.shortcut.parameters()


@dataclass
class BaselineBlockParams:
    config: SCAConfig
    cin: int
    cout: int
    stride: int
    name: str
    group_w: Parameter
    group_b: Parameter
    shortcut: Shortcut

    def parameters(self):
        return [self.group_w, self.group_b] + self.shortcut.parameters()


def _uniform(rng, shape, fan_in, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def _make_group_conv(rng, cin, cout, cfg, dtype, name):
    g = cfg.groups
    if cin % g:
        raise ShapeError(f"{name}: input channels {cin} not divisible by "
                         f"feature groups {g}")
    mid = cout * cfg.radix
    w = Parameter(_uniform(rng, (mid, cin // g, 3, 3), (cin // g) * 9, dtype),
                  f"{name}.group_w")
    b = Parameter(np.zeros(mid, dtype=dtype), f"{name}.group_b")
    return w, b


def _make_shortcut(rng, cin, cout, stride, dtype, name):
    if cin == cout and stride == 1:
        return Shortcut()
    return Shortcut(
        conv_w=Parameter(_uniform(rng, (cout, cin, 1, 1), cin, dtype),
                         f"{name}.shortcut_w"),
        conv_b=Parameter(np.zeros(cout, dtype=dtype), f"{name}.shortcut_b"),
        gamma=Parameter(np.ones(cout, dtype=dtype), f"{name}.shortcut_gamma"),
        beta=Parameter(np.zeros(cout, dtype=dtype), f"{name}.shortcut_beta"),
    )


def _gate_bias_init(radix):
    """Bias putting each gate at radix**-0.5, so the summed product of the
    height/width gate pairs starts at 1 and the fusion is signal-preserving
    at initialization (capped below saturation for radix 1)."""
    s = min(0.9, radix ** -0.5)
    return float(np.log(s / (1.0 - s)))


def make_sca_block(rng, cin, cout, cfg, stride=1, dtype=np.float64, name="sca"):
    cfg.validate(cout)
    group_w, group_b = _make_group_conv(rng, cin, cout, cfg, dtype, name)
    cpk = cout // cfg.cardinality
    red = cpk // cfg.reduction
    n_sets = 1 if cfg.share_splits else cfg.radix
    gate_b = _gate_bias_init(cfg.radix)
    strips, gates = [], []
    for i in range(n_sets):
        gamma = beta = None
        if cfg.strip_norm:
            gamma = Parameter(np.ones(red, dtype=dtype), f"{name}.strip{i}_gamma")
            beta = Parameter(np.zeros(red, dtype=dtype), f"{name}.strip{i}_beta")
        strips.append(StripTransform(
            conv_w=Parameter(_uniform(rng, (red, cpk), cpk, dtype),
                             f"{name}.strip{i}_w"),
            conv_b=Parameter(np.zeros(red, dtype=dtype), f"{name}.strip{i}_b"),
            gamma=gamma, beta=beta))
        gates.append(GatePair(
            h_w=Parameter(_uniform(rng, (cpk, red), red, dtype), f"{name}.gate{i}_h_w"),
            h_b=Parameter(np.full(cpk, gate_b, dtype=dtype), f"{name}.gate{i}_h_b"),
            w_w=Parameter(_uniform(rng, (cpk, red), red, dtype), f"{name}.gate{i}_w_w"),
            w_b=Parameter(np.full(cpk, gate_b, dtype=dtype), f"{name}.gate{i}_w_b")))
    return SCABlockParams(cfg, cin, cout, stride, name, group_w, group_b,
                          strips, gates,
                          _make_shortcut(rng, cin, cout, stride, dtype, name))


def make_ca_block(rng, cin, cout, cfg, stride=1, dtype=np.float64, name="ca"):
    """Coordinate-attention ablation: the sca block at K=1, R=1."""
    ca_cfg = replace(cfg, cardinality=1, radix=1)
    return make_sca_block(rng, cin, cout, ca_cfg, stride, dtype, name)


def make_sa_block(rng, cin, cout, cfg, stride=1, dtype=np.float64, name="sa"):
    cfg.validate(cout)
    group_w, group_b = _make_group_conv(rng, cin, cout, cfg, dtype, name)
    cpk = cout // cfg.cardinality
    red = cpk // cfg.reduction
    n_sets = 1 if cfg.share_splits else cfg.radix
    gates = []
    for i in range(n_sets):
        gates.append(SplitGate(
            fc1_w=Parameter(_uniform(rng, (red, cpk), cpk, dtype), f"{name}.fc1_{i}_w"),
            fc1_b=Parameter(np.zeros(red, dtype=dtype), f"{name}.fc1_{i}_b"),
            fc2_w=Parameter(_uniform(rng, (cpk, red), red, dtype), f"{name}.fc2_{i}_w"),
            fc2_b=Parameter(np.zeros(cpk, dtype=dtype), f"{name}.fc2_{i}_b")))
    return SABlockParams(cfg, cin, cout, stride, name, group_w, group_b, gates,
                         _make_shortcut(rng, cin, cout, stride, dtype, name))


def make_baseline_block(rng, cin, cout, cfg, stride=1, dtype=np.float64,
                        name="baseline"):
    cfg.validate(cout)
    group_w, group_b = _make_group_conv(rng, cin, cout, cfg, dtype, name)
    return BaselineBlockParams(cfg, cin, cout, stride, name, group_w, group_b,
                               _make_shortcut(rng, cin, cout, stride, dtype, name))


_MAKERS = {"baseline": make_baseline_block, "sa": make_sa_block,
           "ca": make_ca_block, "sca": make_sca_block}

_FORWARDS = {}


def make_block(variant, rng, cin, cout, cfg, stride=1, dtype=np.float64,
               name=None):
    if variant not in _MAKERS:
        raise ShapeError(f"unknown block variant {variant!r}")
    return _MAKERS[variant](rng, cin, cout, cfg, stride, dtype, name or variant)


def block_forward(x, params):
    return _FORWARDS[type(params).__name__](x, params)


# ---------------------------------------------------------------------------
# forward pieces


def make_feature_groups(x, params):
    """Grouped 3x3 transform of the block input, split into the G feature
    groups in index order."""
    cfg = params.config
    y = conv2d(x, params.group_w.value, params.group_b.value,
               stride=params.stride, pad=1, groups=cfg.groups)
    cpk = params.cout // cfg.cardinality
    return [narrow(y, 1, i * cpk, (i + 1) * cpk) for i in range(cfg.groups)]


def cardinal_group_sum(splits):
    """Elementwise sum of one cardinal group's splits, ascending order."""
    out = splits[0]
    for u in splits[1:]:
        if u.shape != out.shape:
            raise ShapeError(f"cardinal_group_sum: split shape {u.shape} != "
                             f"{out.shape}")
        out = add(out, u)
    return out


def attention_strip(u_hat, strip, cfg):
    """Pool directionally, join h-then-w, and apply the reduced transform."""
    sh, sw = directional_avg_pool(u_hat)
    z = channel_dense(concat_strip(sh, sw), strip.conv_w.value, strip.conv_b.value)
    if strip.gamma is not None:
        z = instance_norm(z, strip.gamma.value, strip.beta.value, NORM_EPS)
    return activation(z, cfg.strip_activation)


def directional_gates(s, h, gates):
    """Split the strip back into its h/w halves and gate each through a
    channel-restoring dense map + sigmoid."""
    th, tw = split_strip(s, h)
    uh = sigmoid(channel_dense(th, gates.h_w.value, gates.h_b.value))
    uw = sigmoid(channel_dense(tw, gates.w_w.value, gates.w_b.value))
    return uh, uw


def fuse(u_hat, gate_pairs):
    """V = u_hat * sum over splits of the per-channel outer product of the
    height and width gates."""
    n, c, h, w = u_hat.shape
    acc = None
    for uh, uw in gate_pairs:
        p = mul(reshape(uh, (n, c, h, 1)), reshape(uw, (n, c, 1, w)))
        acc = p if acc is None else add(acc, p)
    return mul(u_hat, acc)


def _apply_shortcut(x, sc, stride):
    if sc.conv_w is None:
        return x
    y = conv2d(x, sc.conv_w.value, sc.conv_b.value, stride=stride, pad=0)
    return instance_norm(y, sc.gamma.value, sc.beta.value, NORM_EPS)


def _check_finite(t, name):
    d = t.data
    if d.size and not (np.isfinite(d.min()) and np.isfinite(d.max())):
        raise NonFiniteError(f"non-finite activations in block {name!r}")


def _gate_index(cfg, i):
    return 0 if cfg.share_splits else i


def sca_block(x, params):
    """Full split coordinate attention block: Y = Concat_k(V^k) + T(X)."""
    cfg = params.config
    groups = make_feature_groups(x, params)
    h = groups[0].shape[2]
    outs = []
    for k in range(cfg.cardinality):
        u_hat = cardinal_group_sum(groups[k * cfg.radix:(k + 1) * cfg.radix])
        pairs = []
        for i in range(cfg.radix):
            idx = _gate_index(cfg, i)
            s = attention_strip(u_hat, params.strips[idx], cfg)
            pairs.append(directional_gates(s, h, params.gates[idx]))
        outs.append(fuse(u_hat, pairs))
    v = outs[0] if len(outs) == 1 else concat(outs, axis=1)
    y = add(v, _apply_shortcut(x, params.shortcut, params.stride))
    _check_finite(y, params.name)
    return y


def ca_block(x, params):
    """Coordinate-attention ablation; identical to sca_block at K=1, R=1."""
    cfg = params.config
    if cfg.cardinality != 1 or cfg.radix != 1:
        raise ShapeError("ca_block requires cardinality 1 and radix 1")
    return sca_block(x, params)


def sa_block(x, params):
    """Split-attention ablation: per-channel gates from the global pooled
    descriptor, broadcast over space."""
    cfg = params.config
    groups = make_feature_groups(x, params)
    n = x.shape[0]
    cpk = params.cout // cfg.cardinality
    outs = []
    for k in range(cfg.cardinality):
        u_hat = cardinal_group_sum(groups[k * cfg.radix:(k + 1) * cfg.radix])
        s = global_avg_pool(u_hat)
        acc = None
        for i in range(cfg.radix):
            g = params.gates[_gate_index(cfg, i)]
            z = activation(dense(s, g.fc1_w.value, g.fc1_b.value),
                           cfg.strip_activation)
            u = sigmoid(dense(z, g.fc2_w.value, g.fc2_b.value))
            acc = u if acc is None else add(acc, u)
        outs.append(mul(u_hat, reshape(acc, (n, cpk, 1, 1))))
    v = outs[0] if len(outs) == 1 else concat(outs, axis=1)
    y = add(v, _apply_shortcut(x, params.shortcut, params.stride))
    _check_finite(y, params.name)
    return y


def baseline_block(x, params):
    """No attention: cardinal sums concatenated plus the shortcut."""
    cfg = params.config
    groups = make_feature_groups(x, params)
    outs = [cardinal_group_sum(groups[k * cfg.radix:(k + 1) * cfg.radix])
            for k in range(cfg.cardinality)]
    v = outs[0] if len(outs) == 1 else concat(outs, axis=1)
    y = add(v, _apply_shortcut(x, params.shortcut, params.stride))
    _check_finite(y, params.name)
    return y


_FORWARDS.update({"SCABlockParams": sca_block, "SABlockParams": sa_block,
                  "BaselineBlockParams": baseline_block})


def block_param_count(variant, cin, cout, cfg, stride=1):
    """Exact learnable-scalar count of one block, audited by enumerating its
    parameters."""
    rng = np.random.default_rng(0)
    block = make_block(variant, rng, cin, cout, cfg, stride)
    names = [p.name for p in block.parameters()]
    if len(names) != len(set(names)):
        raise ValueError("duplicate parameter names in block")
    return sum(p.value.size for p in block.parameters())
