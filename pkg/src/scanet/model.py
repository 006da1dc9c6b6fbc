"""Five-stage attention encoder, nested-skip decoder, loss and metrics.

The encoder halves the spatial extent once per stage and returns the
five-level feature pyramid. The decoder runs the last L nested decoding
chains of a dense-skip grid: chain k starts at pyramid level k and climbs to
level 0, each node receiving every previously computed same-level feature
plus the upsampled output of the level below. Encoder skips and up-paths
pass through 1x1 projections to the level's decoder width, which keeps the
desk-scale CPU budget honest without touching the nesting structure.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .attention import SCAConfig, block_forward, make_block
from .tensor import (NonFiniteError, Parameter, ShapeError, Tensor, add, clip,
                     concat, conv2d, div, instance_norm, log, mean_all, mul,
                     neg, relu, sigmoid, sub, sum_all, upsample_nearest2)

NORM_EPS = 1e-5


@dataclass
class EncoderConfig:
    stem_width: int = 16
    widths: tuple = (16, 32, 64, 128, 256)
    blocks_per_stage: int = 1
    variant: str = "sca"
    sca: SCAConfig = field(default_factory=SCAConfig)

    def validate(self):
        if len(self.widths) != 5:
            raise ShapeError(f"encoder needs exactly 5 stage widths, "
                             f"got {len(self.widths)}")
        if self.blocks_per_stage < 1:
            raise ShapeError("blocks_per_stage must be >= 1")
        for w in self.widths:
            self.sca.validate(w)


@dataclass
class DecoderConfig:
    depth: int = 3  # L; 1 = plain skip chain, >=2 adds nested dense skips
    widths: tuple = (8, 12, 24, 48)
    norm: bool = True  # per-node normalization after each 3x3

    def validate(self):
        if not 1 <= self.depth <= 4:
            raise ShapeError(f"decoder depth {self.depth} outside [1, 4]")
        if len(self.widths) != 4:
            raise ShapeError("decoder needs widths for levels 0..3")


@dataclass
class MetricsRecord:
    iou: float
    precision: float
    recall: float
    f1: float
    loss: float = 0.0
    epoch: int = 0


@dataclass
class Stem:
    conv_w: Parameter
    conv_b: Parameter
    gamma: Parameter
    beta: Parameter

    def parameters(self):
        return [self.conv_w, self.conv_b, self.gamma, self.beta]


@dataclass
class EncoderParams:
    config: EncoderConfig
    stem: Stem
    stages: list

    def parameters(self):
        ps = self.stem.parameters()
        for blocks in self.stages:
            for b in blocks:
                ps += b.parameters()
        return ps


@dataclass
class Lateral:
    conv_w: Parameter
    conv_b: Parameter

    def parameters(self):
        return [self.conv_w, self.conv_b]


@dataclass
class DecoderNode:
    up_w: Parameter
    up_b: Parameter
    conv_w: Parameter
    conv_b: Parameter
    gamma: Parameter = None
    beta: Parameter = None

    def parameters(self):
        ps = [self.up_w, self.up_b, self.conv_w, self.conv_b]
        if self.gamma is not None:
            ps += [self.gamma, self.beta]
        return ps


@dataclass
class DecoderParams:
    config: DecoderConfig
    enc_widths: tuple
    laterals: list
    nodes: list  # build order == forward traversal order
    head_w: Parameter
    head_b: Parameter

    def parameters(self):
        ps = []
        for lat in self.laterals:
            ps += lat.parameters()
        for n in self.nodes:
            ps += n.parameters()
        return ps + [self.head_w, self.head_b]


@dataclass
class ModelParams:
    encoder: EncoderParams
    decoder: DecoderParams

    def parameters(self):
        return self.encoder.parameters() + self.decoder.parameters()


def _uniform(rng, shape, fan_in, dtype):
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def make_encoder(cfg, rng, dtype=np.float64, name="enc"):
    cfg.validate()
    stem = Stem(
        conv_w=Parameter(_uniform(rng, (cfg.stem_width, 3, 3, 3), 27, dtype),
                         f"{name}.stem_w"),
        conv_b=Parameter(np.zeros(cfg.stem_width, dtype=dtype), f"{name}.stem_b"),
        gamma=Parameter(np.ones(cfg.stem_width, dtype=dtype), f"{name}.stem_gamma"),
        beta=Parameter(np.zeros(cfg.stem_width, dtype=dtype), f"{name}.stem_beta"))
    stages, cin = [], cfg.stem_width
    for si, width in enumerate(cfg.widths):
        blocks = []
        for bi in range(cfg.blocks_per_stage):
            stride = 2 if bi == 0 else 1
            blocks.append(make_block(cfg.variant, rng, cin, width, cfg.sca,
                                     stride, dtype,
                                     name=f"{name}.s{si + 1}.b{bi}"))
            cin = width
        stages.append(blocks)
    return EncoderParams(cfg, stem, stages)


def encoder_forward(image, params):
    """Run the stem and five stages; returns the feature pyramid
    [H/2, H/4, H/8, H/16, H/32]."""
    cfg = params.config
    if image.ndim != 4 or image.shape[1] != 3:
        raise ShapeError(f"encoder expects [N, 3, H, W], got {image.shape}")
    h, w = image.shape[2], image.shape[3]
    if h % 32 or w % 32:
        raise ShapeError(f"input extent {h}x{w} not divisible by 32")
    x = conv2d(image, params.stem.conv_w.value, params.stem.conv_b.value,
               stride=1, pad=1)
    x = relu(instance_norm(x, params.stem.gamma.value, params.stem.beta.value,
                           NORM_EPS))
    pyramid = []
    for blocks in params.stages:
        for bp in blocks:
            x = relu(block_forward(x, bp))
        pyramid.append(x)
    return pyramid


def _decoder_plan(depth):
    """(chain start k, level i) pairs in forward order for the last L chains."""
    steps = []
    for k in range(5 - depth, 5):
        for i in range(k - 1, -1, -1):
            steps.append((k, i))
    return steps


def make_decoder(cfg, enc_widths, rng, dtype=np.float64, name="dec"):
    cfg.validate()
    laterals = [Lateral(
        conv_w=Parameter(_uniform(rng, (cfg.widths[i], enc_widths[i], 1, 1),
                                  enc_widths[i], dtype), f"{name}.lat{i}_w"),
        conv_b=Parameter(np.zeros(cfg.widths[i], dtype=dtype), f"{name}.lat{i}_b"))
        for i in range(4)]
    level_widths = [[cfg.widths[i]] for i in range(4)] + [[enc_widths[4]]]
    nodes = []
    for k, i in _decoder_plan(cfg.depth):
        di = cfg.widths[i]
        src = level_widths[i + 1][-1]
        cin = di * len(level_widths[i]) + di  # same-level features + up path
        tag = f"{name}.n{i}_{len(level_widths[i])}"
        gamma = beta = None
        if cfg.norm:
            gamma = Parameter(np.ones(di, dtype=dtype), f"{tag}_gamma")
            beta = Parameter(np.zeros(di, dtype=dtype), f"{tag}_beta")
        nodes.append(DecoderNode(
            up_w=Parameter(_uniform(rng, (di, src, 1, 1), src, dtype), f"{tag}_up_w"),
            up_b=Parameter(np.zeros(di, dtype=dtype), f"{tag}_up_b"),
            conv_w=Parameter(_uniform(rng, (di, cin, 3, 3), cin * 9, dtype),
                             f"{tag}_w"),
            conv_b=Parameter(np.zeros(di, dtype=dtype), f"{tag}_b"),
            gamma=gamma, beta=beta))
        level_widths[i].append(di)
    head_w = Parameter(_uniform(rng, (1, cfg.widths[0], 3, 3),
                                cfg.widths[0] * 9, dtype), f"{name}.head_w")
    head_b = Parameter(np.zeros(1, dtype=dtype), f"{name}.head_b")
    return DecoderParams(cfg, tuple(enc_widths), laterals, nodes, head_w, head_b)


def decoder_forward(pyramid, params):
    """Nested-skip decoding of the pyramid down to a 1-channel logit map at
    the input resolution."""
    cfg = params.config
    if len(pyramid) != 5:
        raise ShapeError(f"decoder expects a 5-level pyramid, got {len(pyramid)}")
    for i, p in enumerate(pyramid):
        if p.shape[1] != params.enc_widths[i]:
            raise ShapeError(f"pyramid level {i} has {p.shape[1]} channels, "
                             f"decoder was built for {params.enc_widths[i]}")
    levels = [[conv2d(pyramid[i], params.laterals[i].conv_w.value,
                      params.laterals[i].conv_b.value)] for i in range(4)]
    levels.append([pyramid[4]])
    for node, (k, i) in zip(params.nodes, _decoder_plan(cfg.depth)):
        up = upsample_nearest2(conv2d(levels[i + 1][-1], node.up_w.value,
                                      node.up_b.value))
        x = concat(levels[i] + [up], axis=1)
        x = conv2d(x, node.conv_w.value, node.conv_b.value, stride=1, pad=1)
        if node.gamma is not None:
            x = instance_norm(x, node.gamma.value, node.beta.value, NORM_EPS)
        levels[i].append(relu(x))
    final = upsample_nearest2(levels[0][-1])
    return conv2d(final, params.head_w.value, params.head_b.value, stride=1, pad=1)


def build_model(enc_cfg, dec_cfg, seed, dtype=np.float64):
    """Deterministically initialized model; parameter names are unique."""
    rng = np.random.default_rng(seed)
    encoder = make_encoder(enc_cfg, rng, dtype)
    decoder = make_decoder(dec_cfg, enc_cfg.widths, rng, dtype)
    mp = ModelParams(encoder, decoder)
    names = [p.name for p in mp.parameters()]
    if len(names) != len(set(names)):
        raise ValueError("duplicate parameter names in model")
    return mp


def model_forward(image, params):
    return decoder_forward(encoder_forward(image, params.encoder),
                           params.decoder)


# ---------------------------------------------------------------------------
# loss, metrics, analysis


def bce_dice_loss(logits, target, smooth=1.0, eps=1e-7):
    """Binary cross entropy on clamped probabilities plus soft Dice loss,
    equally weighted."""
    if logits.shape != target.shape:
        raise ShapeError(f"loss: logits {logits.shape} vs target {target.shape}")
    t = target.data
    if t.size and not bool(np.all((t == 0) | (t == 1))):
        raise ShapeError("loss: target must be binary")
    d = logits.data
    if d.size and not (np.isfinite(d.min()) and np.isfinite(d.max())):
        raise NonFiniteError("loss: non-finite logits")
    p = sigmoid(logits)
    # clamp each log argument from below so a saturated correct prediction
    # is not charged the clamp epsilon
    pos = mul(target, log(clip(p, eps, 1.0)))
    negt = Tensor(1.0 - t)
    neg_term = mul(negt, log(clip(sub(Tensor(np.ones_like(t)), p), eps, 1.0)))
    bce = neg(mean_all(add(pos, neg_term)))
    inter = sum_all(mul(p, target))
    tsum = float(t.sum())
    num = 2.0 * inter + smooth
    den = sum_all(p) + (tsum + smooth)
    dice = 1.0 - div(num, den)
    return add(bce, dice)


def overlap_counts(prob, target, threshold=0.5):
    """Pixel counts (tp, fp, fn) of prob > threshold against a binary mask."""
    p = prob.data if isinstance(prob, Tensor) else np.asarray(prob)
    t = target.data if isinstance(target, Tensor) else np.asarray(target)
    pred = p > threshold
    pos = t > 0.5
    tp = int(np.count_nonzero(pred & pos))
    fp = int(np.count_nonzero(pred & ~pos))
    fn = int(np.count_nonzero(~pred & pos))
    return tp, fp, fn


def metrics_from_counts(tp, fp, fn, loss=0.0, epoch=0):
    """Micro-averaged IoU/precision/recall/F1; empty denominators give 0."""
    iou = tp / (tp + fp + fn) if tp + fp + fn else 0.0
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return MetricsRecord(iou, precision, recall,
                         f1_score(precision, recall), loss, epoch)


def f1_score(precision, recall):
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def segmentation_metrics(prob, target, threshold=0.5, loss=0.0, epoch=0):
    if not 0.0 < threshold < 1.0:
        raise ShapeError(f"threshold {threshold} outside (0, 1)")
    tp, fp, fn = overlap_counts(prob, target, threshold)
    return metrics_from_counts(tp, fp, fn, loss, epoch)


def diagonal_similarity(features):
    """Cosine similarities between feature vectors at diagonal pixels.

    Returns a [D, D] float64 matrix, D = min(H, W); zero-vector pixels give
    similarity 0. Values are clamped into [-1, 1] against rounding spill.
    """
    f = features.data if isinstance(features, Tensor) else np.asarray(features)
    if f.ndim != 4 or f.shape[0] != 1:
        raise ShapeError(f"diagonal_similarity expects [1, C, H, W], got {f.shape}")
    d = min(f.shape[2], f.shape[3])
    idx = np.arange(d)
    vecs = f[0][:, idx, idx].T.astype(np.float64)  # [D, C]
    dots = vecs @ vecs.T
    norms = np.sqrt(np.diag(dots))
    denom = np.outer(norms, norms)
    with np.errstate(invalid="ignore", divide="ignore"):
        sim = np.where(denom > 0, dots / denom, 0.0)
    return np.clip(sim, -1.0, 1.0)


def lr_schedule_step(history, lr, patience=10):
    """Halve lr when the best validation IoU has not strictly improved for
    `patience` consecutive epochs; the stall counter resets after halving.

    history is the full list of per-epoch validation IoU values so far; the
    returned rate applies from the next epoch on.
    """
    if patience < 1:
        raise ValueError(f"patience must be >= 1, got {patience}")
    best = float("-inf")
    stall = 0
    trig = False
    for v in history:
        if v > best:
            best, stall, trig = v, 0, False
        else:
            stall += 1
            trig = stall >= patience
            if trig:
                stall = 0
    return lr / 2.0 if trig else lr


def model_param_count(params):
    """Total learnable scalars, audited by enumerating parameter names."""
    names = [p.name for p in params.parameters()]
    assert len(names) == len(set(names))
    return sum(p.value.size for p in params.parameters())
