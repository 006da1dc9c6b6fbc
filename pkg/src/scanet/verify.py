"""Gradient verification: every differentiable primitive and each attention
block checked against central finite differences at float64."""

import numpy as np

from . import tensor as T
from .attention import SCAConfig, block_forward, make_block
from .gradcheck import gradcheck
from .tensor import Tensor

TOLERANCE = 1e-5
EPS = 1e-5


def _t(rng, *shape):
    return Tensor(rng.standard_normal(shape))


def _away_from(x, kink, margin=0.25):
    d = x.data
    d += np.where(np.abs(d - kink) < margin, np.sign(d - kink + 1e-12) * margin, 0)
    return x


def _weighted(rng, out):
    w = Tensor(rng.standard_normal(out.shape))
    return T.sum_all(T.mul(out, w))


def _conv_case(rng, n, cin, h, w, cout, k, stride, pad, groups):
    x = _t(rng, n, cin, h, w)
    wt = _t(rng, cout, cin // groups, k, k)
    b = _t(rng, cout)
    probe = T.conv2d(x, wt, b, stride, pad, groups)
    pw = Tensor(rng.standard_normal(probe.shape))

    def f(x_, w_, b_):
        return T.sum_all(T.mul(T.conv2d(x_, w_, b_, stride, pad, groups), pw))

    return f, [x, wt, b]


def primitive_cases(rng):
    """(name, f, inputs) triples; each f maps its inputs to a scalar."""
    cases = []

    def shapes(r):
        return [(2, 3, r.integers(2, 6), r.integers(2, 7)) for _ in range(5)]

    for si, shp in enumerate(shapes(rng)):
        n, c, h, w = (int(v) for v in shp)
        x = _t(rng, n, c, h, w)
        y = _t(rng, n, c, h, w)
        br = _t(rng, 1, c, 1, w)
        pw = Tensor(rng.standard_normal((n, c, h, w)))

        def fadd(a, b, pw=pw):
            return T.sum_all(T.mul(T.add(a, b), pw))

        def fsub(a, b, pw=pw):
            return T.sum_all(T.mul(T.sub(a, b), pw))

        def fmul(a, b, pw=pw):
            return T.sum_all(T.mul(T.mul(a, b), pw))

        cases.append((f"add/{si}", fadd, [x, y]))
        cases.append((f"add_broadcast/{si}", fadd, [x, br]))
        cases.append((f"sub/{si}", fsub, [x, y]))
        cases.append((f"mul/{si}", fmul, [x, br]))

        z = _t(rng, n, c, h, w)
        z.data[...] = np.sign(z.data) * (np.abs(z.data) + 0.5)

        def fdiv(a, b, pw=pw):
            return T.sum_all(T.mul(T.div(a, b), pw))

        cases.append((f"div/{si}", fdiv, [x, z]))
        cases.append((f"neg/{si}",
                      lambda a, pw=pw: T.sum_all(T.mul(T.neg(a), pw)), [x]))

        pos = _t(rng, n, c, h, w)
        pos.data[...] = np.abs(pos.data) + 0.5
        cases.append((f"log/{si}",
                      lambda a, pw=pw: T.sum_all(T.mul(T.log(a), pw)), [pos]))

        cl = _t(rng, n, c, h, w)
        _away_from(cl, -0.8)
        _away_from(cl, 0.8)
        cases.append((f"clip/{si}",
                      lambda a, pw=pw: T.sum_all(T.mul(T.clip(a, -0.8, 0.8), pw)),
                      [cl]))

        cases.append((f"sum/{si}", lambda a: T.sum_all(a), [x]))
        cases.append((f"mean/{si}", lambda a: T.mean_all(a), [x]))
        cases.append((f"reshape/{si}",
                      lambda a, pw=pw, s=(n, c, h * w): T.sum_all(
                          T.mul(T.reshape(a, s), T.reshape(pw, s))), [x]))
        cases.append((f"narrow/{si}",
                      lambda a, pw=pw, h=h: T.sum_all(T.mul(
                          T.narrow(a, 2, 0, max(1, h - 1)),
                          T.narrow(pw, 2, 0, max(1, h - 1)))), [x]))
        cases.append((f"concat/{si}",
                      lambda a, b, pw=pw: T.sum_all(T.mul(
                          T.concat((a, b), axis=1),
                          T.concat((pw, pw), axis=1))), [x, y]))

        rl = _t(rng, n, c, h, w)
        _away_from(rl, 0.0)
        cases.append((f"relu/{si}",
                      lambda a, pw=pw: T.sum_all(T.mul(T.relu(a), pw)), [rl]))
        cases.append((f"sigmoid/{si}",
                      lambda a, pw=pw: T.sum_all(T.mul(T.sigmoid(a), pw)), [x]))

        cases.append((f"global_avg_pool/{si}",
                      lambda a, r2=Tensor(rng.standard_normal((n, c))):
                      T.sum_all(T.mul(T.global_avg_pool(a), r2)), [x]))

        ph = Tensor(rng.standard_normal((n, c, h)))
        pv = Tensor(rng.standard_normal((n, c, w)))

        def fdir(a, ph=ph, pv=pv):
            sh, sw = T.directional_avg_pool(a)
            return T.add(T.sum_all(T.mul(sh, ph)), T.sum_all(T.mul(sw, pv)))

        cases.append((f"directional_avg_pool/{si}", fdir, [x]))

        sh = _t(rng, n, c, h)
        sw = _t(rng, n, c, w)
        pstrip = Tensor(rng.standard_normal((n, c, h + w)))

        def fcat(a, b, pstrip=pstrip):
            return T.sum_all(T.mul(T.concat_strip(a, b), pstrip))

        cases.append((f"concat_strip/{si}", fcat, [sh, sw]))

        strip = _t(rng, n, c, h + w)

        def fsplit(a, ph=ph, pv=pv, h=h):
            u, v = T.split_strip(a, h)
            return T.add(T.sum_all(T.mul(u, ph)), T.sum_all(T.mul(v, pv)))

        cases.append((f"split_strip/{si}", fsplit, [strip]))

        pup = Tensor(rng.standard_normal((n, c, 2 * h, 2 * w)))
        cases.append((f"upsample_nearest2/{si}",
                      lambda a, pup=pup: T.sum_all(T.mul(
                          T.upsample_nearest2(a), pup)), [x]))

        g = _t(rng, c)
        bt = _t(rng, c)
        cases.append((f"instance_norm/{si}",
                      lambda a, gg, bb, pw=pw: T.sum_all(T.mul(
                          T.instance_norm(a, gg, bb), pw)), [x, g, bt]))

        dw = _t(rng, 4, c)
        db = _t(rng, 4)
        pd = Tensor(rng.standard_normal((n, h, 4)))
        xd = _t(rng, n, h, c)
        cases.append((f"dense/{si}",
                      lambda a, ww, bb, pd=pd: T.sum_all(T.mul(
                          T.dense(a, ww, bb), pd)), [xd, dw, db]))

        pc = Tensor(rng.standard_normal((n, 4, h + w)))
        cases.append((f"channel_dense/{si}",
                      lambda a, ww, bb, pc=pc: T.sum_all(T.mul(
                          T.channel_dense(a, ww, bb), pc)), [strip, dw, db]))

    conv_specs = [(2, 4, 5, 6, 3, 3, 1, 1, 1), (1, 4, 6, 5, 8, 3, 2, 1, 4),
                  (2, 3, 4, 4, 2, 1, 1, 0, 1), (1, 6, 5, 7, 6, 3, 2, 0, 2),
                  (2, 2, 7, 6, 4, 3, 1, 2, 2)]
    for si, spec in enumerate(conv_specs):
        f, inputs = _conv_case(rng, *spec)
        cases.append((f"conv2d/{si}", f, inputs))
    return cases


def block_cases(rng):
    cases = []
    cfg = SCAConfig(cardinality=2, radix=2, reduction=2)
    specs = [("sca", cfg, 4, 4, 1, 5, 4), ("sca", cfg, 4, 8, 2, 6, 6),
             ("sa", cfg, 4, 4, 1, 4, 5), ("sa", cfg, 8, 4, 1, 5, 4),
             ("ca", cfg, 4, 4, 1, 5, 5), ("ca", cfg, 4, 8, 2, 4, 6),
             ("sca", SCAConfig(1, 2, 2), 4, 4, 1, 4, 4),
             ("sa", SCAConfig(2, 1, 2), 4, 4, 1, 5, 4),
             ("ca", cfg, 6, 6, 1, 3, 7), ("sca", SCAConfig(2, 2, 1), 4, 4, 1, 4, 5),
             ("sca", cfg, 8, 4, 1, 3, 6), ("sa", cfg, 4, 8, 2, 6, 4),
             ("sa", SCAConfig(1, 3, 2), 6, 6, 1, 4, 4),
             ("ca", SCAConfig(2, 2, 1), 4, 4, 1, 6, 3),
             ("ca", cfg, 4, 4, 2, 7, 5)]
    for bi, (variant, c, cin, cout, stride, h, w) in enumerate(specs):
        block = make_block(variant, np.random.default_rng(100 + bi), cin, cout,
                           c, stride, np.float64, name=f"chk_{variant}{bi}")
        x = _t(rng, 1, cin, h, w)
        probe = block_forward(x, block)
        pw = Tensor(rng.standard_normal(probe.shape))

        def f(*inputs, block=block, pw=pw):
            return T.sum_all(T.mul(block_forward(inputs[-1], block), pw))

        cases.append((f"{variant}_block/{bi}", f,
                      [p.value for p in block.parameters()] + [x]))
    return cases


def run_suite(seed=0, include_blocks=True):
    """Returns [(item, worst_rel_err)], worst over all inputs per item."""
    rng = np.random.default_rng(seed)
    results = []
    for name, f, inputs in primitive_cases(rng):
        results.append((name, gradcheck(f, inputs, eps=EPS)))
    if include_blocks:
        for name, f, inputs in block_cases(rng):
            results.append((name, gradcheck(f, inputs, eps=EPS)))
    return results


def report(seed=0, log=print, tolerance=TOLERANCE):
    """Print one line per item; returns True when everything passes."""
    results = run_suite(seed)
    ok = True
    for name, err in results:
        status = "ok" if err < tolerance else "FAIL"
        ok &= err < tolerance
        log(f"{status:4s} {name:28s} max rel err {err:.3e}")
    log(f"{len(results)} items checked, tolerance {tolerance:g}")
    return ok
