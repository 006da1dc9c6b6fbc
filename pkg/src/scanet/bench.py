"""Benchmark the kernel lanes on the desk-scale layer mix.

Times forward + both backward kernels for every convolution the default
segmentation model executes on a batch of 16 float32 tiles, then prints a
per-lane table and the implied epoch time. Run as ``python -m scanet.bench``.
"""

import time

import numpy as np

from . import kernels

# (label, N, Cin, H, W, Cout, k, stride, pad, groups) — the convolutions of
# the default model on one batch of 16 tiles
DESK_LAYERS = [
    ("stem      64x64   3->16", 16, 3, 64, 64, 16, 3, 1, 1, 1),
    ("enc1 conv 64x64  16->32g4", 16, 16, 64, 64, 32, 3, 2, 1, 4),
    ("enc1 proj 64x64  16->16", 16, 16, 64, 64, 16, 1, 2, 0, 1),
    ("enc2 conv 32x32  16->64g4", 16, 16, 32, 32, 64, 3, 2, 1, 4),
    ("enc2 proj 32x32  16->32", 16, 16, 32, 32, 32, 1, 2, 0, 1),
    ("enc3 conv 16x16  32->128g4", 16, 32, 16, 16, 128, 3, 2, 1, 4),
    ("enc3 proj 16x16  32->64", 16, 32, 16, 16, 64, 1, 2, 0, 1),
    ("enc4 conv 8x8    64->256g4", 16, 64, 8, 8, 256, 3, 2, 1, 4),
    ("enc4 proj 8x8    64->128", 16, 64, 8, 8, 128, 1, 2, 0, 1),
    ("enc5 conv 4x4   128->512g4", 16, 128, 4, 4, 512, 3, 2, 1, 4),
    ("enc5 proj 4x4   128->256", 16, 128, 4, 4, 256, 1, 2, 0, 1),
    ("dec(1,1)  16x16  24->12", 16, 24, 16, 16, 12, 3, 1, 1, 1),
    ("dec(0,1)  32x32  16->8", 16, 16, 32, 32, 8, 3, 1, 1, 1),
    ("dec(2,1)  8x8    48->24", 16, 48, 8, 8, 24, 3, 1, 1, 1),
    ("dec(1,2)  16x16  36->12", 16, 36, 16, 16, 12, 3, 1, 1, 1),
    ("dec(0,2)  32x32  24->8", 16, 24, 32, 32, 8, 3, 1, 1, 1),
    ("dec(3,1)  4x4    96->48", 16, 96, 4, 4, 48, 3, 1, 1, 1),
    ("dec(2,2)  8x8    72->24", 16, 72, 8, 8, 24, 3, 1, 1, 1),
    ("dec(1,3)  16x16  48->12", 16, 48, 16, 16, 12, 3, 1, 1, 1),
    ("dec(0,3)  32x32  32->8", 16, 32, 32, 32, 8, 3, 1, 1, 1),
    ("head      64x64   8->1", 16, 8, 64, 64, 1, 3, 1, 1, 1),
]


def layer_macs(n, cin, h, w, cout, k, stride, pad, groups):
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    return n * ho * wo * cout * (cin // groups) * k * k


def time_layer(fns, spec, dtype=np.float32, min_time=0.06):
    fwd, bwd = fns
    _, n, cin, h, w, cout, k, stride, pad, groups = spec
    rng = np.random.default_rng(12345)
    x = rng.standard_normal((n, cin, h, w)).astype(dtype)
    wt = (rng.standard_normal((cout, cin // groups, k, k)) * 0.1).astype(dtype)
    gy = np.ascontiguousarray(
        rng.standard_normal(fwd(x, wt, stride, pad, groups).shape).astype(dtype))

    def once():
        fwd(x, wt, stride, pad, groups)
        bwd(gy, x, wt, stride, pad, groups)

    once()  # warm up
    reps, elapsed = 0, 0.0
    while elapsed < min_time:
        t0 = time.perf_counter()
        once()
        elapsed += time.perf_counter() - t0
        reps += 1
    return elapsed / reps


def run(report=print):
    lanes = kernels.lanes()
    totals = dict.fromkeys(lanes, 0.0)
    header = f"{'layer':<28}" + "".join(f"{name + ' ms':>12}" for name in lanes)
    report(header)
    report("-" * len(header))
    for spec in DESK_LAYERS:
        times = {}
        for name, fns in lanes.items():
            times[name] = time_layer(fns, spec)
            totals[name] += times[name]
        report(f"{spec[0]:<28}" + "".join(f"{times[n] * 1e3:>12.3f}" for n in lanes))
    report("-" * len(header))
    report(f"{'total fwd+bwd per batch':<28}"
           + "".join(f"{totals[n] * 1e3:>12.3f}" for n in lanes))
    macs = sum(layer_macs(*spec[1:]) for spec in DESK_LAYERS) * 3  # fwd + 2 bwd
    for name in lanes:
        gflops = 2.0 * macs / totals[name] / 1e9
        report(f"{name}: {gflops:.2f} GFLOP/s effective, "
               f"~{totals[name] * 125:.1f} s per 2000-sample epoch (conv only)")
    return totals


if __name__ == "__main__":
    run()
