"""Deterministic synthetic building-footprint scenes.

Every random choice comes from a SplitMix64 stream, a counter-based 64-bit
generator: value i (1-based) of the stream seeded s is

    mix64((s + i * GOLDEN) mod 2**64),   GOLDEN = 0x9E3779B97F4A7C15

where mix64 is the xorshift-multiply finalizer (constants 0xBF58476D1CE4E5B9
and 0x94D049BB133111EB, shifts 30/27/31). Uniform doubles take the top 53
bits. Child stream j of seed s reseeds with

    mix64((s ^ 0x517CC1B727220A95) + (j + 1) * GOLDEN mod 2**64)

so per-sample streams are independent and the whole dataset is a pure
function of (base seed, spec). Image synthesis uses plain arithmetic in a
fixed order (no library transcendentals), so outputs are bit-identical
across platforms.

A scene is drawn in a fixed sequence: smooth background, distractor roads
(building-like intensity, never in the mask), then per building its shadow
and footprint, then pixel noise. The mask is exactly the union of the
rasterized building polygons.
"""

import os
from dataclasses import dataclass, fields

import numpy as np

from . import netpbm

GOLDEN = 0x9E3779B97F4A7C15
CHILD_XOR = 0x517CC1B727220A95
_MASK = (1 << 64) - 1

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix64_np(z):
    z = z.astype(np.uint64)
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def mix64(z):
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def child_seed(base_seed, index):
    """Seed of per-sample stream `index` under `base_seed`."""
    return mix64(((base_seed & _MASK) ^ CHILD_XOR) + (index + 1) * GOLDEN)


class SplitMix64:
    """Counter-based splittable PRNG; see the module docstring."""

    def __init__(self, seed):
        self.seed = seed & _MASK
        self.pos = 0

    def next_u64(self):
        self.pos += 1
        return mix64(self.seed + self.pos * GOLDEN)

    def u64_array(self, n):
        idx = np.arange(self.pos + 1, self.pos + n + 1, dtype=np.uint64)
        self.pos += n
        return _mix64_np(np.uint64(self.seed) + idx * np.uint64(GOLDEN))

    def uniform(self):
        return (self.next_u64() >> 11) * 2.0 ** -53

    def uniform_array(self, n):
        return (self.u64_array(n) >> np.uint64(11)) * 2.0 ** -53

    def randint(self, lo, hi):
        """Uniform integer in [lo, hi]; modulo draw (span << 2**64)."""
        return lo + self.next_u64() % (hi - lo + 1)


@dataclass
class SceneSpec:
    height: int = 64
    width: int = 64
    min_buildings: int = 3
    max_buildings: int = 12
    min_side: int = 6
    max_side: int = 13
    contrast_lo: float = 0.05
    contrast_hi: float = 0.20
    shadow_offset: int = 2
    shadow_strength: float = 0.40
    max_roads: int = 4
    noise_std: float = 0.04

    def validate(self):
        if self.height % 32 or self.width % 32:
            raise ValueError(f"extent {self.height}x{self.width} not divisible by 32")
        if self.min_buildings > self.max_buildings or self.min_buildings < 0:
            raise ValueError("empty building count range")
        if self.min_side > self.max_side or self.min_side < 2:
            raise ValueError("bad building side range")
        if self.contrast_lo > self.contrast_hi:
            raise ValueError("empty contrast range")
        if self.max_roads < 0 or self.noise_std < 0:
            raise ValueError("bad distractor settings")


@dataclass
class SegSample:
    image: np.ndarray  # [3, H, W] float64 in [0, 1]
    mask: np.ndarray   # [1, H, W] uint8 in {0, 1}
    seed: int


def fill_polygon(verts, height, width):
    """Scanline fill: a pixel is inside when its center is. Returns bool [H, W].

    Edges use the half-open rule min(y) <= yc < max(y), so shared vertices
    are counted once and results are exact for the simple polygons used here.
    """
    out = np.zeros((height, width), dtype=bool)
    n = len(verts)
    for row in range(height):
        yc = row + 0.5
        xs = []
        for a in range(n):
            x1, y1 = verts[a]
            x2, y2 = verts[(a + 1) % n]
            if (y1 <= yc < y2) or (y2 <= yc < y1):
                xs.append(x1 + (yc - y1) * (x2 - x1) / (y2 - y1))
        xs.sort()
        for b in range(0, len(xs) - 1, 2):
            lo = int(np.ceil(xs[b] - 0.5))
            hi = int(np.floor(xs[b + 1] - 0.5))
            if hi >= lo:
                out[row, max(lo, 0):min(hi, width - 1) + 1] = True
    return out


def _unit_direction(rng):
    # rejection-sampled direction; sqrt is IEEE-exact so this stays portable
    while True:
        dx = 2.0 * rng.uniform() - 1.0
        dy = 2.0 * rng.uniform() - 1.0
        n2 = dx * dx + dy * dy
        if 0.01 <= n2 <= 1.0:
            n = np.sqrt(n2)
            return dx / n, dy / n


def _building_polygon(rng, spec):
    h, w = spec.height, spec.width
    kind = rng.randint(0, 2)
    a = 0.5 * rng.randint(spec.min_side, spec.max_side)
    b = 0.5 * rng.randint(spec.min_side, spec.max_side)
    if kind == 0:  # axis-aligned rectangle
        cx = spec.max_side + rng.uniform() * (w - 2 * spec.max_side)
        cy = spec.max_side + rng.uniform() * (h - 2 * spec.max_side)
        return [(cx - a, cy - b), (cx + a, cy - b), (cx + a, cy + b),
                (cx - a, cy + b)]
    if kind == 1:  # rotated rectangle
        dx, dy = _unit_direction(rng)
        m = np.sqrt(a * a + b * b) + 1.0
        cx = m + rng.uniform() * (w - 2 * m)
        cy = m + rng.uniform() * (h - 2 * m)
        px, py = -dy, dx
        return [(cx - a * dx - b * px, cy - a * dy - b * py),
                (cx + a * dx - b * px, cy + a * dy - b * py),
                (cx + a * dx + b * px, cy + a * dy + b * py),
                (cx - a * dx + b * px, cy - a * dy + b * py)]
    # L-shape: axis-aligned rectangle with one quadrant removed
    cx = spec.max_side + rng.uniform() * (w - 2 * spec.max_side)
    cy = spec.max_side + rng.uniform() * (h - 2 * spec.max_side)
    x0, x1, y0, y1 = cx - a, cx + a, cy - b, cy + b
    cut_x = x0 + (x1 - x0) * (0.35 + 0.3 * rng.uniform())
    cut_y = y0 + (y1 - y0) * (0.35 + 0.3 * rng.uniform())
    corner = rng.randint(0, 3)
    if corner == 0:
        return [(cut_x, y0), (x1, y0), (x1, y1), (x0, y1), (x0, cut_y),
                (cut_x, cut_y)]
    if corner == 1:
        return [(x0, y0), (cut_x, y0), (cut_x, cut_y), (x1, cut_y), (x1, y1),
                (x0, y1)]
    if corner == 2:
        return [(x0, y0), (x1, y0), (x1, cut_y), (cut_x, cut_y), (cut_x, y1),
                (x0, y1)]
    return [(x0, y0), (x1, y0), (x1, y1), (cut_x, y1), (cut_x, cut_y),
            (x0, cut_y)]


def _background(rng, spec):
    # low-frequency clutter with amplitude comparable to the building
    # contrast, so bare blob detection false-fires without context
    h, w = spec.height, spec.width
    gh, gw = h // 8 + 2, w // 8 + 2
    grid = 0.22 + 0.26 * rng.uniform_array(gh * gw).reshape(gh, gw)
    ys = np.arange(h) / 8.0
    xs = np.arange(w) / 8.0
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    g00 = grid[y0][:, x0]
    g01 = grid[y0][:, x0 + 1]
    g10 = grid[y0 + 1][:, x0]
    g11 = grid[y0 + 1][:, x0 + 1]
    base = (g00 * (1 - fy) * (1 - fx) + g01 * (1 - fy) * fx
            + g10 * fy * (1 - fx) + g11 * fy * fx)
    tint = (0.95, 1.0, 0.92)
    return np.stack([base * t for t in tint])


def _paint_road(rng, spec, image, scene_contrast):
    # roads share the scene's building intensity and tint jitter, so only
    # their elongated full-extent shape distinguishes them
    h, w = spec.height, spec.width
    if rng.randint(0, 1) == 0:
        p1 = (rng.uniform() * w, -1.0)
        p2 = (rng.uniform() * w, h + 1.0)
    else:
        p1 = (-1.0, rng.uniform() * h)
        p2 = (w + 1.0, rng.uniform() * h)
    half = 1.0 + 1.2 * rng.uniform()
    level = 0.25 + scene_contrast * (0.85 + 0.3 * rng.uniform())
    tints = 1.0 - 0.06 * rng.uniform_array(3)
    ys, xs = np.mgrid[0:h, 0:w]
    px = xs + 0.5 - p1[0]
    py = ys + 0.5 - p1[1]
    ex, ey = p2[0] - p1[0], p2[1] - p1[1]
    t = np.clip((px * ex + py * ey) / (ex * ex + ey * ey), 0.0, 1.0)
    d2 = (px - t * ex) ** 2 + (py - t * ey) ** 2
    inside = d2 <= half * half
    for c in range(3):
        image[c][inside] = level * tints[c]


def generate_scene(seed, spec=None):
    """Render the scene for (seed, spec); fully deterministic."""
    spec = spec or SceneSpec()
    spec.validate()
    rng = SplitMix64(seed)
    h, w = spec.height, spec.width
    image = _background(rng, spec)
    mask = np.zeros((h, w), dtype=bool)
    # one contrast level per scene: footprint visibility must be judged
    # against the scene's own statistics, not an absolute threshold
    scene_contrast = spec.contrast_lo \
        + rng.uniform() * (spec.contrast_hi - spec.contrast_lo)
    for _ in range(rng.randint(min(2, spec.max_roads), spec.max_roads)):
        _paint_road(rng, spec, image, scene_contrast)
    n_buildings = rng.randint(spec.min_buildings, spec.max_buildings)
    for _ in range(n_buildings):
        poly = _building_polygon(rng, spec)
        level = 0.25 + scene_contrast * (0.85 + 0.3 * rng.uniform())
        tints = 1.0 - 0.06 * rng.uniform_array(3)
        shadow = [(x + spec.shadow_offset, y + spec.shadow_offset)
                  for x, y in poly]
        sfill = fill_polygon(shadow, h, w)
        for c in range(3):
            image[c][sfill] *= 1.0 - spec.shadow_strength
        bfill = fill_polygon(poly, h, w)
        for c in range(3):
            image[c][bfill] = level * tints[c]
        mask |= bfill
    noise = spec.noise_std * 2.0 * (
        rng.uniform_array(3 * 3 * h * w).reshape(3, 3, h, w).sum(axis=0) - 1.5)
    image = np.clip(image + noise, 0.0, 1.0)
    return SegSample(image, mask[None].astype(np.uint8), seed)


def scene_mask_oracle(seed, spec=None):
    """Re-derive the mask by replaying the stream and re-rasterizing the
    building polygons only (alignment check support)."""
    spec = spec or SceneSpec()
    rng = SplitMix64(seed)
    h, w = spec.height, spec.width
    _background(rng, spec)
    scene_contrast = spec.contrast_lo \
        + rng.uniform() * (spec.contrast_hi - spec.contrast_lo)
    for _ in range(rng.randint(min(2, spec.max_roads), spec.max_roads)):
        _paint_road(rng, spec, np.zeros((3, h, w)), scene_contrast)
    mask = np.zeros((h, w), dtype=bool)
    for _ in range(rng.randint(spec.min_buildings, spec.max_buildings)):
        poly = _building_polygon(rng, spec)
        rng.uniform()
        rng.uniform_array(3)
        mask |= fill_polygon(poly, h, w)
    return mask[None].astype(np.uint8)


def build_dataset(base_seed, n_train, n_val, spec=None):
    """Two disjoint sample lists; sample i uses child stream i (train) or
    n_train + i (val)."""
    if n_train < 1 or n_val < 1:
        raise ValueError("need at least one sample per split")
    spec = spec or SceneSpec()
    train = [generate_scene(child_seed(base_seed, i), spec)
             for i in range(n_train)]
    val = [generate_scene(child_seed(base_seed, n_train + i), spec)
           for i in range(n_val)]
    return train, val


# ---------------------------------------------------------------------------
# on-disk layout: <root>/{train,val}/<index>_img.ppm + <index>_mask.pgm


def quantize(image):
    """[3, H, W] float in [0,1] -> [H, W, 3] uint8, round-half-up."""
    return np.floor(image * 255.0 + 0.5).astype(np.uint8).transpose(1, 2, 0)


def write_split(root, split, samples):
    d = os.path.join(root, split)
    os.makedirs(d, exist_ok=True)
    for i, s in enumerate(samples):
        netpbm.write_ppm(os.path.join(d, f"{i:05d}_img.ppm"), quantize(s.image))
        netpbm.write_pgm(os.path.join(d, f"{i:05d}_mask.pgm"),
                         s.mask[0] * np.uint8(255))


def write_manifest(root, base_seed, n_train, n_val, spec):
    lines = [f"base_seed = {base_seed}", f"n_train = {n_train}",
             f"n_val = {n_val}"]
    for f in fields(spec):
        lines.append(f"{f.name} = {getattr(spec, f.name)}")
    with open(os.path.join(root, "manifest.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_manifest(root):
    values = {}
    with open(os.path.join(root, "manifest.txt")) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, val = line.partition("=")
            values[key.strip()] = val.strip()
    base_seed = int(values.pop("base_seed"))
    n_train = int(values.pop("n_train"))
    n_val = int(values.pop("n_val"))
    spec = SceneSpec()
    for f in fields(SceneSpec):
        if f.name in values:
            setattr(spec, f.name, type(getattr(spec, f.name))(values[f.name]))
    return base_seed, n_train, n_val, spec


def generate_to_disk(root, base_seed, n_train, n_val, spec=None):
    spec = spec or SceneSpec()
    train, val = build_dataset(base_seed, n_train, n_val, spec)
    write_split(root, "train", train)
    write_split(root, "val", val)
    write_manifest(root, base_seed, n_train, n_val, spec)


def load_split(root, split, dtype=np.float32):
    """Images scaled to [0,1] as [N,3,H,W]; masks as [N,1,H,W] in {0,1}."""
    d = os.path.join(root, split)
    names = sorted(n for n in os.listdir(d) if n.endswith("_img.ppm"))
    if not names:
        raise FileNotFoundError(f"no samples under {d}")
    images, masks = [], []
    for n in names:
        img = netpbm.read_ppm(os.path.join(d, n)).transpose(2, 0, 1)
        images.append(img.astype(dtype) / dtype(255.0))
        m = netpbm.read_pgm(os.path.join(d, n.replace("_img.ppm", "_mask.pgm")))
        masks.append((m > 127).astype(dtype)[None])
    return np.stack(images), np.stack(masks)
