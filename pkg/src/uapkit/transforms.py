"""Random differentiable transform composite applied during crafting.

Per sample: one affine map (rotation, isotropic scale, translation about the
image center, bilinear resampling, zero fill), then a horizontal flip, then
up to ``patch_count`` non-overlapping rectangles forced to exactly zero.
For fixed sampled parameters the whole composite is linear in the pixels,
so ``transform_vjp`` is its exact transpose.
"""

from dataclasses import dataclass, field

import numpy as np

from .accel import warp_bilinear, warp_bilinear_vjp
from .errors import ConfigError
from .imageops import affine_inverse_matrix


@dataclass
class TransformConfig:
    rot_degrees: float = 5.0
    translate_frac: float = 0.05
    scale_range: tuple = (0.95, 1.05)
    hflip_prob: float = 0.5
    patch_count: int = 3
    patch_side_frac: tuple = (0.10, 0.30)
    seed: int | None = None

    def __post_init__(self):
        problems = []
        lo, hi = self.scale_range
        if not (0 < lo <= hi):
            problems.append(f"scale_range must satisfy 0 < low <= high, got {self.scale_range}")
        if not (0.0 <= self.hflip_prob <= 1.0):
            problems.append(f"hflip_prob must be in [0, 1], got {self.hflip_prob}")
        if self.patch_count < 0:
            problems.append(f"patch_count must be >= 0, got {self.patch_count}")
        plo, phi = self.patch_side_frac
        if not (0.0 < plo <= phi <= 1.0):
            problems.append(f"patch_side_frac must lie in (0, 1] with low <= high, got {self.patch_side_frac}")
        if self.rot_degrees < 0 or self.translate_frac < 0:
            problems.append("rot_degrees and translate_frac must be non-negative")
        if problems:
            raise ConfigError("; ".join(problems))

    @property
    def is_identity(self):
        lo, hi = self.scale_range
        return (self.rot_degrees == 0 and self.translate_frac == 0
                and lo == 1.0 and hi == 1.0 and self.hflip_prob == 0.0
                and self.patch_count == 0)


@dataclass
class PatchSet:
    """Rectangles as (top, left, height, width) integer boxes."""

    rects: list

    def validate(self, height, width):
        for t, l, ph, pw in self.rects:
            if not (0 <= t and 0 <= l and t + ph <= height and l + pw <= width and ph > 0 and pw > 0):
                raise ValueError(f"box {(t, l, ph, pw)} outside {height}x{width} bounds")
        for i in range(len(self.rects)):
            for j in range(i + 1, len(self.rects)):
                if _boxes_overlap(self.rects[i], self.rects[j]):
                    raise ValueError(f"boxes {self.rects[i]} and {self.rects[j]} overlap")


def _boxes_overlap(a, b):
    t1, l1, h1, w1 = a
    t2, l2, h2, w2 = b
    return t1 < t2 + h2 and t2 < t1 + h1 and l1 < l2 + w2 and l2 < l1 + w1


def sample_patches(height, width, cfg, rng, max_attempts=100):
    """Up to ``cfg.patch_count`` pairwise disjoint in-bounds boxes; boxes that
    cannot be placed after ``max_attempts`` rejections are skipped."""
    if height < 8 or width < 8:
        raise ValueError(f"patch sampling needs at least 8x8 images, got {height}x{width}")
    lo, hi = cfg.patch_side_frac
    rects = []
    for _ in range(cfg.patch_count):
        for _ in range(max_attempts):
            ph = max(1, int(round(rng.uniform(lo, hi) * height)))
            pw = max(1, int(round(rng.uniform(lo, hi) * width)))
            ph = min(ph, height)
            pw = min(pw, width)
            top = int(rng.integers(0, height - ph + 1))
            left = int(rng.integers(0, width - pw + 1))
            box = (top, left, ph, pw)
            if not any(_boxes_overlap(box, r) for r in rects):
                rects.append(box)
                break
    return PatchSet(rects=rects)


@dataclass
class TransformParams:
    """Frozen draw of the per-sample transform parameters."""

    inv_mats: np.ndarray            # [B,3,3] output -> source homogeneous maps
    flips: np.ndarray               # [B] bool
    patches: list = field(default_factory=list)  # PatchSet per sample


def sample_transform_params(batch_size, height, width, cfg, rng):
    thetas = rng.uniform(-cfg.rot_degrees, cfg.rot_degrees, size=batch_size)
    scales = rng.uniform(cfg.scale_range[0], cfg.scale_range[1], size=batch_size)
    txs = rng.uniform(-cfg.translate_frac * width, cfg.translate_frac * width, size=batch_size)
    tys = rng.uniform(-cfg.translate_frac * height, cfg.translate_frac * height, size=batch_size)
    flips = rng.random(batch_size) < cfg.hflip_prob
    inv_mats = np.stack([
        affine_inverse_matrix(height, width, angle_deg=thetas[b], scale=scales[b],
                              tx=txs[b], ty=tys[b])
        for b in range(batch_size)
    ])
    patches = [sample_patches(height, width, cfg, rng) if cfg.patch_count > 0 else PatchSet([])
               for _ in range(batch_size)]
    return TransformParams(inv_mats=inv_mats, flips=flips, patches=patches)


def _as_pixel_dtype(batch):
    batch = np.asarray(batch)
    if batch.dtype != np.float64:
        batch = batch.astype(np.float32)
    return batch


def apply_transform(batch, params):
    """Apply a frozen parameter draw; linear in ``batch`` (float64 batches
    are processed in full precision for gradient checks)."""
    out = warp_bilinear(_as_pixel_dtype(batch), params.inv_mats)
    if params.flips.any():
        out[params.flips] = out[params.flips, :, :, ::-1]
    for b, ps in enumerate(params.patches):
        for t, l, ph, pw in ps.rects:
            out[b, :, t:t + ph, l:l + pw] = 0.0
    return out


def transform_vjp(grad_out, params):
    """Exact transpose of :func:`apply_transform` for the same parameters."""
    g = _as_pixel_dtype(grad_out).copy()
    for b, ps in enumerate(params.patches):
        for t, l, ph, pw in ps.rects:
            g[b, :, t:t + ph, l:l + pw] = 0.0
    if params.flips.any():
        g[params.flips] = g[params.flips, :, :, ::-1]
    return warp_bilinear_vjp(g, params.inv_mats)


def random_transform(batch, cfg, rng=None):
    """Independently transform every sample of a [B,C,H,W] batch."""
    batch = _as_pixel_dtype(batch)
    if batch.ndim != 4 or batch.shape[0] == 0:
        raise ValueError(f"expected a nonempty [B,C,H,W] batch, got shape {batch.shape}")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    params = sample_transform_params(batch.shape[0], batch.shape[2], batch.shape[3], cfg, rng)
    return apply_transform(batch, params)
