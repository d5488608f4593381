"""Timestep-dependent corruption of the clean target.

Simulates the drift between ground-truth-derived training inputs and the
states actually visited while sampling: masks are recolored, displaced and
partially erased (segmentation targets), scalar fields are blurred (depth
targets). Corruption strength follows the timestep, larger near pure noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .toytask import ANCHOR


@dataclass(frozen=True)
class AugmentationSpec:
    enabled: bool = True
    intensity_multiplier: float = 1.0
    schedule: str = "linear"            # "linear" | "constant"
    color: bool = True
    location: bool = True
    shape: bool = True
    blur: bool = False
    color_max: float = 0.2
    rotate_max_deg: float = 10.0
    translate_max_frac: float = 0.05
    scale_range: tuple[float, float] = (0.95, 1.05)
    erase_frac_range: tuple[float, float] = (0.01, 0.05)
    blur_kernel: int = 31
    blur_sigma_max: float = 10.0

    def __post_init__(self):
        if self.schedule not in ("linear", "constant"):
            raise ValueError(f"unknown intensity schedule {self.schedule!r}")
        if self.intensity_multiplier < 0 or self.color_max < 0 or self.rotate_max_deg < 0:
            raise ValueError("intensity parameters must be non-negative")
        if not (0 <= self.erase_frac_range[0] <= self.erase_frac_range[1] <= 1):
            raise ValueError("erase_frac_range must lie within [0, 1]")
        if self.blur_kernel % 2 == 0:
            raise ValueError("blur_kernel must be odd")

    def intensity_scale(self, t: int, T: int) -> float:
        if self.schedule == "linear":
            return self.intensity_multiplier * t / T
        return self.intensity_multiplier


def _transform_mask(mask: np.ndarray, angle_deg: float, translate: tuple[float, float],
                    scale: float) -> np.ndarray:
    """Rotate/scale/translate a boolean mask about its centroid (nearest neighbor)."""
    G = mask.shape[0]
    idx = np.argwhere(mask)
    if len(idx) == 0:
        return mask.copy()
    cr, cc = idx.mean(axis=0)
    theta = np.deg2rad(angle_deg)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    rows, cols = np.mgrid[0:G, 0:G]
    # inverse map: output pixel -> source pixel
    dr = rows - cr - translate[0]
    dc = cols - cc - translate[1]
    src_r = (cos_t * dr + sin_t * dc) / scale + cr
    src_c = (-sin_t * dr + cos_t * dc) / scale + cc
    sr = np.rint(src_r).astype(np.int64)
    sc = np.rint(src_c).astype(np.int64)
    inside = (sr >= 0) & (sr < G) & (sc >= 0) & (sc < G)
    out = np.zeros_like(mask)
    out[inside] = mask[sr[inside], sc[inside]]
    return out


def _erase_rectangles(mask: np.ndarray, frac: float, rng: np.random.Generator) -> np.ndarray:
    """Remove axis-aligned sub-rectangles totaling about ``frac`` of mask area."""
    out = mask.copy()
    area = int(mask.sum())
    target = max(int(round(frac * area)), 1)
    removed = 0
    for _ in range(8):
        if removed >= target:
            break
        idx = np.argwhere(out)
        if len(idx) == 0:
            break
        r, c = idx[int(rng.integers(len(idx)))]
        h = int(rng.integers(1, 3))
        w = int(rng.integers(1, 3))
        patch = out[r:r + h, c:c + w]
        removed += int(patch.sum())
        patch[:] = False
    return out


def augment(x0: np.ndarray, mask: np.ndarray, t: int, T: int, spec: AugmentationSpec,
            rng: np.random.Generator, scene_grid: np.ndarray | None = None) -> np.ndarray:
    """Corrupt a mask-painted target; vacated pixels revert to the scene.

    ``scene_grid`` is the clean conditioning image underneath the paint; it
    is required for location jitter and erasing to restore vacated pixels.
    Without it those pixels fall back to the content of ``x0`` (exact
    outside the original mask, still painted inside it).

    t = 0 is accepted as the clean-data boundary (zero intensity under the
    linear schedule).
    """
    if not 0 <= t <= T:
        raise IndexError(f"timestep {t} out of range 0..{T}")
    mask = mask.astype(bool)
    if not spec.enabled or spec.intensity_multiplier == 0.0 or not mask.any():
        return x0.copy()
    s = spec.intensity_scale(t, T)
    background = scene_grid if scene_grid is not None else x0
    paint = ANCHOR.copy()

    if spec.color:
        c = spec.color_max * s
        gain = 1.0 + rng.uniform(-c, c, size=3)
        bias = rng.uniform(-c, c, size=3)
        paint = np.clip(paint * gain + bias, -1.0, 1.0)

    new_mask = mask
    if spec.location:
        angle = rng.uniform(-spec.rotate_max_deg * s, spec.rotate_max_deg * s)
        G = mask.shape[0]
        shift = spec.translate_max_frac * s * G
        translate = (rng.uniform(-shift, shift), rng.uniform(-shift, shift))
        lo, hi = spec.scale_range
        # shrink the scale interval toward 1 with the intensity scale
        scale = rng.uniform(1.0 + (lo - 1.0) * s, 1.0 + (hi - 1.0) * s)
        moved = _transform_mask(mask, angle, translate, scale)
        if moved.any():
            new_mask = moved

    if spec.shape:
        frac = rng.uniform(*spec.erase_frac_range)  # unscaled by s by design
        new_mask = _erase_rectangles(new_mask, frac, rng)

    out = background.copy()
    out[:, new_mask] = paint[:, None]
    # pixels never touched by either mask keep their x0 content exactly
    untouched = ~(mask | new_mask)
    out[:, untouched] = x0[:, untouched]
    return out


def gaussian_kernel_1d(sigma: float, half: int) -> np.ndarray:
    x = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(field: np.ndarray, t: int, T: int, spec: AugmentationSpec,
                  rng: np.random.Generator) -> np.ndarray:
    """Reflect-padded separable Gaussian blur with randomly drawn sigma."""
    if field.ndim != 2:
        raise ValueError(f"expected a single-channel 2-D field, got shape {field.shape}")
    if not 1 <= t <= T:
        raise IndexError(f"timestep {t} out of range 1..{T}")
    sigma_max = spec.blur_sigma_max * (t / T) * spec.intensity_multiplier
    sigma = float(rng.uniform(0.0, sigma_max))
    return blur_with_sigma(field, sigma, spec.blur_kernel)


def blur_with_sigma(field: np.ndarray, sigma: float, kernel_size: int) -> np.ndarray:
    if sigma <= 0:
        return field.copy()
    G = field.shape[0]
    half = min(kernel_size // 2, G - 1)  # kernel clipped to grid
    k = gaussian_kernel_1d(sigma, half)
    padded = np.pad(field, half, mode="symmetric")
    # separable convolution: rows then columns
    tmp = np.apply_along_axis(lambda v: np.convolve(v, k, mode="valid"), 1, padded)
    out = np.apply_along_axis(lambda v: np.convolve(v, k, mode="valid"), 0, tmp)
    return out
