"""
Procedural stereo scenes with exact ground truth.

A textured fronto-parallel background plane at disparity ``d_bg`` carries one
or more textured rectangles at larger integer disparities. The left view shows
each layer's texture at its own position; the right view shows the same
texture values shifted left by the layer's disparity, painted back-to-front.
Ground-truth correspondences are therefore bit-exact, and background pixels
that the foreground hides in the right view form the occlusion band.

The default stripe background repeats every ``d_fg - d_bg`` pixels along x, so
an occluded band pixel matched at the foreground disparity reads a background
pixel with exactly its own value.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .camera_service import stereo_coords, warp_image
from .exceptions import ContractViolationError
from .grid_service import Pixel
from .photometric_service import photometric_error
from .schemas import PhotometricConfig, Rect, SceneSpec, TextureKind
from .validators import validate_scene_geometry

logger = logging.getLogger(__name__)

TEXTURE_LO = 0.1
TEXTURE_HI = 0.9


@dataclass(frozen=True)
class StereoPair:
    left: np.ndarray
    right: np.ndarray
    gt_disparity: np.ndarray
    labels: np.ndarray
    occlusion_mask: np.ndarray
    outside_mask: np.ndarray
    d_bg: int
    d_fg: int
    fg_rect: Rect

    @property
    def shape(self) -> Tuple[int, int]:
        return self.left.shape

    def clean_background(self, margin: int = 0) -> np.ndarray:
        """Background pixels visible in both views, optionally eroded away from any disturbance."""
        disturbed = (self.labels != 0) | (self.occlusion_mask != 0) | (self.outside_mask != 0)
        if margin > 0:
            disturbed = _dilate(disturbed, margin)
        return ~disturbed


def _dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    padded = np.pad(mask, radius, mode="constant", constant_values=True)
    h, w = mask.shape
    out = np.zeros_like(mask)
    for dy in range(2 * radius + 1):
        for dx in range(2 * radius + 1):
            out |= padded[dy:dy + h, dx:dx + w]
    return out


# ============================================================================
# TEXTURE
# ============================================================================

def value_noise(height: int, width: int, rng: np.random.Generator, scale: float,
                octaves: int, persistence: float) -> np.ndarray:
    """Bilinearly interpolated lattice randoms summed over octaves, remapped to [0.1, 0.9]."""
    total = np.zeros((height, width), dtype=np.float64)
    amplitude, weight = 1.0, 0.0
    y, x = np.mgrid[0:height, 0:width].astype(np.float64)
    for octave in range(octaves):
        spacing = max(scale / (2 ** octave), 1.0)
        gy, gx = y / spacing, x / spacing
        lattice = rng.random((int(np.floor(gy.max())) + 2, int(np.floor(gx.max())) + 2))
        iy, ix = np.floor(gy).astype(np.intp), np.floor(gx).astype(np.intp)
        fy, fx = gy - iy, gx - ix
        layer = ((1 - fy) * ((1 - fx) * lattice[iy, ix] + fx * lattice[iy, ix + 1])
                 + fy * ((1 - fx) * lattice[iy + 1, ix] + fx * lattice[iy + 1, ix + 1]))
        total += amplitude * layer
        weight += amplitude
        amplitude *= persistence
    return TEXTURE_LO + (TEXTURE_HI - TEXTURE_LO) * total / weight


def stripe_levels(period: int, slope: float) -> Tuple[float, float]:
    """Lowest and highest row base of the stripe texture.

    The foreground margin continues the ramp for two more periods, so bases stop
    ``slope * (3 * period - 1)`` below TEXTURE_HI.
    """
    hi = TEXTURE_HI - slope * (3 * period - 1)
    if hi <= TEXTURE_LO:
        raise ContractViolationError(
            f"stripe_slope {slope} is too steep for a period of {period} px")
    return TEXTURE_LO, hi


def stripe_bases(height: int, rng: np.random.Generator, period: int, slope: float) -> np.ndarray:
    """Per-row intensity offsets: even rows in the darkest quarter, odd rows in the brightest."""
    lo, hi = stripe_levels(period, slope)
    quarter = (hi - lo) / 4
    dark = rng.uniform(lo, lo + quarter, height)
    bright = rng.uniform(hi - quarter, hi, height)
    return np.where(np.arange(height) % 2 == 0, dark, bright)


def stripe_texture(bases: np.ndarray, width: int, period: int, slope: float, origin: int) -> np.ndarray:
    """Sawtooth ramp along x with the given period, phase zero at column ``origin``."""
    ramp = slope * np.mod(np.arange(width) - origin, period)
    return bases[:, None] + ramp[None, :]


# ============================================================================
# RENDERING
# ============================================================================

@dataclass
class _Layer:
    rect: Rect
    disparity: int
    label: int
    texture: np.ndarray


def _object_layer(spec: SceneSpec, rng: np.random.Generator, rect: Rect, disparity: int,
                  label: int, window: Optional[Rect], margin_bases: Optional[np.ndarray] = None) -> _Layer:
    x0, y0, x1, y1 = rect
    texture = value_noise(y1 - y0, x1 - x0, rng, spec.texture_scale,
                          spec.texture_octaves, spec.texture_persistence)
    if margin_bases is not None:
        # Leading columns continue the background ramp above its last value.
        period = spec.d_fg - spec.d_bg
        cols = min(2 * period, x1 - x0)
        texture[:, :cols] = margin_bases[y0:y1, None] + spec.stripe_slope * (period + np.arange(cols))[None, :]
    if window is not None:
        wx0, wy0, wx1, wy1 = window
        texture[wy0 - y0:wy1 - y0, wx0 - x0:wx1 - x0] = value_noise(
            wy1 - wy0, wx1 - wx0, rng, spec.texture_scale, spec.texture_octaves, spec.texture_persistence)
    return _Layer(rect=rect, disparity=disparity, label=label, texture=texture)


def visibility_occlusion(disparity: np.ndarray) -> np.ndarray:
    """Forward-map left pixels to the right view; a pixel is occluded when a
    higher-disparity pixel lands on the same right column."""
    height, width = disparity.shape
    target = np.arange(width)[None, :] - np.rint(disparity).astype(np.int64)
    occluded = np.zeros((height, width), dtype=np.uint8)
    for row in range(height):
        front = np.full(width, -np.inf)
        in_view = (target[row] >= 0) & (target[row] < width)
        np.maximum.at(front, target[row][in_view], disparity[row][in_view])
        cols = np.nonzero(in_view)[0]
        occluded[row, cols] = disparity[row, cols] < front[target[row, cols]]
    return occluded


def render_scene(spec: SceneSpec, texture_seed: Optional[int] = None) -> StereoPair:
    """Render the left/right views plus exact disparity, labels and occlusion mask."""
    validate_scene_geometry(spec.width, spec.height, spec.d_bg, spec.d_fg, spec.fg_rect)
    seed = spec.texture_seed if spec.texture_seed is not None else texture_seed
    if seed is None:
        raise ContractViolationError("A texture seed is required to render a scene")
    rng = np.random.default_rng(seed)
    h, w = spec.height, spec.width

    bases = None
    if spec.texture == TextureKind.STRIPES:
        period = spec.d_fg - spec.d_bg
        bases = stripe_bases(h, rng, period, spec.stripe_slope)
        background = stripe_texture(bases, w + spec.d_bg, period, spec.stripe_slope, spec.fg_rect[0])
    else:
        background = value_noise(h, w + spec.d_bg, rng, spec.texture_scale,
                                 spec.texture_octaves, spec.texture_persistence)
    layers = [_object_layer(spec, rng, spec.fg_rect, spec.d_fg, 1, spec.window_rect, bases)]
    for obj in spec.objects:
        layers.append(_object_layer(spec, rng, obj.rect, obj.disparity, obj.label, obj.window_rect))
    layers.sort(key=lambda layer: layer.disparity)

    left = background[:, :w].copy()
    right = background[:, spec.d_bg:spec.d_bg + w].copy()
    gt = np.full((h, w), float(spec.d_bg))
    labels = np.zeros((h, w), dtype=np.int64)
    for layer in layers:
        x0, y0, x1, y1 = layer.rect
        left[y0:y1, x0:x1] = layer.texture
        gt[y0:y1, x0:x1] = layer.disparity
        labels[y0:y1, x0:x1] = layer.label
        u0 = x0 - layer.disparity
        lo, hi = max(u0, 0), max(x1 - layer.disparity, 0)
        if hi > lo:
            right[y0:y1, lo:hi] = layer.texture[:, lo - u0:]

    occlusion = visibility_occlusion(gt)
    outside = (np.arange(w)[None, :] - gt < 0).astype(np.uint8)
    logger.info("rendered %dx%d scene: %d occluded, %d out-of-view pixels",
                w, h, int(occlusion.sum()), int(outside.sum()))
    return StereoPair(left=left, right=right, gt_disparity=gt, labels=labels,
                      occlusion_mask=occlusion, outside_mask=outside,
                      d_bg=spec.d_bg, d_fg=spec.d_fg, fg_rect=tuple(spec.fg_rect))


def band_width(pair: StereoPair) -> int:
    """Widest per-row run of occluded pixels."""
    return int(pair.occlusion_mask.sum(axis=1).max())


# ============================================================================
# PHOTOMETRIC LANDSCAPE
# ============================================================================

def candidate_disparities(d_lo: float, d_hi: float, step: float) -> np.ndarray:
    if d_lo <= 0 or d_hi < d_lo or step <= 0:
        raise ContractViolationError(f"Bad disparity range [{d_lo}, {d_hi}] step {step}")
    count = int(np.floor((d_hi - d_lo) / step + 1e-9)) + 1
    return d_lo + step * np.arange(count)


def cost_volume(pair: StereoPair, disparities: Sequence[float], cfg: PhotometricConfig) -> np.ndarray:
    """Photometric error of every left pixel at each uniform candidate disparity."""
    volume = np.empty((len(disparities),) + pair.shape)
    for i, d in enumerate(disparities):
        recon = warp_image(pair.right, stereo_coords(np.full(pair.shape, float(d))))
        volume[i] = photometric_error(pair.left, recon, cfg)
    return volume


def photometric_profile(pair: StereoPair, pixel: Pixel, d_range: Tuple[float, float], step: float,
                        cfg: PhotometricConfig) -> List[Tuple[float, float]]:
    """(disparity, error) curve of one left pixel, matching its window against right(x - d)."""
    row, col = pixel
    if not (0 <= row < pair.shape[0] and 0 <= col < pair.shape[1]):
        raise ContractViolationError(f"Pixel {pixel} outside the {pair.shape[1]}x{pair.shape[0]} scene")
    disparities = candidate_disparities(d_range[0], d_range[1], step)
    errors = cost_volume(pair, disparities, cfg)[:, row, col]
    return [(float(d), float(e)) for d, e in zip(disparities, errors)]


def profile_argmin(profile: List[Tuple[float, float]]) -> float:
    errors = np.array([e for _, e in profile])
    return profile[int(np.argmin(errors))][0]


@dataclass(frozen=True)
class LandscapeSummary:
    band_pixels: int
    band_at_fg: float
    band_at_bg: float
    background_pixels: int
    background_at_bg: float


def landscape_summary(pair: StereoPair, d_range: Tuple[float, float], step: float,
                      cfg: PhotometricConfig) -> LandscapeSummary:
    """Share of band / visible-background pixels whose profile argmin sits within 0.5 px
    of d_fg / d_bg."""
    disparities = candidate_disparities(d_range[0], d_range[1], step)
    argmin = disparities[np.argmin(cost_volume(pair, disparities, cfg), axis=0)]
    band = pair.occlusion_mask != 0
    background = pair.clean_background()

    def share(mask, value):
        return float(np.mean(np.abs(argmin[mask] - value) <= 0.5)) if mask.any() else 0.0

    return LandscapeSummary(band_pixels=int(band.sum()), band_at_fg=share(band, pair.d_fg),
                            band_at_bg=share(band, pair.d_bg), background_pixels=int(background.sum()),
                            background_at_bg=share(background, pair.d_bg))
