"""
Dense grid primitives shared by every loss.

Grids are numpy arrays: a ScalarGrid is ``(H, W)`` float64, a VectorGrid is
``(H, W, C)`` float64 and a LabelGrid is ``(H, W)`` integer. Pixels are
addressed as ``(row, col)``; sampling coordinates are ``(x, y)`` with pixel
centres on integers, x to the right and y down.
"""

import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .exceptions import ContractViolationError
from .validators import validate_finite, validate_patch_size

logger = logging.getLogger(__name__)

NORM_EPS = 1e-8

Pixel = Tuple[int, int]


@dataclass(frozen=True)
class CoordGrid:
    """Per-pixel (x, y) sampling positions, in pixel units of a source grid."""
    x: np.ndarray
    y: np.ndarray

    @classmethod
    def identity(cls, height: int, width: int) -> "CoordGrid":
        y, x = np.mgrid[0:height, 0:width].astype(np.float64)
        return cls(x=x, y=y)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.x.shape


# ============================================================================
# BILINEAR SAMPLING
# ============================================================================

def _check_coords(coords: CoordGrid):
    if coords.x.shape != coords.y.shape:
        raise ContractViolationError(f"Coordinate planes disagree: {coords.x.shape} vs {coords.y.shape}")
    validate_finite(coords.x, "x coordinates")
    validate_finite(coords.y, "y coordinates")


def _cell(coord: np.ndarray, size: int):
    # Integer positions belong to the cell on their left/upper side.
    clamped = np.clip(coord, 0.0, size - 1)
    i0 = np.clip(np.ceil(clamped) - 1, 0, max(size - 2, 0)).astype(np.intp)
    i1 = np.minimum(i0 + 1, size - 1)
    frac = clamped - i0
    inside = (coord >= 0.0) & (coord <= size - 1)
    return i0, i1, frac, inside


def _corners(src: np.ndarray, coords: CoordGrid):
    _check_coords(coords)
    h, w = src.shape[:2]
    x0, x1, fx, in_x = _cell(coords.x, w)
    y0, y1, fy, in_y = _cell(coords.y, h)
    if src.ndim == 3:
        fx, fy, in_x, in_y = fx[..., None], fy[..., None], in_x[..., None], in_y[..., None]
    return src[y0, x0], src[y0, x1], src[y1, x0], src[y1, x1], fx, fy, in_x, in_y


def bilinear_sample(src: np.ndarray, coords: CoordGrid) -> np.ndarray:
    """Sample ``src`` at ``coords`` with clamp-to-edge borders; exact at integer coordinates."""
    a, b, c, d, fx, fy, _, _ = _corners(src, coords)
    return (1.0 - fy) * ((1.0 - fx) * a + fx * b) + fy * ((1.0 - fx) * c + fx * d)


def bilinear_sample_grad(src: np.ndarray, coords: CoordGrid):
    """Sampled values and their partial derivatives with respect to x and y.

    Outside the clamp range the sample is constant, so both derivatives are 0 there.
    """
    a, b, c, d, fx, fy, in_x, in_y = _corners(src, coords)
    values = (1.0 - fy) * ((1.0 - fx) * a + fx * b) + fy * ((1.0 - fx) * c + fx * d)
    d_dx = np.where(in_x, (1.0 - fy) * (b - a) + fy * (d - c), 0.0)
    d_dy = np.where(in_y, (1.0 - fx) * (c - a) + fx * (d - b), 0.0)
    return values, d_dx, d_dy


# ============================================================================
# FEATURE NORMALIZATION
# ============================================================================

def _check_vectors(features: np.ndarray):
    if features.ndim != 3 or features.shape[-1] < 2:
        raise ContractViolationError(f"Expected an (H, W, C>=2) feature grid, got {features.shape}")


def l2_normalize(features: np.ndarray) -> np.ndarray:
    _check_vectors(features)
    norm = np.linalg.norm(features, axis=-1, keepdims=True)
    return features / np.maximum(norm, NORM_EPS)


def l2_normalize_backward(features: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Pull a gradient with respect to ``l2_normalize(features)`` back onto ``features``."""
    _check_vectors(features)
    norm = np.linalg.norm(features, axis=-1, keepdims=True)
    denom = np.maximum(norm, NORM_EPS)
    unit = features / denom
    radial = np.sum(unit * grad_out, axis=-1, keepdims=True)
    return np.where(norm > NORM_EPS, (grad_out - unit * radial) / denom, grad_out / denom)


# ============================================================================
# PATCHES
# ============================================================================

def patch_offsets(patch_size: int) -> List[Pixel]:
    """Row-major (dy, dx) offsets of a square patch, centre excluded."""
    validate_patch_size(patch_size)
    r = patch_size // 2
    return [(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1) if (dy, dx) != (0, 0)]


def patch_indices(center: Pixel, patch_size: int, bounds: Tuple[int, int]) -> List[Pixel]:
    """In-bounds (row, col) pixels of the patch around ``center``, centre excluded."""
    height, width = bounds
    row, col = center
    return [(row + dy, col + dx) for dy, dx in patch_offsets(patch_size)
            if 0 <= row + dy < height and 0 <= col + dx < width]


# ============================================================================
# BOX FILTER AND POOLING
# ============================================================================

def _spatial_pad(ndim: int):
    return [(1, 1), (1, 1)] + [(0, 0)] * (ndim - 2)


def box_mean3(grid: np.ndarray) -> np.ndarray:
    """3x3 uniform mean with reflection padding (edge pixel not repeated)."""
    h, w = grid.shape[:2]
    if h < 2 or w < 2:
        raise ContractViolationError("Reflection padding needs at least 2x2 pixels")
    padded = np.pad(grid.astype(np.float64), _spatial_pad(grid.ndim), mode="reflect")
    out = np.zeros(grid.shape, dtype=np.float64)
    for dy in range(3):
        for dx in range(3):
            out += padded[dy:dy + h, dx:dx + w]
    return out / 9.0


def box_mean3_adjoint(grad: np.ndarray) -> np.ndarray:
    """Exact adjoint of ``box_mean3``."""
    h, w = grad.shape[:2]
    spread = grad / 9.0
    padded = np.zeros((h + 2, w + 2) + grad.shape[2:], dtype=np.float64)
    for dy in range(3):
        for dx in range(3):
            padded[dy:dy + h, dx:dx + w] += spread
    # padded col 0 mirrors col 2, col w+1 mirrors col w-1; rows likewise
    padded[:, 2] += padded[:, 0]
    padded[:, w - 1] += padded[:, w + 1]
    padded[2, :] += padded[0, :]
    padded[h - 1, :] += padded[h + 1, :]
    return padded[1:h + 1, 1:w + 1]


def downsample_mean(grid: np.ndarray, factor: int) -> np.ndarray:
    """Mean-pool non-overlapping factor x factor blocks; a ragged border is dropped."""
    if factor == 1:
        return grid
    h, w = grid.shape[0] // factor, grid.shape[1] // factor
    if h == 0 or w == 0:
        raise ContractViolationError(f"Pooling factor {factor} exceeds grid size {grid.shape[:2]}")
    blocks = grid[:h * factor, :w * factor].reshape(h, factor, w, factor, *grid.shape[2:])
    return blocks.mean(axis=(1, 3))


def downsample_mean_adjoint(grad: np.ndarray, factor: int, full_shape: Tuple[int, ...]) -> np.ndarray:
    if factor == 1:
        return grad
    h, w = grad.shape[:2]
    out = np.zeros(full_shape, dtype=np.float64)
    up = np.repeat(np.repeat(grad, factor, axis=0), factor, axis=1) / (factor * factor)
    out[:h * factor, :w * factor] = up
    return out


def downsample_labels(labels: np.ndarray, factor: int) -> np.ndarray:
    """Label of each block's centre pixel."""
    if factor == 1:
        return labels
    h, w = labels.shape[0] // factor, labels.shape[1] // factor
    return labels[factor // 2::factor, factor // 2::factor][:h, :w]
