"""
Photometric reprojection error (SSIM + L1) and edge-aware disparity smoothness.

Every loss here comes with its backward pass so the direct optimizer can
assemble an exact gradient without an autodiff framework.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .exceptions import ContractViolationError
from .grid_service import box_mean3, box_mean3_adjoint
from .schemas import PhotometricConfig
from .validators import validate_same_shape

logger = logging.getLogger(__name__)

MIN_MEAN_DISPARITY = 1e-9


@dataclass
class _SsimStats:
    mu_a: np.ndarray
    mu_b: np.ndarray
    n1: np.ndarray
    n2: np.ndarray
    d1: np.ndarray
    d2: np.ndarray

    @property
    def ssim(self) -> np.ndarray:
        return (self.n1 * self.n2) / (self.d1 * self.d2)


def _ssim_stats(a: np.ndarray, b: np.ndarray, cfg: PhotometricConfig) -> _SsimStats:
    validate_same_shape(a, b, "SSIM inputs")
    mu_a = box_mean3(a)
    mu_b = box_mean3(b)
    var_a = box_mean3(a * a) - mu_a * mu_a
    var_b = box_mean3(b * b) - mu_b * mu_b
    cov = box_mean3(a * b) - mu_a * mu_b
    return _SsimStats(
        mu_a=mu_a,
        mu_b=mu_b,
        n1=2.0 * mu_a * mu_b + cfg.ssim_c1,
        n2=2.0 * cov + cfg.ssim_c2,
        d1=mu_a * mu_a + mu_b * mu_b + cfg.ssim_c1,
        d2=var_a + var_b + cfg.ssim_c2,
    )


def ssim_map(a: np.ndarray, b: np.ndarray, cfg: PhotometricConfig) -> np.ndarray:
    """Per-pixel SSIM over a 3x3 uniform window with reflection padding."""
    return _ssim_stats(a, b, cfg).ssim


def _ssim_backward(stats: _SsimStats, a: np.ndarray, b: np.ndarray, grad_ssim: np.ndarray) -> np.ndarray:
    """Gradient of sum(grad_ssim * SSIM(a, b)) with respect to b."""
    denom = stats.d1 * stats.d2
    s = stats.ssim
    d_cov = 2.0 * stats.n1 / denom
    d_var_b = -s / stats.d2
    d_mu_b = 2.0 * stats.mu_a * stats.n2 / denom - 2.0 * stats.mu_b * s / stats.d1

    # cov = E[ab] - mu_a mu_b and var_b = E[b^2] - mu_b^2 also depend on mu_b
    g_mu = grad_ssim * (d_mu_b - d_cov * stats.mu_a - 2.0 * d_var_b * stats.mu_b)
    g_ab = grad_ssim * d_cov
    g_bb = grad_ssim * d_var_b
    return box_mean3_adjoint(g_mu) + a * box_mean3_adjoint(g_ab) + 2.0 * b * box_mean3_adjoint(g_bb)


def photometric_error(target: np.ndarray, recon: np.ndarray, cfg: PhotometricConfig) -> np.ndarray:
    """(alpha/2)(1 - SSIM) + (1 - alpha)|target - recon|, averaged over channels."""
    ssim = ssim_map(target, recon, cfg)
    error = cfg.alpha / 2.0 * (1.0 - ssim) + (1.0 - cfg.alpha) * np.abs(target - recon)
    if error.ndim == 3:
        error = error.mean(axis=-1)
    return error


def photometric_error_backward(target: np.ndarray, recon: np.ndarray, grad_map: np.ndarray,
                               cfg: PhotometricConfig) -> np.ndarray:
    """Gradient of sum(grad_map * photometric_error(target, recon)) with respect to recon.

    The L1 subgradient at an exact match is 0.
    """
    g = grad_map
    if recon.ndim == 3:
        g = grad_map[..., None] / recon.shape[-1]
    stats = _ssim_stats(target, recon, cfg)
    grad = _ssim_backward(stats, target, recon, -cfg.alpha / 2.0 * g)
    grad += (1.0 - cfg.alpha) * np.sign(recon - target) * g
    return grad


# ============================================================================
# SMOOTHNESS
# ============================================================================

def _edge_weights(image: np.ndarray):
    dx = np.abs(np.diff(image, axis=1))
    dy = np.abs(np.diff(image, axis=0))
    if image.ndim == 3:
        dx, dy = dx.mean(axis=-1), dy.mean(axis=-1)
    return np.exp(-dx), np.exp(-dy)


def smoothness_loss_and_grad(disp: np.ndarray, image: np.ndarray):
    """Edge-aware first-order smoothness of the mean-normalized disparity, and its gradient."""
    validate_same_shape(disp, image[..., 0] if image.ndim == 3 else image, "disparity and image")
    if min(disp.shape) < 2:
        raise ContractViolationError("Smoothness needs at least 2x2 pixels")
    mean = disp.mean()
    if mean <= MIN_MEAN_DISPARITY:
        raise ContractViolationError(f"Mean disparity {mean} too small to normalize")

    wx, wy = _edge_weights(image)
    norm = disp / mean
    gx = np.diff(norm, axis=1)
    gy = np.diff(norm, axis=0)
    loss = float(np.mean(np.abs(gx) * wx) + np.mean(np.abs(gy) * wy))

    cx = np.sign(gx) * wx / gx.size
    cy = np.sign(gy) * wy / gy.size
    g_norm = np.zeros_like(norm)
    g_norm[:, 1:] += cx
    g_norm[:, :-1] -= cx
    g_norm[1:, :] += cy
    g_norm[:-1, :] -= cy
    grad = g_norm / mean - np.sum(g_norm * disp) / (disp.size * mean * mean)
    return loss, grad


def smoothness_loss(disp: np.ndarray, image: np.ndarray) -> float:
    return smoothness_loss_and_grad(disp, image)[0]
