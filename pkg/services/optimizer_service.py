"""
Direct per-pixel disparity optimization on a rendered stereo pair.

No network is trained: the left-view disparity grid itself is the variable.
The objective is the mean photometric error of the right view warped into the
left, plus edge-aware smoothness, plus the triplet loss on a fixed feature lift
of the disparity. Every gradient is analytic.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .camera_service import stereo_coords
from .exceptions import ContractViolationError, DivergenceError
from .grid_service import (bilinear_sample_grad, downsample_labels, downsample_mean,
                           downsample_mean_adjoint, l2_normalize)
from .photometric_service import photometric_error, photometric_error_backward, smoothness_loss_and_grad
from .scene_service import StereoPair
from .schemas import InitConfig, OptConfig
from .triplet_service import triplet_loss

logger = logging.getLogger(__name__)

DEFAULT_D_LO = 0.5

SnapshotHook = Callable[[int, np.ndarray], None]


# ============================================================================
# STATE
# ============================================================================

@dataclass(frozen=True)
class LossTerms:
    total: float
    pe: float
    smooth: float
    triplet: float

    def is_finite(self) -> bool:
        return bool(np.isfinite([self.total, self.pe, self.smooth, self.triplet]).all())


@dataclass(frozen=True)
class LossRecord:
    step: int
    total: float
    pe: float
    smooth: float
    triplet: float


@dataclass
class OptState:
    disparity: np.ndarray
    step_index: int = 0
    loss_history: List[LossRecord] = field(default_factory=list)

    def record(self, step: int, terms: LossTerms):
        if self.loss_history and step <= self.loss_history[-1].step:
            raise ContractViolationError(f"Loss history is append-only; step {step} already recorded")
        self.loss_history.append(LossRecord(step, terms.total, terms.pe, terms.smooth, terms.triplet))


# ============================================================================
# FEATURE LIFT
# ============================================================================

def feature_lift(disparity: np.ndarray, d_hi: float) -> np.ndarray:
    """Raw two-channel features [d / d_hi, 1]; the triplet loss normalizes them."""
    return np.stack([disparity / d_hi, np.ones_like(disparity)], axis=-1)


def lifted_features(disparity: np.ndarray, d_hi: float) -> np.ndarray:
    return l2_normalize(feature_lift(disparity, d_hi))


def feature_lift_backward(grad_features: np.ndarray, d_hi: float) -> np.ndarray:
    return grad_features[..., 0] / d_hi


# ============================================================================
# OBJECTIVE
# ============================================================================

def resolve_bounds(cfg: OptConfig, pair: StereoPair) -> Tuple[float, float]:
    if cfg.d_bounds is not None:
        return tuple(cfg.d_bounds)
    return DEFAULT_D_LO, 2.0 * pair.d_fg


def _multiscale_triplet(disparity: np.ndarray, labels: np.ndarray, cfg: OptConfig, d_hi: float):
    scales = cfg.triplet.scales
    loss, grad = 0.0, np.zeros_like(disparity)
    for s in scales:
        pooled = downsample_mean(disparity, s)
        loss_s, grad_feat = triplet_loss(feature_lift(pooled, d_hi), downsample_labels(labels, s), cfg.triplet)
        loss += loss_s / len(scales)
        grad += downsample_mean_adjoint(feature_lift_backward(grad_feat, d_hi), s, disparity.shape) / len(scales)
    return loss, grad


def total_loss_and_grad(state: OptState, pair: StereoPair, cfg: OptConfig,
                        d_bounds: Optional[Tuple[float, float]] = None):
    """Loss terms and the gradient of the total with respect to every disparity."""
    d = state.disparity
    if d.shape != pair.shape:
        raise ContractViolationError(f"Disparity {d.shape} does not match the scene {pair.shape}")
    d_hi = (d_bounds or resolve_bounds(cfg, pair))[1]

    # left pixel x reads right pixel x - d, so d(x_src)/dd = -1
    recon, d_dx, _ = bilinear_sample_grad(pair.right, stereo_coords(d))
    error = photometric_error(pair.left, recon, cfg.photometric)
    if cfg.mask_occluded:
        keep = pair.occlusion_mask == 0
        weights = keep / max(int(keep.sum()), 1)
    else:
        weights = np.full(d.shape, 1.0 / d.size)
    pe = float(np.sum(error * weights))
    grad = -photometric_error_backward(pair.left, recon, weights, cfg.photometric) * d_dx

    smooth, grad_smooth = smoothness_loss_and_grad(d, pair.left)
    grad += cfg.lambda_smooth * grad_smooth

    trip = 0.0
    if cfg.lambda_triplet > 0:
        trip, grad_trip = _multiscale_triplet(d, pair.labels, cfg, d_hi)
        grad += cfg.lambda_triplet * grad_trip

    total = pe + cfg.lambda_smooth * smooth + cfg.lambda_triplet * trip
    return LossTerms(total=total, pe=pe, smooth=smooth, triplet=trip), grad


# ============================================================================
# DRIVER
# ============================================================================

def initial_disparity(pair: StereoPair, init: InitConfig, seed: Optional[int],
                      d_bounds: Tuple[float, float]) -> np.ndarray:
    if init.kind == "ground_truth":
        d = pair.gt_disparity.copy()
    elif init.kind == "constant":
        d = np.full(pair.shape, init.value)
    else:
        init_seed = init.seed if init.seed is not None else seed
        if init_seed is None:
            raise ContractViolationError("uniform_random init needs a seed")
        d = np.random.default_rng(init_seed).uniform(init.lo, init.hi, size=pair.shape)
    return np.clip(d, *d_bounds)


def run(pair: StereoPair, cfg: OptConfig, seed: Optional[int] = None,
        on_snapshot: Optional[SnapshotHook] = None):
    """Plain gradient descent with post-step clamping; returns the final state and its report.

    Record k of the loss history is taken before update k; one more record
    follows the last update.
    """
    d_bounds = resolve_bounds(cfg, pair)
    state = OptState(disparity=initial_disparity(pair, cfg.init, seed, d_bounds))
    # Descent on d / d_hi with a per-pixel rate.
    step_scale = cfg.learning_rate * state.disparity.size * d_bounds[1] ** 2
    logger.info("optimizing %dx%d disparity for %d steps (lr %g, lambda_t %g)",
                pair.shape[1], pair.shape[0], cfg.steps, cfg.learning_rate, cfg.lambda_triplet)

    for step in range(cfg.steps + 1):
        terms, grad = total_loss_and_grad(state, pair, cfg, d_bounds)
        if not (terms.is_finite() and np.all(np.isfinite(grad))):
            raise DivergenceError(
                f"Non-finite loss at step {step}; lower the learning rate", last_finite_step=step - 1)
        state.record(step, terms)
        if step == cfg.steps:
            break

        if step % cfg.log_every == 0:
            logger.info("step %d: total %.6g pe %.6g smooth %.6g triplet %.6g",
                        step, terms.total, terms.pe, terms.smooth, terms.triplet)
        else:
            logger.debug("step %d: total %.6g", step, terms.total)

        state.disparity = np.clip(state.disparity - step_scale * grad, *d_bounds)
        state.step_index = step + 1
        if on_snapshot is not None and cfg.snapshot_every and state.step_index % cfg.snapshot_every == 0:
            on_snapshot(state.step_index, state.disparity.copy())

    report = fattening_report(state, pair)
    logger.info("finished: total %.6g, fattened fraction %.4f", state.loss_history[-1].total,
                report.fattened_fraction)
    return state, report


# ============================================================================
# FATTENING REPORT
# ============================================================================

@dataclass(frozen=True)
class FatteningReport:
    band_pixels: int
    band_mean: float
    fattened_fraction: float
    leak_widths: Tuple[int, ...]
    mean_leak_width: float
    background_accuracy: float

    def as_row(self) -> dict:
        return {
            "band_pixels": self.band_pixels,
            "band_mean": self.band_mean,
            "fattened_fraction": self.fattened_fraction,
            "mean_leak_width": self.mean_leak_width,
            "max_leak_width": max(self.leak_widths, default=0),
            "background_accuracy": self.background_accuracy,
        }


def _row_leak(band_row: np.ndarray, fattened_row: np.ndarray) -> int:
    # each band run ends next to its occluder; count fattened pixels leftward from there
    leak = 0
    cols = np.nonzero(band_row)[0]
    run_ends = [c for c in cols if c + 1 >= band_row.size or not band_row[c + 1]]
    for col in run_ends:
        while col >= 0 and band_row[col] and fattened_row[col]:
            leak += 1
            col -= 1
    return leak


def fattening_report(state: OptState, pair: StereoPair) -> FatteningReport:
    d = state.disparity
    band = pair.occlusion_mask != 0
    fattened = np.abs(d - pair.d_fg) < np.abs(d - pair.d_bg)

    rows = np.nonzero(band.any(axis=1))[0]
    leaks = tuple(_row_leak(band[r], fattened[r]) for r in rows)
    clean = pair.clean_background()
    return FatteningReport(
        band_pixels=int(band.sum()),
        band_mean=float(d[band].mean()) if band.any() else 0.0,
        fattened_fraction=float(fattened[band].mean()) if band.any() else 0.0,
        leak_widths=leaks,
        mean_leak_width=float(np.mean(leaks)) if leaks else 0.0,
        background_accuracy=float(np.mean(np.abs(d[clean] - pair.gt_disparity[clean]) <= 0.5))
        if clean.any() else 0.0,
    )
