"""
Patch-based semantic triplet loss on depth features.

Each pixel of a local patch is an anchor; patch pixels sharing its label are
positives, the rest negatives. Only anchors with more than ``k`` of each take
part. Two redesigns are supported next to the baseline hinge
``[D+ - D- + m]+``: the hardest (min) negative instead of the mean, and the
isolated form ``D+ + [m' - D-]+`` that optimizes the positives directly.

``partition_patch`` and the ``anchor_*`` functions work on one anchor and are
the readable reference; ``triplet_loss`` evaluates every anchor at once.
"""

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .exceptions import ContractViolationError
from .grid_service import Pixel, l2_normalize, l2_normalize_backward, patch_indices, patch_offsets
from .schemas import LossMode, NegativeMode, TripletConfig
from .validators import validate_patch_size

logger = logging.getLogger(__name__)

MIN_TIE_TOL = 1e-12


@dataclass(frozen=True)
class AnchorPartition:
    anchor: Pixel
    positives: Tuple[Pixel, ...]
    negatives: Tuple[Pixel, ...]


@dataclass(frozen=True)
class BoundarySet:
    anchors: Tuple[AnchorPartition, ...]

    def __len__(self) -> int:
        return len(self.anchors)

    def __iter__(self):
        return iter(self.anchors)


# ============================================================================
# PER-ANCHOR REFERENCE
# ============================================================================

def partition_patch(labels: np.ndarray, anchor: Pixel, patch_size: int) -> AnchorPartition:
    height, width = labels.shape
    if not (0 <= anchor[0] < height and 0 <= anchor[1] < width):
        raise ContractViolationError(f"Anchor {anchor} outside a {width}x{height} label grid")

    label = labels[anchor]
    positives, negatives = [], []
    for pixel in patch_indices(anchor, patch_size, (height, width)):
        (positives if labels[pixel] == label else negatives).append(pixel)
    return AnchorPartition(anchor=tuple(anchor), positives=tuple(positives), negatives=tuple(negatives))


def boundary_anchors(labels: np.ndarray, cfg: TripletConfig) -> BoundarySet:
    """All anchors whose patch holds more than k positives and more than k negatives."""
    n_pos, n_neg = _patch_counts(labels, cfg.patch_size)
    eligible = np.argwhere((n_pos > cfg.k) & (n_neg > cfg.k))
    return BoundarySet(anchors=tuple(
        partition_patch(labels, (int(r), int(c)), cfg.patch_size) for r, c in eligible))


def _squared_distances(features: np.ndarray, anchor: Pixel, pixels: Sequence[Pixel]) -> np.ndarray:
    # sorted so the reduction order never depends on how the caller listed pixels
    rows, cols = np.asarray(sorted(pixels)).T
    diff = features[rows, cols] - features[anchor]
    return np.sum(diff * diff, axis=-1)


def anchor_pos_distance(features: np.ndarray, part: AnchorPartition) -> float:
    """Mean squared feature distance from the anchor to its positives."""
    if not part.positives:
        raise ContractViolationError(f"Anchor {part.anchor} has no positives")
    return float(np.mean(_squared_distances(features, part.anchor, part.positives)))


def anchor_neg_distance(features: np.ndarray, part: AnchorPartition, mode: NegativeMode) -> float:
    """Mean (or hardest, i.e. smallest) squared feature distance to the negatives."""
    if not part.negatives:
        raise ContractViolationError(f"Anchor {part.anchor} has no negatives")
    distances = _squared_distances(features, part.anchor, part.negatives)
    return float(distances.min() if NegativeMode(mode) == NegativeMode.MIN else distances.mean())


def triplet_term(d_pos: float, d_neg: float, cfg: TripletConfig) -> float:
    """Loss contribution of one anchor given its two distances."""
    if cfg.loss_mode == LossMode.BASELINE:
        return max(d_pos - d_neg + cfg.margin_m, 0.0)
    return d_pos + max(cfg.margin_m_prime - d_neg, 0.0)


def anchor_term(features: np.ndarray, part: AnchorPartition, cfg: TripletConfig) -> float:
    return triplet_term(anchor_pos_distance(features, part),
                        anchor_neg_distance(features, part, cfg.negative_mode), cfg)


# ============================================================================
# VECTORIZED LOSS
# ============================================================================

def _offset_slices(dy: int, dx: int, height: int, width: int):
    anchors = (slice(max(0, -dy), height - max(0, dy)), slice(max(0, -dx), width - max(0, dx)))
    neighbours = (slice(max(0, dy), height - max(0, -dy)), slice(max(0, dx), width - max(0, -dx)))
    return anchors, neighbours


@dataclass
class _PatchStats:
    offsets: List[Pixel]
    diffs: List[np.ndarray]
    pos: np.ndarray
    neg: np.ndarray
    dist: np.ndarray
    n_pos: np.ndarray
    n_neg: np.ndarray


def _patch_counts(labels: np.ndarray, patch_size: int):
    validate_patch_size(patch_size)
    height, width = labels.shape
    n_pos = np.zeros((height, width), dtype=np.int64)
    n_neg = np.zeros((height, width), dtype=np.int64)
    for dy, dx in patch_offsets(patch_size):
        a_sl, n_sl = _offset_slices(dy, dx, height, width)
        same = labels[a_sl] == labels[n_sl]
        n_pos[a_sl] += same
        n_neg[a_sl] += ~same
    return n_pos, n_neg


def _patch_stats(unit: np.ndarray, labels: np.ndarray, patch_size: int) -> _PatchStats:
    height, width = labels.shape
    offsets = patch_offsets(patch_size)
    pos = np.zeros((len(offsets), height, width), dtype=bool)
    neg = np.zeros_like(pos)
    dist = np.zeros(pos.shape, dtype=np.float64)
    diffs = []
    for o, (dy, dx) in enumerate(offsets):
        a_sl, n_sl = _offset_slices(dy, dx, height, width)
        same = labels[a_sl] == labels[n_sl]
        pos[o][a_sl] = same
        neg[o][a_sl] = ~same
        diff = unit[a_sl] - unit[n_sl]
        dist[o][a_sl] = np.sum(diff * diff, axis=-1)
        diffs.append(diff)
    return _PatchStats(offsets=offsets, diffs=diffs, pos=pos, neg=neg, dist=dist,
                       n_pos=pos.sum(axis=0), n_neg=neg.sum(axis=0))


@dataclass
class AnchorDistances:
    """Per-pixel D+ and D- maps; only entries where ``gamma`` is set are meaningful."""
    gamma: np.ndarray
    d_pos: np.ndarray
    d_neg: np.ndarray
    hardest: np.ndarray


def _distances(stats: _PatchStats, cfg: TripletConfig) -> AnchorDistances:
    gamma = (stats.n_pos > cfg.k) & (stats.n_neg > cfg.k)
    d_pos = np.sum(stats.dist * stats.pos, axis=0) / np.maximum(stats.n_pos, 1)
    if cfg.negative_mode == NegativeMode.MEAN:
        d_neg = np.sum(stats.dist * stats.neg, axis=0) / np.maximum(stats.n_neg, 1)
        hardest = np.full(gamma.shape, -1)
    else:
        masked = np.where(stats.neg, stats.dist, np.inf)
        d_neg = masked.min(axis=0)
        # ties within MIN_TIE_TOL go to the first negative in row-major patch order
        hardest = np.argmax(stats.neg & (masked <= d_neg + MIN_TIE_TOL), axis=0)
        d_neg = np.where(np.isfinite(d_neg), d_neg, 0.0)
    return AnchorDistances(gamma=gamma, d_pos=d_pos, d_neg=d_neg, hardest=hardest)


def anchor_distances(features: np.ndarray, labels: np.ndarray, cfg: TripletConfig) -> AnchorDistances:
    if features.shape[:2] != labels.shape:
        raise ContractViolationError(f"Features {features.shape[:2]} and labels {labels.shape} differ in size")
    return _distances(_patch_stats(l2_normalize(features), labels, cfg.patch_size), cfg)


def triplet_loss(features: np.ndarray, labels: np.ndarray, cfg: TripletConfig):
    """Mean anchor term over the boundary set, and its gradient w.r.t. the raw features.

    Features are L2-normalized here; the gradient is chained back through the
    normalization. An empty boundary set gives loss 0 and a zero gradient.
    """
    if features.shape[:2] != labels.shape:
        raise ContractViolationError(f"Features {features.shape[:2]} and labels {labels.shape} differ in size")
    unit = l2_normalize(features)
    stats = _patch_stats(unit, labels, cfg.patch_size)
    dists = _distances(stats, cfg)
    gamma = dists.gamma
    n_gamma = int(gamma.sum())
    if n_gamma == 0:
        return 0.0, np.zeros_like(features, dtype=np.float64)

    if cfg.loss_mode == LossMode.BASELINE:
        hinge = dists.d_pos - dists.d_neg + cfg.margin_m
        terms = np.maximum(hinge, 0.0)
        pos_active = hinge > 0.0
        neg_active = pos_active
    else:
        hinge = cfg.margin_m_prime - dists.d_neg
        terms = dists.d_pos + np.maximum(hinge, 0.0)
        pos_active = np.ones_like(gamma)
        neg_active = hinge > 0.0
    loss = float(np.sum(terms[gamma]) / n_gamma)

    scale = gamma / n_gamma
    pos_coef = scale * pos_active / np.maximum(stats.n_pos, 1)
    if cfg.negative_mode == NegativeMode.MEAN:
        neg_coef = scale * neg_active / np.maximum(stats.n_neg, 1)
    else:
        neg_coef = scale * neg_active

    height, width = labels.shape
    grad_unit = np.zeros(unit.shape, dtype=np.float64)
    for o, (dy, dx) in enumerate(stats.offsets):
        if cfg.negative_mode == NegativeMode.MEAN:
            coef = pos_coef * stats.pos[o] - neg_coef * stats.neg[o]
        else:
            coef = pos_coef * stats.pos[o] - neg_coef * (dists.hardest == o) * stats.neg[o]
        a_sl, n_sl = _offset_slices(dy, dx, height, width)
        push = 2.0 * coef[a_sl][..., None] * stats.diffs[o]
        grad_unit[a_sl] += push
        grad_unit[n_sl] -= push

    logger.debug("triplet: %d boundary anchors, loss %.6g", n_gamma, loss)
    return loss, l2_normalize_backward(features, grad_unit)
