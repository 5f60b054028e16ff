"""
The seven standard depth metrics with a depth ceiling and optional median scaling.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Dict, Optional, Sequence

import numpy as np
import pandas as pd

from .exceptions import ContractViolationError
from .validators import validate_same_shape

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ["abs_rel", "sq_rel", "rmse", "rmse_log", "delta1", "delta2", "delta3"]


@dataclass(frozen=True)
class MetricSet:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float

    def as_row(self) -> Dict[str, float]:
        return asdict(self)


def compute_metrics(pred: np.ndarray, gt: np.ndarray, valid: Optional[np.ndarray] = None,
                    cap: float = 80.0, median_scale: bool = False, min_depth: float = 1e-3) -> MetricSet:
    validate_same_shape(pred, gt, "prediction and ground truth")
    mask = np.ones(gt.shape, dtype=bool) if valid is None else np.asarray(valid).astype(bool)
    validate_same_shape(mask, gt, "valid mask and ground truth")
    if np.any(gt[mask] <= 0):
        raise ContractViolationError("Ground-truth depth must be > 0 on valid pixels")

    mask &= gt <= cap
    if not mask.any():
        raise ContractViolationError(f"No valid pixels with ground truth under the {cap} m cap")
    p = pred[mask].astype(np.float64)
    g = gt[mask].astype(np.float64)

    if median_scale:
        p = p * (np.median(g) / np.median(p))
    p = np.clip(p, min_depth, cap)

    thresh = np.maximum(g / p, p / g)
    return MetricSet(
        abs_rel=float(np.mean(np.abs(p - g) / g)),
        sq_rel=float(np.mean((p - g) ** 2 / g)),
        rmse=float(np.sqrt(np.mean((p - g) ** 2))),
        rmse_log=float(np.sqrt(np.mean((np.log(p) - np.log(g)) ** 2))),
        delta1=float(np.mean(thresh < 1.25)),
        delta2=float(np.mean(thresh < 1.25 ** 2)),
        delta3=float(np.mean(thresh < 1.25 ** 3)),
    )


def metrics_table(metric_sets: Sequence[MetricSet]) -> pd.DataFrame:
    """One row per image, in input order, plus a trailing arithmetic-mean row.

    Columns are exactly METRIC_COLUMNS.
    """
    if not metric_sets:
        raise ContractViolationError("Need at least one metric set")
    df = pd.DataFrame([m.as_row() for m in metric_sets], columns=METRIC_COLUMNS)
    mean_row = df.mean()
    df = pd.concat([df, mean_row.to_frame().T], ignore_index=True)
    logger.debug("metrics over %d images: mean abs_rel %.6g", len(metric_sets), mean_row["abs_rel"])
    return df
