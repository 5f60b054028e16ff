
from pathlib import Path

import numpy as np

from .exceptions import ContractViolationError, FileAccessError


def validate_same_shape(a: np.ndarray, b: np.ndarray, what: str = "grids"):
    if a.shape != b.shape:
        raise ContractViolationError(f"Shape mismatch between {what}: {a.shape} vs {b.shape}")


def validate_patch_size(patch_size: int):
    if patch_size < 3 or patch_size % 2 == 0:
        raise ContractViolationError(f"Patch size must be odd and >= 3, got {patch_size}")


def validate_positive(values: np.ndarray, what: str):
    if not np.all(values > 0):
        raise ContractViolationError(f"{what} must be > 0 everywhere")


def validate_finite(values: np.ndarray, what: str):
    if not np.all(np.isfinite(values)):
        raise ContractViolationError(f"{what} must be finite")


def validate_scene_geometry(width: int, height: int, d_bg: int, d_fg: int, fg_rect):
    if not 0 < d_bg < d_fg:
        raise ContractViolationError(f"Need 0 < d_bg < d_fg, got d_bg={d_bg}, d_fg={d_fg}")

    x0, y0, x1, y1 = fg_rect
    if not (0 <= x0 < x1 <= width and 0 <= y0 < y1 <= height):
        raise ContractViolationError(f"Rectangle {tuple(fg_rect)} lies outside a {width}x{height} image")

    if d_fg - d_bg >= x1 - x0:
        raise ContractViolationError("d_fg - d_bg must be smaller than the foreground width")


def resolve_output_path(output_dir, filename: str) -> Path:
    if ".." in Path(filename).parts:
        raise FileAccessError("Directory traversal detected")

    base = Path(output_dir).resolve()
    full_path = (base / filename).resolve()

    if base != full_path and base not in full_path.parents:
        raise FileAccessError("Access outside output directory is forbidden")

    return full_path
