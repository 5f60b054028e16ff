# services/file_service.py

import logging
import re
from pathlib import Path

import numpy as np

from .exceptions import ContractViolationError, NotFoundError

logger = logging.getLogger(__name__)

_HEADER_TOKEN = re.compile(rb"\S+")


def _check_exists(path: Path):
    if not path.exists():
        raise NotFoundError(f"File not found: {path}")


# ============================================================================
# PFM
# ============================================================================

def write_pfm(path, grid: np.ndarray):
    """Greyscale PFM, little-endian (scale -1.0), rows stored bottom-to-top."""
    if grid.ndim != 2:
        raise ContractViolationError(f"PFM writer expects an (H, W) grid, got {grid.shape}")
    path = Path(path)
    height, width = grid.shape
    with open(path, "wb") as f:
        f.write(f"Pf\n{width} {height}\n-1.0\n".encode("ascii"))
        f.write(np.flipud(grid).astype("<f4").tobytes())
    logger.debug("wrote %s", path)


def read_pfm(path) -> np.ndarray:
    path = Path(path)
    _check_exists(path)
    data = path.read_bytes()
    tokens, offset = _header(data, 4)
    magic, width, height, scale = tokens
    if magic != b"Pf":
        raise ContractViolationError(f"{path} is not a greyscale PFM")
    dtype = "<f4" if float(scale) < 0 else ">f4"
    w, h = int(width), int(height)
    grid = np.frombuffer(data, dtype=dtype, count=w * h, offset=offset).reshape(h, w)
    return np.flipud(grid).astype(np.float64)


def _header(data: bytes, count: int):
    tokens, pos = [], 0
    while len(tokens) < count:
        match = _HEADER_TOKEN.search(data, pos)
        if match is None:
            raise ContractViolationError("Truncated image header")
        tokens.append(match.group())
        pos = match.end()
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


# ============================================================================
# PGM / PPM
# ============================================================================

def to_uint8(grid: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(grid, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_pgm(path, grid: np.ndarray, scale: int = 1):
    """8-bit P5. Float grids are intensities in [0, 1]; integer grids are written as value * scale."""
    if grid.ndim != 2:
        raise ContractViolationError(f"PGM writer expects an (H, W) grid, got {grid.shape}")
    if np.issubdtype(grid.dtype, np.floating):
        raster = to_uint8(grid)
    else:
        raster = np.clip(grid.astype(np.int64) * scale, 0, 255).astype(np.uint8)
    path = Path(path)
    height, width = grid.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        f.write(raster.tobytes())
    logger.debug("wrote %s", path)


def write_ppm(path, rgb: np.ndarray):
    """8-bit P6 from an (H, W, 3) grid of [0, 1] intensities."""
    if rgb.ndim != 3 or rgb.shape[-1] != 3:
        raise ContractViolationError(f"PPM writer expects an (H, W, 3) grid, got {rgb.shape}")
    path = Path(path)
    height, width = rgb.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{width} {height}\n255\n".encode("ascii"))
        f.write(to_uint8(rgb).tobytes())
    logger.debug("wrote %s", path)


def read_pnm(path) -> np.ndarray:
    """Raw 8-bit values of a P5 (H, W) or P6 (H, W, 3) file."""
    path = Path(path)
    _check_exists(path)
    data = path.read_bytes()
    tokens, offset = _header(data, 4)
    magic, width, height, _ = tokens
    channels = {b"P5": 1, b"P6": 3}.get(magic)
    if channels is None:
        raise ContractViolationError(f"{path} is not a binary PGM/PPM")
    w, h = int(width), int(height)
    raster = np.frombuffer(data, dtype=np.uint8, count=w * h * channels, offset=offset)
    return raster.reshape(h, w) if channels == 1 else raster.reshape(h, w, 3)


def overlay(image: np.ndarray, band: np.ndarray, foreground: np.ndarray) -> np.ndarray:
    """Grey image with the occlusion band tinted red and the foreground tinted green."""
    rgb = np.repeat(image[..., None], 3, axis=-1) * 0.6
    rgb[band != 0, 0] += 0.4
    rgb[foreground != 0, 1] += 0.4
    return rgb
