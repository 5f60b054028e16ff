
import logging

import numpy as np

from .exceptions import ContractViolationError
from .grid_service import CoordGrid, bilinear_sample
from .schemas import Intrinsics, Pose, StereoRig
from .validators import validate_positive

logger = logging.getLogger(__name__)

MIN_PROJECTED_DEPTH = 1e-9
INVALID_COORD = -1e6


def stereo_pose(rig: StereoRig) -> Pose:
    """Left-to-right transform: the right camera sits +b along x."""
    return Pose(translation=(-rig.baseline, 0.0, 0.0))


def reproject_coords(depth: np.ndarray, pose: Pose, K: Intrinsics):
    """Source-view sampling coordinates of every target pixel.

    Returns the coordinate grid and a boolean mask of pixels whose transformed
    point lies on or behind the source camera. Those pixels get far
    out-of-bounds coordinates so clamped sampling lands on the border.
    """
    validate_positive(depth, "depth")
    h, w = depth.shape
    identity = CoordGrid.identity(h, w)
    if pose.is_identity():
        return identity, np.zeros((h, w), dtype=bool)

    x_cam = (identity.x - K.cx) / K.fx * depth
    y_cam = (identity.y - K.cy) / K.fy * depth
    points = np.stack([x_cam, y_cam, depth], axis=-1) @ pose.rotation_matrix().T + pose.translation_vector()

    z = points[..., 2]
    invalid = z <= MIN_PROJECTED_DEPTH
    safe_z = np.where(invalid, 1.0, z)
    x = np.where(invalid, INVALID_COORD, K.fx * points[..., 0] / safe_z + K.cx)
    y = np.where(invalid, INVALID_COORD, K.fy * points[..., 1] / safe_z + K.cy)
    if invalid.any():
        logger.debug("%d pixels reproject behind the source camera", int(invalid.sum()))
    return CoordGrid(x=x, y=y), invalid


def stereo_coords(disparity: np.ndarray) -> CoordGrid:
    """Rectified special case of ``reproject_coords``: left pixel x reads right pixel x - d."""
    grid = CoordGrid.identity(*disparity.shape)
    return CoordGrid(x=grid.x - disparity, y=grid.y)


def warp_image(src: np.ndarray, coords: CoordGrid) -> np.ndarray:
    return bilinear_sample(src, coords)


def disparity_to_depth(disparity: np.ndarray, rig: StereoRig) -> np.ndarray:
    if not np.all(disparity > 0):
        raise ContractViolationError("Disparity must be > 0 to convert to depth")
    return rig.intrinsics.fx * rig.baseline / disparity


def depth_to_disparity(depth: np.ndarray, rig: StereoRig) -> np.ndarray:
    if not np.all(depth > 0):
        raise ContractViolationError("Depth must be > 0 to convert to disparity")
    return rig.intrinsics.fx * rig.baseline / depth
