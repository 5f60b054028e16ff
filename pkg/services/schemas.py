
from enum import Enum
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .exceptions import ContractViolationError
from .validators import validate_patch_size, validate_scene_geometry


def success_response(data: dict):
    return {
        "status": "success",
        "data": data
    }


def error_response(message: str):
    return {
        "status": "error",
        "message": message
    }


# ============================================================================
# LOSS CONFIGURATION
# ============================================================================

class NegativeMode(str, Enum):
    """How the anchor-negative distance aggregates over the patch negatives."""
    MEAN = "mean"
    MIN = "min"


class LossMode(str, Enum):
    """Baseline hinge on D+ - D- or isolated D+ plus hinge on D-."""
    BASELINE = "baseline"
    ISOLATED = "isolated"


class PhotometricConfig(BaseModel):
    """SSIM + L1 reprojection error settings."""
    model_config = ConfigDict(extra='forbid', validate_assignment=True)

    alpha: float = Field(default=0.85, ge=0.0, le=1.0, description="Weight of the SSIM term")
    ssim_c1: float = Field(default=0.01 ** 2, gt=0.0)
    ssim_c2: float = Field(default=0.03 ** 2, gt=0.0)
    window: Literal[3] = Field(default=3, description="SSIM window side, fixed at 3")


class TripletConfig(BaseModel):
    """Patch-based triplet loss settings."""
    model_config = ConfigDict(extra='forbid', validate_assignment=True)

    patch_size: int = Field(default=5, description="Odd side of the local patch")
    k: int = Field(default=4, ge=0, description="Both |P+| and |P-| must exceed k")
    margin_m: float = Field(default=0.3, gt=0.0, description="Margin of the baseline hinge")
    margin_m_prime: float = Field(default=0.65, gt=0.0, description="Margin of the isolated hinge")
    negative_mode: NegativeMode = NegativeMode.MIN
    loss_mode: LossMode = LossMode.ISOLATED
    scales: List[int] = Field(default_factory=lambda: [1], min_length=1,
                              description="Mean-pooling factors the loss is applied at")

    @field_validator("patch_size")
    @classmethod
    def _odd_patch(cls, value: int) -> int:
        validate_patch_size(value)
        return value

    @field_validator("scales")
    @classmethod
    def _positive_scales(cls, value: List[int]) -> List[int]:
        if any(s < 1 for s in value):
            raise ContractViolationError("Triplet scales must be >= 1")
        return value


# ============================================================================
# OPTIMIZER CONFIGURATION
# ============================================================================

class InitConfig(BaseModel):
    """Initial disparity of the direct optimizer."""
    model_config = ConfigDict(extra='forbid', validate_assignment=True)

    kind: Literal["constant", "ground_truth", "uniform_random"] = "ground_truth"
    value: float = Field(default=1.0, gt=0.0, description="Disparity for the constant init")
    lo: float = Field(default=1.0, gt=0.0)
    hi: float = Field(default=15.0, gt=0.0)
    seed: Optional[int] = Field(default=None, description="Overrides the derived 'init' substream")

    @model_validator(mode="after")
    def _ordered(self):
        if self.lo >= self.hi:
            raise ContractViolationError("init.lo must be below init.hi")
        return self


class OptConfig(BaseModel):
    """Per-pixel disparity gradient descent."""
    model_config = ConfigDict(extra='forbid', validate_assignment=True)

    steps: int = Field(default=500, ge=0)
    learning_rate: float = Field(default=1e-2, gt=0.0,
                                 description="Step on d/d_hi per unit of per-pixel gradient")
    lambda_smooth: float = Field(default=1e-3, ge=0.0)
    lambda_triplet: float = Field(default=0.1, ge=0.0, description="0 disables the triplet term")
    triplet: TripletConfig = Field(default_factory=TripletConfig)
    photometric: PhotometricConfig = Field(default_factory=PhotometricConfig)
    init: InitConfig = Field(default_factory=InitConfig)
    d_bounds: Optional[Tuple[float, float]] = Field(default=None, description="Defaults to [0.5, 2*d_fg]")
    mask_occluded: bool = Field(default=False, description="Drop gt-occluded pixels from L_pe")
    snapshot_every: int = Field(default=0, ge=0)
    log_every: int = Field(default=50, ge=1)

    @field_validator("d_bounds")
    @classmethod
    def _bounds(cls, value):
        if value is not None and not 0 < value[0] < value[1]:
            raise ContractViolationError("d_bounds must satisfy 0 < d_lo < d_hi")
        return value


# ============================================================================
# CAMERA
# ============================================================================

class Intrinsics(BaseModel):
    """Pinhole intrinsics in pixels."""
    model_config = ConfigDict(extra='forbid', validate_assignment=True)

    fx: float = Field(default=100.0, gt=0.0)
    fy: float = Field(default=100.0, gt=0.0)
    cx: float = 64.0
    cy: float = 48.0


class Pose(BaseModel):
    """Rigid transform from the target camera into the source camera."""
    model_config = ConfigDict(extra='forbid')

    rotation: Tuple[Tuple[float, float, float], Tuple[float, float, float], Tuple[float, float, float]] = (
        (1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
    translation: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    @model_validator(mode="after")
    def _rigid(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-9, rtol=0.0):
            raise ContractViolationError("Pose rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ContractViolationError("Pose rotation must have determinant +1")
        return self

    def rotation_matrix(self) -> np.ndarray:
        return np.asarray(self.rotation, dtype=np.float64)

    def translation_vector(self) -> np.ndarray:
        return np.asarray(self.translation, dtype=np.float64)

    def is_identity(self) -> bool:
        return (np.array_equal(self.rotation_matrix(), np.eye(3))
                and not np.any(self.translation_vector()))


class StereoRig(BaseModel):
    """Rectified stereo pair: shared intrinsics plus the baseline in meters."""
    model_config = ConfigDict(extra='forbid', validate_assignment=True)

    intrinsics: Intrinsics = Field(default_factory=Intrinsics)
    baseline: float = Field(default=0.5, gt=0.0)


# ============================================================================
# SCENE
# ============================================================================

Rect = Tuple[int, int, int, int]


class TextureKind(str, Enum):
    """Background texture of the procedural scene."""
    STRIPES = "stripes"
    NOISE = "noise"


class SceneObject(BaseModel):
    """An extra fronto-parallel rectangle composited over the background."""
    model_config = ConfigDict(extra='forbid')

    rect: Rect
    disparity: int = Field(gt=0)
    label: int = Field(ge=2, description="Labels 0 and 1 belong to background and primary object")
    window_rect: Optional[Rect] = None


class SceneSpec(BaseModel):
    """Procedural stereo scene: textured background plane plus foreground rectangle(s)."""
    model_config = ConfigDict(extra='forbid', validate_assignment=True)

    width: int = Field(default=128, ge=4)
    height: int = Field(default=96, ge=4)
    d_bg: int = Field(default=5, description="Background disparity in pixels")
    d_fg: int = Field(default=10, description="Foreground disparity in pixels")
    fg_rect: Rect = (48, 24, 80, 72)
    window_rect: Optional[Rect] = Field(default=None, description="Independently textured part of the foreground")
    texture_seed: Optional[int] = Field(default=None, description="Overrides the derived 'texture' substream")
    texture: TextureKind = Field(default=TextureKind.STRIPES,
                                 description="stripes: row-banded ramp with period d_fg - d_bg; noise: value noise")
    stripe_slope: float = Field(default=0.01, gt=0.0, description="Intensity step per pixel of the stripe ramp")
    texture_scale: float = Field(default=8.0, gt=0.0, description="Lattice spacing of the coarsest noise octave")
    texture_octaves: int = Field(default=4, ge=1)
    texture_persistence: float = Field(default=0.5, gt=0.0, le=1.0)
    objects: List[SceneObject] = Field(default_factory=list)

    @model_validator(mode="after")
    def _geometry(self):
        validate_scene_geometry(self.width, self.height, self.d_bg, self.d_fg, self.fg_rect)
        if self.window_rect is not None:
            _check_inside(self.window_rect, self.fg_rect, "window_rect")
        labels = set()
        for obj in self.objects:
            validate_scene_geometry(self.width, self.height, self.d_bg, obj.disparity, obj.rect)
            if obj.window_rect is not None:
                _check_inside(obj.window_rect, obj.rect, "object window_rect")
            if obj.label in labels:
                raise ContractViolationError(f"Duplicate object label {obj.label}")
            labels.add(obj.label)
        return self


def _check_inside(inner: Rect, outer: Rect, what: str):
    if not (outer[0] <= inner[0] < inner[2] <= outer[2] and outer[1] <= inner[1] < inner[3] <= outer[3]):
        raise ContractViolationError(f"{what} {tuple(inner)} must lie inside {tuple(outer)}")


# ============================================================================
# EVALUATION AND EXPERIMENTS
# ============================================================================

class MetricsConfig(BaseModel):
    model_config = ConfigDict(extra='forbid', validate_assignment=True)

    cap: float = Field(default=80.0, gt=0.0, description="Depth ceiling in meters")
    min_depth: float = Field(default=1e-3, gt=0.0)
    median_scale: bool = False


class ProfileConfig(BaseModel):
    model_config = ConfigDict(extra='forbid', validate_assignment=True)

    d_lo: float = Field(default=1.0, gt=0.0)
    d_hi: float = Field(default=15.0, gt=0.0)
    step: float = Field(default=0.25, gt=0.0)

    @model_validator(mode="after")
    def _ordered(self):
        if self.d_lo >= self.d_hi:
            raise ContractViolationError("profile.d_lo must be below profile.d_hi")
        return self


class SweepConfig(BaseModel):
    model_config = ConfigDict(extra='forbid', validate_assignment=True)

    margins: List[float] = Field(default_factory=lambda: [0.50, 0.60, 0.65, 0.70, 0.80], min_length=1)


class ExperimentConfig(BaseModel):
    """A whole experiment: scene, rig, losses, optimizer and evaluation."""
    model_config = ConfigDict(extra='forbid', validate_assignment=True)

    seed: int = 42
    output_dir: str = "runs/reference"
    scene: SceneSpec = Field(default_factory=SceneSpec)
    rig: StereoRig = Field(default_factory=StereoRig)
    pose: Optional[Pose] = Field(default=None, description="Target-to-source transform; defaults to the rig's stereo pose")
    photometric: PhotometricConfig = Field(default_factory=PhotometricConfig)
    triplet: TripletConfig = Field(default_factory=TripletConfig)
    opt: OptConfig = Field(default_factory=OptConfig)
    metrics: MetricsConfig = Field(default_factory=MetricsConfig)
    profile: ProfileConfig = Field(default_factory=ProfileConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)

    @model_validator(mode="before")
    @classmethod
    def _share_loss_sections(cls, data):
        if not isinstance(data, dict):
            return data
        sections = ("photometric", "triplet")
        data = dict(data)
        opt = data.get("opt")
        if isinstance(opt, OptConfig):
            for section in sections:
                data.setdefault(section, getattr(opt, section))
            opt = opt.model_dump(exclude=set(sections))
        else:
            opt = dict(opt or {})
            for section in sections:
                if section in opt:
                    raise ContractViolationError(f"Set '{section}' as a top-level section, not under [opt]")
        for section in sections:
            if section in data:
                opt[section] = data[section]
        data["opt"] = opt
        return data

    def with_losses(self, triplet: Optional[TripletConfig] = None, **opt_updates) -> "ExperimentConfig":
        """Copy with a replaced triplet section and/or optimizer fields, keeping both views in sync."""
        triplet = triplet or self.triplet
        opt = self.opt.model_copy(update={"triplet": triplet, **opt_updates})
        return self.model_copy(update={"triplet": triplet, "opt": opt})
