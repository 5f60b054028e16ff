import hashlib
import logging
try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Optional

from pydantic import ValidationError

from .camera_service import stereo_pose
from .exceptions import ConfigError, NotFoundError
from .schemas import ExperimentConfig, Pose

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = Path(__file__).resolve().parent.parent / "data" / "reference.toml"


def load_experiment_config(path=None, seed_override: Optional[int] = None) -> ExperimentConfig:
    """Read and validate a TOML experiment config; ``seed_override`` replaces its seed."""
    path = Path(path) if path is not None else DEFAULT_CONFIG_PATH
    if not path.exists():
        raise NotFoundError(f"Config file not found: {path}")

    try:
        with open(path, "rb") as f:
            raw = tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e

    if seed_override is not None:
        raw["seed"] = seed_override

    try:
        config = ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"{path}: {_describe(e)}") from e

    logger.info("loaded config %s (seed %d)", path, config.seed)
    return config


def _describe(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        where = ".".join(str(p) for p in item["loc"]) or "config"
        parts.append(f"{where}: {item['msg']}")
    return "; ".join(parts)


def substream_seed(seed: int, name: str) -> int:
    """Independent 64-bit seed for a named consumer of the experiment seed."""
    digest = hashlib.sha256(f"{seed}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def texture_seed(config: ExperimentConfig) -> int:
    if config.scene.texture_seed is not None:
        return config.scene.texture_seed
    return substream_seed(config.seed, "texture")


def init_seed(config: ExperimentConfig) -> int:
    if config.opt.init.seed is not None:
        return config.opt.init.seed
    return substream_seed(config.seed, "init")


def camera_pose(config: ExperimentConfig) -> Pose:
    """Target-to-source transform: the ``[pose]`` table, else the rig's stereo pose."""
    if config.pose is not None:
        return config.pose
    return stereo_pose(config.rig)
