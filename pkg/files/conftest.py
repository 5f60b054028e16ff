import sys
from pathlib import Path

import pytest

# Add the repository root so tests import the services package
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from services.scene_service import render_scene
from services.schemas import SceneSpec


def small_spec(**overrides) -> SceneSpec:
    """32x20 scene with a 2 px occlusion band."""
    fields = dict(width=32, height=20, d_bg=2, d_fg=4, fg_rect=(12, 5, 24, 15), texture_seed=3)
    fields.update(overrides)
    return SceneSpec(**fields)


@pytest.fixture(scope="session")
def small_pair():
    return render_scene(small_spec())


@pytest.fixture(scope="session")
def reference_pair():
    return render_scene(SceneSpec(texture_seed=42))


@pytest.fixture
def make_spec():
    return small_spec
