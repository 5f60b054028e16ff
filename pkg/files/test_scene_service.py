import numpy as np
import pytest
from pydantic import ValidationError

from services.exceptions import ContractViolationError
from services.photometric_service import photometric_error
from services.scene_service import (TEXTURE_HI, TEXTURE_LO, band_width, candidate_disparities, cost_volume,
                                    landscape_summary, photometric_profile, profile_argmin, render_scene,
                                    stripe_levels, visibility_occlusion)
from services.schemas import PhotometricConfig, SceneObject, SceneSpec, TextureKind

CFG = PhotometricConfig()


def profile_at(pair, row, col):
    return photometric_profile(pair, (row, col), (1.0, 15.0), 0.25, CFG)


# ============================================================================
# RENDERING
# ============================================================================

def test_reference_band_is_five_pixels_left_of_foreground(reference_pair):
    pair = reference_pair
    assert band_width(pair) == 5
    expected = np.zeros(pair.shape, dtype=np.uint8)
    expected[24:72, 43:48] = 1
    assert np.array_equal(pair.occlusion_mask, expected)


def test_minimum_disparity_gap_gives_one_pixel_band():
    pair = render_scene(SceneSpec(d_bg=5, d_fg=6, texture_seed=1))
    assert band_width(pair) == 1
    assert pair.occlusion_mask[30, 47] == 1
    assert pair.occlusion_mask.sum() == 48


def test_rendering_is_deterministic():
    a = render_scene(SceneSpec(texture_seed=9))
    b = render_scene(SceneSpec(texture_seed=9))
    for field in ("left", "right", "gt_disparity", "labels", "occlusion_mask", "outside_mask"):
        assert np.array_equal(getattr(a, field), getattr(b, field))


def test_different_seeds_give_different_textures():
    a = render_scene(SceneSpec(texture_seed=1))
    b = render_scene(SceneSpec(texture_seed=2))
    assert not np.array_equal(a.left, b.left)


def test_ground_truth_values_and_labels_agree(reference_pair):
    pair = reference_pair
    assert set(np.unique(pair.gt_disparity)) == {5.0, 10.0}
    assert np.array_equal(pair.labels == 1, pair.gt_disparity == 10.0)


def test_visible_pixels_match_bit_exactly(reference_pair):
    pair = reference_pair
    rows, cols = np.nonzero((pair.occlusion_mask == 0) & (pair.outside_mask == 0))
    src_cols = cols - pair.gt_disparity[rows, cols].astype(int)
    assert np.array_equal(pair.right[rows, src_cols], pair.left[rows, cols])


def test_band_pixels_do_not_match_at_ground_truth(reference_pair):
    pair = reference_pair
    rows, cols = np.nonzero(pair.occlusion_mask)
    assert np.all(pair.right[rows, cols - pair.d_bg] != pair.left[rows, cols])


def test_outside_mask_covers_left_border(reference_pair):
    assert np.array_equal(np.nonzero(reference_pair.outside_mask.any(axis=0))[0], np.arange(5))


def test_texture_range(reference_pair):
    for view in (reference_pair.left, reference_pair.right):
        assert view.min() >= TEXTURE_LO
        assert view.max() <= TEXTURE_HI


def test_visibility_oracle_on_hand_row():
    disparity = np.array([[1.0, 1.0, 1.0, 3.0, 3.0, 1.0]])
    assert np.array_equal(visibility_occlusion(disparity), [[0, 1, 1, 0, 0, 0]])


def test_window_keeps_foreground_label():
    spec = SceneSpec(texture_seed=4, window_rect=(56, 32, 72, 48))
    pair = render_scene(spec)
    plain = render_scene(SceneSpec(texture_seed=4))
    assert np.all(pair.labels[32:48, 56:72] == 1)
    assert np.array_equal(pair.occlusion_mask, plain.occlusion_mask)
    assert not np.array_equal(pair.left[32:48, 56:72], plain.left[32:48, 56:72])


def test_extra_object_gets_its_own_band():
    spec = SceneSpec(texture_seed=5, objects=[SceneObject(rect=(90, 10, 110, 40), disparity=8, label=2)])
    pair = render_scene(spec)
    assert np.all(pair.labels[10:40, 90:110] == 2)
    assert np.all(pair.gt_disparity[10:40, 90:110] == 8.0)
    assert np.all(pair.occlusion_mask[10:40, 87:90] == 1)
    assert np.array_equal(pair.occlusion_mask, visibility_occlusion(pair.gt_disparity))
    rows, cols = np.nonzero((pair.occlusion_mask == 0) & (pair.outside_mask == 0))
    src_cols = cols - pair.gt_disparity[rows, cols].astype(int)
    assert np.array_equal(pair.right[rows, src_cols], pair.left[rows, cols])


def test_objects_composite_back_to_front():
    spec = SceneSpec(texture_seed=6, objects=[SceneObject(rect=(60, 40, 100, 60), disparity=14, label=2)])
    pair = render_scene(spec)
    # the nearer object wins where it overlaps the primary foreground
    assert np.all(pair.labels[40:60, 60:80] == 2)
    assert np.all(pair.labels[24:40, 48:80] == 1)


@pytest.mark.parametrize("fg_rect", [(0, 24, 8, 72), (4, 24, 20, 72)])
def test_foreground_at_left_border(fg_rect):
    pair = render_scene(SceneSpec(fg_rect=fg_rect, d_bg=5, d_fg=10, texture_seed=1))
    x0, y0, x1, y1 = fg_rect
    assert np.all(pair.labels[y0:y1, x0:x1] == 1)
    assert np.array_equal(pair.occlusion_mask, visibility_occlusion(pair.gt_disparity))
    rows, cols = np.nonzero((pair.occlusion_mask == 0) & (pair.outside_mask == 0))
    src_cols = cols - pair.gt_disparity[rows, cols].astype(int)
    assert np.array_equal(pair.right[rows, src_cols], pair.left[rows, cols])


def test_foreground_entirely_out_of_right_view():
    pair = render_scene(SceneSpec(fg_rect=(0, 24, 8, 72), d_bg=5, d_fg=10, texture_seed=1))
    assert pair.occlusion_mask.sum() == 0
    assert np.all(pair.outside_mask[24:72, 0:8] == 1)


# ============================================================================
# STRIPE TEXTURE
# ============================================================================

def test_stripes_repeat_with_the_band_period(reference_pair):
    left = reference_pair.left
    # rows above the foreground show only background
    assert np.array_equal(left[:24, 5:], left[:24, :-5])
    assert not np.array_equal(left[:24, 1:], left[:24, :-1])


def test_stripe_rows_alternate_dark_and_bright(reference_pair):
    top = reference_pair.left[:24]
    assert top[0::2].max() < 0.35
    assert top[1::2].min() > 0.55


def test_stripe_levels():
    lo, hi = stripe_levels(5, 0.01)
    assert lo == TEXTURE_LO
    assert hi == pytest.approx(0.76)
    with pytest.raises(ContractViolationError):
        stripe_levels(5, 0.1)


def test_too_steep_stripes_are_rejected_at_render():
    with pytest.raises(ContractViolationError):
        render_scene(SceneSpec(stripe_slope=0.1, texture_seed=1))


def test_foreground_margin_continues_the_ramp(reference_pair):
    left = reference_pair.left
    steps = np.diff(left[40, 43:58])
    assert np.allclose(steps[4:], 0.01)
    assert left[40, 48] - left[40, 47] == pytest.approx(0.01)


# ============================================================================
# SCENE VALIDATION
# ============================================================================

@pytest.mark.parametrize("fields", [
    dict(d_bg=5, d_fg=5),
    dict(d_bg=0, d_fg=5),
    dict(fg_rect=(100, 24, 140, 72)),
    dict(d_bg=1, d_fg=40),
    dict(window_rect=(40, 30, 60, 40)),
])
def test_invalid_specs_are_rejected(fields):
    with pytest.raises(ValidationError):
        SceneSpec(**fields)


def test_render_rechecks_unvalidated_specs():
    with pytest.raises(ContractViolationError):
        render_scene(SceneSpec.model_construct(d_bg=5, d_fg=5, texture_seed=1))


def test_render_needs_a_seed():
    with pytest.raises(ContractViolationError):
        render_scene(SceneSpec())


def test_explicit_texture_seed_wins():
    a = render_scene(SceneSpec(texture_seed=7), texture_seed=100)
    b = render_scene(SceneSpec(), texture_seed=7)
    assert np.array_equal(a.left, b.left)


# ============================================================================
# PHOTOMETRIC LANDSCAPE
# ============================================================================

def test_candidate_grid():
    grid = candidate_disparities(1.0, 15.0, 0.25)
    assert len(grid) == 57
    assert grid[0] == 1.0 and grid[-1] == 15.0
    assert 5.0 in grid and 10.0 in grid
    with pytest.raises(ContractViolationError):
        candidate_disparities(0.0, 15.0, 0.25)


def test_clean_background_profile_minimum_at_background(reference_pair):
    profile = profile_at(reference_pair, 10, 20)
    assert profile_argmin(profile) == 5.0
    assert dict(profile)[5.0] == 0.0


def test_foreground_profile_minimum_at_foreground(reference_pair):
    profile = profile_at(reference_pair, 40, 70)
    assert profile_argmin(profile) == 10.0
    assert dict(profile)[10.0] == 0.0


def test_band_pixel_has_no_exact_match_at_ground_truth(reference_pair):
    profile = dict(profile_at(reference_pair, 40, 45))
    assert profile[5.0] > 0.0


def test_profile_is_a_cost_volume_column(reference_pair):
    disparities = candidate_disparities(4.0, 6.0, 0.5)
    volume = cost_volume(reference_pair, disparities, CFG)
    profile = photometric_profile(reference_pair, (30, 44), (4.0, 6.0), 0.5, CFG)
    assert [e for _, e in profile] == list(volume[:, 30, 44])
    assert volume.shape == (5,) + reference_pair.shape


def test_cost_volume_slice_equals_uniform_warp_error(small_pair):
    from services.camera_service import stereo_coords, warp_image
    volume = cost_volume(small_pair, [3.0], CFG)
    recon = warp_image(small_pair.right, stereo_coords(np.full(small_pair.shape, 3.0)))
    assert np.array_equal(volume[0], photometric_error(small_pair.left, recon, CFG))


def test_profile_rejects_pixels_outside_scene(reference_pair):
    with pytest.raises(ContractViolationError):
        profile_at(reference_pair, 96, 10)
    with pytest.raises(ContractViolationError):
        profile_at(reference_pair, 10, -1)


def test_landscape_summary(reference_pair):
    summary = landscape_summary(reference_pair, (1.0, 15.0), 0.25, CFG)
    assert summary.band_pixels == 240
    assert summary.background_at_bg >= 0.95
    assert summary.band_at_fg >= 0.9
    assert summary.band_at_fg + summary.band_at_bg <= 1.0


def test_band_pixel_profile_prefers_foreground_disparity(reference_pair):
    profile = profile_at(reference_pair, 40, 45)
    assert profile_argmin(profile) == 10.0
    assert dict(profile)[10.0] == 0.0
    assert dict(profile)[5.0] > 0.0


def test_noise_texture_loses_the_exact_band_match():
    pair = render_scene(SceneSpec(texture=TextureKind.NOISE, texture_seed=42))
    rows, cols = np.nonzero(pair.occlusion_mask)
    assert not np.array_equal(pair.left[rows, cols], pair.left[rows, cols - 5])
