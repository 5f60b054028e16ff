import numpy as np
import pytest

from services.exceptions import ContractViolationError
from services.photometric_service import (photometric_error, photometric_error_backward, smoothness_loss,
                                          smoothness_loss_and_grad, ssim_map)
from services.schemas import PhotometricConfig

CFG = PhotometricConfig()


def random_image(seed, shape=(8, 9)):
    return np.random.default_rng(seed).uniform(0.1, 0.9, shape)


# ============================================================================
# SSIM AND PHOTOMETRIC ERROR
# ============================================================================

def test_ssim_of_identical_images_is_one():
    a = random_image(0)
    np.testing.assert_allclose(ssim_map(a, a, CFG), 1.0, atol=1e-9)


def test_ssim_of_constant_images_closed_form():
    expected = (2 * 0.5 * 0.6 + CFG.ssim_c1) / (0.25 + 0.36 + CFG.ssim_c1)
    out = ssim_map(np.full((5, 5), 0.5), np.full((5, 5), 0.6), CFG)
    np.testing.assert_allclose(out, expected, rtol=1e-9)
    assert expected == pytest.approx(0.98361, abs=1e-5)


def test_ssim_is_symmetric_and_bounded():
    a, b = random_image(1), random_image(2)
    ab = ssim_map(a, b, CFG)
    np.testing.assert_allclose(ab, ssim_map(b, a, CFG), atol=1e-12)
    assert np.all(ab <= 1.0 + 1e-12)
    assert np.all(ab >= -1.0 - 1e-12)


def test_ssim_rejects_shape_mismatch():
    with pytest.raises(ContractViolationError):
        ssim_map(np.zeros((4, 4)), np.zeros((4, 5)), CFG)


def test_photometric_error_zero_on_identical_images():
    a = random_image(3)
    np.testing.assert_allclose(photometric_error(a, a, CFG), 0.0, atol=1e-9)


def test_photometric_error_nonnegative():
    error = photometric_error(random_image(4), random_image(5), CFG)
    assert np.all(error >= 0.0)


def test_photometric_error_pure_l1_when_alpha_zero():
    a, b = random_image(6), random_image(7)
    error = photometric_error(a, b, PhotometricConfig(alpha=0.0))
    np.testing.assert_allclose(error, np.abs(a - b), atol=1e-15)


def test_photometric_error_averages_channels():
    a, b = random_image(8, (6, 7, 3)), random_image(9, (6, 7, 3))
    error = photometric_error(a, b, CFG)
    assert error.shape == (6, 7)
    per_channel = [photometric_error(a[..., c], b[..., c], CFG) for c in range(3)]
    np.testing.assert_allclose(error, np.mean(per_channel, axis=0), atol=1e-12)


@pytest.mark.parametrize("shape", [(7, 8), (5, 6, 3)])
def test_photometric_backward_matches_finite_differences(shape):
    rng = np.random.default_rng(10)
    target = rng.uniform(0.1, 0.9, shape)
    recon = rng.uniform(0.1, 0.9, shape)
    weights = rng.uniform(0.0, 1.0, shape[:2])
    grad = photometric_error_backward(target, recon, weights, CFG)
    assert grad.shape == shape

    h = 1e-6
    for _ in range(25):
        index = tuple(int(rng.integers(0, n)) for n in shape)
        up, down = recon.copy(), recon.copy()
        up[index] += h
        down[index] -= h
        fd = (np.sum(weights * photometric_error(target, up, CFG))
              - np.sum(weights * photometric_error(target, down, CFG))) / (2 * h)
        assert grad[index] == pytest.approx(fd, rel=1e-5, abs=1e-7)


def test_photometric_backward_is_zero_at_exact_match():
    a = random_image(11)
    grad = photometric_error_backward(a, a.copy(), np.ones(a.shape), CFG)
    np.testing.assert_allclose(grad, 0.0, atol=1e-9)


# ============================================================================
# SMOOTHNESS
# ============================================================================

def test_smoothness_of_constant_disparity_is_zero():
    assert smoothness_loss(np.full((6, 7), 4.0), random_image(12, (6, 7))) == 0.0


def test_smoothness_step_on_flat_image():
    height, width, col = 6, 10, 4
    disp = np.ones((height, width))
    disp[:, col:] = 2.0
    mean = disp.mean()
    expected = 1.0 / (mean * (width - 1))
    assert smoothness_loss(disp, np.full((height, width), 0.5)) == pytest.approx(expected, rel=1e-12)


def test_smoothness_step_under_image_edge_is_damped():
    height, width, col, g = 6, 10, 4, 0.3
    disp = np.ones((height, width))
    disp[:, col:] = 2.0
    image = np.full((height, width), 0.2)
    image[:, col:] += g
    flat = smoothness_loss(disp, np.full((height, width), 0.2))
    assert smoothness_loss(disp, image) == pytest.approx(flat * np.exp(-g), rel=1e-9)


def test_smoothness_is_scale_invariant():
    rng = np.random.default_rng(13)
    disp = rng.uniform(1, 10, (6, 7))
    image = random_image(14, (6, 7))
    for c in (0.01, 3.0, 250.0):
        assert smoothness_loss(c * disp, image) == pytest.approx(smoothness_loss(disp, image), abs=1e-9)


def test_smoothness_grad_matches_finite_differences():
    rng = np.random.default_rng(15)
    disp = rng.uniform(1, 10, (6, 7))
    image = random_image(16, (6, 7))
    _, grad = smoothness_loss_and_grad(disp, image)

    h = 1e-6
    for r in range(6):
        for c in range(7):
            up, down = disp.copy(), disp.copy()
            up[r, c] += h
            down[r, c] -= h
            fd = (smoothness_loss(up, image) - smoothness_loss(down, image)) / (2 * h)
            assert grad[r, c] == pytest.approx(fd, rel=1e-5, abs=1e-9)


def test_smoothness_rejects_degenerate_input():
    with pytest.raises(ContractViolationError):
        smoothness_loss(np.zeros((4, 4)), random_image(17, (4, 4)))
    with pytest.raises(ContractViolationError):
        smoothness_loss(np.ones((1, 4)), random_image(18, (1, 4)))
    with pytest.raises(ContractViolationError):
        smoothness_loss(np.ones((4, 4)), random_image(19, (4, 5)))
