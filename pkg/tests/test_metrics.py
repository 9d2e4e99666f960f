import numpy as np
import pytest

from csdenoise.errors import ShapeError
from csdenoise.metrics import psnr, ssim


class TestPsnr:
    def test_identical_images_capped(self, rng):
        a = rng.random((16, 16))
        assert psnr(a, a.copy()) == 99.0

    def test_constant_offset_closed_form(self, rng):
        a = rng.random((32, 32)) * 0.5 + 0.2
        b = a + 0.0625
        expected = 20.0 * np.log10(1.0 / 0.0625)
        assert abs(psnr(a, b) - expected) < 1e-10
        assert abs(expected - 24.0824) < 1e-3

    def test_symmetry(self, rng):
        a, b = rng.random((8, 8)), rng.random((8, 8))
        assert psnr(a, b) == psnr(b, a)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            psnr(np.zeros((4, 4)), np.zeros((4, 5)))


class TestSsim:
    def test_self_similarity_is_exactly_one(self, rng):
        a = rng.random((24, 24))
        assert ssim(a, a.copy()) == 1.0

    def test_luminance_shift_lowers_score(self):
        a = np.full((16, 16), 0.3)
        b = a + 0.4
        s = ssim(a, b)
        assert s < 1.0
        # constant images: contrast/structure terms are 1, luminance < 1
        c1 = 0.01**2
        expected = (2 * 0.3 * 0.7 + c1) / (0.3**2 + 0.7**2 + c1)
        assert abs(s - expected) < 1e-12

    def test_symmetry(self, rng):
        a, b = rng.random((20, 20)), rng.random((20, 20))
        assert abs(ssim(a, b) - ssim(b, a)) < 1e-14

    def test_range_bounds(self, rng):
        a = rng.random((16, 16))
        b = 1.0 - a
        assert -1.0 <= ssim(a, b) <= 1.0

    def test_image_smaller_than_window(self):
        with pytest.raises(ShapeError):
            ssim(np.zeros((8, 8)), np.zeros((8, 8)))

    def test_noise_lowers_score_more_than_blur(self, rng, toy_images):
        img = toy_images[0]
        noisy = np.clip(img + rng.normal(0, 0.1, img.shape), 0, 1)
        assert ssim(img, noisy) < ssim(img, img * 0.97 + 0.015)
