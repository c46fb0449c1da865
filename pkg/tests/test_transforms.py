"""Shape/appearance transform contracts: identity cases, exactness, hue safety."""

import numpy as np
import pytest

from compatlearn.colorspace import rgb_to_hsv
from compatlearn.errors import ParameterError
from compatlearn.synthcorpus import SynthSpec, generate_corpus
from compatlearn.transforms import (
    AppearanceTransformParams,
    ShapeTransformParams,
    appearance_transform,
    shape_transform,
    transform_batch,
)

IDENTITY_SHAPE = ShapeTransformParams(rotation_deg=0.0, shear_frac_max=0.0, scale_range=(1.0, 1.0))
IDENTITY_APPEAR = AppearanceTransformParams(
    grayscale_prob=0.0, brightness=0.0, contrast=0.0, saturation=0.0, hue=0.0,
    crop_area=(1.0, 1.0),
)


def random_image(seed, size=24):
    return np.random.default_rng(seed).uniform(size=(size, size, 3))


class TestShapeTransform:
    def test_zero_magnitude_is_identity(self):
        img = random_image(0)
        out = shape_transform(img, IDENTITY_SHAPE, np.random.default_rng(1))
        assert np.array_equal(out, img)

    def test_dims_preserved_over_100_draws(self):
        img = random_image(1, size=20)
        rng = np.random.default_rng(2)
        params = ShapeTransformParams()
        for _ in range(100):
            out = shape_transform(img, params, rng)
            assert out.shape == img.shape

    def test_bounds_preserved(self):
        img = random_image(2)
        rng = np.random.default_rng(3)
        params = ShapeTransformParams()
        for _ in range(50):
            out = shape_transform(img, params, rng)
            assert out.min() >= 0.0 and out.max() <= 1.0

    def test_deterministic_given_rng_state(self):
        img = random_image(3)
        out1 = shape_transform(img, ShapeTransformParams(), np.random.default_rng(7))
        out2 = shape_transform(img, ShapeTransformParams(), np.random.default_rng(7))
        assert np.array_equal(out1, out2)

    def test_scale_zooms_toward_center(self):
        # pure 2x scale: the output center pixel samples the input center
        img = np.zeros((16, 16, 3))
        img[7:9, 7:9] = 1.0
        params = ShapeTransformParams(rotation_deg=0.0, shear_frac_max=0.0, scale_range=(2.0, 2.0))
        out = shape_transform(img, params, np.random.default_rng(0))
        assert out[7:9, 7:9].mean() > 0.9

    def test_hue_histogram_preserved_on_synthetic_items(self):
        # operationalizes "colour and texture remain unaltered": 16-bin hue
        # histogram of non-background pixels moves by < 0.1 L1
        spec = SynthSpec(n_outfits=20, seed=13, noise_std=0.0)
        catalog, _ = generate_corpus(spec)
        rng = np.random.default_rng(11)
        params = ShapeTransformParams()
        for item in list(catalog.items.values())[:30]:
            img = item.pixels()
            out = shape_transform(img, params, rng)
            h_in = _hue_hist(img)
            h_out = _hue_hist(out)
            assert np.abs(h_in - h_out).sum() < 0.1

    def test_invalid_params(self):
        with pytest.raises(ParameterError):
            ShapeTransformParams(rotation_deg=-1.0)
        with pytest.raises(ParameterError):
            ShapeTransformParams(scale_range=(0.0, 1.0))


def _hue_hist(img, bins=16):
    fg = img.min(axis=2) < 0.9
    hue = rgb_to_hsv(img[fg])[:, 0]
    counts, _ = np.histogram(hue, bins=bins, range=(0.0, 1.0))
    return counts / max(1, counts.sum())


class TestAppearanceTransform:
    def test_neutral_params_are_identity(self):
        img = random_image(4)
        out = appearance_transform(img, IDENTITY_APPEAR, np.random.default_rng(0))
        assert np.array_equal(out, img)

    def test_grayscale_fires_with_exact_channel_equality(self):
        img = random_image(5)
        params = AppearanceTransformParams(grayscale_prob=1.0)
        out = appearance_transform(img, params, np.random.default_rng(1))
        assert np.array_equal(out[..., 0], out[..., 1])
        assert np.array_equal(out[..., 1], out[..., 2])

    def test_brightness_alone_is_clipped_scaling(self):
        img = random_image(6)
        params = AppearanceTransformParams(
            grayscale_prob=0.0, brightness=0.4, contrast=0.0, saturation=0.0,
            hue=0.0, crop_area=(1.0, 1.0),
        )
        rng = np.random.default_rng(2)
        draws = np.random.default_rng(2)
        _ = draws.uniform(1.0, 1.0)  # crop area
        factor = draws.uniform(0.6, 1.4)
        out = appearance_transform(img, params, rng)
        assert np.allclose(out, np.clip(img * factor, 0.0, 1.0), atol=1e-12)

    def test_dims_and_bounds(self):
        img = random_image(7, size=20)
        rng = np.random.default_rng(3)
        params = AppearanceTransformParams()
        for _ in range(100):
            out = appearance_transform(img, params, rng)
            assert out.shape == img.shape
            assert out.min() >= 0.0 and out.max() <= 1.0

    def test_deterministic_given_rng_state(self):
        img = random_image(8)
        params = AppearanceTransformParams()
        out1 = appearance_transform(img, params, np.random.default_rng(21))
        out2 = appearance_transform(img, params, np.random.default_rng(21))
        assert np.array_equal(out1, out2)

    def test_invalid_params(self):
        with pytest.raises(ParameterError):
            AppearanceTransformParams(grayscale_prob=1.5)
        with pytest.raises(ParameterError):
            AppearanceTransformParams(hue=0.6)
        with pytest.raises(ParameterError):
            AppearanceTransformParams(crop_area=(0.0, 1.0))


def test_transform_batch_matches_sequential_draws():
    imgs = np.stack([random_image(i) for i in range(4)])
    params = ShapeTransformParams()
    batch = transform_batch(imgs, params, np.random.default_rng(5), "shape")
    rng = np.random.default_rng(5)
    singles = np.stack([shape_transform(img, params, rng) for img in imgs])
    assert np.array_equal(batch, singles)


def test_transform_batch_unknown_kind():
    with pytest.raises(ParameterError):
        transform_batch(np.zeros((1, 8, 8, 3)), ShapeTransformParams(), np.random.default_rng(0), "blur")
