"""HSV conversion parity against matplotlib and round-trip behaviour."""

import matplotlib.colors as mcolors
import numpy as np

from compatlearn.colorspace import (
    circular_hue_distance,
    circular_hue_mean,
    hsv_to_rgb,
    luminance,
    rgb_to_hsv,
)


def test_rgb_to_hsv_matches_matplotlib():
    rng = np.random.default_rng(0)
    rgb = rng.uniform(size=(500, 3))
    assert np.allclose(rgb_to_hsv(rgb), mcolors.rgb_to_hsv(rgb), atol=1e-12)


def test_hsv_to_rgb_matches_matplotlib():
    rng = np.random.default_rng(1)
    hsv = rng.uniform(size=(500, 3))
    assert np.allclose(hsv_to_rgb(hsv), mcolors.hsv_to_rgb(hsv), atol=1e-12)


def test_round_trip_preserves_saturated_colors():
    rng = np.random.default_rng(2)
    hsv = np.stack(
        [rng.uniform(0, 1, 300), rng.uniform(0.2, 1, 300), rng.uniform(0.2, 1, 300)],
        axis=-1,
    )
    back = rgb_to_hsv(hsv_to_rgb(hsv))
    assert np.allclose(back[:, 1:], hsv[:, 1:], atol=1e-12)
    assert np.all(circular_hue_distance(back[:, 0], hsv[:, 0]) < 1e-9)


def test_grays_have_zero_saturation_and_hue():
    g = np.linspace(0, 1, 16)
    rgb = np.stack([g, g, g], axis=-1)
    hsv = rgb_to_hsv(rgb)
    assert np.all(hsv[:, 0] == 0.0)
    assert np.all(hsv[:, 1] == 0.0)
    assert np.allclose(hsv[:, 2], g)


def test_value_scaling_leaves_hue_untouched():
    # texture fields modulate V only; hue must be bit-stable under that
    rng = np.random.default_rng(3)
    hsv = np.stack(
        [rng.uniform(0, 1, 200), rng.uniform(0.3, 1, 200), np.full(200, 0.9)], axis=-1
    )
    dimmed = hsv.copy()
    dimmed[:, 2] *= 0.55
    h1 = rgb_to_hsv(hsv_to_rgb(hsv))[:, 0]
    h2 = rgb_to_hsv(hsv_to_rgb(dimmed))[:, 0]
    assert np.all(circular_hue_distance(h1, h2) < 1e-9)


def test_luminance_weights():
    assert luminance(np.array([1.0, 0.0, 0.0])) == 0.299
    assert luminance(np.array([0.0, 1.0, 0.0])) == 0.587
    assert luminance(np.array([0.0, 0.0, 1.0])) == 0.114
    assert np.isclose(luminance(np.ones(3)), 1.0)


def test_circular_hue_mean_handles_wraparound():
    h = np.array([0.98, 0.02])
    assert circular_hue_distance(circular_hue_mean(h), 0.0) < 1e-9
