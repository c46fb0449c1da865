"""Shape and appearance perturbations for the consistency loss.

The shape transform composes rotation, shear and up-scale about the image
center as one affine warp (bilinear, white fill), then implicitly center
crops by keeping the output size; only geometry changes.  The appearance
transform applies random crop-and-resize, brightness/contrast/saturation/hue
jitter and random grayscale; geometry (up to the crop) is preserved while
color is perturbed.

Both are pure functions of (image, params, rng); each call draws the same
number of random values regardless of which branches fire, so a fixed rng
state always reproduces the same output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .colorspace import hsv_to_rgb, luminance, rgb_to_hsv
from .dataset import validate_image
from .errors import ParameterError

WHITE_FILL = 1.0


@dataclass(frozen=True)
class ShapeTransformParams:
    """Bounds for the geometric perturbation (rotation/shear drawn uniformly
    in +/- the bound, scale uniformly in ``scale_range``)."""

    rotation_deg: float = 5.0
    shear_frac_max: float = 30.0 / 224.0  # fraction of width, per axis
    scale_range: tuple[float, float] = (1.0, 1.2)

    def __post_init__(self):
        if self.rotation_deg < 0:
            raise ParameterError("rotation_deg must be >= 0")
        if self.shear_frac_max < 0:
            raise ParameterError("shear_frac_max must be >= 0")
        lo, hi = self.scale_range
        if not 0 < lo <= hi:
            raise ParameterError(f"scale_range must satisfy 0 < lo <= hi, got {lo, hi}")


@dataclass(frozen=True)
class AppearanceTransformParams:
    grayscale_prob: float = 0.5
    brightness: float = 0.4
    contrast: float = 0.4
    saturation: float = 0.4
    hue: float = 0.1
    crop_area: tuple[float, float] = (0.6, 1.0)

    def __post_init__(self):
        if not 0.0 <= self.grayscale_prob <= 1.0:
            raise ParameterError("grayscale_prob must lie in [0, 1]")
        for name in ("brightness", "contrast", "saturation"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ParameterError(f"{name} strength must lie in [0, 1]")
        if not 0.0 <= self.hue <= 0.5:
            raise ParameterError("hue jitter must lie in [0, 0.5]")
        lo, hi = self.crop_area
        if not 0.0 < lo <= hi <= 1.0:
            raise ParameterError(f"crop_area must satisfy 0 < lo <= hi <= 1, got {lo, hi}")


def _centered_inverse_matrix(fwd_2x2: np.ndarray, h: int, w: int) -> np.ndarray:
    """Output->input 2x3 pixel map for a forward 2x2 transform about the center."""
    a, b = fwd_2x2[0]
    c, d = fwd_2x2[1]
    det = a * d - b * c
    inv = np.array([[d, -b], [-c, a]], dtype=np.float64) / det
    cx = (w - 1) / 2.0
    cy = (h - 1) / 2.0
    tx = cx - (inv[0, 0] * cx + inv[0, 1] * cy)
    ty = cy - (inv[1, 0] * cx + inv[1, 1] * cy)
    return np.array(
        [[inv[0, 0], inv[0, 1], tx], [inv[1, 0], inv[1, 1], ty]], dtype=np.float64
    )


def shape_transform(
    image: np.ndarray, params: ShapeTransformParams, rng: np.random.Generator
) -> np.ndarray:
    """Rotate, shear and scale the image about its center; same output dims.

    Out-of-frame regions are filled white to match catalog backgrounds.
    With zero rotation/shear and scale 1 the output equals the input exactly.
    """
    image = validate_image(image)
    h, w = image.shape[:2]
    theta = math.radians(rng.uniform(-params.rotation_deg, params.rotation_deg))
    shx = rng.uniform(-params.shear_frac_max, params.shear_frac_max)
    shy = rng.uniform(-params.shear_frac_max, params.shear_frac_max)
    scale = rng.uniform(*params.scale_range)

    if theta == 0.0 and shx == 0.0 and shy == 0.0 and scale == 1.0:
        return image.astype(np.float64, copy=True)

    rot = np.array(
        [[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]]
    )
    shear = np.array([[1.0, shx], [shy, 1.0]])
    fwd = scale * (shear @ rot)
    return kernels.affine_warp(image, _centered_inverse_matrix(fwd, h, w), WHITE_FILL)


def _crop_resize(image, area, rng):
    """Random square-fraction crop resized back to the input size (bilinear)."""
    h, w = image.shape[:2]
    side_frac = math.sqrt(area)
    ch = max(1, round(side_frac * h))
    cw = max(1, round(side_frac * w))
    top = int(rng.integers(0, h - ch + 1))
    left = int(rng.integers(0, w - cw + 1))
    if ch == h and cw == w and top == 0 and left == 0:
        return image
    sx = (cw - 1) / (w - 1) if w > 1 else 0.0
    sy = (ch - 1) / (h - 1) if h > 1 else 0.0
    matrix = np.array([[sx, 0.0, float(left)], [0.0, sy, float(top)]])
    return kernels.affine_warp(image, matrix, WHITE_FILL)


def appearance_transform(
    image: np.ndarray, params: AppearanceTransformParams, rng: np.random.Generator
) -> np.ndarray:
    """Random crop-resize, color jitter and random grayscale; same output dims.

    Jitter factors are drawn uniformly in [1-s, 1+s] (hue: a shift in
    [-hue, +hue] of the full circle, wrapped); each sub-operation clips to
    [0, 1].  Grayscale runs last, so when it fires the three output channels
    are exactly equal.  Neutral draws skip their op, so all-zero strengths
    with crop_area (1, 1) and grayscale_prob 0 return the input unchanged.
    """
    image = validate_image(image)
    area = rng.uniform(*params.crop_area)
    f_bright = rng.uniform(1.0 - params.brightness, 1.0 + params.brightness)
    f_contrast = rng.uniform(1.0 - params.contrast, 1.0 + params.contrast)
    f_sat = rng.uniform(1.0 - params.saturation, 1.0 + params.saturation)
    d_hue = rng.uniform(-params.hue, params.hue)
    gray_coin = rng.uniform(0.0, 1.0)

    out = _crop_resize(image, area, rng)
    if out is image:
        out = image.astype(np.float64, copy=True)

    if f_bright != 1.0:
        out = np.clip(out * f_bright, 0.0, 1.0)
    if f_contrast != 1.0:
        gray_mean = luminance(out).mean()
        out = np.clip(f_contrast * out + (1.0 - f_contrast) * gray_mean, 0.0, 1.0)
    if f_sat != 1.0:
        lum = luminance(out)[..., None]
        out = np.clip(f_sat * out + (1.0 - f_sat) * lum, 0.0, 1.0)
    if d_hue != 0.0:
        hsv = rgb_to_hsv(out)
        hsv[..., 0] = (hsv[..., 0] + d_hue) % 1.0
        out = np.clip(hsv_to_rgb(hsv), 0.0, 1.0)
    if gray_coin < params.grayscale_prob:
        g = luminance(out)
        out = np.repeat(g[..., None], 3, axis=2)
    return out


def transform_batch(images, params, rng, kind):
    """Apply one transform family to a stack of images (n, h, w, 3).

    Images are processed in order, drawing from the single ``rng`` stream;
    this is the deterministic reference path.
    """
    fn = {"shape": shape_transform, "appearance": appearance_transform}.get(kind)
    if fn is None:
        raise ParameterError(f"unknown transform kind {kind!r}")
    return np.stack([fn(img, params, rng) for img in images])
