"""Vectorized RGB <-> HSV conversion and Rec. 601 luminance.

Hue, saturation and value all live in [0, 1]; hue wraps (0 == 1).  Used by
the synthetic corpus (theme colors), the color-histogram baseline and the
hue-jitter branch of the appearance transform.
"""

import numpy as np


def rgb_to_hsv(rgb):
    """Convert an (..., 3) RGB array in [0,1] to HSV in [0,1]."""
    rgb = np.asarray(rgb, dtype=np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = np.max(rgb, axis=-1)
    minc = np.min(rgb, axis=-1)
    delta = maxc - minc

    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(maxc > 0, delta / maxc, 0.0)
        rc = (maxc - r) / delta
        gc = (maxc - g) / delta
        bc = (maxc - b) / delta

    h = np.zeros_like(maxc)
    gray = delta == 0
    h = np.where(r == maxc, bc - gc, h)
    h = np.where((g == maxc) & (r != maxc), 2.0 + rc - bc, h)
    h = np.where((b == maxc) & (r != maxc) & (g != maxc), 4.0 + gc - rc, h)
    h = np.where(gray, 0.0, (h / 6.0) % 1.0)
    return np.stack([h, np.where(gray, 0.0, s), maxc], axis=-1)


def hsv_to_rgb(hsv):
    """Convert an (..., 3) HSV array in [0,1] to RGB in [0,1]."""
    hsv = np.asarray(hsv, dtype=np.float64)
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = i.astype(np.int64) % 6

    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


def luminance(rgb):
    """Rec. 601 luma of an (..., 3) RGB array (weights 0.299, 0.587, 0.114)."""
    rgb = np.asarray(rgb, dtype=np.float64)
    return 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]


def circular_hue_distance(h1, h2):
    """Shortest wrap-around distance between hues in [0,1); result in [0,0.5]."""
    d = np.abs(np.asarray(h1, dtype=np.float64) - np.asarray(h2, dtype=np.float64)) % 1.0
    return np.minimum(d, 1.0 - d)


def circular_hue_mean(h):
    """Circular mean of hues in [0,1) via the angular resultant vector."""
    ang = np.asarray(h, dtype=np.float64) * 2.0 * np.pi
    mean = np.arctan2(np.sin(ang).mean(), np.cos(ang).mean())
    return (mean / (2.0 * np.pi)) % 1.0
