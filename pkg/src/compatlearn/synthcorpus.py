"""Procedural desk-scale corpus with a planted compatibility rule.

Every outfit draws all of its items from one color theme, so ground-truth
compatibility is "items share a theme".  Silhouette is category-determined
(four pixel-disjoint templates), texture is an independent distractor, and
hue carries the signal: textures modulate only the HSV value channel, which
leaves per-pixel hue untouched.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .colorspace import hsv_to_rgb
from .dataset import Catalog, Item, Outfit
from .errors import DataError, ParameterError

logger = logging.getLogger(__name__)

DEFAULT_CATEGORIES = ("top", "bottom", "shoe", "bag")
TEXTURE_KINDS = ("solid", "stripes", "dots")


@dataclass(frozen=True)
class ColorTheme:
    """A hue band (degrees) with saturation/value ranges, all sampled uniformly.

    The default saturation/value ranges fit inside a single cell of the
    6-bins-per-channel HSV histogram, so on a default corpus two same-theme
    items land in the same joint bin (up to texture), which keeps the
    color-histogram baseline cleanly theme-separating.
    """

    hue_center: float
    hue_tolerance: float = 10.0
    saturation_range: tuple[float, float] = (0.68, 0.82)
    value_range: tuple[float, float] = (0.68, 0.82)

    def __post_init__(self):
        if not 0.0 <= self.hue_center < 360.0:
            raise ParameterError(f"hue_center must be in [0, 360), got {self.hue_center}")
        for name, (lo, hi) in (
            ("saturation_range", self.saturation_range),
            ("value_range", self.value_range),
        ):
            if not 0.0 <= lo <= hi <= 1.0:
                raise ParameterError(f"{name} must satisfy 0 <= lo <= hi <= 1")


def default_themes(n_themes: int, hue_tolerance: float = 10.0) -> tuple[ColorTheme, ...]:
    """Evenly spaced hue centers, offset by half a step so no band straddles
    a 60-degree histogram-bin edge at small n; raises if the separation
    invariant fails."""
    themes = tuple(
        ColorTheme(hue_center=(i + 0.5) * 360.0 / n_themes, hue_tolerance=hue_tolerance)
        for i in range(n_themes)
    )
    _check_theme_separation(themes)
    return themes


def _check_theme_separation(themes):
    max_tol = max(t.hue_tolerance for t in themes)
    for i in range(len(themes)):
        for j in range(i + 1, len(themes)):
            d = abs(themes[i].hue_center - themes[j].hue_center) % 360.0
            d = min(d, 360.0 - d)
            if d <= 2.0 * max_tol:
                raise ParameterError(
                    f"theme hue centers {themes[i].hue_center} and {themes[j].hue_center} "
                    f"are separated by {d} deg, need > {2.0 * max_tol} deg"
                )


@dataclass(frozen=True)
class SynthSpec:
    n_outfits: int
    items_per_outfit: tuple[int, int] = (3, 4)
    categories: tuple[str, ...] = DEFAULT_CATEGORIES
    n_themes: int = 4
    image_size: int = 64
    texture_kinds: tuple[str, ...] = TEXTURE_KINDS
    noise_std: float = 0.02
    seed: int = 0
    themes: tuple[ColorTheme, ...] = field(default=())

    def __post_init__(self):
        lo, hi = self.items_per_outfit
        if lo < 2 or hi < lo:
            raise ParameterError(f"items_per_outfit must satisfy 2 <= min <= max, got {lo, hi}")
        if self.n_themes < 2:
            raise ParameterError(f"need >= 2 themes, got {self.n_themes}")
        if self.image_size < 16:
            raise ParameterError(f"image_size must be >= 16, got {self.image_size}")
        if self.n_outfits < 1:
            raise ParameterError("n_outfits must be >= 1")
        if hi > len(self.categories):
            raise ParameterError(
                f"items_per_outfit max {hi} exceeds the {len(self.categories)} categories"
            )
        if len(self.categories) > 4:
            raise ParameterError("at most 4 categories are supported (4 silhouette templates)")
        unknown = set(self.texture_kinds) - set(TEXTURE_KINDS)
        if unknown:
            raise ParameterError(f"unknown texture kinds {sorted(unknown)}")
        if self.noise_std < 0:
            raise ParameterError("noise_std must be >= 0")
        if not self.themes:
            object.__setattr__(self, "themes", default_themes(self.n_themes))
        elif len(self.themes) != self.n_themes:
            raise ParameterError("len(themes) must equal n_themes")
        else:
            _check_theme_separation(self.themes)


def _grid(size: int):
    c = (np.arange(size, dtype=np.float64) + 0.5) / size
    return np.meshgrid(c, c)  # xx, yy


@lru_cache(maxsize=32)
def silhouette_masks(size: int) -> tuple[np.ndarray, ...]:
    """The four pixel-disjoint silhouettes (trapezoid, twin columns, paired
    ellipses, rounded rectangle with handle), each a bool (size, size) mask.
    They occupy separate quadrants, so no two masks share a pixel."""
    xx, yy = _grid(size)

    # top: trapezoid, upper-left quadrant
    t = (yy - 0.08) / 0.34
    trapezoid = (yy >= 0.08) & (yy <= 0.42) & (np.abs(xx - 0.26) <= 0.08 + 0.12 * t)

    # bottom: twin columns, upper-right quadrant
    columns = (
        (yy >= 0.08)
        & (yy <= 0.44)
        & ((np.abs(xx - 0.625) <= 0.055) | (np.abs(xx - 0.805) <= 0.055))
    )

    # shoe: paired ellipses, lower-left quadrant
    e1 = ((xx - 0.17) / 0.095) ** 2 + ((yy - 0.74) / 0.075) ** 2 <= 1.0
    e2 = ((xx - 0.37) / 0.095) ** 2 + ((yy - 0.74) / 0.075) ** 2 <= 1.0
    ellipses = e1 | e2

    # bag: rounded rectangle with a handle ring, lower-right quadrant
    r = 0.05
    dx = np.maximum(np.abs(xx - 0.74) - (0.16 - r), 0.0)
    dy = np.maximum(np.abs(yy - 0.765) - (0.135 - r), 0.0)
    body = dx**2 + dy**2 <= r**2
    ring = np.abs(np.hypot(xx - 0.74, yy - 0.63) - 0.085) <= 0.025
    bag = body | (ring & (yy <= 0.63))

    return trapezoid, columns, ellipses, bag


@lru_cache(maxsize=32)
def _texture_factors(size: int) -> dict[str, np.ndarray]:
    """Value-channel modulation fields; hue and saturation are never touched."""
    ii, jj = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    period = max(2, size // 10)
    stripes = np.where((np.floor((ii + jj) / period) % 2) == 1, 0.55, 1.0)
    spacing = max(4, size // 7)
    radius = max(1, size // 14)
    ci = (ii % spacing) - spacing / 2.0
    cj = (jj % spacing) - spacing / 2.0
    dots = np.where(ci**2 + cj**2 <= radius**2, 0.55, 1.0)
    return {
        "solid": np.ones((size, size)),
        "stripes": stripes,
        "dots": dots,
    }


def render_item(
    category_index: int,
    theme: ColorTheme,
    texture: str,
    size: int,
    noise_std: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Render one 8-bit item image: silhouette filled with a theme-sampled
    color and a value-modulating texture on white, plus clipped Gaussian noise.

    ``hue_tolerance`` is the contract bound on the realized per-item mean hue,
    so the sampler only uses 80% of the band, leaving margin for pixel noise.
    """
    hue = (theme.hue_center + 0.8 * rng.uniform(-theme.hue_tolerance, theme.hue_tolerance)) % 360.0
    sat = rng.uniform(*theme.saturation_range)
    val = rng.uniform(*theme.value_range)

    mask = silhouette_masks(size)[category_index]
    factor = _texture_factors(size)[texture]
    hsv = np.empty((size, size, 3))
    hsv[..., 0] = hue / 360.0
    hsv[..., 1] = sat
    hsv[..., 2] = val * factor
    img = np.ones((size, size, 3))
    img[mask] = hsv_to_rgb(hsv)[mask]

    noise = rng.normal(0.0, noise_std, size=(size, size, 3))
    img = np.clip(img + noise, 0.0, 1.0)
    return np.round(img * 255.0).astype(np.uint8)


def generate_corpus(spec: SynthSpec) -> tuple[Catalog, dict[str, int]]:
    """Build the catalog and its item -> theme-index ground truth.

    Deterministic in ``spec.seed``: each outfit gets its own child seed
    sequence, and each item draws color/texture/noise from a per-item child,
    so generation could be parallelized per outfit without changing bytes.
    """
    root_ss = np.random.SeedSequence(spec.seed)
    outfit_seqs = root_ss.spawn(spec.n_outfits)

    items: dict[str, Item] = {}
    outfits: list[Outfit] = []
    ground_truth: dict[str, int] = {}
    counter = 0
    lo, hi = spec.items_per_outfit
    for oi, oss in enumerate(outfit_seqs):
        rng_outfit = np.random.default_rng(oss.spawn(1)[0])
        theme_idx = int(rng_outfit.integers(spec.n_themes))
        theme = spec.themes[theme_idx]
        size = int(rng_outfit.integers(lo, hi + 1))
        cat_indices = rng_outfit.choice(len(spec.categories), size=size, replace=False)
        item_seqs = oss.spawn(size)

        member_ids = []
        for ci, iss in zip(cat_indices, item_seqs):
            rng_item = np.random.default_rng(iss)
            texture = spec.texture_kinds[rng_item.integers(len(spec.texture_kinds))]
            pixels = render_item(
                int(ci), theme, texture, spec.image_size, spec.noise_std, rng_item
            )
            item_id = f"i{counter:06d}"
            counter += 1
            items[item_id] = Item(id=item_id, category=spec.categories[int(ci)], image=pixels)
            ground_truth[item_id] = theme_idx
            member_ids.append(item_id)
        outfits.append(Outfit(id=f"o{oi:06d}", item_ids=tuple(member_ids)))

    catalog = Catalog(items=items, outfits=outfits, categories=frozenset(spec.categories))
    return catalog, ground_truth


def make_negative_outfits(
    catalog: Catalog,
    ground_truth: dict[str, int],
    count: int,
    rng: np.random.Generator,
    template_outfits: list[Outfit] | None = None,
) -> list[tuple[Outfit, int]]:
    """Build incompatible outfits: same category multiset as a real outfit,
    items from >= 2 distinct themes, never duplicating a real outfit's item set.

    Returns up to ``count`` (outfit, 0) pairs; logs a warning and returns
    fewer when the corpus cannot supply more distinct negatives.
    """
    if count < 0:
        raise ParameterError("count must be >= 0")
    themes_present = sorted(set(ground_truth.values()))
    if len(themes_present) < 2:
        raise DataError("need >= 2 themes present to build negative outfits")
    templates = list(template_outfits) if template_outfits is not None else list(catalog.outfits)
    if not templates:
        raise DataError("no template outfits available")

    by_cat_theme: dict[tuple[str, int], list[str]] = {}
    for iid in sorted(catalog.items):
        key = (catalog.items[iid].category, ground_truth[iid])
        by_cat_theme.setdefault(key, []).append(iid)
    by_cat: dict[str, list[str]] = {}
    for iid in sorted(catalog.items):
        by_cat.setdefault(catalog.items[iid].category, []).append(iid)

    positive_sets = {frozenset(o.item_ids) for o in catalog.outfits}
    seen: set[frozenset[str]] = set()
    negatives: list[tuple[Outfit, int]] = []
    attempts = 0
    max_attempts = 60 * count + 100
    while len(negatives) < count and attempts < max_attempts:
        attempts += 1
        template = templates[rng.integers(len(templates))]
        cats = [catalog.items[iid].category for iid in template.item_ids]
        chosen = [by_cat[c][rng.integers(len(by_cat[c]))] for c in cats]
        if len(set(chosen)) < len(chosen):
            continue
        if len({ground_truth[i] for i in chosen}) < 2:
            # force a second theme into a random slot
            slot = int(rng.integers(len(chosen)))
            current = ground_truth[chosen[slot]]
            options = [
                t for t in themes_present
                if t != current and by_cat_theme.get((cats[slot], t))
            ]
            if not options:
                continue
            alt = options[rng.integers(len(options))]
            pool = by_cat_theme[(cats[slot], alt)]
            chosen[slot] = pool[rng.integers(len(pool))]
            if len(set(chosen)) < len(chosen):
                continue
        key = frozenset(chosen)
        if key in positive_sets or key in seen:
            continue
        seen.add(key)
        negatives.append(
            (Outfit(id=f"n{len(negatives):06d}", item_ids=tuple(chosen)), 0)
        )
    if len(negatives) < count:
        logger.warning(
            "requested %d negative outfits but only %d distinct ones were found",
            count,
            len(negatives),
        )
    return negatives
