"""Data model: items, outfits, labeled/unlabeled splits and batch sampling.

A :class:`Catalog` is immutable after construction.  Pool membership
(labeled vs unlabeled) is determined by a :class:`SplitSpec`; the ``pool``
attribute on :class:`Item` is informational and only populated when the
catalog is loaded together with a ``splits.json``.

On-disk layout (mirrors the public outfit-dataset convention):

* ``images/<item_id>.png``  -- 8-bit RGB
* ``outfits.json``          -- ``[{"set_id": str, "items": [{"item_id": str,
  "category": str}, ...]}, ...]``
* ``splits.json``           -- ``{"alpha": float, "seed": int,
  "labeled": [...], "validation": [...], "test": [...]}`` (optional)
* ``ground_truth.json``     -- ``{item_id: theme_index}`` (synthetic corpora)
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .errors import DataError, ParameterError, ParseError

logger = logging.getLogger(__name__)

POOL_LABELED = "labeled"
POOL_UNLABELED = "unlabeled"

OUTFITS_FILE = "outfits.json"
SPLITS_FILE = "splits.json"
GROUND_TRUTH_FILE = "ground_truth.json"
IMAGES_DIR = "images"


def validate_image(pixels):
    """Check the pixel-array contract: (h, w, 3) float in [0,1], h,w >= 8."""
    arr = np.asarray(pixels)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ParameterError(f"image must be (h, w, 3), got shape {arr.shape}")
    if arr.shape[0] < 8 or arr.shape[1] < 8:
        raise ParameterError(f"image sides must be >= 8 pixels, got {arr.shape[:2]}")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ParameterError("image pixel values must lie in [0, 1]")
    return arr


@dataclass
class Item:
    """A single catalog item; pixels are stored 8-bit and served as [0,1] floats."""

    id: str
    category: str
    image: np.ndarray | None = None  # uint8 (h, w, 3); lazily read from image_path
    image_path: Path | None = None
    pool: str = POOL_UNLABELED

    def pixels_u8(self) -> np.ndarray:
        if self.image is None:
            if self.image_path is None:
                raise DataError(f"item {self.id!r} has neither pixels nor an image path")
            with PILImage.open(self.image_path) as im:
                arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
            if arr.shape[0] < 8 or arr.shape[1] < 8:
                raise DataError(
                    f"item {self.id!r} image is {arr.shape[0]}x{arr.shape[1]}, need >= 8x8"
                )
            self.image = arr
        return self.image

    def pixels(self) -> np.ndarray:
        """Decoded image as float64 RGB in [0, 1]."""
        return self.pixels_u8().astype(np.float64) / 255.0

    def __eq__(self, other):
        if not isinstance(other, Item):
            return NotImplemented
        return (
            self.id == other.id
            and self.category == other.category
            and np.array_equal(self.pixels_u8(), other.pixels_u8())
        )


@dataclass(frozen=True)
class Outfit:
    id: str
    item_ids: tuple[str, ...]

    def __post_init__(self):
        if len(self.item_ids) < 2:
            raise DataError(f"outfit {self.id!r} has {len(self.item_ids)} items, need >= 2")


@dataclass
class Catalog:
    items: dict[str, Item]
    outfits: list[Outfit]
    categories: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        if not self.categories:
            self.categories = frozenset(it.category for it in self.items.values())
        seen = set()
        for outfit in self.outfits:
            if outfit.id in seen:
                raise DataError(f"duplicate outfit id {outfit.id!r}")
            seen.add(outfit.id)
            for iid in outfit.item_ids:
                if iid not in self.items:
                    raise DataError(f"outfit {outfit.id!r} references unknown item {iid!r}")
        for it in self.items.values():
            if it.category not in self.categories:
                raise DataError(f"item {it.id!r} category {it.category!r} not in catalog set")
        self._outfits_by_id = {o.id: o for o in self.outfits}

    def outfit(self, outfit_id: str) -> Outfit:
        return self._outfits_by_id[outfit_id]

    def get_image(self, item_id: str) -> np.ndarray:
        return self.items[item_id].pixels()

    def items_of_category(self, category: str) -> list[str]:
        """Item ids of one category, in catalog insertion order (deterministic)."""
        return [iid for iid, it in self.items.items() if it.category == category]

    def __eq__(self, other):
        if not isinstance(other, Catalog):
            return NotImplemented
        if sorted(self.items) != sorted(other.items):
            return False
        if len(self.outfits) != len(other.outfits):
            return False
        mine = {o.id: o.item_ids for o in self.outfits}
        theirs = {o.id: o.item_ids for o in other.outfits}
        if mine != theirs or self.categories != other.categories:
            return False
        return all(self.items[i] == other.items[i] for i in self.items)


@dataclass(frozen=True)
class SplitSpec:
    """Outfit-level split plus the derived unlabeled item pool.

    ``labeled_outfit_ids`` is the alpha-fraction of train outfits whose
    labels are used; ``unlabeled_item_ids`` are the items of the remaining
    train outfits that appear in no labeled outfit.  Validation/test outfits
    are held out entirely.
    """

    alpha: float
    seed: int
    labeled_outfit_ids: frozenset[str]
    unlabeled_item_ids: frozenset[str]
    validation_outfit_ids: frozenset[str]
    test_outfit_ids: frozenset[str]

    def labeled_item_ids(self, catalog: Catalog) -> frozenset[str]:
        ids: set[str] = set()
        for oid in self.labeled_outfit_ids:
            ids.update(catalog.outfit(oid).item_ids)
        return frozenset(ids)

    def train_outfit_ids(self, catalog: Catalog) -> list[str]:
        held = self.validation_outfit_ids | self.test_outfit_ids
        return [o.id for o in catalog.outfits if o.id not in held]


@dataclass(frozen=True)
class LabeledTriplet:
    anchor: Item
    positive: Item
    negative: Item


@dataclass(frozen=True)
class LabeledBatch:
    triplets: tuple[LabeledTriplet, ...]

    def __len__(self):
        return len(self.triplets)


@dataclass(frozen=True)
class UnlabeledBatch:
    items: tuple[Item, ...]

    def __len__(self):
        return len(self.items)


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def split_catalog(
    catalog: Catalog,
    alpha: float,
    seed: int,
    val_fraction: float = 0.15,
    test_fraction: float = 0.15,
) -> SplitSpec:
    """Partition outfits into train/validation/test and pick the labeled subset.

    Pure function of (catalog, alpha, seed): outfit order is shuffled with a
    generator seeded by ``seed``, the first ``val_fraction``/``test_fraction``
    shares become validation/test, and round-half-up(alpha * n_train) train
    outfits (at least one) become the labeled set.  The unlabeled item pool
    is every item of a non-labeled train outfit that appears in no labeled
    outfit.
    """
    if not 0.0 < alpha <= 1.0:
        raise ParameterError(f"alpha must lie in (0, 1], got {alpha}")
    if val_fraction < 0 or test_fraction < 0 or val_fraction + test_fraction >= 1:
        raise ParameterError("val_fraction/test_fraction must be >= 0 and sum below 1")

    outfit_ids = [o.id for o in catalog.outfits]
    n = len(outfit_ids)
    rng = np.random.default_rng(seed)
    order = [outfit_ids[i] for i in rng.permutation(n)]

    n_val = _round_half_up(val_fraction * n)
    n_test = _round_half_up(test_fraction * n)
    val_ids = frozenset(order[:n_val])
    test_ids = frozenset(order[n_val : n_val + n_test])
    train_ids = order[n_val + n_test :]
    if len(train_ids) < 2:
        raise DataError(f"need >= 2 train outfits to split, got {len(train_ids)}")

    n_labeled = max(1, _round_half_up(alpha * len(train_ids)))
    labeled_ids = frozenset(train_ids[:n_labeled])

    labeled_items: set[str] = set()
    for oid in labeled_ids:
        labeled_items.update(catalog.outfit(oid).item_ids)
    unlabeled_items: set[str] = set()
    for oid in train_ids[n_labeled:]:
        unlabeled_items.update(catalog.outfit(oid).item_ids)
    unlabeled_items -= labeled_items

    return SplitSpec(
        alpha=alpha,
        seed=seed,
        labeled_outfit_ids=labeled_ids,
        unlabeled_item_ids=frozenset(unlabeled_items),
        validation_outfit_ids=val_ids,
        test_outfit_ids=test_ids,
    )


def _labeled_sampling_index(catalog: Catalog, split: SplitSpec):
    """Precompute, per labeled outfit, the ordered distinct-category item pairs
    and the per-category labeled item pool (sorted for cross-process stability)."""
    labeled_items = split.labeled_item_ids(catalog)
    by_category: dict[str, list[str]] = {}
    for iid in sorted(labeled_items):
        by_category.setdefault(catalog.items[iid].category, []).append(iid)

    outfit_pairs = []
    for oid in sorted(split.labeled_outfit_ids):
        outfit = catalog.outfit(oid)
        ids = list(outfit.item_ids)
        pairs = [
            (a, p)
            for a in ids
            for p in ids
            if a != p and catalog.items[a].category != catalog.items[p].category
        ]
        if pairs:
            outfit_pairs.append((oid, frozenset(ids), pairs))
    return outfit_pairs, by_category


def sample_labeled_batch(
    catalog: Catalog, split: SplitSpec, size: int, rng: np.random.Generator
) -> LabeledBatch:
    """Draw ``size`` (anchor, positive, negative) triplets from labeled outfits.

    Each draw picks a labeled outfit uniformly, then a uniformly random
    ordered pair of distinct-category items inside it; the negative is a
    uniformly random labeled item of the positive's category from outside
    the source outfit.  Draws without a valid negative are rejected and
    resampled.
    """
    if size < 1:
        raise ParameterError(f"batch size must be >= 1, got {size}")
    outfit_pairs, by_category = _labeled_sampling_index(catalog, split)
    if not outfit_pairs:
        raise DataError("no labeled outfit contains two items of distinct categories")

    feasible = any(
        len(by_category.get(catalog.items[p].category, [])) > sum(
            1 for i in members if catalog.items[i].category == catalog.items[p].category
        )
        for _, members, pairs in outfit_pairs
        for _, p in pairs
    )
    if not feasible:
        raise DataError(
            "no labeled triplet is possible: every candidate positive's category "
            "has no labeled item outside its own outfit"
        )

    triplets = []
    attempts = 0
    max_attempts = max(1000, 50 * size)
    while len(triplets) < size:
        attempts += 1
        if attempts > max_attempts:
            raise DataError("labeled triplet sampling failed to converge")
        oid, members, pairs = outfit_pairs[rng.integers(len(outfit_pairs))]
        a_id, p_id = pairs[rng.integers(len(pairs))]
        pos_cat = catalog.items[p_id].category
        candidates = [i for i in by_category.get(pos_cat, []) if i not in members]
        if not candidates:
            continue
        n_id = candidates[rng.integers(len(candidates))]
        triplets.append(
            LabeledTriplet(
                anchor=catalog.items[a_id],
                positive=catalog.items[p_id],
                negative=catalog.items[n_id],
            )
        )
    return LabeledBatch(triplets=tuple(triplets))


def sample_unlabeled_batch(
    catalog: Catalog, split: SplitSpec, size: int, rng: np.random.Generator
) -> UnlabeledBatch:
    """Draw ``size`` distinct items from the unlabeled pool (without replacement).

    If the pool is smaller than ``size`` the whole pool is returned in a
    random order and a warning is logged.
    """
    if size < 1:
        raise ParameterError(f"batch size must be >= 1, got {size}")
    pool = sorted(split.unlabeled_item_ids)
    if not pool:
        raise DataError("unlabeled pool is empty")
    if size > len(pool):
        logger.warning(
            "unlabeled batch size %d exceeds pool size %d; using the whole pool",
            size,
            len(pool),
        )
        size = len(pool)
    chosen = rng.choice(len(pool), size=size, replace=False)
    return UnlabeledBatch(items=tuple(catalog.items[pool[i]] for i in chosen))


def _parse_outfit_record(record, index):
    if not isinstance(record, dict) or "set_id" not in record or "items" not in record:
        raise ParseError(f"outfit record {index}: expected {{'set_id', 'items'}} object")
    items = record["items"]
    if not isinstance(items, list) or len(items) < 2:
        raise ParseError(f"outfit record {index} ({record.get('set_id')!r}): needs >= 2 items")
    parsed = []
    for j, entry in enumerate(items):
        if not isinstance(entry, dict) or "item_id" not in entry or "category" not in entry:
            raise ParseError(
                f"outfit record {index} ({record['set_id']!r}), item {j}: "
                "expected {'item_id', 'category'} object"
            )
        parsed.append((str(entry["item_id"]), str(entry["category"])))
    return str(record["set_id"]), parsed


def load_polyvore_layout(root_dir) -> Catalog:
    """Load a dataset directory (see module docstring for the layout).

    Items referenced by outfits must all have an ``images/<id>.png``; missing
    files raise a :class:`DataError` listing every offending id.  Images are
    decoded lazily on first pixel access.
    """
    root = Path(root_dir)
    outfits_path = root / OUTFITS_FILE
    if not outfits_path.is_file():
        raise DataError(f"missing {OUTFITS_FILE} under {root}")
    try:
        with open(outfits_path, encoding="utf-8") as fh:
            records = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{outfits_path}: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(records, list):
        raise ParseError(f"{outfits_path}: top level must be a list of outfit records")

    items: dict[str, Item] = {}
    outfits: list[Outfit] = []
    image_dir = root / IMAGES_DIR
    for index, record in enumerate(records):
        set_id, entries = _parse_outfit_record(record, index)
        for item_id, category in entries:
            existing = items.get(item_id)
            if existing is not None:
                if existing.category != category:
                    raise ParseError(
                        f"outfit record {index} ({set_id!r}): item {item_id!r} already "
                        f"has category {existing.category!r}, got {category!r}"
                    )
            else:
                items[item_id] = Item(
                    id=item_id, category=category, image_path=image_dir / f"{item_id}.png"
                )
        outfits.append(Outfit(id=set_id, item_ids=tuple(i for i, _ in entries)))

    missing = [iid for iid, it in items.items() if not it.image_path.is_file()]
    if missing:
        raise DataError(f"items missing images: {sorted(missing)}")

    catalog = Catalog(items=items, outfits=outfits)
    _apply_pools_from_split_file(catalog, root)
    return catalog


def _apply_pools_from_split_file(catalog: Catalog, root: Path):
    split = load_split(root, catalog)
    if split is None:
        return
    labeled = split.labeled_item_ids(catalog)
    for it in catalog.items.values():
        it.pool = POOL_LABELED if it.id in labeled else POOL_UNLABELED


def load_split(root_dir, catalog: Catalog) -> SplitSpec | None:
    """Read ``splits.json`` if present; reconstructs the unlabeled item pool."""
    path = Path(root_dir) / SPLITS_FILE
    if not path.is_file():
        return None
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    for key in ("alpha", "seed", "labeled", "validation", "test"):
        if key not in payload:
            raise ParseError(f"{path}: missing key {key!r}")
    known = {o.id for o in catalog.outfits}
    for key in ("labeled", "validation", "test"):
        unknown = set(payload[key]) - known
        if unknown:
            raise DataError(f"{path}: {key} references unknown outfits {sorted(unknown)}")

    labeled = frozenset(payload["labeled"])
    val = frozenset(payload["validation"])
    test = frozenset(payload["test"])
    if labeled & val or labeled & test or val & test:
        raise DataError(f"{path}: labeled/validation/test outfit sets must be disjoint")

    labeled_items: set[str] = set()
    for oid in labeled:
        labeled_items.update(catalog.outfit(oid).item_ids)
    unlabeled: set[str] = set()
    for o in catalog.outfits:
        if o.id not in labeled and o.id not in val and o.id not in test:
            unlabeled.update(o.item_ids)
    unlabeled -= labeled_items

    return SplitSpec(
        alpha=float(payload["alpha"]),
        seed=int(payload["seed"]),
        labeled_outfit_ids=labeled,
        unlabeled_item_ids=frozenset(unlabeled),
        validation_outfit_ids=val,
        test_outfit_ids=test,
    )


def write_split(root_dir, split: SplitSpec):
    path = Path(root_dir) / SPLITS_FILE
    payload = {
        "alpha": split.alpha,
        "seed": split.seed,
        "labeled": sorted(split.labeled_outfit_ids),
        "validation": sorted(split.validation_outfit_ids),
        "test": sorted(split.test_outfit_ids),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return path


def write_catalog(catalog: Catalog, root_dir, split: SplitSpec | None = None,
                  ground_truth: dict[str, int] | None = None):
    """Write the full dataset layout (images, outfits.json, optional extras)."""
    root = Path(root_dir)
    image_dir = root / IMAGES_DIR
    image_dir.mkdir(parents=True, exist_ok=True)
    for iid in sorted(catalog.items):
        PILImage.fromarray(catalog.items[iid].pixels_u8(), mode="RGB").save(
            image_dir / f"{iid}.png"
        )
    records = [
        {
            "set_id": o.id,
            "items": [
                {"item_id": iid, "category": catalog.items[iid].category}
                for iid in o.item_ids
            ],
        }
        for o in catalog.outfits
    ]
    with open(root / OUTFITS_FILE, "w", encoding="utf-8") as fh:
        json.dump(records, fh, indent=1, sort_keys=True)
        fh.write("\n")
    if split is not None:
        write_split(root, split)
    if ground_truth is not None:
        with open(root / GROUND_TRUTH_FILE, "w", encoding="utf-8") as fh:
            json.dump(ground_truth, fh, indent=1, sort_keys=True)
            fh.write("\n")
    return root


def load_ground_truth(root_dir) -> dict[str, int] | None:
    path = Path(root_dir) / GROUND_TRUTH_FILE
    if not path.is_file():
        return None
    with open(path, encoding="utf-8") as fh:
        return {str(k): int(v) for k, v in json.load(fh).items()}
