import zlib

import numpy as np
import pytest

from compatlearn.dataset import Catalog, Item, Outfit


def tiny_image(seed=0, size=8):
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)


def build_catalog(outfit_specs, size=8):
    """Catalog from [(outfit_id, [(item_id, category), ...]), ...] with small
    deterministic images (seeded by a stable checksum of the id)."""
    items = {}
    outfits = []
    for oid, members in outfit_specs:
        for iid, cat in members:
            if iid not in items:
                items[iid] = Item(
                    id=iid, category=cat, image=tiny_image(zlib.crc32(iid.encode()), size)
                )
        outfits.append(Outfit(id=oid, item_ids=tuple(i for i, _ in members)))
    return Catalog(items=items, outfits=outfits)


@pytest.fixture
def four_category_catalog():
    """12 outfits, each with one item of every category (symmetric for the
    uniform-sampling check)."""
    specs = []
    for k in range(12):
        specs.append(
            (
                f"o{k}",
                [
                    (f"t{k}", "top"),
                    (f"b{k}", "bottom"),
                    (f"s{k}", "shoe"),
                    (f"g{k}", "bag"),
                ],
            )
        )
    return build_catalog(specs)
