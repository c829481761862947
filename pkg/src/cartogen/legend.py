"""Global feature-class table: ids, draw priorities, and control colors.

Every raster label used anywhere in the pipeline refers to this table.
Class ids are contiguous from 0 and id 0 is always the background.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

RGB = tuple[int, int, int]

BACKGROUND_ID = 0


@dataclass(frozen=True)
class FeatureClass:
    """One semantic class: id, display name, draw order, and editing color."""

    id: int
    name: str
    z_priority: int
    control_color: RGB

    @property
    def slug(self) -> str:
        return slugify(self.name)


def slugify(name: str) -> str:
    """Lowercase identifier form of a class name, e.g. 'Railway (single track)' -> 'railway_single_track'."""
    return re.sub(r"[^a-z0-9]+", "_", name.lower()).strip("_")


# Draw order resolves overlaps: higher z_priority wins. Background is lowest;
# buildings, trees and the coordinate grid stay visible on top of area fills.
CLASS_TABLE: tuple[FeatureClass, ...] = (
    FeatureClass(0, "Background", 0, (255, 255, 255)),
    FeatureClass(1, "Building", 16, (230, 25, 75)),
    FeatureClass(2, "Coordinate grid", 18, (0, 0, 0)),
    FeatureClass(3, "Railway (single track)", 13, (145, 30, 180)),
    FeatureClass(4, "Railway (multi track)", 14, (240, 50, 230)),
    FeatureClass(5, "Railway bridge", 15, (250, 190, 212)),
    FeatureClass(6, "Highway", 11, (245, 130, 48)),
    FeatureClass(7, "Highway gallery", 12, (170, 110, 40)),
    FeatureClass(8, "Road", 8, (128, 128, 128)),
    FeatureClass(9, "Through road", 9, (210, 245, 60)),
    FeatureClass(10, "Connecting road", 10, (255, 225, 25)),
    FeatureClass(11, "Path", 7, (128, 128, 0)),
    FeatureClass(12, "Depth contour", 3, (0, 128, 128)),
    FeatureClass(13, "River", 5, (0, 130, 200)),
    FeatureClass(14, "Lake", 2, (70, 240, 240)),
    FeatureClass(15, "Stream", 6, (0, 0, 128)),
    FeatureClass(16, "Tree", 17, (60, 180, 75)),
    FeatureClass(17, "Contour line", 4, (154, 99, 36)),
    FeatureClass(18, "Forest", 1, (170, 255, 195)),
)

NUM_CLASSES = len(CLASS_TABLE)

_BY_ID = {c.id: c for c in CLASS_TABLE}
_BY_SLUG = {c.slug: c for c in CLASS_TABLE}


def class_by_id(class_id: int) -> FeatureClass:
    try:
        return _BY_ID[class_id]
    except KeyError:
        raise KeyError(f"unknown class id {class_id}") from None


def class_by_slug(slug: str) -> FeatureClass:
    try:
        return _BY_SLUG[slug]
    except KeyError:
        raise KeyError(f"unknown class '{slug}'") from None


def _check_table() -> None:
    ids = [c.id for c in CLASS_TABLE]
    if ids != list(range(len(CLASS_TABLE))):
        raise AssertionError("class ids must be contiguous from 0")
    if CLASS_TABLE[0].name != "Background":
        raise AssertionError("class 0 must be Background")
    colors = {c.control_color for c in CLASS_TABLE}
    if len(colors) != len(CLASS_TABLE):
        raise AssertionError("control colors must be pairwise distinct")
    zs = sorted(c.z_priority for c in CLASS_TABLE)
    if len(set(zs)) != len(zs):
        raise AssertionError("z priorities must be a total order")
    if min(zs) != CLASS_TABLE[0].z_priority:
        raise AssertionError("Background must have the lowest z priority")


_check_table()
