"""Procedural toy corpus: deterministic vector scenes and per-style reference
renderings, standing in for real map archives at desk scale.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass

import numpy as np

from .control import ControlImage, rasterize
from .legend import CLASS_TABLE, class_by_slug
from .scene import Feature, TextBox, VectorScene, scene_to_dict
from .styles import StyleSpec

TEXT_INK: tuple[int, int, int] = (45, 42, 40)

# Feature counts for a 256x256 sheet. Counts are absolute, not area-scaled;
# callers tune them per sheet size.
DEFAULT_DENSITY: dict[str, int] = {
    "building": 12,
    "road": 3,
    "through_road": 1,
    "connecting_road": 1,
    "highway": 1,
    "highway_gallery": 0,
    "path": 2,
    "railway_single_track": 1,
    "railway_multi_track": 0,
    "railway_bridge": 0,
    "river": 1,
    "stream": 2,
    "lake": 1,
    "depth_contour": 1,
    "forest": 3,
    "contour_line": 3,
    "tree": 6,
    "coordinate_grid": 2,
    "text": 5,
}

_GENERATION_ORDER = tuple(DEFAULT_DENSITY)  # fixed order keeps scenes deterministic


class CorpusConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MapSheet:
    """An RGB sheet plus the identity the tiler uses for indexing."""

    sheet_id: str
    pixels: np.ndarray  # (H, W, 3) uint8


def _wobbly_line(rng: np.random.Generator, w: int, h: int, n_points: int, margin: int = 0) -> tuple:
    """A polyline crossing the canvas with jittered interior waypoints."""
    horizontal = bool(rng.integers(0, 2))
    ts = np.linspace(0, 1, n_points)
    along = margin + ts * (w - 1 - 2 * margin) if horizontal else margin + ts * (h - 1 - 2 * margin)
    across_c = rng.integers(margin, (h if horizontal else w) - margin)
    across = across_c + rng.integers(-18, 19, size=n_points)
    across = np.clip(across, 0, (h if horizontal else w) - 1)
    pts = []
    for a, b in zip(along.astype(int), across.astype(int)):
        pts.append((int(a), int(b)) if horizontal else (int(b), int(a)))
    return tuple(pts)


def _blob(rng: np.random.Generator, w: int, h: int, r_lo: int, r_hi: int) -> tuple:
    """A closed polygon: an octagon with per-vertex radius jitter."""
    r = int(rng.integers(r_lo, r_hi + 1))
    cx = int(rng.integers(r, max(r + 1, w - r)))
    cy = int(rng.integers(r, max(r + 1, h - r)))
    pts = []
    for k in range(8):
        ang = 2 * np.pi * k / 8
        rk = r * (0.7 + 0.3 * rng.random())
        x = int(np.clip(cx + rk * np.cos(ang), 0, w - 1))
        y = int(np.clip(cy + rk * np.sin(ang), 0, h - 1))
        pts.append((x, y))
    return tuple(pts)


def _rect(rng: np.random.Generator, w: int, h: int, s_lo: int, s_hi: int) -> tuple:
    bw = int(rng.integers(s_lo, s_hi + 1))
    bh = int(rng.integers(s_lo, s_hi + 1))
    x = int(rng.integers(0, max(1, w - bw)))
    y = int(rng.integers(0, max(1, h - bh)))
    return ((x, y), (x + bw, y), (x + bw, y + bh), (x, y + bh))


def generate_toy_world(
    seed: int,
    extent: tuple[int, int] = (256, 256),
    density: dict[str, int] | None = None,
    tile_size: int = 64,
) -> VectorScene:
    """Deterministically generate a vector scene for the given seed.

    `extent` = (width, height) must be positive multiples of `tile_size`;
    `density` overrides per-class feature counts (keys are class slugs plus
    "text" for label boxes).
    """
    w, h = extent
    if w <= 0 or h <= 0 or w % tile_size or h % tile_size:
        raise CorpusConfigError(f"extent {w}x{h} must be positive multiples of tile size {tile_size}")
    counts = dict(DEFAULT_DENSITY)
    if density:
        unknown = set(density) - set(DEFAULT_DENSITY)
        if unknown:
            raise CorpusConfigError(f"unknown density keys: {sorted(unknown)}")
        counts.update(density)
    if any(v < 0 for v in counts.values()):
        raise CorpusConfigError("density counts must be >= 0")

    rng = np.random.default_rng(seed)
    features: list[Feature] = []
    boxes: list[TextBox] = []
    for slug in _GENERATION_ORDER:
        n = counts[slug]
        if slug == "text":
            for _ in range(n):
                bw = min(int(rng.integers(14, 29)), w)
                bh = min(int(rng.integers(6, 11)), h)
                x = int(rng.integers(0, max(1, w - bw)))
                y = int(rng.integers(0, max(1, h - bh)))
                boxes.append(TextBox(x, y, bw, bh))
            continue
        cid = class_by_slug(slug).id
        for i in range(n):
            if slug == "building":
                features.append(Feature("polygon", _rect(rng, w, h, 6, 14), cid))
            elif slug in ("lake", "forest"):
                r_lo, r_hi = (14, 26) if slug == "lake" else (18, 36)
                features.append(Feature("polygon", _blob(rng, w, h, r_lo, r_hi), cid))
            elif slug == "tree":
                x = int(rng.integers(1, w - 1))
                y = int(rng.integers(1, h - 1))
                features.append(Feature("point", ((x, y),), cid, size=2))
            elif slug == "coordinate_grid":
                # evenly spaced straight lines, alternating vertical/horizontal
                if i % 2 == 0:
                    x = (i // 2 + 1) * w // (n // 2 + 2)
                    features.append(Feature("polyline", ((x, 0), (x, h - 1)), cid, stroke_width=1))
                else:
                    y = (i // 2 + 1) * h // (n // 2 + 2)
                    features.append(Feature("polyline", ((0, y), (w - 1, y)), cid, stroke_width=1))
            else:
                stroke = {
                    "road": 3,
                    "through_road": 3,
                    "connecting_road": 2,
                    "highway": 5,
                    "highway_gallery": 5,
                    "path": 1,
                    "railway_single_track": 2,
                    "railway_multi_track": 3,
                    "railway_bridge": 4,
                    "river": 3,
                    "stream": 1,
                    "depth_contour": 1,
                    "contour_line": 1,
                }[slug]
                n_points = 5 if slug in ("river", "contour_line", "depth_contour") else 4
                features.append(
                    Feature("polyline", _wobbly_line(rng, w, h, n_points), cid, stroke_width=stroke)
                )
    return VectorScene(w, h, tuple(features), tuple(boxes))


def _render_seed(scene: VectorScene, style: StyleSpec) -> int:
    """Stable per-(scene, style) seed for the analogue-scan jitter."""
    payload = json.dumps(scene_to_dict(scene), sort_keys=True) + "|" + style.style_id
    return zlib.crc32(payload.encode())


def render_reference(scene: VectorScene, style: StyleSpec, sheet_id: str = "sheet") -> MapSheet:
    """Render the style's reference map for a scene.

    Classes missing from the style legend are skipped. With render_noise > 0,
    every feature/background pixel is jittered per channel by at most that
    amplitude (deterministically per scene and style); text boxes are then
    drawn as dark glyph-like bar patterns on top.
    """
    legend = tuple(c for c in CLASS_TABLE if c.id in style.palette)
    control = rasterize(scene, legend, (scene.width, scene.height))
    lut = np.zeros((len(CLASS_TABLE), 3), dtype=np.uint8)
    for cid, rgb in style.palette.items():
        lut[cid] = rgb
    pixels = lut[control.labels]
    if style.render_noise > 0:
        # Analogue-scan variation = a sheet-global palette tint (scans of
        # different sheets drift in color) plus per-pixel grain. The two parts
        # split the amplitude so total deviation never exceeds render_noise.
        rng = np.random.default_rng(_render_seed(scene, style))
        tint_amp = int(round(style.render_noise * 0.6))
        grain_amp = style.render_noise - tint_amp
        tint = rng.integers(-tint_amp, tint_amp + 1, size=3, dtype=np.int16)
        grain = rng.integers(-grain_amp, grain_amp + 1, size=pixels.shape, dtype=np.int16)
        pixels = np.clip(pixels.astype(np.int16) + tint + grain, 0, 255).astype(np.uint8)
    for b in scene.text_boxes:
        for x in range(b.x, b.x + b.w):
            if (x - b.x) % 3 != 2:  # vertical bars with gaps, glyph-ish
                pixels[b.y : b.y + b.h, x] = TEXT_INK
    return MapSheet(sheet_id=sheet_id, pixels=pixels)


def rasterize_scene(scene: VectorScene, style: StyleSpec | None = None) -> ControlImage:
    """Control raster for a scene, under a style legend or the full class table."""
    if style is None:
        legend = CLASS_TABLE
    else:
        legend = tuple(c for c in CLASS_TABLE if c.id in style.palette)
    return rasterize(scene, legend, (scene.width, scene.height))
