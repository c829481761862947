"""Rasterization of vector scenes into per-pixel class-label control images.

Rasterization is integer and anti-aliasing free: every pixel carries exactly
one class id, overlaps resolve by class z-priority, and the pixel counts of
strokes are analytic (a straight stroke of length L and width w covers L*w
pixels: flat end caps, square joins at interior vertices).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .legend import BACKGROUND_ID, CLASS_TABLE, FeatureClass, class_by_id
from .scene import Point, VectorScene


@dataclass(frozen=True)
class ControlImage:
    """Per-pixel class labels plus the legend they refer to."""

    labels: np.ndarray  # (H, W) uint8
    legend: tuple[FeatureClass, ...]

    def __post_init__(self) -> None:
        if self.labels.ndim != 2:
            raise ValueError("labels must be a 2-d array")
        ids = {c.id for c in self.legend}
        present = set(np.unique(self.labels).tolist())
        if not present <= ids:
            raise ValueError(f"labels contain ids outside the legend: {sorted(present - ids)}")

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ControlImage):
            return NotImplemented
        return self.legend == other.legend and np.array_equal(self.labels, other.labels)


class RasterizeError(ValueError):
    pass


class ControlDecodeError(ValueError):
    """Raised when an RGB raster contains colors not present in the legend."""

    def __init__(self, unknown_colors: list[tuple[int, int, int]], pixel_count: int):
        self.unknown_colors = unknown_colors
        self.pixel_count = pixel_count
        names = ", ".join(str(c) for c in unknown_colors[:8])
        more = "" if len(unknown_colors) <= 8 else f" (+{len(unknown_colors) - 8} more)"
        super().__init__(
            f"{pixel_count} pixel(s) with {len(unknown_colors)} unknown color(s): {names}{more}"
        )


def _brush_offsets(width: int) -> range:
    # Integer brush of size `width`; even widths lean toward the positive side.
    return range(-((width - 1) // 2), width // 2 + 1)


def _bresenham(p0: Point, p1: Point) -> list[Point]:
    x0, y0 = p0
    x1, y1 = p1
    dx, dy = abs(x1 - x0), abs(y1 - y0)
    sx = 1 if x1 >= x0 else -1
    sy = 1 if y1 >= y0 else -1
    out = []
    if dx >= dy:
        err = dx // 2
        y = y0
        for x in range(x0, x1 + sx, sx):
            out.append((x, y))
            err -= dy
            if err < 0:
                y += sy
                err += dx
    else:
        err = dy // 2
        x = x0
        for y in range(y0, y1 + sy, sy):
            out.append((x, y))
            err -= dx
            if err < 0:
                x += sx
                err += dy
    return out


def stamp_segment(labels: np.ndarray, p0: Point, p1: Point, width: int, value: int) -> None:
    """Stamp one stroke segment; expansion is along the minor axis only (flat caps)."""
    h, w = labels.shape
    path = _bresenham(p0, p1)
    horiz = abs(p1[0] - p0[0]) >= abs(p1[1] - p0[1])
    for x, y in path:
        for o in _brush_offsets(width):
            px, py = (x, y + o) if horiz else (x + o, y)
            if 0 <= px < w and 0 <= py < h:
                labels[py, px] = value


def stamp_square(labels: np.ndarray, p: Point, size: int, value: int) -> None:
    h, w = labels.shape
    for ox in _brush_offsets(size):
        for oy in _brush_offsets(size):
            px, py = p[0] + ox, p[1] + oy
            if 0 <= px < w and 0 <= py < h:
                labels[py, px] = value


def stamp_polyline(labels: np.ndarray, points: tuple[Point, ...], width: int, value: int) -> None:
    """Stamp a polyline: per-segment strokes plus square joins at interior vertices."""
    if len(points) == 1:
        stamp_square(labels, points[0], width, value)
        return
    for p0, p1 in zip(points, points[1:]):
        stamp_segment(labels, p0, p1, width, value)
    for joint in points[1:-1]:
        stamp_square(labels, joint, width, value)


def fill_polygon(labels: np.ndarray, points: tuple[Point, ...], value: int) -> None:
    """Even-odd scanline fill; a pixel is inside iff its center is inside."""
    h, w = labels.shape
    ys = [p[1] for p in points]
    y_lo = max(0, min(ys))
    y_hi = min(h - 1, max(ys) - 1)  # centers above max(ys) - 0.5 are outside
    n = len(points)
    for y in range(y_lo, y_hi + 1):
        yc = y + 0.5
        xs: list[float] = []
        for i in range(n):
            x0, y0 = points[i]
            x1, y1 = points[(i + 1) % n]
            if y0 == y1:
                continue  # horizontal edges contribute nothing
            if (y0 <= yc < y1) or (y1 <= yc < y0):
                xs.append(x0 + (yc - y0) * (x1 - x0) / (y1 - y0))
        xs.sort()
        for a, b in zip(xs[::2], xs[1::2]):
            x_start = max(0, int(np.ceil(a - 0.5)))
            x_end = min(w - 1, int(np.ceil(b - 0.5)) - 1)
            if x_start <= x_end:
                labels[y, x_start : x_end + 1] = value


def rasterize(
    scene: VectorScene,
    legend: tuple[FeatureClass, ...],
    canvas: tuple[int, int],
) -> ControlImage:
    """Rasterize a scene into class labels on `canvas` = (width, height).

    Features are drawn in ascending z-priority so higher-priority classes win
    overlaps; classes absent from `legend` are skipped. The canvas must match
    the scene extent.
    """
    cw, ch = canvas
    if (cw, ch) != (scene.width, scene.height):
        raise RasterizeError(
            f"canvas {cw}x{ch} does not match scene extent {scene.width}x{scene.height}"
        )
    legend_ids = {c.id for c in legend}
    labels = np.full((ch, cw), BACKGROUND_ID, dtype=np.uint8)
    drawable = []
    for f in scene.features:
        cls = class_by_id(f.class_id)  # raises for ids outside the global table
        if f.class_id not in legend_ids:
            continue
        drawable.append((cls.z_priority, f))
    drawable.sort(key=lambda pair: pair[0])
    for _, f in drawable:
        if f.geometry == "polygon":
            fill_polygon(labels, f.points, f.class_id)
        elif f.geometry == "polyline":
            stamp_polyline(labels, f.points, f.stroke_width, f.class_id)
        else:
            stamp_square(labels, f.points[0], f.size, f.class_id)
    return ControlImage(labels=labels, legend=tuple(legend))


def _color_lut(legend: tuple[FeatureClass, ...]) -> np.ndarray:
    lut = np.zeros((max(c.id for c in legend) + 1, 3), dtype=np.uint8)
    for c in legend:
        lut[c.id] = c.control_color
    return lut


def control_to_rgb(control: ControlImage) -> np.ndarray:
    """Render labels as an RGB raster using the legend's control colors."""
    return _color_lut(control.legend)[control.labels]


def rgb_to_control(raster: np.ndarray, legend: tuple[FeatureClass, ...]) -> ControlImage:
    """Decode an RGB control raster back into labels (exact color match only)."""
    if raster.ndim != 3 or raster.shape[2] != 3:
        raise ControlDecodeError([], 0)
    packed = (
        raster[..., 0].astype(np.int32) << 16
        | raster[..., 1].astype(np.int32) << 8
        | raster[..., 2].astype(np.int32)
    )
    table = {(c.control_color[0] << 16 | c.control_color[1] << 8 | c.control_color[2]): c.id for c in legend}
    labels = np.zeros(packed.shape, dtype=np.uint8)
    known = np.zeros(packed.shape, dtype=bool)
    for key, cid in table.items():
        hit = packed == key
        labels[hit] = cid
        known |= hit
    if not known.all():
        bad = np.unique(packed[~known])
        colors = [(int(v >> 16 & 255), int(v >> 8 & 255), int(v & 255)) for v in bad]
        raise ControlDecodeError(colors, int((~known).sum()))
    return ControlImage(labels=labels, legend=tuple(legend))


def save_control_png(control: ControlImage, path: str | Path) -> None:
    """Persist as indexed-palette PNG: palette index = class id, color = control color."""
    img = Image.fromarray(control.labels, mode="P")
    palette = [0] * 768
    for c in control.legend:
        palette[c.id * 3 : c.id * 3 + 3] = c.control_color
    img.putpalette(palette)
    img.save(path, format="PNG")


def load_control_png(path: str | Path, legend: tuple[FeatureClass, ...] = CLASS_TABLE) -> ControlImage:
    """Load a control image from indexed PNG (labels) or RGB PNG (color-decoded)."""
    img = Image.open(path)
    if img.mode == "P":
        return ControlImage(labels=np.asarray(img, dtype=np.uint8), legend=tuple(legend))
    return rgb_to_control(np.asarray(img.convert("RGB"), dtype=np.uint8), legend)
