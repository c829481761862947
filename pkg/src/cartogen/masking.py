"""Text-label masking: the model must never see (or learn to draw) map text.

Masks are built from text boxes and applied to both the target raster and the
control raster during dataset preparation; at inference no mask is applied, so
blanked training text regions keep the generator from inventing glyph-shaped
features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .control import ControlImage
from .legend import BACKGROUND_ID
from .scene import TextBox


@dataclass(frozen=True)
class BinaryMask:
    bits: np.ndarray  # (H, W) bool, True = text region

    def __post_init__(self) -> None:
        if self.bits.ndim != 2 or self.bits.dtype != np.bool_:
            raise ValueError("mask must be a 2-d boolean array")

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]


DEFAULT_DILATION = 1  # 1px margin against glyph bleed from the toy renderer


def build_text_mask(
    boxes: tuple[TextBox, ...],
    canvas: tuple[int, int],
    dilation: int = DEFAULT_DILATION,
) -> BinaryMask:
    """True wherever a text box (dilated by `dilation` on each side) covers the canvas."""
    w, h = canvas
    bits = np.zeros((h, w), dtype=bool)
    for b in boxes:
        x0 = max(0, b.x - dilation)
        y0 = max(0, b.y - dilation)
        x1 = min(w, b.x + b.w + dilation)
        y1 = min(h, b.y + b.h + dilation)
        if x0 < x1 and y0 < y1:
            bits[y0:y1, x0:x1] = True
    return BinaryMask(bits)


def apply_mask_rgb(image: np.ndarray, mask: BinaryMask, fill: tuple[int, int, int]) -> np.ndarray:
    """Set masked pixels of an RGB raster to `fill`; others are untouched."""
    if image.shape[:2] != mask.bits.shape:
        raise ValueError(f"image {image.shape[:2]} vs mask {mask.bits.shape} dimension mismatch")
    out = image.copy()
    out[mask.bits] = fill
    return out


def apply_mask_control(control: ControlImage, mask: BinaryMask, fill: int = BACKGROUND_ID) -> ControlImage:
    """Blank masked control pixels. The fill must be the background id: anything
    else would teach the model that text locations carry a feature class.
    """
    if fill != BACKGROUND_ID:
        raise ValueError(f"control masks must fill with the background id, got {fill}")
    if control.labels.shape != mask.bits.shape:
        raise ValueError(
            f"control {control.labels.shape} vs mask {mask.bits.shape} dimension mismatch"
        )
    labels = control.labels.copy()
    labels[mask.bits] = fill
    return ControlImage(labels=labels, legend=control.legend)


def apply_mask(image, mask: BinaryMask, fill):
    """Dispatch on image kind: RGB arrays take an RGB fill, controls a class id."""
    if isinstance(image, ControlImage):
        return apply_mask_control(image, mask, fill)
    return apply_mask_rgb(image, mask, fill)


def save_mask_png(mask: BinaryMask, path) -> None:
    """Export as 1-bit PNG for inspection (white = text region)."""
    Image.fromarray(mask.bits).convert("1").save(path, format="PNG")


def load_mask_png(path) -> BinaryMask:
    return BinaryMask(np.asarray(Image.open(path).convert("1"), dtype=bool))
