"""Style-specific output enhancement: palette snapping, background
homogenization, and contour-line overlay.

All three operations are idempotent and only ever touch pixels belonging to
the classes they target.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .control import ControlImage, stamp_polyline
from .legend import BACKGROUND_ID, RGB
from .scene import Point

DEFAULT_CONTOUR_STROKE: RGB = (139, 69, 19)  # saddle brown


@dataclass(frozen=True)
class ColorCorrection:
    class_id: int
    nominal: RGB
    tolerance: int  # per-channel


@dataclass(frozen=True)
class ContourOverlay:
    stroke: RGB = DEFAULT_CONTOUR_STROKE
    width: int = 1


@dataclass(frozen=True)
class PostprocPlan:
    style_id: str
    corrections: tuple[ColorCorrection, ...] = field(default_factory=tuple)
    homogenize_background: RGB | None = None
    contour_overlay: ContourOverlay | None = None

    def __post_init__(self) -> None:
        for c in self.corrections:
            if c.tolerance < 0:
                raise ValueError("correction tolerance must be >= 0")

    def to_dict(self) -> dict:
        return {
            "style_id": self.style_id,
            "corrections": [
                {"class_id": c.class_id, "nominal": list(c.nominal), "tolerance": c.tolerance}
                for c in self.corrections
            ],
            "homogenize_background": list(self.homogenize_background)
            if self.homogenize_background
            else None,
            "contour_overlay": {
                "stroke": list(self.contour_overlay.stroke),
                "width": self.contour_overlay.width,
            }
            if self.contour_overlay
            else None,
        }

    @staticmethod
    def from_dict(data: dict) -> "PostprocPlan":
        overlay = data.get("contour_overlay")
        homog = data.get("homogenize_background")
        return PostprocPlan(
            style_id=data["style_id"],
            corrections=tuple(
                ColorCorrection(int(c["class_id"]), tuple(c["nominal"]), int(c["tolerance"]))
                for c in data.get("corrections", ())
            ),
            homogenize_background=tuple(homog) if homog else None,
            contour_overlay=ContourOverlay(tuple(overlay["stroke"]), int(overlay["width"]))
            if overlay
            else None,
        )


def _check_dims(tile: np.ndarray, control: ControlImage) -> None:
    if tile.shape[:2] != control.labels.shape:
        raise ValueError(f"tile {tile.shape[:2]} vs control {control.labels.shape} dimension mismatch")


def _modal_color(pixels: np.ndarray, prefer: RGB) -> RGB:
    """Most frequent exact color; ties prefer `prefer`, then lexicographic order."""
    colors, counts = np.unique(pixels.reshape(-1, 3), axis=0, return_counts=True)
    best = counts.max()
    candidates = [tuple(int(v) for v in c) for c in colors[counts == best]]
    if prefer in candidates:
        return prefer
    return min(candidates)


def correct_colors(tile: np.ndarray, control: ControlImage, plan: PostprocPlan) -> np.ndarray:
    """Snap each corrected class's dominant color cluster to its nominal color.

    For every (class, nominal, tol) in the plan, pixels of that class whose
    color lies within tol (per channel) of either the class's modal tile color
    or the nominal color are set exactly to the nominal color. Folding the
    nominal cluster in (and preferring the nominal color on modal ties) makes
    the operation a one-pass fixed point: a second application changes nothing.
    """
    _check_dims(tile, control)
    out = tile.copy()
    for corr in plan.corrections:
        on_class = control.labels == corr.class_id
        if not on_class.any():
            continue
        modal = _modal_color(tile[on_class], prefer=corr.nominal)
        dist_modal = np.abs(tile.astype(np.int16) - np.array(modal, dtype=np.int16)).max(axis=2)
        dist_nominal = np.abs(tile.astype(np.int16) - np.array(corr.nominal, dtype=np.int16)).max(axis=2)
        near = (dist_modal <= corr.tolerance) | (dist_nominal <= corr.tolerance)
        out[on_class & near] = corr.nominal
    return out


def homogenize_background(tile: np.ndarray, control: ControlImage, target: RGB) -> np.ndarray:
    """Set every background-labeled pixel exactly to `target`; others untouched."""
    _check_dims(tile, control)
    out = tile.copy()
    out[control.labels == BACKGROUND_ID] = target
    return out


def overlay_contours(
    tile: np.ndarray,
    polylines: tuple[tuple[Point, ...], ...],
    stroke: RGB = DEFAULT_CONTOUR_STROKE,
    width: int = 1,
) -> np.ndarray:
    """Stamp contour polylines over the tile (drawn last, on top)."""
    out = tile.copy()
    hit = np.zeros(tile.shape[:2], dtype=np.uint8)
    for pts in polylines:
        stamp_polyline(hit, pts, width, 1)
    out[hit == 1] = stroke
    return out


def apply_plan(
    tile: np.ndarray,
    control: ControlImage,
    plan: PostprocPlan,
    contour_polylines: tuple[tuple[Point, ...], ...] = (),
) -> np.ndarray:
    """Run the full plan: corrections, then background, then contour overlay."""
    out = correct_colors(tile, control, plan)
    if plan.homogenize_background is not None:
        out = homogenize_background(out, control, plan.homogenize_background)
    if plan.contour_overlay is not None and contour_polylines:
        out = overlay_contours(out, contour_polylines, plan.contour_overlay.stroke, plan.contour_overlay.width)
    return out
