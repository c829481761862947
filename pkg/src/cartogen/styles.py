"""Named map styles: prompt, per-class palette, legend, scan-noise level,
post-processing plan, and default seed policy.

Three built-in styles ship with the package: a clean digital style and two
analogue-scan styles with progressively smaller legends and more color noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .legend import BACKGROUND_ID, RGB, class_by_slug, slugify
from .postproc import ColorCorrection, ContourOverlay, PostprocPlan

MIN_PALETTE_DISTANCE = 48  # channel-sum (L1) distance between any two style colors


@dataclass(frozen=True)
class SeedPolicy:
    """How the service picks a seed when the request leaves it out."""

    kind: str = "fixed"  # "fixed" | "select"
    seed: int = 0
    k: int = 6

    def __post_init__(self) -> None:
        if self.kind not in ("fixed", "select"):
            raise ValueError(f"unknown seed policy {self.kind!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass(frozen=True)
class StyleSpec:
    style_id: str
    display_name: str
    prompt: str
    palette: dict[int, RGB]  # class_id -> nominal color; keys define the legend
    correctable_classes: frozenset[int] = field(default_factory=frozenset)
    render_noise: int = 0
    postproc: PostprocPlan | None = None
    seed_policy: SeedPolicy = field(default_factory=SeedPolicy)

    def __post_init__(self) -> None:
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if BACKGROUND_ID not in self.palette:
            raise ValueError("palette must include the background class")
        colors = list(self.palette.values())
        for i, a in enumerate(colors):
            for b in colors[i + 1 :]:
                d = sum(abs(x - y) for x, y in zip(a, b))
                if d < MIN_PALETTE_DISTANCE:
                    raise ValueError(
                        f"style {self.style_id!r}: colors {a} and {b} too close (L1={d})"
                    )
        if not self.correctable_classes <= set(self.palette):
            raise ValueError("correctable classes must be in the style legend")

    @property
    def legend_ids(self) -> tuple[int, ...]:
        return tuple(sorted(self.palette))

    @property
    def background_color(self) -> RGB:
        return self.palette[BACKGROUND_ID]


def _palette(**by_slug: RGB) -> dict[int, RGB]:
    return {class_by_slug(slug).id: rgb for slug, rgb in by_slug.items()}


def _ids(*slugs: str) -> frozenset[int]:
    return frozenset(class_by_slug(s).id for s in slugs)


_MODERN_PALETTE = _palette(
    background=(245, 243, 235),
    forest=(196, 226, 182),
    lake=(168, 212, 238),
    depth_contour=(96, 156, 196),
    contour_line=(198, 160, 114),
    river=(36, 110, 190),
    stream=(110, 170, 220),
    path=(150, 120, 90),
    road=(90, 90, 90),
    through_road=(250, 210, 60),
    connecting_road=(240, 160, 40),
    highway=(230, 80, 30),
    highway_gallery=(160, 60, 140),
    railway_single_track=(30, 30, 30),
    railway_multi_track=(0, 0, 90),
    railway_bridge=(120, 40, 70),
    building=(205, 60, 120),
    tree=(60, 140, 70),
    coordinate_grid=(20, 70, 20),
)

_MIDCENTURY_PALETTE = _palette(
    background=(226, 220, 200),
    forest=(168, 190, 150),
    lake=(150, 190, 210),
    depth_contour=(90, 130, 170),
    contour_line=(170, 130, 90),
    river=(50, 100, 160),
    stream=(120, 160, 205),
    path=(140, 105, 75),
    road=(70, 70, 70),
    highway=(190, 90, 50),
    railway_single_track=(25, 25, 35),
    railway_multi_track=(95, 20, 95),
    building=(150, 40, 40),
    coordinate_grid=(20, 60, 20),
)

# Kept far from the modern palette overall (darker, warmer) so the two style
# modes stay well separated for the toy generator.
_ANTIQUE_PALETTE = _palette(
    background=(214, 192, 150),
    forest=(130, 148, 92),
    lake=(120, 158, 170),
    river=(70, 108, 136),
    stream=(28, 60, 96),
    path=(154, 120, 78),
    road=(96, 70, 44),
    railway_single_track=(20, 20, 20),
    railway_multi_track=(96, 24, 78),
    building=(52, 38, 28),
    coordinate_grid=(48, 88, 48),
)


def builtin_styles() -> dict[str, StyleSpec]:
    """The three shipped styles, keyed by id."""
    modern = StyleSpec(
        style_id="modern",
        display_name="Modern",
        prompt="map in modern style",
        palette=_MODERN_PALETTE,
        correctable_classes=_ids("background", "river", "building"),
        render_noise=0,
        postproc=PostprocPlan(
            style_id="modern",
            corrections=(
                ColorCorrection(class_by_slug("background").id, _MODERN_PALETTE[0], 16),
                ColorCorrection(class_by_slug("river").id, _MODERN_PALETTE[class_by_slug("river").id], 16),
                ColorCorrection(class_by_slug("building").id, _MODERN_PALETTE[class_by_slug("building").id], 16),
            ),
        ),
        seed_policy=SeedPolicy(kind="fixed", seed=0),
    )
    midcentury = StyleSpec(
        style_id="midcentury",
        display_name="Midcentury",
        prompt="map in midcentury style",
        palette=_MIDCENTURY_PALETTE,
        render_noise=8,
        postproc=PostprocPlan(
            style_id="midcentury",
            homogenize_background=_MIDCENTURY_PALETTE[0],
        ),
        seed_policy=SeedPolicy(kind="fixed", seed=0),
    )
    # The antique legend omits contour lines entirely; they are projected back
    # over the output during post-processing instead of being generated.
    antique = StyleSpec(
        style_id="antique",
        display_name="Antique",
        prompt="map in antique style",
        palette=_ANTIQUE_PALETTE,
        render_noise=14,
        postproc=PostprocPlan(
            style_id="antique",
            homogenize_background=_ANTIQUE_PALETTE[0],
            contour_overlay=ContourOverlay(),
        ),
        seed_policy=SeedPolicy(kind="select", k=6),
    )
    return {s.style_id: s for s in (modern, midcentury, antique)}


def get_style(style_id: str) -> StyleSpec:
    styles = builtin_styles()
    try:
        return styles[style_id]
    except KeyError:
        raise KeyError(f"unknown style {style_id!r}; have {sorted(styles)}") from None


__all__ = [
    "MIN_PALETTE_DISTANCE",
    "SeedPolicy",
    "StyleSpec",
    "builtin_styles",
    "get_style",
    "slugify",
]
