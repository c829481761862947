"""Vector scenes: typed geometric features plus text-label boxes.

Scenes serialize to a small JSON format (see README for the schema) so the
CLI and the dataset builder can exchange them as plain files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .legend import class_by_id

GEOMETRIES = ("polygon", "polyline", "point")

Point = tuple[int, int]


@dataclass(frozen=True)
class Feature:
    geometry: str
    points: tuple[Point, ...]
    class_id: int
    stroke_width: int = 1  # polylines only
    size: int = 1  # points only


@dataclass(frozen=True)
class TextBox:
    x: int
    y: int
    w: int
    h: int


@dataclass(frozen=True)
class VectorScene:
    width: int
    height: int
    features: tuple[Feature, ...] = field(default_factory=tuple)
    text_boxes: tuple[TextBox, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        validate_scene(self)


class SceneError(ValueError):
    pass


def validate_scene(scene: VectorScene) -> None:
    if scene.width <= 0 or scene.height <= 0:
        raise SceneError(f"extent must be positive, got {scene.width}x{scene.height}")
    for f in scene.features:
        if f.geometry not in GEOMETRIES:
            raise SceneError(f"unknown geometry {f.geometry!r}")
        class_by_id(f.class_id)
        if not f.points:
            raise SceneError("feature has no points")
        if f.geometry == "polygon" and len(f.points) < 3:
            raise SceneError("polygon needs at least 3 points")
        for x, y in f.points:
            if not (0 <= x <= scene.width and 0 <= y <= scene.height):
                raise SceneError(f"point ({x},{y}) outside extent {scene.width}x{scene.height}")
    for b in scene.text_boxes:
        if b.w <= 0 or b.h <= 0:
            raise SceneError("text box must have positive size")
        if not (0 <= b.x and b.x + b.w <= scene.width and 0 <= b.y and b.y + b.h <= scene.height):
            raise SceneError(f"text box {b} outside extent")


def scene_to_dict(scene: VectorScene) -> dict:
    return {
        "extent": [scene.width, scene.height],
        "features": [
            {
                "geometry": f.geometry,
                "class_id": f.class_id,
                "points": [list(p) for p in f.points],
                "stroke_width": f.stroke_width,
                "size": f.size,
            }
            for f in scene.features
        ],
        "text_boxes": [[b.x, b.y, b.w, b.h] for b in scene.text_boxes],
    }


def scene_from_dict(data: dict) -> VectorScene:
    try:
        width, height = data["extent"]
        features = tuple(
            Feature(
                geometry=f["geometry"],
                points=tuple((int(x), int(y)) for x, y in f["points"]),
                class_id=int(f["class_id"]),
                stroke_width=int(f.get("stroke_width", 1)),
                size=int(f.get("size", 1)),
            )
            for f in data.get("features", ())
        )
        boxes = tuple(TextBox(*map(int, b)) for b in data.get("text_boxes", ()))
    except (KeyError, TypeError) as exc:
        raise SceneError(f"malformed scene record: {exc}") from exc
    return VectorScene(int(width), int(height), features, boxes)


def dumps_scene(scene: VectorScene) -> str:
    return json.dumps(scene_to_dict(scene), indent=2, sort_keys=True)


def save_scene(scene: VectorScene, path: str | Path) -> None:
    Path(path).write_text(dumps_scene(scene))


def load_scene(path: str | Path) -> VectorScene:
    return scene_from_dict(json.loads(Path(path).read_text()))
