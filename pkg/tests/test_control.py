import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cartogen.control import (
    ControlDecodeError,
    ControlImage,
    RasterizeError,
    control_to_rgb,
    load_control_png,
    rasterize,
    rgb_to_control,
    save_control_png,
)
from cartogen.corpus import generate_toy_world, rasterize_scene
from cartogen.legend import BACKGROUND_ID, CLASS_TABLE, class_by_slug
from cartogen.scene import Feature, VectorScene
from cartogen.styles import builtin_styles


def make_scene(features, size=32):
    return VectorScene(size, size, tuple(features))


def test_empty_scene_all_background():
    ctrl = rasterize(make_scene([]), CLASS_TABLE, (32, 32))
    assert (ctrl.labels == BACKGROUND_ID).all()


def test_horizontal_stroke_pixel_count():
    road = class_by_slug("road")
    f = Feature("polyline", ((3, 8), (12, 8)), road.id, stroke_width=3)
    ctrl = rasterize(make_scene([f]), CLASS_TABLE, (32, 32))
    assert int((ctrl.labels == road.id).sum()) == 30  # length 10 x width 3


def test_vertical_stroke_pixel_count():
    road = class_by_slug("road")
    f = Feature("polyline", ((8, 3), (8, 12)), road.id, stroke_width=2)
    ctrl = rasterize(make_scene([f]), CLASS_TABLE, (32, 32))
    assert int((ctrl.labels == road.id).sum()) == 20


def test_road_beats_forest_on_overlap():
    road = class_by_slug("road")
    forest = class_by_slug("forest")
    poly = Feature("polygon", ((4, 4), (28, 4), (28, 28), (4, 28)), forest.id)
    line = Feature("polyline", ((0, 16), (31, 16)), road.id, stroke_width=3)
    ctrl = rasterize(make_scene([poly, line]), CLASS_TABLE, (32, 32))
    assert int((ctrl.labels == road.id).sum()) == 32 * 3
    # crossing pixels carry the road id, nothing of the forest is drawn there
    assert (ctrl.labels[15:18, :] == road.id).all()


def test_rectangle_polygon_area():
    b = class_by_slug("building")
    f = Feature("polygon", ((5, 5), (15, 5), (15, 12), (5, 12)), b.id)
    ctrl = rasterize(make_scene([f]), CLASS_TABLE, (32, 32))
    assert int((ctrl.labels == b.id).sum()) == 10 * 7


def test_point_stamp_area():
    tree = class_by_slug("tree")
    f = Feature("point", ((10, 10),), tree.id, size=2)
    ctrl = rasterize(make_scene([f]), CLASS_TABLE, (32, 32))
    assert int((ctrl.labels == tree.id).sum()) == 4


def test_canvas_mismatch_rejected():
    with pytest.raises(RasterizeError):
        rasterize(make_scene([]), CLASS_TABLE, (64, 32))


def test_histogram_totality():
    scene = generate_toy_world(5, (128, 128), tile_size=64)
    ctrl = rasterize(scene, CLASS_TABLE, (128, 128))
    counts = np.bincount(ctrl.labels.ravel())
    assert counts.sum() == 128 * 128


def test_permutation_invariance():
    scene = generate_toy_world(5, (128, 128), tile_size=64)
    rev = VectorScene(scene.width, scene.height, tuple(reversed(scene.features)), scene.text_boxes)
    a = rasterize(scene, CLASS_TABLE, (128, 128))
    b = rasterize(rev, CLASS_TABLE, (128, 128))
    assert a == b


def test_legend_filtering_drops_classes():
    style = builtin_styles()["antique"]  # no contour lines in the legend
    contour = class_by_slug("contour_line")
    scene = generate_toy_world(5, (128, 128), tile_size=64)
    filtered = rasterize_scene(scene, style)
    assert int((filtered.labels == contour.id).sum()) == 0


def test_control_rgb_round_trip():
    scene = generate_toy_world(5, (128, 128), tile_size=64)
    ctrl = rasterize(scene, CLASS_TABLE, (128, 128))
    assert rgb_to_control(control_to_rgb(ctrl), CLASS_TABLE) == ctrl


def test_all_background_control_to_rgb():
    ctrl = rasterize(make_scene([]), CLASS_TABLE, (32, 32))
    rgb = control_to_rgb(ctrl)
    assert (rgb == CLASS_TABLE[BACKGROUND_ID].control_color).all()


def test_unknown_color_reported():
    ctrl = rasterize(make_scene([]), CLASS_TABLE, (32, 32))
    rgb = control_to_rgb(ctrl)
    rgb[3, 4] = (1, 2, 3)
    with pytest.raises(ControlDecodeError) as exc:
        rgb_to_control(rgb, CLASS_TABLE)
    assert exc.value.unknown_colors == [(1, 2, 3)]
    assert exc.value.pixel_count == 1


def test_png_round_trip(tmp_path):
    scene = generate_toy_world(5, (128, 128), tile_size=64)
    ctrl = rasterize(scene, CLASS_TABLE, (128, 128))
    save_control_png(ctrl, tmp_path / "c.png")
    assert load_control_png(tmp_path / "c.png") == ctrl


@settings(max_examples=25, deadline=None)
@given(
    x0=st.integers(0, 20), y0=st.integers(0, 20),
    length=st.integers(1, 10), width=st.integers(1, 4),
    horizontal=st.booleans(),
)
def test_straight_stroke_count_is_length_times_width(x0, y0, length, width, horizontal):
    road = class_by_slug("road")
    p1 = (x0 + length - 1, y0) if horizontal else (x0, y0 + length - 1)
    f = Feature("polyline", ((x0, y0), p1), road.id, stroke_width=width)
    ctrl = rasterize(VectorScene(40, 40, (f,)), CLASS_TABLE, (40, 40))
    assert int((ctrl.labels == road.id).sum()) == length * width


def test_control_image_rejects_off_legend_labels():
    labels = np.zeros((4, 4), dtype=np.uint8)
    labels[0, 0] = 99
    with pytest.raises(ValueError):
        ControlImage(labels=labels, legend=CLASS_TABLE)
