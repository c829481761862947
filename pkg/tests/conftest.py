import numpy as np
import pytest
import torch

from cartogen.corpus import generate_toy_world, rasterize_scene, render_reference
from cartogen.diffusion.model import ModelConfig, build_model
from cartogen.diffusion.schedule import make_schedule
from cartogen.masking import build_text_mask
from cartogen.styles import builtin_styles
from cartogen.tiling import build_dataset

torch.set_num_threads(2)

TINY_CFG = ModelConfig(channels=(8, 12, 16), emb_dim=16, cond_hidden=4, norm_groups=4)
STYLE_IDS = ("modern", "antique")


def make_triples(seeds, tile_size=16, extent=(64, 64), style_ids=STYLE_IDS, min_classes=0):
    styles = builtin_styles()
    triples = []
    for style_id in style_ids:
        style = styles[style_id]
        for seed in seeds:
            scene = generate_toy_world(seed, extent, tile_size=tile_size)
            control = rasterize_scene(scene, style)
            sheet = render_reference(scene, style, f"s{seed}")
            mask = build_text_mask(scene.text_boxes, extent)
            ts = build_dataset(
                control, sheet.pixels, mask, style, tile_size=tile_size, factor=1,
                sheet_id=f"{style_id}-s{seed}",
            )
            if min_classes:
                ts = [t for t in ts if len(np.unique(t.control.labels)) >= min_classes]
            triples.extend(ts)
    return triples


@pytest.fixture(scope="session")
def tiny_schedule():
    return make_schedule(50, 1e-4, 0.02)


@pytest.fixture(scope="session")
def tiny_triples():
    return make_triples(range(30, 33))


@pytest.fixture()
def tiny_model():
    return build_model(TINY_CFG, STYLE_IDS, seed=0)
