"""Command-line surface for the offline pipeline and the HTTP service."""

from __future__ import annotations

import json
from pathlib import Path

import click
import numpy as np
from PIL import Image

from .appconfig import load_config
from .control import load_control_png, save_control_png
from .corpus import DEFAULT_DENSITY, generate_toy_world, rasterize_scene, render_reference
from .masking import build_text_mask
from .metrics import (
    format_assessment_table,
    load_assessment_csv,
    load_sus_csv,
    miou,
    score_assessment,
    sus_score,
)
from .scene import load_scene, save_scene
from .seedselect import SeedSelectConfig, segment_palette, select_seed
from .styles import builtin_styles, get_style
from .tiling import DEFAULT_TILE_SIZE, TileIndex, build_dataset, load_dataset, stitch, write_dataset


def _parse_density(spec: str | None) -> dict[str, int] | None:
    if not spec:
        return None
    out = {}
    for part in spec.split(","):
        key, _, value = part.partition("=")
        out[key.strip()] = int(value)
    return out


@click.group()
def main():
    """cartogen: map-tile generation pipeline."""


@main.group()
def corpus():
    """Toy corpus generation."""


@corpus.command("gen")
@click.option("--seed", type=int, required=True)
@click.option("--width", type=int, default=256, show_default=True)
@click.option("--height", type=int, default=256, show_default=True)
@click.option("--tile-size", type=int, default=DEFAULT_TILE_SIZE, show_default=True)
@click.option("--density", type=str, default=None, help="e.g. building=12,road=3")
@click.option("--styles", "style_ids", type=str, default="modern,midcentury,antique", show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def corpus_gen(seed, width, height, tile_size, density, style_ids, out):
    """Generate a scene plus per-style reference sheets and a control PNG."""
    out.mkdir(parents=True, exist_ok=True)
    scene = generate_toy_world(seed, (width, height), _parse_density(density), tile_size)
    save_scene(scene, out / "scene.json")
    save_control_png(rasterize_scene(scene), out / "control.png")
    for sid in style_ids.split(","):
        style = get_style(sid.strip())
        sheet = render_reference(scene, style, f"s{seed}")
        Image.fromarray(sheet.pixels).save(out / f"ref_{style.style_id}.png")
        save_control_png(rasterize_scene(scene, style), out / f"control_{style.style_id}.png")
    click.echo(f"scene with {len(scene.features)} features -> {out}")


@main.group()
def dataset():
    """Training dataset assembly."""


@dataset.command("build")
@click.option("--scene", "scene_paths", type=click.Path(exists=True, path_type=Path), multiple=True, required=True)
@click.option("--styles", "style_ids", type=str, default="modern,antique", show_default=True)
@click.option("--tile-size", type=int, default=DEFAULT_TILE_SIZE, show_default=True)
@click.option("--factor", type=int, default=1, show_default=True, help="upsampling factor")
@click.option("--dilation", type=int, default=1, show_default=True, help="text-mask dilation")
@click.option("--out", type=click.Path(path_type=Path), required=True)
def dataset_build(scene_paths, style_ids, tile_size, factor, dilation, out):
    """Rasterize scenes per style and write (control, target, prompt) tiles."""
    triples = []
    for path in scene_paths:
        scene = load_scene(path)
        mask = build_text_mask(scene.text_boxes, (scene.width, scene.height), dilation)
        for sid in style_ids.split(","):
            style = get_style(sid.strip())
            control = rasterize_scene(scene, style)
            sheet = render_reference(scene, style, path.stem)
            triples.extend(
                build_dataset(
                    control, sheet.pixels, mask, style, tile_size, factor,
                    sheet_id=f"{style.style_id}-{path.stem}",
                )
            )
    manifest = write_dataset(triples, out)
    click.echo(f"{len(triples)} triples -> {manifest}")


@main.group()
def train():
    """Two-phase model training."""


def _train_common(data, steps, lr, batch_size, log_every):
    from .diffusion import TrainingConfig, TrainingSession, make_schedule

    triples = load_dataset(Path(data) / "manifest.jsonl" if Path(data).is_dir() else data)
    schedule = make_schedule()
    config = TrainingConfig(learning_rate=lr, batch_size=batch_size, max_steps=steps, log_every=log_every)
    return triples, schedule, config


@train.command("base")
@click.option("--data", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--steps", type=int, default=1000, show_default=True)
@click.option("--lr", type=float, default=1e-4, show_default=True)
@click.option("--batch-size", type=int, default=16, show_default=True)
@click.option("--log-every", type=int, default=250, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--sample-steps", type=int, default=40, show_default=True, help="sampling steps for image logs")
@click.option("--out", type=click.Path(path_type=Path), required=True)
def train_base(data, steps, lr, batch_size, log_every, seed, sample_steps, out):
    """Phase 1: pretrain the base denoiser unconditionally on all styles."""
    from .diffusion import ModelConfig, TrainingSession, save_checkpoint
    from .diffusion.model import build_model

    triples, schedule, config = _train_common(data, steps, lr, batch_size, log_every)
    style_ids = tuple(sorted({t.style_id for t in triples}))
    model = build_model(ModelConfig(), style_ids, seed=seed)
    model.set_phase("base")
    session = TrainingSession(model, triples, schedule, config, builtin_styles(), out, seed=seed,
                              sample_steps=sample_steps)
    session.run(progress=True)
    ck = Path(out) / "base.pt"
    save_checkpoint(ck, model, schedule, triples[0].index.tile_size)
    click.echo(f"base checkpoint -> {ck}")


@train.command("control")
@click.option("--data", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--base", "base_ck", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--steps", type=int, default=4000, show_default=True)
@click.option("--lr", type=float, default=1e-4, show_default=True)
@click.option("--batch-size", type=int, default=16, show_default=True)
@click.option("--log-every", type=int, default=250, show_default=True)
@click.option("--sd-locked/--no-sd-locked", default=False, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--sample-steps", type=int, default=40, show_default=True, help="sampling steps for image logs")
@click.option("--out", type=click.Path(path_type=Path), required=True)
def train_control(data, base_ck, steps, lr, batch_size, log_every, sd_locked, seed, sample_steps, out):
    """Phase 2: freeze the base and train the control branch on it."""
    from .diffusion import TrainingConfig, TrainingSession, load_checkpoint, save_checkpoint

    triples, schedule, _ = _train_common(data, steps, lr, batch_size, log_every)
    config = TrainingConfig(
        learning_rate=lr, batch_size=batch_size, max_steps=steps, log_every=log_every, sd_locked=sd_locked
    )
    model, schedule, meta = load_checkpoint(base_ck)
    model.clone_base_encoder_into_control()
    model.set_phase("control", sd_locked=sd_locked)
    session = TrainingSession(model, triples, schedule, config, builtin_styles(), out, seed=seed,
                              sample_steps=sample_steps)
    session.run(progress=True)
    ck = Path(out) / "control.pt"
    save_checkpoint(ck, model, schedule, meta["tile_size"])
    click.echo(f"control checkpoint -> {ck}")


@main.command("generate")
@click.option("--checkpoint", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--control", "control_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--style", "style_id", type=str, required=True)
@click.option("--seed", type=int, default=None, help="fixed seed; omit to use the style's policy")
@click.option("--select-seeds", type=int, default=None, help="run seed selection over k candidates")
@click.option("--steps", type=int, default=None, help="sampling steps (default: full schedule)")
@click.option("--postproc", "do_postproc", is_flag=True, default=False)
@click.option("--report", type=click.Path(path_type=Path), default=None, help="seed-selection report path")
@click.option("--out", type=click.Path(path_type=Path), required=True)
def generate(checkpoint, control_path, style_id, seed, select_seeds, steps, do_postproc, report, out):
    """Generate one tile from a control image."""
    from .diffusion import load_checkpoint
    from .diffusion.sampling import sample
    from .postproc import apply_plan

    model, schedule, _ = load_checkpoint(checkpoint)
    style = get_style(style_id)
    control = load_control_png(control_path)
    if select_seeds or (seed is None and style.seed_policy.kind == "select"):
        cfg = SeedSelectConfig(k=select_seeds or style.seed_policy.k)
        best, _ = select_seed(model, control, style, cfg, schedule, steps=steps, report_path=report)
        tile, used = best.tile, best.seed
    else:
        used = seed if seed is not None else style.seed_policy.seed
        tile = sample(model, control, style.style_id, used, schedule, steps=steps)
    if do_postproc and style.postproc is not None:
        tile = apply_plan(tile, control, style.postproc)
    Image.fromarray(tile).save(out)
    click.echo(f"tile (seed {used}) -> {out}")


@main.command("stitch")
@click.option("--tiles", "tiles_dir", type=click.Path(exists=True, path_type=Path), required=True,
              help="directory of r{row}_c{col}.png tiles")
@click.option("--out", type=click.Path(path_type=Path), required=True)
def stitch_cmd(tiles_dir, out):
    """Stitch r{row}_c{col}.png tiles back into a sheet."""
    import re

    entries = []
    for path in sorted(Path(tiles_dir).glob("r*_c*.png")):
        m = re.fullmatch(r"r(\d+)_c(\d+)\.png", path.name)
        if not m:
            continue
        entries.append((int(m.group(1)), int(m.group(2)), np.asarray(Image.open(path).convert("RGB"))))
    if not entries:
        raise click.ClickException(f"no r*_c*.png tiles in {tiles_dir}")
    rows = max(r for r, _, _ in entries) + 1
    cols = max(c for _, c, _ in entries) + 1
    ts = entries[0][2].shape[0]
    tiles = [
        (TileIndex("sheet", r, c, ts, cols * ts, rows * ts), arr) for r, c, arr in entries
    ]
    Image.fromarray(stitch(tiles)).save(out)
    click.echo(f"{rows}x{cols} sheet -> {out}")


@main.command("postproc")
@click.option("--tile", "tile_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--control", "control_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--style", "style_id", type=str, required=True)
@click.option("--scene", "scene_path", type=click.Path(exists=True, path_type=Path), default=None,
              help="scene file supplying contour polylines for overlay")
@click.option("--out", type=click.Path(path_type=Path), required=True)
def postproc_cmd(tile_path, control_path, style_id, scene_path, out):
    """Apply the style's post-processing plan to a generated tile."""
    from .legend import class_by_slug
    from .postproc import apply_plan

    style = get_style(style_id)
    if style.postproc is None:
        raise click.ClickException(f"style {style_id} has no post-processing plan")
    tile = np.asarray(Image.open(tile_path).convert("RGB"), dtype=np.uint8)
    control = load_control_png(control_path)
    contours = ()
    if scene_path:
        scene = load_scene(scene_path)
        contour_id = class_by_slug("contour_line").id
        contours = tuple(f.points for f in scene.features if f.class_id == contour_id)
    Image.fromarray(apply_plan(tile, control, style.postproc, contours)).save(out)
    click.echo(f"post-processed tile -> {out}")


@main.group()
def evaluate():
    """Fidelity metrics."""


@evaluate.command("miou")
@click.option("--pred", type=click.Path(exists=True, path_type=Path), required=True,
              help="generated tile (RGB PNG)")
@click.option("--ref", type=click.Path(exists=True, path_type=Path), required=True,
              help="reference control (indexed or colored PNG)")
@click.option("--style", "style_id", type=str, required=True)
@click.option("--max-distance", type=int, default=32, show_default=True)
def evaluate_miou(pred, ref, style_id, max_distance):
    """Segment a generated tile by palette and compare against its control."""
    style = get_style(style_id)
    tile = np.asarray(Image.open(pred).convert("RGB"), dtype=np.uint8)
    control = load_control_png(ref)
    seg = segment_palette(tile, style, max_distance)
    classes = set(np.unique(control.labels).tolist()) & set(style.legend_ids)
    click.echo(f"mIoU: {miou(seg, control.labels, classes):.4f}")


@evaluate.command("assessment")
@click.option("--records", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--pooled", is_flag=True, default=False, help="pool counts instead of per-participant averaging")
def evaluate_assessment(records, pooled):
    """Precision/recall/F1 table from detection-study records (CSV)."""
    recs = load_assessment_csv(records)
    scores = score_assessment(recs, per_participant=not pooled)
    click.echo(format_assessment_table(scores))


@evaluate.command("sus")
@click.option("--responses", type=click.Path(exists=True, path_type=Path), required=True)
def evaluate_sus(responses):
    """Usability questionnaire score from responses (CSV: participant_id,q1..q10)."""
    mean, std = sus_score(load_sus_csv(responses))
    click.echo(f"SUS: mean={mean:.2f} std={std:.2f}")


@main.command("serve")
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--port", type=int, default=None)
@click.option("--host", type=str, default="127.0.0.1", show_default=True)
@click.option("--ui", "ui_dir", type=click.Path(exists=True, path_type=Path), default=None,
              help="serve a built frontend (frontend/dist) at /ui")
def serve(config_path, port, host, ui_dir):
    """Run the generation service."""
    import uvicorn

    from .service import create_app

    config = load_config(config_path)
    if port is not None:
        config.port = port
    uvicorn.run(create_app(config, ui_dir=ui_dir), host=host, port=config.port, log_level="warning")


if __name__ == "__main__":
    main()
