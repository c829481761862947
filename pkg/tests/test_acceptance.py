"""Acceptance gate: every criterion at its stated tolerance, one line each.

Run with `pytest tests/test_acceptance.py -v -s`. The end-to-end criteria
train a toy model once per configuration (cached under .cache/acceptance, so
reruns are cheap); the full first run takes ~40 minutes on two cores.
"""

import io
import json
import time
import zipfile
from pathlib import Path

import numpy as np
import pytest
import torch
from fastapi.testclient import TestClient
from PIL import Image

from cartogen.appconfig import AppConfig
from cartogen.control import ControlImage, control_to_rgb
from cartogen.corpus import generate_toy_world, rasterize_scene, render_reference
from cartogen.diffusion.checkpoint import load_checkpoint, save_checkpoint
from cartogen.diffusion.model import ModelConfig, build_model, predict_noise
from cartogen.diffusion.sampling import sample_batch
from cartogen.diffusion.schedule import forward_noise, make_schedule
from cartogen.diffusion.training import TrainingConfig, TrainingSession, make_optimizer, train_step
from cartogen.legend import CLASS_TABLE, class_by_slug
from cartogen.masking import apply_mask_control, apply_mask_rgb, build_text_mask
from cartogen.metrics import AssessmentRecord, SusResponse, miou, score_assessment, sus_score
from cartogen.postproc import correct_colors, homogenize_background, overlay_contours
from cartogen.seedselect import (
    SeedSelectConfig,
    choose_best,
    score_candidate,
    segment_palette,
    select_seed,
    std_background,
)
from cartogen.service import create_app
from cartogen.styles import SeedPolicy, builtin_styles
from cartogen.tiling import TileIndex, build_dataset, stitch, tile

from conftest import make_triples

STYLES = builtin_styles()
E2E_TILE = 32
E2E_STYLE_IDS = ("modern", "antique")  # one clean, one noisy analogue-scan style
E2E_TRAIN_SEEDS = range(100, 108)
E2E_VAL_SEEDS = range(200, 202)
E2E_CONFIG = {
    "base_steps": 4500,
    "control_steps": 7000,
    "lr": 3e-4,
    "batch": 16,
    "sd_locked": True,
    "model_seed": 0,
}
CACHE_DIR = Path(__file__).resolve().parent.parent / ".cache" / "acceptance"


def report(name: str, ok: bool, detail: str = "") -> None:
    line = f"ACCEPTANCE {'PASS' if ok else 'FAIL'} - {name}"
    if detail:
        line += f" ({detail})"
    print(line, flush=True)
    assert ok, line


def _e2e_key() -> str:
    import hashlib

    payload = json.dumps({**E2E_CONFIG, "tile": E2E_TILE, "styles": E2E_STYLE_IDS, "corpus": 2}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


@pytest.fixture(scope="session")
def e2e_training():
    """Train (or load the cached) toy model: base pretrain, then control phase."""
    cache = CACHE_DIR / _e2e_key()
    ck = cache / "control.pt"
    metrics_path = cache / "control_metrics.json"
    train_triples = make_triples(E2E_TRAIN_SEEDS, tile_size=E2E_TILE, extent=(256, 256),
                                 style_ids=E2E_STYLE_IDS)
    assert len(train_triples) >= 1000, f"corpus too small: {len(train_triples)}"
    val_triples = make_triples(E2E_VAL_SEEDS, tile_size=E2E_TILE, extent=(256, 256),
                               style_ids=E2E_STYLE_IDS, min_classes=3)
    if ck.exists() and metrics_path.exists():
        model, schedule, _ = load_checkpoint(ck)
        records = json.loads(metrics_path.read_text())
        return model, schedule, records, val_triples

    cache.mkdir(parents=True, exist_ok=True)
    schedule = make_schedule()
    model = build_model(ModelConfig(), E2E_STYLE_IDS, seed=E2E_CONFIG["model_seed"])
    model.set_phase("base")
    base_cfg = TrainingConfig(
        learning_rate=E2E_CONFIG["lr"], batch_size=E2E_CONFIG["batch"],
        max_steps=E2E_CONFIG["base_steps"], log_every=1000,
    )
    TrainingSession(
        model, train_triples, schedule, base_cfg, STYLES, cache / "base",
        seed=1, val_triples=val_triples[:8], sample_steps=60,
    ).run(progress=True)

    model.clone_base_encoder_into_control()
    model.set_phase("control", sd_locked=E2E_CONFIG["sd_locked"])
    ctrl_cfg = TrainingConfig(
        learning_rate=E2E_CONFIG["lr"], batch_size=E2E_CONFIG["batch"],
        max_steps=E2E_CONFIG["control_steps"], log_every=500,
        sd_locked=E2E_CONFIG["sd_locked"],
    )
    records = TrainingSession(
        model, train_triples, schedule, ctrl_cfg, STYLES, cache / "control",
        seed=2, val_triples=val_triples[:8], sample_steps=60,
    ).run(progress=True)
    save_checkpoint(ck, model, schedule, E2E_TILE)
    metrics_path.write_text(json.dumps(records))
    return model, schedule, records, val_triples


# -- architecture and training criteria ---------------------------------------


def test_zero_init_identity_100_inputs():
    start = time.monotonic()
    model = build_model(ModelConfig(), E2E_STYLE_IDS, seed=7)
    schedule = make_schedule()
    gen = torch.Generator().manual_seed(99)
    controls = [
        rasterize_scene(generate_toy_world(s, (E2E_TILE, E2E_TILE), tile_size=E2E_TILE))
        for s in range(5)
    ]
    worst = 0.0
    for i in range(100):
        x = torch.randn(1, 3, E2E_TILE, E2E_TILE, generator=gen)
        t = int(torch.randint(1, schedule.T + 1, (1,), generator=gen))
        style = E2E_STYLE_IDS[i % 2]
        control = controls[i % len(controls)]
        a = predict_noise(model, x, t, style)
        b = predict_noise(model, x, t, style, control)
        worst = max(worst, float((a - b).abs().max()))
    elapsed = time.monotonic() - start
    report(
        "zero-init identity (100 inputs, max |delta| <= 1e-6, < 1 min)",
        worst <= 1e-6 and elapsed < 60,
        f"max|delta|={worst:.2e}, {elapsed:.1f}s",
    )


def _param_bytes(model, groups):
    return {
        n: p.detach().numpy().tobytes()
        for n, p in model.named_parameters()
        if model.group_of(n) in groups
    }


def test_lock_contract_50_steps():
    start = time.monotonic()
    schedule = make_schedule()
    triples = make_triples(range(50, 51), tile_size=E2E_TILE, extent=(64, 64))
    frozen_when_locked = {"base_encoder", "base_bottleneck", "base_decoder", "base_embed"}

    model = build_model(ModelConfig(), E2E_STYLE_IDS, seed=1)
    model.set_phase("control", sd_locked=True)
    cfg = TrainingConfig(learning_rate=3e-4, batch_size=4, max_steps=50, sd_locked=True)
    opt = make_optimizer(model, cfg)
    rng = torch.Generator().manual_seed(0)
    before = _param_bytes(model, frozen_when_locked)
    for _ in range(50):
        batch = [triples[int(i)] for i in torch.randint(0, len(triples), (4,), generator=rng)]
        train_step(model, batch, schedule, cfg, opt, rng)
    locked_ok = _param_bytes(model, frozen_when_locked) == before

    model2 = build_model(ModelConfig(), E2E_STYLE_IDS, seed=1)
    model2.set_phase("control", sd_locked=False)
    cfg2 = TrainingConfig(learning_rate=3e-4, batch_size=4, max_steps=50, sd_locked=False)
    opt2 = make_optimizer(model2, cfg2)
    rng2 = torch.Generator().manual_seed(0)
    dec_before = _param_bytes(model2, {"base_decoder"})
    still_frozen_before = _param_bytes(model2, {"base_encoder", "base_bottleneck", "base_embed"})
    for _ in range(50):
        batch = [triples[int(i)] for i in torch.randint(0, len(triples), (4,), generator=rng2)]
        train_step(model2, batch, schedule, cfg2, opt2, rng2)
    unlocked_ok = (
        _param_bytes(model2, {"base_decoder"}) != dec_before
        and _param_bytes(model2, {"base_encoder", "base_bottleneck", "base_embed"}) == still_frozen_before
    )
    elapsed = time.monotonic() - start
    report(
        "lock contract (50 steps locked: bit-identical; unlocked: decoder moves, < 5 min)",
        locked_ok and unlocked_ok and elapsed < 300,
        f"{elapsed:.0f}s",
    )


def test_gradient_check_finite_differences():
    from cartogen.diffusion.training import batch_to_tensors, diffusion_loss

    from conftest import TINY_CFG

    schedule = make_schedule(50, 1e-4, 0.02)
    model = build_model(TINY_CFG, E2E_STYLE_IDS, seed=3).double()
    model.set_phase("control", sd_locked=False)
    gen = torch.Generator().manual_seed(11)
    with torch.no_grad():
        for name, p in model.named_parameters():
            if name.startswith("zero_convs."):
                p.copy_(torch.randn(p.shape, generator=gen, dtype=torch.float64) * 0.05)
    triples = make_triples(range(40, 41))[:4]
    x0, controls, styles = batch_to_tensors(model, triples)
    t = torch.randint(1, schedule.T + 1, (x0.shape[0],), generator=gen)
    eps = torch.randn(x0.shape, generator=gen, dtype=torch.float64)

    def loss_value():
        return diffusion_loss(model, x0, t, eps, styles, schedule, controls)

    loss_value().backward()
    named = [(n, p) for n, p in model.named_parameters() if p.grad is not None and p.requires_grad]
    rng = np.random.default_rng(0)
    h = 1e-3
    worst = 0.0
    checked = 0
    while checked < 20:
        name, p = named[int(rng.integers(len(named)))]
        flat = p.detach().view(-1)
        idx = int(rng.integers(flat.numel()))
        analytic = float(p.grad.view(-1)[idx])
        if abs(analytic) < 1e-8:
            continue
        with torch.no_grad():
            orig = float(flat[idx])
            flat[idx] = orig + h
            up = float(loss_value())
            flat[idx] = orig - h
            down = float(loss_value())
            flat[idx] = orig
        fd = (up - down) / (2 * h)
        worst = max(worst, abs(analytic - fd) / max(abs(analytic), abs(fd)))
        checked += 1
    report(
        "gradient check (20 params, central FD @1e-3, rel err <= 1e-2, float64)",
        worst <= 1e-2,
        f"worst rel err={worst:.2e}",
    )


def test_forward_process_monte_carlo_variance():
    schedule = make_schedule()
    gen = torch.Generator().manual_seed(123)
    n = 100_000
    worst = 0.0
    for t in (1, schedule.T // 2, schedule.T):
        eps = torch.randn(n, generator=gen)
        xt = forward_noise(torch.zeros(n), t, eps, schedule)
        expected = 1.0 - float(schedule.alpha_bar_at(t))
        rel = abs(float(xt.var(unbiased=False)) - expected) / expected
        worst = max(worst, rel)
    report(
        "forward-process statistics (MC Var within 2% of 1-alpha_bar at t in {1, T/2, T})",
        worst <= 0.02,
        f"worst rel dev={worst:.3%}",
    )


# -- end-to-end training criteria ----------------------------------------------


def _heldout_miou(model, schedule, val_triples, style_id, n=12, seed0=900):
    vt = [t for t in val_triples if t.style_id == style_id][:n]
    tiles = sample_batch(
        model, [t.control for t in vt], [style_id] * len(vt),
        list(range(seed0, seed0 + len(vt))), schedule,
    )
    scores = []
    for tile_img, tr in zip(tiles, vt):
        seg = segment_palette(tile_img, STYLES[style_id])
        classes = set(np.unique(tr.control.labels).tolist()) & set(STYLES[style_id].legend_ids)
        scores.append(miou(seg, tr.control.labels, classes))
    return scores


def test_end_to_end_toy_training(e2e_training):
    model, schedule, records, val_triples = e2e_training
    per_style = {}
    for style_id in E2E_STYLE_IDS:
        per_style[style_id] = _heldout_miou(model, schedule, val_triples, style_id)
    pooled = [s for v in per_style.values() for s in v]
    mean_miou = float(np.mean(pooled))

    step0 = records[0]["val_miou"]
    final = records[-1]["val_miou"]
    gain = final - step0
    report(
        "end-to-end toy training (>=1000 triples, 2 styles, <=30k steps: held-out mIoU >= 0.6)",
        mean_miou >= 0.6,
        f"mean mIoU={mean_miou:.3f} "
        + " ".join(f"{k}={np.mean(v):.3f}" for k, v in per_style.items()),
    )
    report(
        "convergence trend (final logged mIoU exceeds step-0 by >= 0.4)",
        gain >= 0.4,
        f"step0={step0:.3f} final={final:.3f} gain={gain:.3f}",
    )


def test_seed_selection_oracle_and_variability(e2e_training):
    model, schedule, _, val_triples = e2e_training

    # oracle equivalence on 20 synthetic candidate sets
    style = STYLES["modern"]
    scene = generate_toy_world(5, (128, 128), tile_size=E2E_TILE)
    control = rasterize_scene(scene, style)
    sheet = render_reference(scene, style)
    mask = build_text_mask(scene.text_boxes, (128, 128))
    clean = apply_mask_rgb(sheet.pixels, mask, style.background_color)
    control = apply_mask_control(control, mask)
    rng = np.random.default_rng(42)
    oracle_ok = True
    for trial in range(20):
        k = int(rng.integers(2, 7))

        def sampler(seeds):
            tiles = []
            for _ in seeds:
                noisy = clean.copy()
                n_spots = int(rng.integers(0, 400))
                ys = rng.integers(0, clean.shape[0], n_spots)
                xs = rng.integers(0, clean.shape[1], n_spots)
                noisy[ys, xs] = rng.integers(0, 256, (n_spots, 3))
                tiles.append(noisy)
            return tiles

        cfg = SeedSelectConfig(k=k, lam=float(rng.random()))
        best, cands = select_seed(None, control, style, cfg, None, run_seed=trial, sampler=sampler)
        scores = []
        for c in cands:
            seg = segment_palette(c.tile, style, cfg.max_distance)
            classes = set(np.unique(control.labels).tolist()) & set(style.legend_ids)
            scores.append(miou(seg, control.labels, classes) - cfg.lam * std_background(c.tile, control) / 128.0)
        oracle_idx = max(range(len(cands)), key=lambda i: (scores[i], -cands[i].seed))
        oracle_ok &= best.seed == cands[oracle_idx].seed
    report("seed selection matches brute-force argmax (20 synthetic sets)", oracle_ok)

    # injected clean-vs-speckled fixture always picks the clean tile
    def speckle_sampler(seeds):
        tiles = []
        for i, _ in enumerate(seeds):
            if i == 1:
                tiles.append(clean)
            else:
                noisy = clean.copy()
                spots = rng.random(clean.shape[:2]) < 0.25
                noisy[spots] = rng.integers(0, 256, (int(spots.sum()), 3))
                tiles.append(noisy)
        return tiles

    always_clean = True
    for run_seed in range(5):
        best, cands = select_seed(
            None, control, style, SeedSelectConfig(k=6), None, run_seed=run_seed, sampler=speckle_sampler
        )
        always_clean &= best.seed == cands[1].seed
    report("clean tile beats speckled candidates (injected fixture)", always_clean)

    # per-style per-seed mIoU spread on the trained model: noisy style > clean style
    spreads = {}
    n_controls, n_seeds = 20, 6
    for style_id in E2E_STYLE_IDS:
        vt = [t for t in val_triples if t.style_id == style_id][:n_controls]
        stds = []
        for ci, tr in enumerate(vt):
            tiles = sample_batch(
                model, [tr.control] * n_seeds, [style_id] * n_seeds,
                [7000 + ci * 100 + s for s in range(n_seeds)], schedule,
            )
            classes = set(np.unique(tr.control.labels).tolist()) & set(STYLES[style_id].legend_ids)
            ms = [
                miou(segment_palette(t, STYLES[style_id]), tr.control.labels, classes) for t in tiles
            ]
            stds.append(float(np.std(ms)))
        spreads[style_id] = float(np.mean(stds))
    report(
        "per-seed variability trend (noisy style spread > clean style spread, 20x6)",
        spreads["antique"] > spreads["modern"],
        f"antique={spreads['antique']:.4f} modern={spreads['modern']:.4f}",
    )


# -- deterministic arithmetic criteria ------------------------------------------


def test_tiling_round_trip_50_sheets():
    rng = np.random.default_rng(0)
    ok = True
    for _ in range(50):
        h = int(rng.integers(8, 200))
        w = int(rng.integers(8, 200))
        ts = int(rng.choice([16, 32, 64]))
        sheet = rng.integers(0, 256, (h, w, 3), dtype=np.uint8)
        ok &= np.array_equal(stitch(tile(sheet, ts, "s")), sheet)
    report("tiling round trip (stitch(tile(x)) == x, 50 random sheets, byte-exact)", ok)


def _fixture_records(tp, fp, fn, tn):
    recs = []
    for i in range(tp):
        recs.append(AssessmentRecord(f"tp{i}", "real", "real", 1, "s", "p"))
    for i in range(fp):
        recs.append(AssessmentRecord(f"fp{i}", "synthetic", "real", 1, "s", "p"))
    for i in range(fn):
        recs.append(AssessmentRecord(f"fn{i}", "real", "synthetic", 1, "s", "p"))
    for i in range(tn):
        recs.append(AssessmentRecord(f"tn{i}", "synthetic", "synthetic", 1, "s", "p"))
    return recs


def test_detection_scoring_arithmetic():
    cases = [
        # (records, expected P, R, F1)
        (_fixture_records(tp=19, fp=0, fn=1, tn=20), 1.00, 0.95, 0.97),
        (_fixture_records(tp=20, fp=0, fn=0, tn=20), 1.00, 1.00, 1.00),
        (_fixture_records(tp=1479, fp=1071, fn=1421, tn=0), 0.58, 0.51, 0.54),
    ]
    ok = True
    details = []
    for recs, p_exp, r_exp, f1_exp in cases:
        row = score_assessment(recs)[("s", 1)]
        ok &= abs(row.precision - p_exp) <= 0.005
        ok &= abs(row.recall - r_exp) <= 0.005
        ok &= abs(row.f1 - f1_exp) <= 0.005
        details.append(f"P={row.precision:.3f} R={row.recall:.3f} F1={row.f1:.3f}")
    report("detection-scoring arithmetic (three engineered rate fixtures, +-0.005)", ok, "; ".join(details))


def test_usability_score_arithmetic():
    maximal = SusResponse((5, 1, 5, 1, 5, 1, 5, 1, 5, 1)).score()
    neutral = SusResponse((3,) * 10).score()
    mean, _ = sus_score([SusResponse((3,) * 10)])
    report(
        "usability score (maximal response = 100, all-3s = 50, exact)",
        maximal == 100.0 and neutral == 50.0 and mean == 50.0,
        f"maximal={maximal} neutral={neutral}",
    )


def test_postprocessing_criteria():
    rng = np.random.default_rng(3)
    style = STYLES["modern"]
    river = class_by_slug("river").id

    # homogenization drives std_background to exactly 0
    labels = rng.choice(list(style.legend_ids), size=(32, 32)).astype(np.uint8)
    control = ControlImage(labels=labels, legend=CLASS_TABLE)
    noisy = rng.integers(0, 256, (32, 32, 3), dtype=np.uint8)
    homog = homogenize_background(noisy, control, style.background_color)
    std_zero = std_background(homog, control) == 0.0

    # +-8 jitter restored exactly at tolerance 16
    nominal = style.palette[river]
    labels2 = np.zeros((32, 32), dtype=np.uint8)
    labels2[10:20, :] = river
    control2 = ControlImage(labels=labels2, legend=CLASS_TABLE)
    tile2 = np.full((32, 32, 3), style.background_color, dtype=np.uint8)
    jitter = rng.integers(-8, 9, (32, 32, 3))
    tile2[labels2 == river] = np.clip(
        np.array(nominal, dtype=np.int16) + jitter[labels2 == river], 0, 255
    ).astype(np.uint8)
    corrected = correct_colors(tile2, control2, style.postproc)
    restored = bool((corrected[labels2 == river] == nominal).all())

    # idempotence of all three ops on 20 random tiles
    idempotent = True
    for seed in range(20):
        r = np.random.default_rng(seed)
        lab = r.choice(list(style.legend_ids), size=(24, 24)).astype(np.uint8)
        ctl = ControlImage(labels=lab, legend=CLASS_TABLE)
        t0 = r.integers(0, 256, (24, 24, 3), dtype=np.uint8)
        a = correct_colors(t0, ctl, style.postproc)
        idempotent &= np.array_equal(correct_colors(a, ctl, style.postproc), a)
        b = homogenize_background(t0, ctl, style.background_color)
        idempotent &= np.array_equal(homogenize_background(b, ctl, style.background_color), b)
        lines = (((1, 2), (20, 7), (4, 22)),)
        c = overlay_contours(t0, lines, width=2)
        idempotent &= np.array_equal(overlay_contours(c, lines, width=2), c)
    report(
        "post-processing (std_background -> 0; +-8 jitter restored; 3 ops idempotent x20)",
        std_zero and restored and idempotent,
    )


# -- service criterion -----------------------------------------------------------


def test_service_contract(tmp_path):
    from conftest import TINY_CFG

    ck = tmp_path / "ck.pt"
    model = build_model(TINY_CFG, E2E_STYLE_IDS, seed=0)
    model.set_phase("control")
    save_checkpoint(ck, model, make_schedule(20, 1e-4, 0.02), 16)
    config = AppConfig(
        checkpoint_path=str(ck), tile_size=16, worker_count=2,
        artifacts_dir=str(tmp_path / "jobs"),
        seed_policy={"modern": SeedPolicy(kind="fixed", seed=0)},
    )
    client = TestClient(create_app(config))

    control = rasterize_scene(generate_toy_world(4, (16, 16), tile_size=16), STYLES["modern"])
    buf = io.BytesIO()
    Image.fromarray(control_to_rgb(control)).save(buf, format="PNG")
    png = buf.getvalue()

    r1 = client.post("/generate", files={"control": ("c.png", png, "image/png")},
                     data={"style_id": "modern", "seed": "5"})
    r2 = client.post("/generate", files={"control": ("c.png", png, "image/png")},
                     data={"style_id": "modern", "seed": "5"})
    deterministic = r1.status_code == 200 and r1.content == r2.content

    bad = control_to_rgb(control).copy()
    bad[0, 0] = (3, 14, 15)
    buf2 = io.BytesIO()
    Image.fromarray(bad).save(buf2, format="PNG")
    rej = client.post("/generate", files={"control": ("c.png", buf2.getvalue(), "image/png")},
                      data={"style_id": "modern"})
    rejected = rej.status_code == 422 and [3, 14, 15] in rej.json()["detail"]["unknown_colors"]

    pngs = []
    for s in range(4):
        c = rasterize_scene(generate_toy_world(s, (16, 16), tile_size=16), STYLES["modern"])
        b = io.BytesIO()
        Image.fromarray(control_to_rgb(c)).save(b, format="PNG")
        pngs.append(b.getvalue())
    files = [("controls", (f"c{i}.png", p, "image/png")) for i, p in enumerate(pngs)]
    job_id = client.post("/jobs", files=files, data={"style_id": "modern", "seed": "2"}).json()["job_id"]
    deadline = time.monotonic() + 120
    while time.monotonic() < deadline:
        status = client.get(f"/jobs/{job_id}").json()
        if status["state"] in ("done", "failed"):
            break
        time.sleep(0.05)
    archive = zipfile.ZipFile(io.BytesIO(client.get(f"/jobs/{job_id}/download").content))
    manifest = json.loads(archive.read("manifest.json"))
    indexed = [
        (
            TileIndex(job_id, e["row"], e["col"], 16, manifest["cols"] * 16, manifest["rows"] * 16),
            np.asarray(Image.open(io.BytesIO(archive.read(e["file"]))).convert("RGB")),
        )
        for e in manifest["tiles"]
    ]
    stitched_ok = np.array_equal(
        stitch(indexed),
        np.asarray(Image.open(io.BytesIO(archive.read("stitched.png"))).convert("RGB")),
    )
    report(
        "service contract (deterministic bytes; off-palette rejected; batch archive stitches)",
        deterministic and rejected and status["state"] == "done" and stitched_ok,
    )
