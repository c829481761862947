"""HTTP generation service: style listing, single-tile generation, and
batched multi-tile jobs with downloadable archives.

All non-image responses are JSON with stable field names; images are PNG.
"""

from __future__ import annotations

import io
import math
import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, File, Form, HTTPException, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from PIL import Image

from .appconfig import AppConfig
from .control import ControlDecodeError, ControlImage, rgb_to_control
from .diffusion.checkpoint import load_checkpoint
from .diffusion.sampling import sample
from .jobs import JobRegistry, write_archive
from .legend import CLASS_TABLE, class_by_id
from .postproc import apply_plan
from .seedselect import SeedSelectConfig, select_seed
from .styles import StyleSpec
from .tiling import TileIndex, stitch

# Pen sizes the UI offers per class; line classes reuse the corpus strokes.
_PEN_WIDTHS = {
    "road": 3, "through_road": 3, "connecting_road": 2, "highway": 5,
    "highway_gallery": 5, "path": 1, "railway_single_track": 2,
    "railway_multi_track": 3, "railway_bridge": 4, "river": 3,
    "stream": 1, "depth_contour": 1, "contour_line": 1,
    "building": 4, "tree": 2, "forest": 6, "lake": 6,
    "background": 6, "coordinate_grid": 1,
}


class ModelRuntime:
    """Read-only model snapshot; swapped atomically on reload."""

    def __init__(self, checkpoint_path: str | None):
        self._lock = threading.Lock()
        self.model = None
        self.schedule = None
        self.meta: dict = {}
        if checkpoint_path:
            self.reload(checkpoint_path)

    def reload(self, checkpoint_path: str) -> None:
        model, schedule, meta = load_checkpoint(checkpoint_path)
        model.eval()
        for p in model.parameters():
            p.requires_grad_(False)
        with self._lock:
            self.model, self.schedule, self.meta = model, schedule, meta

    def snapshot(self):
        with self._lock:
            return self.model, self.schedule, self.meta

    @property
    def loaded(self) -> bool:
        return self.model is not None


def _decode_control(data: bytes, style: StyleSpec, tile_size: int | None = None) -> ControlImage:
    """PNG bytes -> ControlImage, rejecting unknown colors and off-legend classes."""
    try:
        img = Image.open(io.BytesIO(data))
    except Exception:
        raise HTTPException(status_code=422, detail={"error": "not a decodable image"})
    raster = np.asarray(img.convert("RGB"), dtype=np.uint8)
    h, w = raster.shape[:2]
    if tile_size is not None and (h, w) != (tile_size, tile_size):
        raise HTTPException(
            status_code=422,
            detail={"error": f"control must be {tile_size}x{tile_size}, got {w}x{h}"},
        )
    if h % 4 or w % 4:
        raise HTTPException(
            status_code=422, detail={"error": f"control dimensions must be multiples of 4, got {w}x{h}"}
        )
    try:
        control = rgb_to_control(raster, CLASS_TABLE)
    except ControlDecodeError as exc:
        raise HTTPException(
            status_code=422,
            detail={
                "error": "unknown control colors",
                "unknown_colors": [list(c) for c in exc.unknown_colors],
                "pixel_count": exc.pixel_count,
            },
        )
    present = set(np.unique(control.labels).tolist())
    off_legend = sorted(present - set(style.legend_ids))
    if off_legend:
        raise HTTPException(
            status_code=422,
            detail={
                "error": "classes not in style legend",
                "style_id": style.style_id,
                "classes": [class_by_id(c).name for c in off_legend],
            },
        )
    return control


def create_app(config: AppConfig, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="cartogen", version="0.1.0")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    if ui_dir is not None:
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")
    styles = config.styles()
    runtime = ModelRuntime(config.checkpoint_path)
    registry = JobRegistry(Path(config.artifacts_dir), config.worker_count)
    app.state.runtime = runtime
    app.state.registry = registry
    app.state.config = config

    def style_or_404(style_id: str) -> StyleSpec:
        if style_id not in styles:
            raise HTTPException(status_code=404, detail={"error": f"unknown style {style_id!r}"})
        return styles[style_id]

    def model_or_503():
        if not runtime.loaded:
            raise HTTPException(status_code=503, detail={"error": "model not loaded"})
        return runtime.snapshot()

    def generate_tile(control: ControlImage, style: StyleSpec, seed: int | None, postproc: bool):
        model, schedule, _ = model_or_503()
        if seed is None:
            policy = style.seed_policy
            if policy.kind == "select":
                cfg = SeedSelectConfig(k=policy.k or config.k, lam=config.lam)
                best, _ = select_seed(
                    model, control, style, cfg, schedule, run_seed=0, steps=config.sample_steps
                )
                tile, used_seed = best.tile, best.seed
            else:
                used_seed = policy.seed
                tile = sample(model, control, style.style_id, used_seed, schedule, steps=config.sample_steps)
        else:
            used_seed = seed
            tile = sample(model, control, style.style_id, used_seed, schedule, steps=config.sample_steps)
        if postproc and style.postproc is not None:
            tile = apply_plan(tile, control, style.postproc)
        return tile, used_seed

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "model_loaded": runtime.loaded}

    @app.get("/styles")
    def list_styles():
        out = []
        for sid in sorted(styles):
            style = styles[sid]
            out.append(
                {
                    "id": style.style_id,
                    "display_name": style.display_name,
                    "prompt": style.prompt,
                    "tile_size": config.tile_size,
                    "legend": [
                        {
                            "class_id": cid,
                            "name": class_by_id(cid).name,
                            "control_color": list(class_by_id(cid).control_color),
                            "default_pen_width": _PEN_WIDTHS.get(class_by_id(cid).slug, 3),
                        }
                        for cid in style.legend_ids
                    ],
                }
            )
        return out

    @app.post("/generate")
    async def handle_generate(
        control: UploadFile = File(...),
        style_id: str = Form(...),
        seed: int | None = Form(None),
        postproc: bool = Form(False),
    ):
        style = style_or_404(style_id)
        model_or_503()
        payload = await control.read()
        decoded = _decode_control(payload, style)
        tile, used_seed = generate_tile(decoded, style, seed, postproc)
        buf = io.BytesIO()
        Image.fromarray(tile).save(buf, format="PNG")
        return Response(
            content=buf.getvalue(), media_type="image/png", headers={"X-Seed": str(used_seed)}
        )

    @app.post("/jobs")
    async def create_job(
        controls: list[UploadFile] = File(...),
        style_id: str = Form(...),
        seed: int | None = Form(None),
        postproc: bool = Form(False),
        cols: int | None = Form(None),
    ):
        style = style_or_404(style_id)
        model_or_503()
        decoded = []
        for up in controls:
            decoded.append(_decode_control(await up.read(), style))
        dims = {(c.height, c.width) for c in decoded}
        if len(dims) > 1:
            raise HTTPException(
                status_code=422, detail={"error": f"controls have mixed dimensions: {sorted(dims)}"}
            )
        n = len(decoded)
        grid_cols = cols or math.ceil(math.sqrt(n))
        grid_rows = math.ceil(n / grid_cols)
        job = registry.create(total=n)
        ts = decoded[0].height

        def tile_fn(i: int, control: ControlImage):
            def run():
                tile, used_seed = generate_tile(control, style, seed, postproc)
                return i, tile, used_seed

            return run

        def finalize(job, results):
            results.sort(key=lambda r: r[0])
            named = []
            entries = []
            indexed = []
            for i, tile, used_seed in results:
                row, col = divmod(i, grid_cols)
                name = f"r{row}_c{col}.png"
                named.append((name, tile))
                entries.append({"row": row, "col": col, "file": name, "seed": used_seed})
                indexed.append(
                    (TileIndex(job.job_id, row, col, ts, grid_cols * ts, grid_rows * ts), tile)
                )
            stitched = None
            if len(results) == grid_rows * grid_cols:
                stitched = stitch(indexed)
            manifest = {
                "job_id": job.job_id,
                "style_id": style.style_id,
                "tile_size": ts,
                "rows": grid_rows,
                "cols": grid_cols,
                "tiles": entries,
            }
            write_archive(job, named, manifest, stitched)

        registry.submit(job, [tile_fn(i, c) for i, c in enumerate(decoded)], finalize)
        return JSONResponse(status_code=202, content=job.status())

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        job = registry.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail={"error": f"unknown job {job_id!r}"})
        return job.status()

    @app.get("/jobs/{job_id}/download")
    def download_job(job_id: str):
        job = registry.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail={"error": f"unknown job {job_id!r}"})
        if job.state != "done" or job.archive_path is None:
            raise HTTPException(
                status_code=409, detail={"error": f"job {job_id} is {job.state}, not done"}
            )
        return FileResponse(job.archive_path, media_type="application/zip", filename="tiles.zip")

    return app
