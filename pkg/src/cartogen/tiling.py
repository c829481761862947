"""Sheet/tile plumbing: nearest-neighbor upsampling, sheet decomposition into
fixed-size tiles, lossless stitching, and training-triple assembly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .control import ControlImage, load_control_png, save_control_png
from .legend import BACKGROUND_ID, RGB
from .masking import BinaryMask, apply_mask_control, apply_mask_rgb
from .styles import StyleSpec

DEFAULT_TILE_SIZE = 64
MAX_TILE_SIZE = 512


@dataclass(frozen=True)
class TileIndex:
    sheet_id: str
    row: int
    col: int
    tile_size: int
    sheet_width: int  # original (pre-padding) sheet dimensions
    sheet_height: int

    @property
    def rows(self) -> int:
        return math.ceil(self.sheet_height / self.tile_size)

    @property
    def cols(self) -> int:
        return math.ceil(self.sheet_width / self.tile_size)


@dataclass(frozen=True)
class DatasetTriple:
    """One training record: control tile, target tile, and the style prompt."""

    control: ControlImage
    target: np.ndarray  # (tile, tile, 3) uint8
    prompt: str
    style_id: str
    index: TileIndex


class TilingError(ValueError):
    pass


def upsample(sheet, factor: int):
    """Integer nearest-neighbor upsampling (labels and RGB stay exact)."""
    if factor < 1:
        raise TilingError(f"upsample factor must be >= 1, got {factor}")
    if isinstance(sheet, ControlImage):
        labels = np.repeat(np.repeat(sheet.labels, factor, axis=0), factor, axis=1)
        return ControlImage(labels=labels, legend=sheet.legend)
    return np.repeat(np.repeat(sheet, factor, axis=0), factor, axis=1)


def _pad(arr: np.ndarray, tile_size: int, fill) -> np.ndarray:
    h, w = arr.shape[:2]
    ph = (-h) % tile_size
    pw = (-w) % tile_size
    if not ph and not pw:
        return arr
    if arr.ndim == 2:
        out = np.full((h + ph, w + pw), fill, dtype=arr.dtype)
    else:
        out = np.empty((h + ph, w + pw, arr.shape[2]), dtype=arr.dtype)
        out[...] = fill
    out[:h, :w] = arr
    return out


def tile(sheet, tile_size: int, sheet_id: str = "sheet", pad_fill=None) -> list[tuple[TileIndex, object]]:
    """Cut a sheet into row-major tiles, padding the bottom/right edges first.

    Control images pad with the background class; RGB sheets pad with
    `pad_fill` (default white). The original dimensions are recorded in each
    TileIndex so stitch() can crop the padding back off.
    """
    if not 1 <= tile_size <= MAX_TILE_SIZE:
        raise TilingError(f"tile_size must be in 1..{MAX_TILE_SIZE}, got {tile_size}")
    is_control = isinstance(sheet, ControlImage)
    arr = sheet.labels if is_control else np.asarray(sheet)
    h, w = arr.shape[:2]
    fill = BACKGROUND_ID if is_control else ((255, 255, 255) if pad_fill is None else pad_fill)
    padded = _pad(arr, tile_size, fill)
    out = []
    for row in range(padded.shape[0] // tile_size):
        for col in range(padded.shape[1] // tile_size):
            idx = TileIndex(sheet_id, row, col, tile_size, w, h)
            chunk = padded[
                row * tile_size : (row + 1) * tile_size, col * tile_size : (col + 1) * tile_size
            ].copy()
            out.append((idx, ControlImage(labels=chunk, legend=sheet.legend) if is_control else chunk))
    return out


def stitch(tiles: list[tuple[TileIndex, object]]):
    """Reassemble tiles into the original sheet; exact inverse of tile()."""
    if not tiles:
        raise TilingError("no tiles to stitch")
    first = tiles[0][0]
    sheet_ids = {idx.sheet_id for idx, _ in tiles}
    if len(sheet_ids) != 1:
        raise TilingError(f"tiles span multiple sheets: {sorted(sheet_ids)}")
    rows, cols, ts = first.rows, first.cols, first.tile_size
    seen: dict[tuple[int, int], object] = {}
    for idx, t in tiles:
        if (idx.tile_size, idx.sheet_width, idx.sheet_height) != (ts, first.sheet_width, first.sheet_height):
            raise TilingError(f"inconsistent tile index {idx}")
        if not (0 <= idx.row < rows and 0 <= idx.col < cols):
            raise TilingError(f"tile index out of grid: row={idx.row} col={idx.col}")
        if (idx.row, idx.col) in seen:
            raise TilingError(f"duplicate tile at row={idx.row} col={idx.col}")
        seen[(idx.row, idx.col)] = t
    for row in range(rows):
        for col in range(cols):
            if (row, col) not in seen:
                raise TilingError(f"missing tile at row={row} col={col}")
    is_control = isinstance(tiles[0][1], ControlImage)
    sample = tiles[0][1].labels if is_control else np.asarray(tiles[0][1])
    shape = (rows * ts, cols * ts) + sample.shape[2:]
    canvas = np.zeros(shape, dtype=sample.dtype)
    for (row, col), t in seen.items():
        arr = t.labels if is_control else np.asarray(t)
        canvas[row * ts : (row + 1) * ts, col * ts : (col + 1) * ts] = arr
    canvas = canvas[: first.sheet_height, : first.sheet_width]
    if is_control:
        return ControlImage(labels=canvas, legend=tiles[0][1].legend)
    return canvas


def build_dataset(
    control_sheet: ControlImage,
    target_sheet: np.ndarray,
    mask: BinaryMask,
    style: StyleSpec,
    tile_size: int = DEFAULT_TILE_SIZE,
    factor: int = 1,
    sheet_id: str = "sheet",
) -> list[DatasetTriple]:
    """Mask both rasters, upsample, cut into aligned tiles, attach the prompt."""
    if control_sheet.labels.shape != target_sheet.shape[:2] or control_sheet.labels.shape != mask.bits.shape:
        raise TilingError(
            f"dimension mismatch: control {control_sheet.labels.shape}, "
            f"target {target_sheet.shape[:2]}, mask {mask.bits.shape}"
        )
    control_m = apply_mask_control(control_sheet, mask)
    target_m = apply_mask_rgb(target_sheet, mask, style.background_color)
    control_up = upsample(control_m, factor)
    target_up = upsample(target_m, factor)
    control_tiles = tile(control_up, tile_size, sheet_id)
    target_tiles = tile(target_up, tile_size, sheet_id, pad_fill=style.background_color)
    triples = []
    for (idx_c, c), (idx_t, t) in zip(control_tiles, target_tiles):
        assert (idx_c.row, idx_c.col) == (idx_t.row, idx_t.col)
        triples.append(DatasetTriple(control=c, target=t, prompt=style.prompt, style_id=style.style_id, index=idx_c))
    return triples


def write_dataset(triples: list[DatasetTriple], out_dir: str | Path) -> Path:
    """Persist triples as PNG pairs plus a line-delimited JSON manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = out / "manifest.jsonl"
    with manifest.open("w") as fh:
        for tr in triples:
            stem = f"{tr.index.sheet_id}_r{tr.index.row}_c{tr.index.col}"
            control_path = out / f"{stem}_control.png"
            target_path = out / f"{stem}_target.png"
            save_control_png(tr.control, control_path)
            Image.fromarray(tr.target).save(target_path)
            fh.write(
                json.dumps(
                    {
                        "sheet_id": tr.index.sheet_id,
                        "row": tr.index.row,
                        "col": tr.index.col,
                        "tile_size": tr.index.tile_size,
                        "sheet_width": tr.index.sheet_width,
                        "sheet_height": tr.index.sheet_height,
                        "control_path": control_path.name,
                        "target_path": target_path.name,
                        "prompt": tr.prompt,
                        "style_id": tr.style_id,
                    }
                )
                + "\n"
            )
    return manifest


def load_dataset(manifest_path: str | Path) -> list[DatasetTriple]:
    base = Path(manifest_path).parent
    triples = []
    for line in Path(manifest_path).read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        control = load_control_png(base / rec["control_path"])
        target = np.asarray(Image.open(base / rec["target_path"]).convert("RGB"), dtype=np.uint8)
        idx = TileIndex(
            rec["sheet_id"], rec["row"], rec["col"], rec["tile_size"], rec["sheet_width"], rec["sheet_height"]
        )
        triples.append(
            DatasetTriple(control=control, target=target, prompt=rec["prompt"], style_id=rec["style_id"], index=idx)
        )
    return triples
