"""Automated seed selection: sample k candidates, segment each, score by
control adherence (mIoU) minus a background-noise penalty, keep the best.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .control import ControlImage
from .diffusion.model import ControlledDenoiser
from .diffusion.sampling import sample_seeds
from .diffusion.schedule import NoiseSchedule
from .legend import BACKGROUND_ID
from .metrics import miou
from .styles import StyleSpec

log = logging.getLogger(__name__)

DEFAULT_MAX_DISTANCE = 32  # per-channel; beyond it a pixel counts as background
SCORE_NORMALIZER = 128.0  # half the channel range, so both score terms are commensurate


@dataclass(frozen=True)
class SeedCandidate:
    seed: int
    tile: np.ndarray
    segmentation: np.ndarray
    miou: float
    std_background: float
    score: float


@dataclass(frozen=True)
class SeedSelectConfig:
    k: int = 6
    lam: float = 1.0
    max_distance: int = DEFAULT_MAX_DISTANCE
    segmenter: str = "palette"

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")


def segment_palette(
    tile: np.ndarray, style: StyleSpec, max_distance: int = DEFAULT_MAX_DISTANCE
) -> np.ndarray:
    """Label each pixel with the legend class whose nominal color is nearest.

    Nearness is the sum of absolute channel differences; pixels farther than
    `max_distance` per channel from every class fall back to background.
    """
    ids = list(style.legend_ids)
    colors = np.array([style.palette[c] for c in ids], dtype=np.int16)
    px = tile.astype(np.int16)
    diff = np.abs(px[:, :, None, :] - colors[None, None, :, :])
    l1 = diff.sum(axis=3)
    cheb = diff.max(axis=3)
    nearest = l1.argmin(axis=2)
    labels = np.array(ids, dtype=np.uint8)[nearest]
    too_far = cheb.min(axis=2) > max_distance
    labels[too_far] = BACKGROUND_ID
    return labels


SEGMENTERS: dict[str, Callable[[np.ndarray, StyleSpec, int], np.ndarray]] = {
    "palette": segment_palette,
}


def std_background(tile: np.ndarray, control: ControlImage) -> float:
    """Mean over channels of the population std over background-labeled pixels."""
    if tile.shape[:2] != control.labels.shape:
        raise ValueError(f"tile {tile.shape[:2]} vs control {control.labels.shape} dimension mismatch")
    bg = control.labels == BACKGROUND_ID
    n = int(np.count_nonzero(bg))
    if n < 2:
        log.warning("std_background: %d background pixel(s); returning 0", n)
        return 0.0
    vals = tile[bg].astype(np.float64)
    return float(vals.std(axis=0, ddof=0).mean())


def _miou_classes(control: ControlImage, style: StyleSpec) -> set[int]:
    """Classes evaluated: style legend intersected with classes in the control."""
    return set(np.unique(control.labels).tolist()) & set(style.legend_ids)


def score_candidate(
    seed: int,
    tile: np.ndarray,
    control: ControlImage,
    style: StyleSpec,
    config: SeedSelectConfig,
) -> SeedCandidate:
    segmenter = SEGMENTERS[config.segmenter]
    seg = segmenter(tile, style, config.max_distance)
    m = miou(seg, control.labels, _miou_classes(control, style))
    sb = std_background(tile, control)
    return SeedCandidate(
        seed=seed,
        tile=tile,
        segmentation=seg,
        miou=m,
        std_background=sb,
        score=m - config.lam * (sb / SCORE_NORMALIZER),
    )


def choose_best(candidates: list[SeedCandidate]) -> SeedCandidate:
    """Highest score wins; exact ties go to the lowest seed."""
    if not candidates:
        raise ValueError("no candidates")
    return max(candidates, key=lambda c: (c.score, -c.seed))


def derive_seeds(run_seed: int, k: int) -> list[int]:
    """k distinct per-candidate seeds derived deterministically from a run seed."""
    rng = np.random.default_rng(run_seed)
    return [int(v) for v in rng.integers(0, 2**63 - 1, size=k, dtype=np.int64)]


def select_seed(
    model: ControlledDenoiser,
    control: ControlImage,
    style: StyleSpec,
    config: SeedSelectConfig,
    schedule: NoiseSchedule,
    run_seed: int = 0,
    steps: int | None = None,
    sampler: Callable[[list[int]], list[np.ndarray]] | None = None,
    report_path: str | Path | None = None,
) -> tuple[SeedCandidate, list[SeedCandidate]]:
    """Generate k candidates under derived seeds, score, and return the best.

    `sampler` overrides candidate generation (it maps seeds to tiles); tests
    use it to inject synthetic candidates without touching selection logic.
    """
    seeds = derive_seeds(run_seed, config.k)
    if sampler is None:
        tiles = sample_seeds(model, control, style.style_id, seeds, schedule, steps=steps)
    else:
        tiles = sampler(seeds)
    candidates = [
        score_candidate(seed, tile, control, style, config) for seed, tile in zip(seeds, tiles)
    ]
    best = choose_best(candidates)
    if report_path is not None:
        with Path(report_path).open("w") as fh:
            for c in candidates:
                fh.write(
                    json.dumps(
                        {
                            "seed": c.seed,
                            "miou": c.miou,
                            "std_background": c.std_background,
                            "score": c.score,
                            "chosen": c.seed == best.seed,
                        }
                    )
                    + "\n"
                )
    return best, candidates
