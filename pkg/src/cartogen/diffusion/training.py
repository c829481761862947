"""Training loop: noise-prediction loss, phase-aware stepping, image logs,
and line-delimited training metrics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from ..control import control_to_rgb
from ..metrics import miou
from ..styles import StyleSpec
from ..tiling import DatasetTriple
from .model import ControlledDenoiser, control_to_tensor
from .sampling import sample_batch
from .schedule import NoiseSchedule, forward_noise

# Documented full-scale rate for the large pretrained setup this toy mirrors;
# toy networks train with the (much larger) default below.
REFERENCE_FULL_SCALE_LR = 2e-6


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 1e-4
    batch_size: int = 16
    max_steps: int = 3000
    log_every: int = 250
    sd_locked: bool = False
    weight_decay: float = 0.01

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.log_every < 1:
            raise ValueError("log_every must be >= 1")


def target_to_tensor(target: np.ndarray) -> torch.Tensor:
    """uint8 RGB (H, W, 3) -> float (3, H, W) in [-1, 1]."""
    t = torch.from_numpy(np.ascontiguousarray(target)).to(torch.float32) / 127.5 - 1.0
    return t.permute(2, 0, 1)


def batch_to_tensors(model: ControlledDenoiser, batch: list[DatasetTriple]):
    dtype = next(model.parameters()).dtype
    x0 = torch.stack([target_to_tensor(tr.target) for tr in batch]).to(dtype)
    controls = torch.stack([control_to_tensor(tr.control, model.cfg.num_classes) for tr in batch]).to(dtype)
    styles = torch.tensor([model.style_index(tr.style_id) for tr in batch], dtype=torch.long)
    return x0, controls, styles


def diffusion_loss(
    model: ControlledDenoiser,
    x0: torch.Tensor,
    t: torch.Tensor,
    eps: torch.Tensor,
    styles: torch.Tensor,
    schedule: NoiseSchedule,
    controls: torch.Tensor | None = None,
) -> torch.Tensor:
    """MSE between the injected noise and the model's prediction at x_t."""
    x_t = forward_noise(x0, t, eps, schedule)
    eps_hat = model(x_t, t.to(x0.dtype), styles, controls)
    return torch.mean((eps_hat - eps) ** 2)


def _draw_batch_noise(x0: torch.Tensor, schedule: NoiseSchedule, rng: torch.Generator):
    b = x0.shape[0]
    t = torch.randint(1, schedule.T + 1, (b,), generator=rng)
    eps = torch.randn(x0.shape, generator=rng, dtype=torch.float32).to(x0.dtype)
    return t, eps


def batch_loss(
    model: ControlledDenoiser,
    batch: list[DatasetTriple],
    schedule: NoiseSchedule,
    rng: torch.Generator,
) -> float:
    """Loss on a batch without updating anything (deterministic given rng state)."""
    if not batch:
        raise ValueError("empty batch")
    x0, controls, styles = batch_to_tensors(model, batch)
    t, eps = _draw_batch_noise(x0, schedule, rng)
    with torch.no_grad():
        loss = diffusion_loss(
            model, x0, t, eps, styles, schedule, controls if model.phase == "control" else None
        )
    return float(loss)


def train_step(
    model: ControlledDenoiser,
    batch: list[DatasetTriple],
    schedule: NoiseSchedule,
    config: TrainingConfig,
    optimizer: torch.optim.Optimizer,
    rng: torch.Generator,
) -> float:
    """One optimization step; only unlocked parameter groups change."""
    if not batch:
        raise ValueError("empty batch")
    x0, controls, styles = batch_to_tensors(model, batch)
    t, eps = _draw_batch_noise(x0, schedule, rng)
    loss = diffusion_loss(
        model, x0, t, eps, styles, schedule, controls if model.phase == "control" else None
    )
    optimizer.zero_grad(set_to_none=True)
    loss.backward()
    optimizer.step()
    return float(loss)


def make_optimizer(model: ControlledDenoiser, config: TrainingConfig) -> torch.optim.Optimizer:
    """AdamW over the currently trainable parameters only."""
    return torch.optim.AdamW(
        model.trainable_parameters(), lr=config.learning_rate, weight_decay=config.weight_decay
    )


def emit_training_log(
    model: ControlledDenoiser,
    log_triples: list[DatasetTriple],
    step: int,
    schedule: NoiseSchedule,
    out_dir: str | Path,
    styles: dict[str, StyleSpec],
    sample_steps: int | None = None,
    log_every: int | None = None,
    seed: int = 1234,
) -> tuple[Path, float]:
    """Write a (sample | target | control) grid for a fixed validation set.

    Returns the image path and the mean IoU of the samples' palette
    segmentations against their control tiles.
    """
    from ..seedselect import segment_palette  # local import to avoid a module cycle

    if log_every is not None and step % log_every != 0:
        raise ValueError(f"step {step} is not a multiple of log_every {log_every}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    controls = [tr.control for tr in log_triples]
    use_control = model.phase == "control"
    samples = sample_batch(
        model,
        controls if use_control else [None] * len(log_triples),
        [tr.style_id for tr in log_triples],
        [seed + i for i in range(len(log_triples))],
        schedule,
        steps=sample_steps,
        tile_size=log_triples[0].control.width,
    )
    ious = []
    for s, tr in zip(samples, log_triples):
        style = styles[tr.style_id]
        seg = segment_palette(s, style)
        present = set(np.unique(tr.control.labels).tolist()) & set(style.legend_ids)
        if present:
            ious.append(miou(seg, tr.control.labels, present))
    val_miou = float(np.mean(ious)) if ious else 0.0

    gap = 2
    ts = log_triples[0].control.width
    grid = np.full(
        (len(log_triples) * (ts + gap) - gap, 3 * (ts + gap) - gap, 3), 255, dtype=np.uint8
    )
    for i, (s, tr) in enumerate(zip(samples, log_triples)):
        y = i * (ts + gap)
        for j, img in enumerate((s, tr.target, control_to_rgb(tr.control))):
            x = j * (ts + gap)
            grid[y : y + ts, x : x + ts] = img
    path = out_dir / f"imagelog_step{step:06d}.png"
    Image.fromarray(grid).save(path)
    return path, val_miou


class TrainingSession:
    """Owns a model exclusively for one training phase and runs it to max_steps.

    Emits image logs plus {step, loss, val_miou} records at every log_every
    steps (including step 0, before any update).
    """

    def __init__(
        self,
        model: ControlledDenoiser,
        triples: list[DatasetTriple],
        schedule: NoiseSchedule,
        config: TrainingConfig,
        styles: dict[str, StyleSpec],
        out_dir: str | Path,
        seed: int = 0,
        val_triples: list[DatasetTriple] | None = None,
        sample_steps: int | None = None,
    ):
        if not triples:
            raise ValueError("no training triples")
        self.model = model
        self.triples = triples
        self.schedule = schedule
        self.config = config
        self.styles = styles
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.rng = torch.Generator().manual_seed(seed)
        self.optimizer = make_optimizer(model, config)
        self.val_triples = val_triples or triples[: min(8, len(triples))]
        self.sample_steps = sample_steps
        self.metrics_path = self.out_dir / "metrics.jsonl"

    def _sample_batch_indices(self) -> list[int]:
        n = len(self.triples)
        idx = torch.randint(0, n, (min(self.config.batch_size, n),), generator=self.rng)
        return [int(i) for i in idx]

    def run(self, progress: bool = False) -> list[dict]:
        records = []
        losses: list[float] = []
        with self.metrics_path.open("a") as fh:
            for step in range(self.config.max_steps + 1):
                if step % self.config.log_every == 0:
                    _, val_miou = emit_training_log(
                        self.model,
                        self.val_triples,
                        step,
                        self.schedule,
                        self.out_dir,
                        self.styles,
                        sample_steps=self.sample_steps,
                        log_every=self.config.log_every,
                    )
                    rec = {
                        "step": step,
                        "loss": float(np.mean(losses)) if losses else None,
                        "val_miou": val_miou,
                    }
                    records.append(rec)
                    fh.write(json.dumps(rec) + "\n")
                    fh.flush()
                    losses.clear()
                    if progress:
                        print(f"step {step}: loss={rec['loss']} val_miou={val_miou:.3f}", flush=True)
                if step == self.config.max_steps:
                    break
                batch = [self.triples[i] for i in self._sample_batch_indices()]
                losses.append(
                    train_step(self.model, batch, self.schedule, self.config, self.optimizer, self.rng)
                )
        return records
