"""Ancestral sampling from the (optionally controlled) denoiser.

Sampling is deterministic for a fixed (weights, control, style, seed, steps):
all noise is drawn from per-seed generators, so a seed's draws do not depend
on what else happens to share the batch.
"""

from __future__ import annotations

import numpy as np
import torch

from ..control import ControlImage
from .model import ControlledDenoiser, control_to_tensor
from .schedule import NoiseSchedule


def _timestep_sequence(T: int, steps: int | None) -> list[int]:
    if steps is None or steps >= T:
        return list(range(T, 0, -1))
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    ts = np.unique(np.round(np.linspace(1, T, steps)).astype(int))
    return [int(v) for v in ts[::-1]]


def _to_rgb(x: torch.Tensor) -> np.ndarray:
    arr = ((x.clamp(-1.0, 1.0) + 1.0) * 127.5).round().clamp(0, 255).to(torch.uint8)
    return arr.permute(1, 2, 0).cpu().numpy()


def sample_batch(
    model: ControlledDenoiser,
    controls,
    style_ids: list[str],
    seeds: list[int],
    schedule: NoiseSchedule,
    steps: int | None = None,
    tile_size: int | None = None,
) -> list[np.ndarray]:
    """Generate one RGB tile per (control, style, seed) entry, batched.

    `controls` is a list of ControlImage or None (unconditional); if every
    control is None, `tile_size` sets the output size.
    """
    if not (len(controls) == len(style_ids) == len(seeds)):
        raise ValueError("controls, style_ids and seeds must have equal length")
    b = len(seeds)
    if b == 0:
        return []
    sizes = {(c.height, c.width) for c in controls if c is not None}
    if len(sizes) > 1:
        raise ValueError(f"controls have mixed sizes: {sorted(sizes)}")
    if sizes:
        h, w = sizes.pop()
    elif tile_size is not None:
        h = w = tile_size
    else:
        raise ValueError("need a control or an explicit tile_size")

    p = next(model.parameters())
    dtype = p.dtype
    style_idx = torch.tensor([model.style_index(s) for s in style_ids], dtype=torch.long)
    cond = None
    if any(c is not None for c in controls):
        if any(c is None for c in controls):
            raise ValueError("mix of conditioned and unconditioned samples in one batch")
        cond = torch.stack([control_to_tensor(c, model.cfg.num_classes) for c in controls]).to(dtype)

    gens = [torch.Generator().manual_seed(int(s) % (2**63)) for s in seeds]
    shape = (model.cfg.img_channels, h, w)
    x = torch.stack([torch.randn(shape, generator=g) for g in gens]).to(dtype)

    ts = _timestep_sequence(schedule.T, steps)
    with torch.no_grad():
        for i, t_cur in enumerate(ts):
            t_prev = ts[i + 1] if i + 1 < len(ts) else 0
            ab_t = float(schedule.alpha_bar_at(t_cur))
            ab_prev = float(schedule.alpha_bar_at(t_prev)) if t_prev >= 1 else 1.0
            t_tensor = torch.full((b,), float(t_cur), dtype=dtype)
            eps_hat = model(x, t_tensor, style_idx, cond)
            x0_hat = (x - np.sqrt(1.0 - ab_t) * eps_hat) / np.sqrt(ab_t)
            x0_hat = x0_hat.clamp(-1.0, 1.0)
            if t_prev == 0:
                x = x0_hat
                break
            alpha_eff = ab_t / ab_prev
            beta_eff = 1.0 - alpha_eff
            mean = (
                np.sqrt(ab_prev) * beta_eff * x0_hat + np.sqrt(alpha_eff) * (1.0 - ab_prev) * x
            ) / (1.0 - ab_t)
            var = beta_eff * (1.0 - ab_prev) / (1.0 - ab_t)
            z = torch.stack([torch.randn(shape, generator=g) for g in gens]).to(dtype)
            x = mean + np.sqrt(var) * z
    return [_to_rgb(x[i]) for i in range(b)]


def sample_seeds(
    model: ControlledDenoiser,
    control: ControlImage | None,
    style_id: str,
    seeds: list[int],
    schedule: NoiseSchedule,
    steps: int | None = None,
    tile_size: int | None = None,
) -> list[np.ndarray]:
    """One control, several seeds (the seed-selection workhorse)."""
    k = len(seeds)
    return sample_batch(model, [control] * k, [style_id] * k, seeds, schedule, steps, tile_size)


def sample(
    model: ControlledDenoiser,
    control: ControlImage | None,
    style_id: str,
    seed: int,
    schedule: NoiseSchedule,
    steps: int | None = None,
    tile_size: int | None = None,
) -> np.ndarray:
    """Generate a single RGB tile."""
    return sample_seeds(model, control, style_id, [seed], schedule, steps, tile_size)[0]
