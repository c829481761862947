"""Versioned checkpoint container: named parameter tensors + schedule + config."""

from __future__ import annotations

from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch

from .model import ControlledDenoiser, ModelConfig
from .schedule import NoiseSchedule

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(
    path: str | Path,
    model: ControlledDenoiser,
    schedule: NoiseSchedule,
    tile_size: int,
    extra: dict | None = None,
) -> None:
    payload = {
        "format_version": FORMAT_VERSION,
        "model_config": asdict(model.cfg),
        "style_ids": list(model.style_ids),
        "phase": model.phase,
        "state_dict": model.state_dict(),
        "schedule_T": schedule.T,
        "schedule_beta": torch.from_numpy(schedule.beta.copy()),
        "tile_size": int(tile_size),
        "extra": extra or {},
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(path: str | Path) -> tuple[ControlledDenoiser, NoiseSchedule, dict]:
    """Rebuild (model, schedule, payload-metadata) from a checkpoint file."""
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version!r}")
    cfg_dict = dict(payload["model_config"])
    cfg_dict["channels"] = tuple(cfg_dict["channels"])
    cfg = ModelConfig(**cfg_dict)
    model = ControlledDenoiser(cfg, tuple(payload["style_ids"]))
    model.load_state_dict(payload["state_dict"])
    model.set_phase(payload.get("phase", "control"))
    beta = payload["schedule_beta"].numpy().astype(np.float64)
    schedule = NoiseSchedule(T=int(payload["schedule_T"]), beta=beta, alpha_bar=np.cumprod(1.0 - beta))
    meta = {
        "tile_size": int(payload["tile_size"]),
        "style_ids": tuple(payload["style_ids"]),
        "phase": payload.get("phase", "control"),
        "extra": payload.get("extra", {}),
    }
    return model, schedule, meta
