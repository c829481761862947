"""Service/CLI configuration file (JSON) and environment overrides.

Schema (all keys optional unless noted):
{
  "checkpoint_path": "runs/control/ck.pt",   // required to serve
  "tile_size": 64,
  "worker_count": 2,
  "port": 8008,
  "lambda": 1.0,                              // seed-selection trade-off
  "k": 6,                                     // seed-selection candidates
  "sample_steps": null,                       // null = full schedule
  "artifacts_dir": "jobs",
  "seed_policy": {"antique": {"kind": "select", "k": 6},
                   "modern": {"kind": "fixed", "seed": 0}},
  "styles": {"modern": {"postproc": { ... PostprocPlan dict ... }}}
}

The "styles" section overrides per-style post-processing plans (see
PostprocPlan.to_dict for the layout). Environment overrides: CARTOGEN_PORT,
CARTOGEN_CHECKPOINT.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .postproc import PostprocPlan
from .styles import SeedPolicy, StyleSpec, builtin_styles

ENV_PORT = "CARTOGEN_PORT"
ENV_CHECKPOINT = "CARTOGEN_CHECKPOINT"


class ConfigError(ValueError):
    pass


@dataclass
class AppConfig:
    checkpoint_path: str | None = None
    tile_size: int = 64
    worker_count: int = 2
    port: int = 8008
    lam: float = 1.0
    k: int = 6
    sample_steps: int | None = None
    artifacts_dir: str = "jobs"
    seed_policy: dict[str, SeedPolicy] = field(default_factory=dict)
    style_overrides: dict[str, dict] = field(default_factory=dict)

    def styles(self) -> dict[str, StyleSpec]:
        """Built-in styles with per-config seed-policy/postproc overrides applied."""
        out = {}
        for sid, style in builtin_styles().items():
            policy = self.seed_policy.get(sid, style.seed_policy)
            override = self.style_overrides.get(sid, {})
            postproc = style.postproc
            if "postproc" in override:
                postproc = PostprocPlan.from_dict(override["postproc"])
            out[sid] = StyleSpec(
                style_id=style.style_id,
                display_name=style.display_name,
                prompt=style.prompt,
                palette=style.palette,
                correctable_classes=style.correctable_classes,
                render_noise=style.render_noise,
                postproc=postproc,
                seed_policy=policy,
            )
        return out


def load_config(path: str | Path | None = None) -> AppConfig:
    data: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    policies = {}
    for sid, pol in data.get("seed_policy", {}).items():
        policies[sid] = SeedPolicy(
            kind=pol.get("kind", "fixed"), seed=int(pol.get("seed", 0)), k=int(pol.get("k", 6))
        )
    cfg = AppConfig(
        checkpoint_path=data.get("checkpoint_path"),
        tile_size=int(data.get("tile_size", 64)),
        worker_count=int(data.get("worker_count", 2)),
        port=int(data.get("port", 8008)),
        lam=float(data.get("lambda", 1.0)),
        k=int(data.get("k", 6)),
        sample_steps=data.get("sample_steps"),
        artifacts_dir=data.get("artifacts_dir", "jobs"),
        seed_policy=policies,
        style_overrides=data.get("styles", {}),
    )
    if os.environ.get(ENV_PORT):
        cfg.port = int(os.environ[ENV_PORT])
    if os.environ.get(ENV_CHECKPOINT):
        cfg.checkpoint_path = os.environ[ENV_CHECKPOINT]
    if cfg.worker_count < 1:
        raise ConfigError("worker_count must be >= 1")
    return cfg
