"""Denoiser with a coupled control branch.

The base network is a small U-Net (3 encoder levels, bottleneck, skip-connected
decoder). Conditioning follows the locked-copy pattern: the base can be frozen
while a trainable copy of its encoder + bottleneck processes the input plus an
encoded control image, and the copy's per-junction outputs re-enter the base
decoder through 1x1 convolutions initialized to exactly zero. At initialization
the conditioned and unconditioned outputs are therefore identical, and the
conditioning pathway fades in only as the zero convolutions learn.

Timestep and style enter together: a sinusoidal timestep embedding plus a
learned per-style embedding vector, broadcast into every residual block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from ..control import ControlImage
from ..legend import NUM_CLASSES

PARAM_GROUPS = (
    "base_encoder",
    "base_bottleneck",
    "base_decoder",
    "base_embed",
    "control_branch",
    "zero_convs",
    "cond_encoder",
)

PHASES = ("base", "control")


@dataclass(frozen=True)
class ModelConfig:
    channels: tuple[int, int, int] = (32, 48, 64)
    emb_dim: int = 96
    img_channels: int = 3
    num_classes: int = NUM_CLASSES
    cond_hidden: int = 32
    norm_groups: int = 8


def sinusoidal_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Standard sin/cos position features for (possibly fractional) timesteps."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(10_000.0) * torch.arange(half, dtype=t.dtype, device=t.device) / max(half - 1, 1)
    )
    args = t[:, None] * freqs[None, :]
    return torch.cat([torch.sin(args), torch.cos(args)], dim=1)


class ZeroConv2d(nn.Module):
    """1x1 convolution with weight and bias initialized to exactly zero."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv = nn.Conv2d(channels, channels, kernel_size=1)
        nn.init.zeros_(self.conv.weight)
        nn.init.zeros_(self.conv.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv(x)


class ResBlock(nn.Module):
    def __init__(self, cin: int, cout: int, emb_dim: int, groups: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(min(groups, cin), cin)
        self.conv1 = nn.Conv2d(cin, cout, 3, padding=1)
        self.emb_proj = nn.Linear(emb_dim, cout)
        self.norm2 = nn.GroupNorm(min(groups, cout), cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1)
        self.skip = nn.Conv2d(cin, cout, 1) if cin != cout else nn.Identity()
        self.act = nn.SiLU()

    def forward(self, x: torch.Tensor, emb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(self.act(self.norm1(x)))
        h = h + self.emb_proj(emb)[:, :, None, None]
        h = self.conv2(self.act(self.norm2(h)))
        return h + self.skip(x)


class Encoder(nn.Module):
    """Stem + 3 levels + bottleneck; shared layout for the base and its copy."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        w0, w1, w2 = cfg.channels
        g = cfg.norm_groups
        self.stem = nn.Conv2d(cfg.img_channels, w0, 3, padding=1)
        self.enc1 = ResBlock(w0, w0, cfg.emb_dim, g)
        self.down1 = nn.Conv2d(w0, w1, 3, stride=2, padding=1)
        self.enc2 = ResBlock(w1, w1, cfg.emb_dim, g)
        self.down2 = nn.Conv2d(w1, w2, 3, stride=2, padding=1)
        self.enc3 = ResBlock(w2, w2, cfg.emb_dim, g)
        self.mid = ResBlock(w2, w2, cfg.emb_dim, g)

    def forward(self, x, emb, extra=None):
        h = self.stem(x)
        if extra is not None:
            h = h + extra
        s1 = self.enc1(h, emb)
        s2 = self.enc2(self.down1(s1), emb)
        s3 = self.enc3(self.down2(s2), emb)
        m = self.mid(s3, emb)
        return s1, s2, s3, m


class Upsample(nn.Module):
    def __init__(self, cin: int, cout: int):
        super().__init__()
        self.conv = nn.Conv2d(cin, cout, 3, padding=1)

    def forward(self, x):
        return self.conv(nn.functional.interpolate(x, scale_factor=2, mode="nearest"))


class BaseDenoiser(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        w0, w1, w2 = cfg.channels
        g = cfg.norm_groups
        self.encoder = Encoder(cfg)
        self.dec3 = ResBlock(w2 + w2, w2, cfg.emb_dim, g)
        self.up2 = Upsample(w2, w1)
        self.dec2 = ResBlock(w1 + w1, w1, cfg.emb_dim, g)
        self.up1 = Upsample(w1, w0)
        self.dec1 = ResBlock(w0 + w0, w0, cfg.emb_dim, g)
        self.out_norm = nn.GroupNorm(min(g, w0), w0)
        self.out_conv = nn.Conv2d(w0, cfg.img_channels, 3, padding=1)
        self.act = nn.SiLU()

    def forward(self, x, emb, inject=None):
        s1, s2, s3, m = self.encoder(x, emb)
        if inject is not None:
            i1, i2, i3, im = inject
            s1, s2, s3, m = s1 + i1, s2 + i2, s3 + i3, m + im
        h = self.dec3(torch.cat([m, s3], dim=1), emb)
        h = self.dec2(torch.cat([self.up2(h), s2], dim=1), emb)
        h = self.dec1(torch.cat([self.up1(h), s1], dim=1), emb)
        return self.out_conv(self.act(self.out_norm(h)))


class ConditionEncoder(nn.Module):
    """Exactly four convolutions mapping one-hot control rasters to stem features."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        h, w0 = cfg.cond_hidden, cfg.channels[0]
        self.conv1 = nn.Conv2d(cfg.num_classes, h, 3, padding=1)
        self.conv2 = nn.Conv2d(h, h, 3, padding=1)
        self.conv3 = nn.Conv2d(h, h, 3, padding=1)
        self.conv4 = nn.Conv2d(h, w0, 3, padding=1)
        self.act = nn.SiLU()

    def forward(self, c):
        h = self.act(self.conv1(c))
        h = self.act(self.conv2(h))
        h = self.act(self.conv3(h))
        return self.conv4(h)


class ControlledDenoiser(nn.Module):
    """Base denoiser + trainable encoder copy coupled through zero convolutions."""

    def __init__(self, cfg: ModelConfig, style_ids: tuple[str, ...]):
        super().__init__()
        if not style_ids:
            raise ValueError("need at least one style id")
        self.cfg = cfg
        self.style_ids = tuple(style_ids)
        w0, w1, w2 = cfg.channels
        self.time_mlp = nn.Sequential(
            nn.Linear(cfg.emb_dim, cfg.emb_dim), nn.SiLU(), nn.Linear(cfg.emb_dim, cfg.emb_dim)
        )
        self.style_table = nn.Embedding(len(style_ids), cfg.emb_dim)
        self.base = BaseDenoiser(cfg)
        self.control_branch = Encoder(cfg)
        self.cond_encoder = ConditionEncoder(cfg)
        self.zero_convs = nn.ModuleDict(
            {"s1": ZeroConv2d(w0), "s2": ZeroConv2d(w1), "s3": ZeroConv2d(w2), "mid": ZeroConv2d(w2)}
        )
        self.clone_base_encoder_into_control()
        self._locked: frozenset[str] = frozenset()
        self._phase = "base"
        self.set_phase("base")

    # -- conditioning forward ------------------------------------------------

    def embed(self, t: torch.Tensor, style_idx: torch.Tensor) -> torch.Tensor:
        p = next(self.parameters())
        emb = sinusoidal_embedding(t.to(p.dtype), self.cfg.emb_dim)
        return self.time_mlp(emb) + self.style_table(style_idx)

    def forward(self, x_t, t, style_idx, control=None):
        if control is not None and control.shape[-2:] != x_t.shape[-2:]:
            raise ValueError(
                f"control spatial dims {tuple(control.shape[-2:])} != input {tuple(x_t.shape[-2:])}"
            )
        emb = self.embed(t, style_idx)
        if control is None:
            return self.base(x_t, emb)
        cond = self.cond_encoder(control)
        c1, c2, c3, cm = self.control_branch(x_t, emb, extra=cond)
        inject = (
            self.zero_convs["s1"](c1),
            self.zero_convs["s2"](c2),
            self.zero_convs["s3"](c3),
            self.zero_convs["mid"](cm),
        )
        return self.base(x_t, emb, inject)

    # -- parameter management ------------------------------------------------

    def group_of(self, param_name: str) -> str:
        if param_name.startswith("base.encoder.mid."):
            return "base_bottleneck"
        if param_name.startswith("base.encoder."):
            return "base_encoder"
        if param_name.startswith("base."):
            return "base_decoder"
        if param_name.startswith(("time_mlp.", "style_table.")):
            return "base_embed"
        if param_name.startswith("control_branch."):
            return "control_branch"
        if param_name.startswith("zero_convs."):
            return "zero_convs"
        if param_name.startswith("cond_encoder."):
            return "cond_encoder"
        raise KeyError(f"parameter {param_name} belongs to no group")

    def parameter_groups(self) -> dict[str, list[tuple[str, nn.Parameter]]]:
        groups: dict[str, list[tuple[str, nn.Parameter]]] = {g: [] for g in PARAM_GROUPS}
        for name, p in self.named_parameters():
            groups[self.group_of(name)].append((name, p))
        return groups

    @property
    def locked(self) -> frozenset[str]:
        return self._locked

    @property
    def phase(self) -> str:
        return self._phase

    def set_locked(self, groups) -> None:
        unknown = set(groups) - set(PARAM_GROUPS)
        if unknown:
            raise KeyError(f"unknown parameter groups: {sorted(unknown)}")
        self._locked = frozenset(groups)
        for name, p in self.named_parameters():
            p.requires_grad_(self.group_of(name) not in self._locked)

    def set_phase(self, phase: str, sd_locked: bool = True) -> None:
        """Configure which groups train.

        "base": unconditional pretraining; the control side is frozen.
        "control": the branch, zero convolutions, and condition encoder train;
        the base is frozen except that sd_locked=False unlocks its decoder.
        """
        if phase not in PHASES:
            raise ValueError(f"unknown phase {phase!r}")
        self._phase = phase
        if phase == "base":
            self.set_locked({"control_branch", "zero_convs", "cond_encoder"})
        else:
            locked = {"base_encoder", "base_bottleneck", "base_embed"}
            if sd_locked:
                locked.add("base_decoder")
            self.set_locked(locked)

    def clone_base_encoder_into_control(self) -> None:
        """Copy the (pre)trained base encoder + bottleneck into the trainable branch."""
        self.control_branch.load_state_dict(self.base.encoder.state_dict())

    def trainable_parameters(self):
        return [p for p in self.parameters() if p.requires_grad]

    def style_index(self, style_id: str) -> int:
        try:
            return self.style_ids.index(style_id)
        except ValueError:
            raise KeyError(f"model knows styles {self.style_ids}, not {style_id!r}") from None


def build_model(cfg: ModelConfig, style_ids: tuple[str, ...], seed: int = 0) -> ControlledDenoiser:
    """Construct with reproducible initialization."""
    torch.manual_seed(seed)
    return ControlledDenoiser(cfg, style_ids)


def control_to_tensor(control: ControlImage, num_classes: int = NUM_CLASSES) -> torch.Tensor:
    """One-hot (num_classes, H, W) float tensor from a control image."""
    labels = torch.from_numpy(np.ascontiguousarray(control.labels)).long()
    onehot = nn.functional.one_hot(labels, num_classes=num_classes)
    return onehot.permute(2, 0, 1).to(torch.float32)


def predict_noise(
    model: ControlledDenoiser,
    x_t: torch.Tensor,
    t,
    style_id: str,
    control: ControlImage | None = None,
) -> torch.Tensor:
    """Single-tile noise prediction; accepts a raw ControlImage condition."""
    batched = x_t.ndim == 4
    x = x_t if batched else x_t.unsqueeze(0)
    b = x.shape[0]
    t_tensor = t if isinstance(t, torch.Tensor) else torch.full((b,), float(t))
    style_idx = torch.full((b,), model.style_index(style_id), dtype=torch.long)
    cond = None
    if control is not None:
        cond = control_to_tensor(control, model.cfg.num_classes).to(x.dtype).unsqueeze(0).expand(b, -1, -1, -1)
    with torch.no_grad():
        out = model(x, t_tensor.to(x.dtype), style_idx, cond)
    return out if batched else out.squeeze(0)
