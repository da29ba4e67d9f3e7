"""Generator and discriminator architectures.

The generator is an encoder/decoder with skip connections: 4x4 stride-2
convolutions with batch normalization and leaky ReLU on the way down, the
mirrored 4x4 deconvolutions with batch normalization, dropout and ReLU on
the way up. Each decoder level carries a small RGB head that refines the
upsampled coarser prediction (cascaded refinement); the final prediction is
bounded by a hyperbolic tangent. Depth is 8 levels, capped at log2 of the
resolution for small images.

The discriminator takes the conditioning stack concatenated with an image
along channels and emits a WxH grid of per-patch real probabilities
(stride-2 x3 then stride-1 x2 with 4x4 kernels: 30x30 at 256 input).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn

from .errors import ConfigError


@dataclass
class GeneratorConfig:
    in_channels: int
    out_channels: int = 3
    base_width: int = 64
    resolution: int = 256
    dropout: float = 0.5
    max_levels: int = 8

    def __post_init__(self):
        if self.resolution < 8 or self.resolution & (self.resolution - 1):
            raise ConfigError(f"resolution must be a power of two >= 8, got {self.resolution}")
        if self.in_channels < 1 or self.base_width < 1:
            raise ConfigError("channel counts must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")

    @property
    def levels(self) -> int:
        return min(self.max_levels, int(math.log2(self.resolution)))


def init_weights(module: nn.Module, std: float = 0.02) -> None:
    """Zero-mean Gaussian init, the conditional-GAN convention."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.normal_(m.weight, 0.0, std)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.BatchNorm2d):
            nn.init.normal_(m.weight, 1.0, std)
            nn.init.zeros_(m.bias)


class UNetGenerator(nn.Module):
    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.cfg = cfg
        L = cfg.levels
        widths = [min(cfg.base_width * (2**i), cfg.base_width * 8) for i in range(L)]

        self.encoders = nn.ModuleList()
        prev = cfg.in_channels
        for w in widths:
            self.encoders.append(
                nn.Sequential(
                    nn.Conv2d(prev, w, 4, stride=2, padding=1),
                    nn.BatchNorm2d(w),
                    nn.LeakyReLU(0.2, inplace=True),
                )
            )
            prev = w

        self.decoders = nn.ModuleList()
        self.rgb_heads = nn.ModuleList()
        in_ch = widths[-1]
        for i in range(L - 1, 0, -1):
            out_ch = widths[i - 1]
            self.decoders.append(
                nn.Sequential(
                    nn.ConvTranspose2d(in_ch, out_ch, 4, stride=2, padding=1),
                    nn.BatchNorm2d(out_ch),
                    nn.Dropout2d(cfg.dropout),
                    nn.ReLU(inplace=True),
                )
            )
            self.rgb_heads.append(nn.Conv2d(out_ch * 2, cfg.out_channels, 3, padding=1))
            in_ch = out_ch * 2  # skip concat doubles the width
        self.final_up = nn.Sequential(
            nn.ConvTranspose2d(in_ch, cfg.base_width, 4, stride=2, padding=1),
            nn.BatchNorm2d(cfg.base_width),
            nn.ReLU(inplace=True),
        )
        self.final_head = nn.Conv2d(cfg.base_width, cfg.out_channels, 3, padding=1)
        self.bottleneck_head = nn.Conv2d(widths[-1], cfg.out_channels, 1)
        self.upsample = nn.Upsample(scale_factor=2, mode="nearest")
        init_weights(self)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        feats = []
        h = x
        for enc in self.encoders:
            h = enc(h)
            feats.append(h)
        logits = self.bottleneck_head(h)  # coarsest prediction
        for k, dec in enumerate(self.decoders):
            h = dec(h)
            skip = feats[len(feats) - 2 - k]
            h = torch.cat([h, skip], dim=1)
            logits = self.rgb_heads[k](h) + self.upsample(logits)  # refine coarser
        h = self.final_up(h)
        logits = self.final_head(h) + self.upsample(logits)
        return torch.tanh(logits)


class PatchDiscriminator(nn.Module):
    """Conditional patch classifier over concat(stack, image)."""

    def __init__(self, stack_channels: int, image_channels: int = 3, base_width: int = 64):
        super().__init__()
        if stack_channels < 1 or base_width < 1:
            raise ConfigError("channel counts must be positive")
        w = base_width
        self.net = nn.Sequential(
            nn.Conv2d(stack_channels + image_channels, w, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(w, w * 2, 4, stride=2, padding=1),
            nn.BatchNorm2d(w * 2),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(w * 2, w * 4, 4, stride=2, padding=1),
            nn.BatchNorm2d(w * 4),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(w * 4, w * 8, 4, stride=1, padding=1),
            nn.BatchNorm2d(w * 8),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(w * 8, 1, 4, stride=1, padding=1),
            nn.Sigmoid(),
        )
        init_weights(self)

    def forward(self, stack: torch.Tensor, image: torch.Tensor) -> torch.Tensor:
        return self.net(torch.cat([stack, image], dim=1))


def discriminator_grid(resolution: int) -> int:
    """Spatial size of the patch map: three stride-2 convs then two valid-ish
    stride-1 4x4 convs (e.g. 256 -> 30, 64 -> 6)."""
    return resolution // 8 - 2
