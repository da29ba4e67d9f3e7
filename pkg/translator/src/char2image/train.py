"""Training: single-pass min-max steps, checkpoints, progress tracking.

One optimizer step updates both networks from one backward pass: the
discriminator descends the negated attentive objective (ascending it), and
gradient reversal on the fake branch hands the generator the sign-flipped
adversarial gradient, to which the weighted L1 term is added. An
alternating two-pass fallback exists for ablation.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data import PairDataset, foreground_mask
from .errors import ConfigError, NonFiniteError
from .losses import attention_map, attentive_gan_loss, gradient_reversal, l1_loss
from .model import (
    GeneratorConfig,
    PatchDiscriminator,
    UNetGenerator,
    discriminator_grid,
)


@dataclass
class TrainConfig:
    mode: str = "rgbd_parts"
    resolution: int = 64
    steps: int = 2000
    lambda_l1: float = 100.0
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.99
    batch_size: int = 10
    seed: int = 1
    base_width: int = 64
    d_base_width: int = 64
    dropout: float = 0.5
    alternating: bool = False
    log_every: int = 10

    def __post_init__(self):
        if self.lambda_l1 < 0:
            raise ConfigError("lambda_l1 must be >= 0")
        if self.steps < 1 or self.batch_size < 1:
            raise ConfigError("steps and batch_size must be >= 1")


def build_models(channels: int, cfg: TrainConfig) -> tuple[UNetGenerator, PatchDiscriminator]:
    torch.manual_seed(cfg.seed)
    gen_cfg = GeneratorConfig(
        in_channels=channels,
        base_width=cfg.base_width,
        resolution=cfg.resolution,
        dropout=cfg.dropout,
    )
    G = UNetGenerator(gen_cfg)
    D = PatchDiscriminator(stack_channels=channels, base_width=cfg.d_base_width)
    return G, D


def make_optimizers(G, D, cfg: TrainConfig):
    opt_g = torch.optim.Adam(G.parameters(), lr=cfg.lr, betas=(cfg.beta1, cfg.beta2))
    opt_d = torch.optim.Adam(D.parameters(), lr=cfg.lr, betas=(cfg.beta1, cfg.beta2))
    return opt_g, opt_d


def train_step(G, D, opt_g, opt_d, x, y, lambda_l1: float, alternating: bool = False) -> dict:
    """One optimization step on a batch; returns scalar diagnostics."""
    grid = D(x[:1], y[:1]).shape[-2:]  # patch grid for the attention pooling
    if not alternating:
        g_x = G(x)
        lam = attention_map(y, g_x, tuple(grid))
        d_real = D(x, y)
        d_fake = D(x, gradient_reversal(g_x))
        gan = attentive_gan_loss(d_real, d_fake, lam)
        rec = l1_loss(y, g_x)
        total = -gan + lambda_l1 * rec
        opt_g.zero_grad(set_to_none=True)
        opt_d.zero_grad(set_to_none=True)
        total.backward()
        _check_finite(total, G, D)
        opt_g.step()
        opt_d.step()
        return {"gan": float(gan.detach()), "l1": float(rec.detach())}

    # alternating fallback: discriminator pass, then generator pass
    with torch.no_grad():
        g_detached = G(x)
    lam = attention_map(y, g_detached, tuple(grid))
    d_real = D(x, y)
    d_fake = D(x, g_detached)
    gan_d = attentive_gan_loss(d_real, d_fake, lam)
    opt_d.zero_grad(set_to_none=True)
    (-gan_d).backward()
    opt_d.step()

    g_x = G(x)
    lam = attention_map(y, g_x, tuple(grid))
    d_fake = D(x, g_x)
    weights = lam / lam.sum(dim=(-2, -1), keepdim=True)
    adv_g = (weights * torch.log(1.0 - d_fake + 1e-8)).sum(dim=(-3, -2, -1)).mean()
    rec = l1_loss(y, g_x)
    total = adv_g + lambda_l1 * rec
    opt_g.zero_grad(set_to_none=True)
    total.backward()
    _check_finite(total, G, D)
    opt_g.step()
    return {"gan": float(gan_d.detach()), "l1": float(rec.detach())}


def _check_finite(total, G, D):
    if not torch.isfinite(total):
        raise NonFiniteError(f"loss became non-finite: {float(total)}")
    for name, net in (("G", G), ("D", D)):
        for pname, p in net.named_parameters():
            if p.grad is not None and not torch.isfinite(p.grad).all():
                raise NonFiniteError(f"non-finite gradient in {name}.{pname}")


def smoothed(series: list[float], window: int = 100) -> list[float]:
    """Trailing-window means (window truncated at the start)."""
    out = []
    for i in range(len(series)):
        lo = max(0, i - window + 1)
        out.append(float(np.mean(series[lo : i + 1])))
    return out


def train(
    manifest_path,
    out_dir,
    cfg: TrainConfig,
    device: str = "cpu",
    progress: bool = False,
) -> dict:
    """Train on the manifest's train split; writes checkpoint + history."""
    data = PairDataset(manifest_path, split="train")
    W, H = data.resolution
    if W != H or W != cfg.resolution:
        raise ConfigError(
            f"dataset resolution {W}x{H} does not match configured {cfg.resolution}"
        )
    if data.mode != cfg.mode:
        raise ConfigError(f"dataset mode {data.mode} != configured {cfg.mode}")

    G, D = build_models(data.channels, cfg)
    G.to(device).train()
    D.to(device).train()
    opt_g, opt_d = make_optimizers(G, D, cfg)

    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(data))
    cursor = 0

    history = {"step": [], "gan": [], "l1": [], "fg_l1": []}
    t_start = time.time()
    for step in range(1, cfg.steps + 1):
        if cursor + cfg.batch_size > len(order):
            order = rng.permutation(len(data))
            cursor = 0
        idx = order[cursor : cursor + cfg.batch_size]
        cursor += cfg.batch_size
        x_np, y_np = data.batch(idx)
        x = torch.from_numpy(x_np).to(device)
        y = torch.from_numpy(y_np).to(device)

        scalars = train_step(G, D, opt_g, opt_d, x, y, cfg.lambda_l1, cfg.alternating)

        with torch.no_grad():
            g_x = G(x)
            mask = foreground_mask(y_np, x_np[:, -3:])
            diff = (g_x - y).abs().mean(dim=1).cpu().numpy()
            denom = max(int(mask.sum()), 1)
            fg_l1 = float((diff * mask).sum() / denom)
        history["step"].append(step)
        history["gan"].append(scalars["gan"])
        history["l1"].append(scalars["l1"])
        history["fg_l1"].append(fg_l1)
        if progress and step % max(1, cfg.log_every) == 0:
            el = time.time() - t_start
            print(
                f"step {step}/{cfg.steps}  gan {scalars['gan']:+.3f}  "
                f"l1 {scalars['l1']:.4f}  fg_l1 {fg_l1:.4f}  ({el:.0f}s)",
                flush=True,
            )

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt = {
        "generator": G.state_dict(),
        "discriminator": D.state_dict(),
        "config": asdict(cfg),
        "channels": data.channels,
        "mode": data.mode,
        "resolution": cfg.resolution,
    }
    torch.save(ckpt, out_dir / "checkpoint.pt")
    history["smoothed_fg_l1"] = smoothed(history["fg_l1"], 100)
    with open(out_dir / "history.json", "w") as fh:
        json.dump(history, fh)
    return history


def load_generator(ckpt_path, device: str = "cpu") -> tuple[UNetGenerator, dict]:
    ckpt = torch.load(ckpt_path, map_location=device, weights_only=True)
    cfg = TrainConfig(**ckpt["config"])
    gen_cfg = GeneratorConfig(
        in_channels=ckpt["channels"],
        base_width=cfg.base_width,
        resolution=ckpt["resolution"],
        dropout=cfg.dropout,
    )
    G = UNetGenerator(gen_cfg)
    G.load_state_dict(ckpt["generator"])
    G.to(device).eval()
    return G, ckpt


def infer(G: UNetGenerator, stack_channels: np.ndarray, device: str = "cpu"):
    """One eval-mode forward pass; returns ([-1,1] image CHW, wall ms)."""
    from .errors import ShapeError

    expected = G.cfg.in_channels
    if stack_channels.ndim != 3 or stack_channels.shape[0] != expected:
        raise ShapeError(
            f"stack has shape {stack_channels.shape}, generator wants ({expected}, H, W)"
        )
    if stack_channels.shape[1] != G.cfg.resolution or stack_channels.shape[2] != G.cfg.resolution:
        raise ShapeError(
            f"stack is {stack_channels.shape[1]}x{stack_channels.shape[2]}, "
            f"generator wants {G.cfg.resolution}"
        )
    G.eval()
    x = torch.from_numpy(stack_channels[None]).to(device)
    t0 = time.perf_counter()
    with torch.no_grad():
        out = G(x)
    ms = (time.perf_counter() - t0) * 1000.0
    return out[0].cpu().numpy(), ms
