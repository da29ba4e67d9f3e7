"""Attentive adversarial objective and its custom gradient plumbing.

The adversarial score for one sample is

    L = sum[ (A / ||A||) * (log D(X, Y) + log(1 - D(X, G(X)))) ]

with element-wise logs, ||A|| the sum of the attention map's entries, and
the sum running over the patch grid; batches average L over samples. The
attention map A is the per-pixel mean absolute error pooled down to the
discriminator grid, floored at eps, and explicitly blocked from carrying
gradients (it would otherwise open a cheating path that shrinks the loss by
shrinking the weights). Gradient reversal (identity forward, negated
gradient backward) between the generator output and the discriminator's
fake branch lets a single backward pass drive D up and G down the same
objective.

The reconstruction term is the L1 distance; it is computed with MEAN
reduction (with the usual weight lambda=100) so its scale is resolution
independent.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F

from .errors import NonFiniteError, ShapeError

EPS = 1e-8


class _GradientReversal(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x):
        return x.view_as(x)

    @staticmethod
    def backward(ctx, grad):
        return grad.neg()


def gradient_reversal(x: torch.Tensor) -> torch.Tensor:
    """Identity in the forward pass, sign-flipped gradient in the backward."""
    return _GradientReversal.apply(x)


def attention_map(target: torch.Tensor, prediction: torch.Tensor, grid: int | tuple) -> torch.Tensor:
    """Per-pixel mean absolute difference pooled to the patch grid, eps floor.

    Gradients are blocked: the map is computed under no_grad and detached
    from both inputs.
    """
    if target.shape != prediction.shape:
        raise ShapeError(f"shape mismatch {tuple(target.shape)} vs {tuple(prediction.shape)}")
    if isinstance(grid, int):
        grid = (grid, grid)
    with torch.no_grad():
        err = (target - prediction).abs().mean(dim=1, keepdim=True)
        lam = F.adaptive_avg_pool2d(err, grid) + EPS
    return lam


def attentive_gan_loss(
    d_real: torch.Tensor, d_fake: torch.Tensor, attention: torch.Tensor
) -> torch.Tensor:
    """Attention-normalized patch objective (the discriminator ascends it)."""
    if d_real.shape != d_fake.shape or d_real.shape[-2:] != attention.shape[-2:]:
        raise ShapeError(
            f"patch maps {tuple(d_real.shape)}/{tuple(d_fake.shape)} and attention "
            f"{tuple(attention.shape)} must share the grid"
        )
    if not (
        torch.isfinite(d_real).all()
        and torch.isfinite(d_fake).all()
        and torch.isfinite(attention).all()
    ):
        raise NonFiniteError("non-finite values in discriminator maps or attention")
    weights = attention / attention.sum(dim=(-2, -1), keepdim=True)
    patch = torch.log(d_real + EPS) + torch.log(1.0 - d_fake + EPS)
    per_sample = (weights * patch).sum(dim=(-3, -2, -1))
    return per_sample.mean()


def l1_loss(target: torch.Tensor, prediction: torch.Tensor) -> torch.Tensor:
    if target.shape != prediction.shape:
        raise ShapeError(f"shape mismatch {tuple(target.shape)} vs {tuple(prediction.shape)}")
    return (target - prediction).abs().mean()
