"""Foreground-restricted image metrics.

The foreground is determined by background subtraction against the empty
plate carried in every stack's last three channels. Both images are zeroed
outside the foreground before any windowed computation, so background
pixels of a prediction can never influence the scores.

L2 is the mean per-pixel Euclidean RGB distance on the 8-bit scale; SSIM is
the mean of the structural-similarity map over foreground pixels, computed
on grayscale in the normalized [-1, 1] range.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch
from skimage.metrics import structural_similarity

from .data import PairDataset, foreground_mask
from .errors import ShapeError


def foreground_l2(y: np.ndarray, pred: np.ndarray, mask: np.ndarray) -> float:
    """y, pred: (3, H, W) in [-1, 1]; mask: (H, W) bool."""
    if y.shape != pred.shape or y.shape[1:] != mask.shape:
        raise ShapeError("image/mask shapes inconsistent")
    if not mask.any():
        return 0.0
    diff = (y - pred) * 127.5  # to 8-bit scale
    dist = np.sqrt((diff**2).sum(axis=0))
    return float(dist[mask].mean())


def foreground_ssim(y: np.ndarray, pred: np.ndarray, mask: np.ndarray) -> float:
    if y.shape != pred.shape or y.shape[1:] != mask.shape:
        raise ShapeError("image/mask shapes inconsistent")
    if not mask.any():
        return 1.0
    ym = np.where(mask[None], y, 0.0).mean(axis=0)
    pm = np.where(mask[None], pred, 0.0).mean(axis=0)
    _, smap = structural_similarity(
        ym.astype(np.float64), pm.astype(np.float64), data_range=2.0, full=True
    )
    return float(smap[mask].mean())


def evaluate(G, manifest_path, split: str = "val", device: str = "cpu") -> dict:
    """Per-frame and mean foreground L2/SSIM of the generator on a split."""
    data = PairDataset(manifest_path, split=split)
    G.eval()
    frames = []
    for i in range(len(data)):
        x, y = data.load(i)
        with torch.no_grad():
            pred = G(torch.from_numpy(x[None]).to(device))[0].cpu().numpy()
        mask = foreground_mask(y, x[-3:])
        frames.append(
            {
                "frame_index": data.entries[i]["frame_index"],
                "l2": foreground_l2(y, pred, mask),
                "ssim": foreground_ssim(y, pred, mask),
            }
        )
    return {
        "split": split,
        "frames": frames,
        "mean_l2": float(np.mean([f["l2"] for f in frames])),
        "mean_ssim": float(np.mean([f["ssim"] for f in frames])),
    }


def save_metrics(metrics: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(metrics, fh, indent=1, sort_keys=True)
