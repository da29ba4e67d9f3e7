"""Paired dataset access over a charpipe-style manifest directory.

Consumes only the producer's external artifacts: manifest.json, .nrcs stack
files, and target PNGs. Images are mapped to the normalized [-1, 1] space
(u8 / 127.5 - 1, the inverse of the producer's PNG export)."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from . import nrcs
from .errors import FormatError

FOREGROUND_TAU = 0.02  # ~2.5/255 in normalized units


class PairDataset:
    def __init__(self, manifest_path, split: str | None = None):
        self.manifest_path = Path(manifest_path)
        if not self.manifest_path.exists():
            raise FormatError(f"manifest not found: {self.manifest_path}")
        with open(self.manifest_path) as fh:
            self.manifest = json.load(fh)
        self.base = self.manifest_path.parent
        self.mode = self.manifest["mode"]
        self.resolution = tuple(self.manifest["resolution"])  # (W, H)
        entries = self.manifest["entries"]
        if split is not None:
            entries = [e for e in entries if e.get("split") == split]
        if not entries:
            raise FormatError(f"no entries for split {split!r} in {manifest_path}")
        self.entries = entries

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def channels(self) -> int:
        return nrcs.MODE_CHANNELS[self.mode]

    def load(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        entry = self.entries[i]
        stack = nrcs.read(self.base / entry["stack"])
        if stack.mode != self.mode:
            raise FormatError(f"frame {entry['frame_index']}: stack mode {stack.mode}")
        img = Image.open(self.base / entry["target"]).convert("RGB")
        y = np.asarray(img, dtype=np.float32) / 127.5 - 1.0
        return stack.channels, np.moveaxis(y, -1, 0)

    def batch(self, indices) -> tuple[np.ndarray, np.ndarray]:
        xs, ys = zip(*(self.load(int(i)) for i in indices))
        return np.stack(xs), np.stack(ys)


def foreground_mask(y: np.ndarray, background: np.ndarray, tau: float = FOREGROUND_TAU) -> np.ndarray:
    """Background subtraction: pixels where the target departs from the empty
    plate. y and background are (..., 3, H, W); returns (..., H, W) bool."""
    return np.abs(y - background).max(axis=-3) > tau
