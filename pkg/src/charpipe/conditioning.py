"""Conditioning stack assembly and the .nrcs stack file format.

A stack is the network input for one frame: C x H x W float32 in [-1, 1].
The channel layouts are fixed and normative for this artifact:

    skeleton    (C=6)  : [S_rgb (3) | B (3)]
    rgb_mask    (C=12) : [I (3) | M_1..M_6 (6) | B (3)]
    rgb_parts   (C=21) : [I_1 (3) .. I_6 (3) | B (3)]
    rgbd_mask   (C=13) : [I (3) | D (1) | M_1..M_6 (6) | B (3)]
    rgbd_parts  (C=27) : [I_1 (3) .. I_6 (3) | D_1..D_6 (6) | B (3)]

where I_p = I * M_p (masked-out color pixels take fill 0) and
D_p = D * M_p + (1 - M_p) (masked-out depth pixels take fill +1, i.e. far).
Mask channels are binary 0/1 floats.

File format (.nrcs, little-endian): magic "NRCS", version u32 = 1, mode u8,
C, H, W u32, then C*H*W float32 values, row-major per channel.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import FormatError, ShapeError
from .raster import RenderOutput, save_png


class ConditioningMode(str, Enum):
    skeleton = "skeleton"
    rgb_mask = "rgb_mask"
    rgb_parts = "rgb_parts"
    rgbd_mask = "rgbd_mask"
    rgbd_parts = "rgbd_parts"


MODE_CHANNELS = {
    ConditioningMode.skeleton: 6,
    ConditioningMode.rgb_mask: 12,
    ConditioningMode.rgb_parts: 21,
    ConditioningMode.rgbd_mask: 13,
    ConditioningMode.rgbd_parts: 27,
}

# stable on-disk codes, in declaration order
MODE_CODES = {mode: i for i, mode in enumerate(ConditioningMode)}
CODE_MODES = {i: mode for mode, i in MODE_CODES.items()}

_MAGIC = b"NRCS"
_VERSION = 1
_HEADER = struct.Struct("<4sIBIII")


@dataclass
class ConditioningStack:
    channels: np.ndarray  # (C, H, W) float32 in [-1, 1]
    mode: ConditioningMode
    frame_index: int = 0

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=np.float32)
        if self.channels.ndim != 3:
            raise ShapeError("stack channels must be (C, H, W)")
        if self.channels.shape[0] != MODE_CHANNELS[self.mode]:
            raise ShapeError(
                f"mode {self.mode.value} needs {MODE_CHANNELS[self.mode]} channels, "
                f"got {self.channels.shape[0]}"
            )

    @property
    def background(self) -> np.ndarray:
        """The B channels (always the last three), as (3, H, W)."""
        return self.channels[-3:]


def _hwc(img: np.ndarray) -> np.ndarray:
    return np.moveaxis(img, -1, 0)


def compose(
    out: RenderOutput,
    bg: np.ndarray,
    mode: ConditioningMode | str,
    *,
    skeleton_rgb: np.ndarray | None = None,
    frame_index: int = 0,
) -> ConditioningStack:
    """Build one frame's conditioning stack from render products.

    bg is the (H, W, 3) background plate in [-1, 1]. skeleton mode requires
    skeleton_rgb (the rendered stick figure) instead of the mesh render.
    """
    mode = ConditioningMode(mode)
    H, W = out.depth.shape
    bg = np.asarray(bg, dtype=np.float32)
    if bg.shape != (H, W, 3):
        raise ShapeError(f"background {bg.shape} does not match render {(H, W, 3)}")

    parts: list[np.ndarray] = []
    if mode is ConditioningMode.skeleton:
        if skeleton_rgb is None:
            raise ShapeError("skeleton mode requires skeleton_rgb")
        if skeleton_rgb.shape != (H, W, 3):
            raise ShapeError("skeleton image dimensions mismatch")
        parts.append(_hwc(np.asarray(skeleton_rgb, dtype=np.float32)))
    else:
        color = _hwc(out.color)  # (3, H, W)
        masks = out.masks.astype(np.float32)  # (6, H, W)
        if mode in (ConditioningMode.rgb_parts, ConditioningMode.rgbd_parts):
            for p in range(6):
                parts.append(color * masks[p][None, :, :])
        else:
            parts.append(color)
            if mode is ConditioningMode.rgbd_mask:
                parts.append(out.depth[None, :, :])
            parts.append(masks)
        if mode is ConditioningMode.rgbd_parts:
            for p in range(6):
                parts.append((out.depth * masks[p] + (1.0 - masks[p]))[None, :, :])
        if mode is ConditioningMode.rgb_mask:
            pass  # [I | masks] already appended
    parts.append(_hwc(bg))
    channels = np.concatenate(parts, axis=0).astype(np.float32)
    return ConditioningStack(channels=channels, mode=mode, frame_index=frame_index)


def stack_to_bytes(stack: ConditioningStack) -> bytes:
    C, H, W = stack.channels.shape
    header = _HEADER.pack(_MAGIC, _VERSION, MODE_CODES[stack.mode], C, H, W)
    return header + np.ascontiguousarray(stack.channels, dtype="<f4").tobytes()


def stack_from_bytes(blob: bytes, source: str = "<bytes>") -> ConditioningStack:
    if len(blob) < _HEADER.size:
        raise FormatError(f"{source}: truncated header")
    magic, version, mode_code, C, H, W = _HEADER.unpack_from(blob)
    if magic != _MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r}")
    if version != _VERSION:
        raise FormatError(f"{source}: unsupported version {version}")
    if mode_code not in CODE_MODES:
        raise FormatError(f"{source}: unknown mode code {mode_code}")
    mode = CODE_MODES[mode_code]
    if C != MODE_CHANNELS[mode]:
        raise FormatError(
            f"{source}: header C={C} inconsistent with mode {mode.value} "
            f"({MODE_CHANNELS[mode]} channels)"
        )
    expected = _HEADER.size + C * H * W * 4
    if len(blob) != expected:
        raise FormatError(f"{source}: payload is {len(blob)} bytes, expected {expected}")
    data = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).reshape(C, H, W)
    return ConditioningStack(channels=data.copy(), mode=mode)


def write_stack(stack: ConditioningStack, path) -> None:
    with open(path, "wb") as fh:
        fh.write(stack_to_bytes(stack))


def read_stack(path) -> ConditioningStack:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except FileNotFoundError as exc:
        raise FormatError(f"stack file not found: {path}") from exc
    return stack_from_bytes(blob, source=str(path))


def write_stack_preview(stack: ConditioningStack, path) -> None:
    """Contact sheet PNG: all channels tiled on a near-square grid."""
    C, H, W = stack.channels.shape
    cols = int(np.ceil(np.sqrt(C)))
    rows = int(np.ceil(C / cols))
    sheet = np.ones((rows * H, cols * W), dtype=np.float32)
    for c in range(C):
        r, q = divmod(c, cols)
        sheet[r * H : (r + 1) * H, q * W : (q + 1) * W] = stack.channels[c]
    save_png(sheet, path)
