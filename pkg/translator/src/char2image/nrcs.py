"""Reader/writer for .nrcs conditioning stack files.

Independent implementation of the stack format this package consumes:
magic "NRCS", version u32 = 1, mode u8, C, H, W u32 (little-endian), then
C*H*W float32 values row-major per channel. Mode codes follow the producer's
declaration order; the background plate is always the last three channels.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError

MODES = ("skeleton", "rgb_mask", "rgb_parts", "rgbd_mask", "rgbd_parts")
MODE_CHANNELS = {
    "skeleton": 6,
    "rgb_mask": 12,
    "rgb_parts": 21,
    "rgbd_mask": 13,
    "rgbd_parts": 27,
}

_MAGIC = b"NRCS"
_VERSION = 1
_HEADER = struct.Struct("<4sIBIII")


@dataclass
class Stack:
    channels: np.ndarray  # (C, H, W) float32
    mode: str

    @property
    def background(self) -> np.ndarray:
        return self.channels[-3:]


def from_bytes(blob: bytes, source: str = "<bytes>") -> Stack:
    if len(blob) < _HEADER.size:
        raise FormatError(f"{source}: truncated header")
    magic, version, mode_code, C, H, W = _HEADER.unpack_from(blob)
    if magic != _MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r}")
    if version != _VERSION:
        raise FormatError(f"{source}: unsupported version {version}")
    if mode_code >= len(MODES):
        raise FormatError(f"{source}: unknown mode code {mode_code}")
    mode = MODES[mode_code]
    if C != MODE_CHANNELS[mode]:
        raise FormatError(f"{source}: C={C} inconsistent with mode {mode}")
    if len(blob) != _HEADER.size + C * H * W * 4:
        raise FormatError(f"{source}: wrong payload size")
    data = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).reshape(C, H, W)
    return Stack(channels=data.copy(), mode=mode)


def to_bytes(stack: Stack) -> bytes:
    C, H, W = stack.channels.shape
    header = _HEADER.pack(_MAGIC, _VERSION, MODES.index(stack.mode), C, H, W)
    return header + np.ascontiguousarray(stack.channels, dtype="<f4").tobytes()


def read(path) -> Stack:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except FileNotFoundError as exc:
        raise FormatError(f"stack file not found: {path}") from exc
    return from_bytes(blob, source=str(path))


def write(stack: Stack, path) -> None:
    Path(path).write_bytes(to_bytes(stack))
