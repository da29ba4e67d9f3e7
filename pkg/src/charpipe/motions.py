"""Procedural motion library for the sample characters.

Seedable walk/wave/kick/idle generators targeting the sample rig's joint
names; curves are applied only to joints the skeleton actually has, so
motions degrade gracefully on reduced rigs.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidSpecError
from .kinematics import Motion, Pose, Skeleton

MOTION_KINDS = ("walk", "wave", "kick", "idle")


def make_motion(
    kind: str,
    skel: Skeleton,
    n_frames: int,
    *,
    fps: float = 30.0,
    seed: int = 0,
    amplitude: float = 1.0,
) -> Motion:
    if kind not in MOTION_KINDS:
        raise InvalidSpecError(f"unknown motion kind {kind!r}, have {MOTION_KINDS}")
    if n_frames < 1:
        raise InvalidSpecError("n_frames must be >= 1")
    rng = np.random.default_rng(seed)
    gen = {"walk": _walk, "wave": _wave, "kick": _kick, "idle": _idle}[kind]
    frames = []
    # smooth per-joint idle noise shared by all kinds, seeded
    noise = _NoiseField(rng, skel.n_joints)
    for t in range(n_frames):
        s = t / fps
        rot = np.zeros((skel.n_joints - 1, 3))
        root_t = np.zeros(3)
        root_r = np.zeros(3)
        gen(skel, s, amplitude, rot, root_t, root_r)
        rot += noise.sample(s) * 0.02 * amplitude
        frames.append(Pose(root_t, root_r, rot))
    return Motion(fps=fps, frames=tuple(frames))


class _NoiseField:
    """Sum of three low-frequency sinusoids per joint channel."""

    def __init__(self, rng, n_joints):
        self.freq = rng.uniform(0.15, 0.7, size=(3, n_joints - 1, 3))
        self.phase = rng.uniform(0, 2 * np.pi, size=(3, n_joints - 1, 3))
        self.amp = rng.uniform(0.3, 1.0, size=(3, n_joints - 1, 3))

    def sample(self, s):
        return np.sum(self.amp * np.sin(2 * np.pi * self.freq * s + self.phase), axis=0)


def _set(skel: Skeleton, rot: np.ndarray, name: str, xyz) -> None:
    i = skel.name_to_index.get(name)
    if i is not None and i > 0:
        rot[i - 1] = xyz


def _walk(skel, s, a, rot, root_t, root_r):
    # in-place walk cycle: antiphase hip/shoulder swing, knee flexion, bob
    ph = 2 * np.pi * 1.4 * s
    swing = 0.55 * a * np.sin(ph)
    _set(skel, rot, "l_hip", [swing, 0, 0])
    _set(skel, rot, "r_hip", [-swing, 0, 0])
    knee = 0.5 * a
    _set(skel, rot, "l_knee", [knee * max(0.0, -np.sin(ph)) + 0.08, 0, 0])
    _set(skel, rot, "r_knee", [knee * max(0.0, np.sin(ph)) + 0.08, 0, 0])
    arm = 0.4 * a * np.sin(ph)
    _set(skel, rot, "l_shoulder", [-arm, 0, 0.12])
    _set(skel, rot, "r_shoulder", [arm, 0, -0.12])
    _set(skel, rot, "l_elbow", [0, -0.25 * a, 0])
    _set(skel, rot, "r_elbow", [0, 0.25 * a, 0])
    _set(skel, rot, "spine", [0.04 * np.sin(2 * ph), 0.06 * np.sin(ph), 0])
    root_t[1] = 0.025 * a * (1 - np.cos(2 * ph)) / 2
    root_r[1] = 0.07 * a * np.sin(ph)


def _wave(skel, s, a, rot, root_t, root_r):
    ph = 2 * np.pi * 1.0 * s
    raise_amt = 2.2 * a * min(1.0, s * 2.0)  # raise the arm over half a second
    _set(skel, rot, "r_shoulder", [0, 0, raise_amt])
    _set(skel, rot, "r_elbow", [0, 0, 0.6 * a + 0.5 * a * np.sin(2.2 * ph)])
    _set(skel, rot, "l_shoulder", [0, 0, -0.15 * a])
    _set(skel, rot, "spine", [0, 0, 0.05 * a * np.sin(ph)])
    root_r[2] = 0.03 * a * np.sin(ph)


def _kick(skel, s, a, rot, root_t, root_r):
    ph = 2 * np.pi * 0.8 * s
    kick = max(0.0, np.sin(ph)) ** 3
    _set(skel, rot, "r_hip", [-1.4 * a * kick, 0, 0])
    _set(skel, rot, "r_knee", [0.9 * a * max(0.0, np.sin(ph - 0.6)) ** 2, 0, 0])
    _set(skel, rot, "l_hip", [0.15 * a * kick, 0, 0])
    _set(skel, rot, "l_shoulder", [0.5 * a * kick, 0, 0.1])
    _set(skel, rot, "r_shoulder", [-0.5 * a * kick, 0, -0.1])
    _set(skel, rot, "spine", [-0.12 * a * kick, 0, 0])
    root_t[1] = -0.02 * a * kick


def _idle(skel, s, a, rot, root_t, root_r):
    ph = 2 * np.pi * 0.25 * s
    _set(skel, rot, "chest", [0.03 * a * np.sin(ph), 0, 0])  # breathing
    _set(skel, rot, "l_shoulder", [0, 0, 0.05 * a * np.sin(ph + 1.0)])
    _set(skel, rot, "r_shoulder", [0, 0, -0.05 * a * np.sin(ph + 1.3)])
    root_t[1] = 0.004 * a * np.sin(ph)
