"""End-to-end dataset assembly and reenactment.

build_dataset renders, per frame, an unlit conditioning stack (the network
input X) and a differently-shaded ground truth image (diffuse lighting plus
a projected ground-shadow approximation, composited over the background
plate) so the translation network has a real but learnable gap to close.
Output trees are self-contained and byte-deterministic given a seed.
"""

from __future__ import annotations

import hashlib
import json
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .charmesh import (
    CharacterSpec,
    PosedMesh,
    load_character,
    make_sample_character,
    pose_vertices,
    save_character,
)
from .conditioning import (
    ConditioningMode,
    compose,
    read_stack,
    write_stack,
    write_stack_preview,
)
from .errors import AssetError, FormatError, InvalidSpecError
from .kinematics import Motion, load_motion, load_rig, save_motion
from .motions import MOTION_KINDS, make_motion
from .raster import (
    Camera,
    DiffuseShading,
    RoomBackground,
    background_from_dict,
    load_camera,
    make_default_camera,
    render,
    render_background,
    render_skeleton,
    save_camera,
    save_png,
    silhouette_mask,
)
from .retarget import RetargetConfig, apply_root_offset, retarget_sequence, smooth_trajectories


@dataclass
class DatasetConfig:
    out_dir: str = "dataset"
    resolution: int = 256
    mode: str = "rgbd_parts"
    n_frames: int = 200
    fps: float = 30.0
    seed: int = 0
    motion_kind: str = "walk"
    motion_path: str | None = None
    character_path: str | None = None
    character_spec: dict = field(default_factory=dict)
    camera_path: str | None = None
    background: dict = field(default_factory=dict)
    smoothing_sigma: float = 1.0
    val_fraction: float = 0.1
    supersample: int = 1
    workers: int = 1
    resume: bool = False
    preview: bool = False
    light_dir: tuple = (0.35, 0.75, 0.55)
    ambient: float = 0.35
    shadow_strength: float = 0.45

    @classmethod
    def from_dict(cls, data: dict) -> "DatasetConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}
        bad = set(data) - known
        if bad:
            raise InvalidSpecError(f"unknown dataset config fields: {sorted(bad)}")
        return cls(**data)


def _resolve_assets(cfg: DatasetConfig):
    """Load/construct camera, character, background, motion. Validation-only:
    nothing is written; errors surface before any output exists."""
    ConditioningMode(cfg.mode)  # raises ValueError on unknown mode
    if cfg.camera_path is not None:
        cam = load_camera(cfg.camera_path)
    else:
        cam = make_default_camera(cfg.resolution, cfg.resolution)
    if cfg.character_path is not None:
        mesh, skel = load_character(cfg.character_path)
    else:
        spec_fields = dict(cfg.character_spec)
        spec_fields.setdefault("texture_seed", cfg.seed)
        mesh, skel = make_sample_character(CharacterSpec.from_dict(spec_fields))
    scene = background_from_dict(cfg.background) if cfg.background else RoomBackground()
    if cfg.motion_path is not None:
        motion = load_motion(cfg.motion_path)
    else:
        if cfg.motion_kind not in MOTION_KINDS:
            raise InvalidSpecError(f"unknown motion kind {cfg.motion_kind!r}")
        motion = make_motion(
            cfg.motion_kind, skel, cfg.n_frames, fps=cfg.fps, seed=cfg.seed
        )
    return cam, mesh, skel, scene, motion


def _ground_truth_frame(posed, cam, bg_img, scene, cfg) -> np.ndarray:
    shading = DiffuseShading(light_dir=tuple(cfg.light_dir), ambient=cfg.ambient)
    lit = render(posed, cam, shading=shading, supersample=cfg.supersample)
    img = bg_img.copy()
    if isinstance(scene, RoomBackground) and cfg.shadow_strength > 0:
        l = np.asarray(cfg.light_dir, dtype=np.float64)
        if l[1] > 1e-6:
            v = posed.vertices
            t = (v[:, 1] - scene.floor_y) / l[1]
            flat = v - t[:, None] * l
            smask = silhouette_mask(cam, flat, posed.mesh.triangles)
            linear = (img + 1.0) / 2.0
            linear[smask] *= 1.0 - cfg.shadow_strength
            img = (2.0 * linear - 1.0).astype(np.float32)
    img[lit.coverage] = lit.color[lit.coverage]
    return img


def _conditioning_frame(posed, skel, pose, cam, bg_img, mode, supersample, frame_index):
    out = render(posed, cam, supersample=supersample)
    skel_img = None
    if mode is ConditioningMode.skeleton:
        skel_img = render_skeleton(skel, pose, cam)
    return compose(out, bg_img, mode, skeleton_rgb=skel_img, frame_index=frame_index)


def build_dataset(cfg: DatasetConfig) -> dict:
    """Render the full paired corpus; returns the manifest dict."""
    cam, mesh, skel, scene, motion = _resolve_assets(cfg)
    mode = ConditioningMode(cfg.mode)
    out_dir = Path(cfg.out_dir)

    stacks_dir = out_dir / "stacks"
    targets_dir = out_dir / "targets"
    previews_dir = out_dir / "previews"
    if not cfg.resume:
        for d in (stacks_dir, targets_dir, previews_dir):
            if d.exists():
                shutil.rmtree(d)
    out_dir.mkdir(parents=True, exist_ok=True)
    stacks_dir.mkdir(exist_ok=True)
    targets_dir.mkdir(exist_ok=True)
    if cfg.preview:
        previews_dir.mkdir(exist_ok=True)

    # self-contained copies of the resolved assets
    save_camera(cam, out_dir / "camera.json")
    save_character(mesh, skel, out_dir / "character.obj")
    save_motion(motion, out_dir / "motion.json")

    bg_img = render_background(scene, cam)
    save_png(bg_img, out_dir / "background.png")

    verts = pose_vertices(mesh, skel, motion.frames)
    if cfg.smoothing_sigma > 0 and len(motion) > 1:
        verts = smooth_trajectories(verts, cfg.smoothing_sigma)

    T = len(motion)
    n_val = int(round(cfg.val_fraction * T))
    entries = [None] * T

    def do_frame(t: int):
        stack_rel = f"stacks/f{t:05d}.nrcs"
        target_rel = f"targets/f{t:05d}.png"
        stack_path = out_dir / stack_rel
        target_path = out_dir / target_rel
        if not (cfg.resume and stack_path.exists() and target_path.exists()):
            posed = PosedMesh(vertices=verts[t], mesh=mesh)
            stack = _conditioning_frame(
                posed, skel, motion.frames[t], cam, bg_img, mode, cfg.supersample, t
            )
            write_stack(stack, stack_path)
            gt = _ground_truth_frame(posed, cam, bg_img, scene, cfg)
            save_png(gt, target_path)
            if cfg.preview:
                write_stack_preview(stack, previews_dir / f"f{t:05d}.png")
        entries[t] = {
            "frame_index": t,
            "stack": stack_rel,
            "target": target_rel,
            "split": "val" if t >= T - n_val else "train",
        }

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            list(pool.map(do_frame, range(T)))
    else:
        for t in range(T):
            do_frame(t)

    manifest = {
        "version": 1,
        "resolution": [cam.width, cam.height],
        "mode": mode.value,
        "fps": motion.fps,
        "seed": cfg.seed,
        "smoothing_sigma": cfg.smoothing_sigma,
        "camera": "camera.json",
        "character": "character.obj",
        "background": "background.png",
        "entries": entries,
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return manifest


def validate_manifest(manifest_path) -> dict:
    """Check every referenced file exists and every stack parses with the
    manifest's mode/resolution. Raises FormatError naming the frame."""
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise AssetError(f"manifest not found: {manifest_path}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    base = manifest_path.parent
    for key in ("camera", "character", "background"):
        if not (base / manifest[key]).exists():
            raise AssetError(f"manifest references missing {key}: {manifest[key]}")
    W, H = manifest["resolution"]
    seen = set()
    for entry in manifest["entries"]:
        t = entry["frame_index"]
        if t in seen:
            raise FormatError(f"duplicate frame index {t}")
        seen.add(t)
        if not (base / entry["target"]).exists():
            raise FormatError(f"frame {t}: missing target {entry['target']}")
        try:
            stack = read_stack(base / entry["stack"])
        except FormatError as exc:
            raise FormatError(f"frame {t}: {exc}") from exc
        if stack.mode.value != manifest["mode"]:
            raise FormatError(f"frame {t}: stack mode {stack.mode.value} != manifest")
        if stack.channels.shape[1:] != (H, W):
            raise FormatError(
                f"frame {t}: stack is {stack.channels.shape[2]}x{stack.channels.shape[1]}, "
                f"manifest says {W}x{H}"
            )
    return manifest


@dataclass
class ReenactConfig:
    source_rig: str = ""
    source_motion: str = ""
    target_character: str = ""
    out_dir: str = "reenact_out"
    mode: str = "rgbd_parts"
    camera_path: str | None = None
    resolution: int = 256
    background: dict = field(default_factory=dict)
    train_motion: str | None = None
    smoothing_sigma: float = 1.0
    supersample: int = 1
    seed: int = 0
    preview: bool = False
    retarget: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> "ReenactConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}
        bad = set(data) - known
        if bad:
            raise InvalidSpecError(f"unknown reenact config fields: {sorted(bad)}")
        return cls(**data)


def reenact(cfg: ReenactConfig) -> dict:
    """Retarget source motion onto the target character and emit stacks
    ready for translator inference. Returns the written index dict."""
    src_skel = load_rig(cfg.source_rig)
    src_motion = load_motion(cfg.source_motion)
    mesh, trgt_skel = load_character(cfg.target_character)
    mode = ConditioningMode(cfg.mode)
    if cfg.camera_path is not None:
        cam = load_camera(cfg.camera_path)
    else:
        cam = make_default_camera(cfg.resolution, cfg.resolution)
    scene = background_from_dict(cfg.background) if cfg.background else RoomBackground()
    rt_cfg = RetargetConfig(**cfg.retarget) if cfg.retarget else RetargetConfig()

    motion, report = retarget_sequence(src_skel, src_motion, trgt_skel, rt_cfg)
    if cfg.train_motion is not None:
        train = load_motion(cfg.train_motion)
        motion = apply_root_offset(
            motion,
            [p.root_translation for p in train.frames],
            [p.root_translation for p in motion.frames],
        )

    out_dir = Path(cfg.out_dir)
    stacks_dir = out_dir / "stacks"
    if stacks_dir.exists():
        shutil.rmtree(stacks_dir)
    stacks_dir.mkdir(parents=True)
    previews_dir = out_dir / "previews"
    if cfg.preview:
        previews_dir.mkdir(exist_ok=True)

    bg_img = render_background(scene, cam)
    verts = pose_vertices(mesh, trgt_skel, motion.frames)
    if cfg.smoothing_sigma > 0 and len(motion) > 1:
        verts = smooth_trajectories(verts, cfg.smoothing_sigma)

    entries = []
    for t in range(len(motion)):
        posed = PosedMesh(vertices=verts[t], mesh=mesh)
        stack = _conditioning_frame(
            posed, trgt_skel, motion.frames[t], cam, bg_img, mode, cfg.supersample, t
        )
        rel = f"stacks/f{t:05d}.nrcs"
        write_stack(stack, out_dir / rel)
        if cfg.preview:
            write_stack_preview(stack, previews_dir / f"f{t:05d}.png")
        entries.append({"frame_index": t, "stack": rel})

    index = {
        "version": 1,
        "resolution": [cam.width, cam.height],
        "mode": mode.value,
        "fps": motion.fps,
        "entries": entries,
        "retarget_report": report.to_dict(),
    }
    with open(out_dir / "reenact_index.json", "w") as fh:
        json.dump(index, fh, indent=1, sort_keys=True)
    save_motion(motion, out_dir / "retargeted_motion.json")
    return index


def hash_tree(root) -> str:
    """SHA-256 over sorted relative paths and file contents."""
    root = Path(root)
    h = hashlib.sha256()
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        h.update(str(path.relative_to(root)).encode())
        h.update(path.read_bytes())
    return h.hexdigest()
