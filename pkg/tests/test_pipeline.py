import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from charpipe.conditioning import read_stack
from charpipe.errors import CameraError, FormatError, NonFiniteError
from charpipe.kinematics import load_motion, save_motion, Motion, Pose
from charpipe.motions import make_motion
from charpipe.pipeline import (
    DatasetConfig,
    ReenactConfig,
    build_dataset,
    hash_tree,
    reenact,
    validate_manifest,
)


def small_cfg(out_dir, **kw):
    base = dict(
        out_dir=str(out_dir),
        resolution=48,
        mode="rgbd_parts",
        n_frames=6,
        seed=5,
        character_spec={"density": 0.35, "texture_size": 64},
        workers=1,
    )
    base.update(kw)
    return DatasetConfig.from_dict(base)


def test_dataset_build_and_determinism(tmp_path):
    cfg_a = small_cfg(tmp_path / "a")
    manifest = build_dataset(cfg_a)
    assert len(manifest["entries"]) == 6
    stack = read_stack(tmp_path / "a" / manifest["entries"][0]["stack"])
    assert stack.channels.shape == (27, 48, 48)
    # byte-identical re-run
    build_dataset(small_cfg(tmp_path / "b"))
    assert hash_tree(tmp_path / "a") == hash_tree(tmp_path / "b")


def test_dataset_different_seed_differs(tmp_path):
    build_dataset(small_cfg(tmp_path / "a"))
    build_dataset(small_cfg(tmp_path / "b", seed=6))
    assert hash_tree(tmp_path / "a") != hash_tree(tmp_path / "b")


def test_dataset_skeleton_mode_channels(tmp_path):
    manifest = build_dataset(small_cfg(tmp_path / "d", mode="skeleton", n_frames=2))
    stack = read_stack(tmp_path / "d" / manifest["entries"][0]["stack"])
    assert stack.channels.shape[0] == 6


def test_dataset_missing_camera_fails_before_output(tmp_path):
    out = tmp_path / "never"
    cfg = small_cfg(out, camera_path=str(tmp_path / "nope.json"))
    with pytest.raises(CameraError):
        build_dataset(cfg)
    assert not out.exists()


def test_dataset_workers_match_serial(tmp_path):
    build_dataset(small_cfg(tmp_path / "s", workers=1))
    build_dataset(small_cfg(tmp_path / "p", workers=4))
    assert hash_tree(tmp_path / "s") == hash_tree(tmp_path / "p")


def test_dataset_resume_completes_partial(tmp_path):
    out = tmp_path / "r"
    build_dataset(small_cfg(out))
    full_hash = hash_tree(out)
    # delete some outputs, resume, tree must be restored identically
    (out / "stacks" / "f00003.nrcs").unlink()
    (out / "targets" / "f00001.png").unlink()
    build_dataset(small_cfg(out, resume=True))
    assert hash_tree(out) == full_hash


def test_manifest_validation_detects_corruption(tmp_path):
    out = tmp_path / "v"
    build_dataset(small_cfg(out))
    manifest_path = out / "manifest.json"
    validate_manifest(manifest_path)  # clean tree passes

    blob = bytearray((out / "stacks" / "f00002.nrcs").read_bytes())
    blob[0:4] = b"BAD!"
    (out / "stacks" / "f00002.nrcs").write_bytes(bytes(blob))
    with pytest.raises(FormatError, match="frame 2"):
        validate_manifest(manifest_path)


def test_manifest_split_tags(tmp_path):
    manifest = build_dataset(small_cfg(tmp_path / "m", n_frames=10, val_fraction=0.2))
    splits = [e["split"] for e in manifest["entries"]]
    assert splits.count("val") == 2
    assert splits[-1] == "val" and splits[0] == "train"


# ---------------------------------------------------------------------------
# reenact
# ---------------------------------------------------------------------------

def test_reenact_identity_matches_dataset_stacks(tmp_path, tiny_character, asset_dir):
    # identical source/target rigs: emitted stacks equal build_dataset stacks
    # for the same motion, bit-exactly
    mesh, skel = tiny_character
    motion_path = asset_dir / "walk12.json"

    ds_dir = tmp_path / "ds"
    build_dataset(
        small_cfg(
            ds_dir,
            motion_path=str(motion_path),
            character_path=str(asset_dir / "character.obj"),
            n_frames=12,
        )
    )

    from charpipe.kinematics import save_rig

    save_rig(skel, tmp_path / "rig.json")
    re_dir = tmp_path / "re"
    reenact(
        ReenactConfig(
            source_rig=str(tmp_path / "rig.json"),
            source_motion=str(motion_path),
            target_character=str(asset_dir / "character.obj"),
            out_dir=str(re_dir),
            mode="rgbd_parts",
            resolution=48,
        )
    )
    ds_stacks = sorted((ds_dir / "stacks").iterdir())
    re_stacks = sorted((re_dir / "stacks").iterdir())
    assert len(ds_stacks) == len(re_stacks) == 12
    for a, b in zip(ds_stacks, re_stacks):
        assert a.read_bytes() == b.read_bytes()


def test_reenact_scaled_rig_same_shape(tmp_path, tiny_character, asset_dir):
    from charpipe.charmesh import CharacterSpec, make_sample_character, save_character
    from charpipe.kinematics import save_rig

    mesh, skel = tiny_character
    save_rig(skel, tmp_path / "rig.json")
    big, big_skel = make_sample_character(
        CharacterSpec(
            density=0.35,
            texture_size=64,
            arm_upper_length=0.36,
            leg_upper_length=0.5,
            torso_length=0.66,
        )
    )
    save_character(big, big_skel, tmp_path / "big.obj")
    out = reenact(
        ReenactConfig(
            source_rig=str(tmp_path / "rig.json"),
            source_motion=str(asset_dir / "walk12.json"),
            target_character=str(tmp_path / "big.obj"),
            out_dir=str(tmp_path / "re2"),
            mode="rgbd_mask",
            resolution=48,
        )
    )
    assert len(out["entries"]) == 12
    stack = read_stack(tmp_path / "re2" / out["entries"][0]["stack"])
    assert stack.channels.shape == (13, 48, 48)
    assert max(out["retarget_report"]["residuals"]) < 1e-4


def test_reenact_nan_motion_names_frame(tmp_path, tiny_character, asset_dir):
    from charpipe.kinematics import save_rig

    mesh, skel = tiny_character
    save_rig(skel, tmp_path / "rig.json")
    good = make_motion("idle", skel, 3, seed=0)
    bad_frame = Pose(
        np.array([np.nan, 0, 0]), np.zeros(3), np.zeros((skel.n_joints - 1, 3))
    )
    bad = Motion(fps=30, frames=(good.frames[0], good.frames[1], bad_frame))
    save_motion(bad, tmp_path / "bad.json")
    with pytest.raises(NonFiniteError, match="frame 2"):
        reenact(
            ReenactConfig(
                source_rig=str(tmp_path / "rig.json"),
                source_motion=str(tmp_path / "bad.json"),
                target_character=str(asset_dir / "character.obj"),
                out_dir=str(tmp_path / "re3"),
                resolution=48,
            )
        )


def test_apply_root_offset_via_train_motion(tmp_path, tiny_character, asset_dir):
    from charpipe.kinematics import save_rig

    mesh, skel = tiny_character
    save_rig(skel, tmp_path / "rig.json")
    # train motion displaced by a constant: reenact output roots must shift
    walk = load_motion(asset_dir / "walk12.json")
    shifted = Motion(
        fps=walk.fps,
        frames=tuple(
            Pose(p.root_translation + np.array([0.5, 0.0, 0.25]), p.root_rotation, p.joint_rotations)
            for p in walk.frames
        ),
    )
    save_motion(shifted, tmp_path / "train.json")
    reenact(
        ReenactConfig(
            source_rig=str(tmp_path / "rig.json"),
            source_motion=str(asset_dir / "walk12.json"),
            target_character=str(asset_dir / "character.obj"),
            out_dir=str(tmp_path / "re4"),
            resolution=48,
            train_motion=str(tmp_path / "train.json"),
        )
    )
    out_motion = load_motion(tmp_path / "re4" / "retargeted_motion.json")
    src_motion = load_motion(asset_dir / "walk12.json")
    deltas = [
        o.root_translation - s.root_translation
        for o, s in zip(out_motion.frames, src_motion.frames)
    ]
    np.testing.assert_allclose(deltas, [[0.5, 0.0, 0.25]] * 12, atol=1e-9)
