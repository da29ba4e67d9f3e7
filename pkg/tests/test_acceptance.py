"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest -v -s tests/test_acceptance.py`` to see the lines live.
Tolerances are pinned in the assertions.
"""

import time
from contextlib import contextmanager

import numpy as np
import pytest
from fastapi.testclient import TestClient

from charpipe.charmesh import CharacterSpec, PosedMesh, make_sample_character, skin
from charpipe.conditioning import (
    MODE_CHANNELS,
    ConditioningMode,
    ConditioningStack,
    compose,
    read_stack,
    stack_from_bytes,
    write_stack,
)
from charpipe.editservice import create_app
from charpipe.errors import FormatError
from charpipe.kinematics import (
    Joint,
    Motion,
    Pose,
    Skeleton,
    fk_keypoints,
    fk_keypoints_with_jacobian,
    rescale_bones,
)
from charpipe.motions import make_motion
from charpipe.pipeline import DatasetConfig, build_dataset, hash_tree
from charpipe.raster import make_default_camera, render, render_background, RoomBackground
from charpipe.retarget import (
    RetargetConfig,
    retarget_pose,
    retarget_sequence,
    smooth_trajectories,
)
from charpipe.charmesh import sample_skeleton


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"\nACCEPTANCE FAIL: {name}")
        raise
    print(f"\nACCEPTANCE PASS: {name}")


def random_pose(rng, skel, rot=0.5, trans=0.3):
    return Pose(
        rng.normal(size=3) * trans,
        rng.normal(size=3) * rot,
        rng.normal(size=(skel.n_joints - 1, 3)) * rot,
    )


def test_identity_retarget():
    with criterion("identity retarget: residual < 1e-10, keypoints < 1e-6, < 5 s"):
        skel = sample_skeleton(CharacterSpec())
        motion = make_motion("walk", skel, 100, seed=11)
        t0 = time.perf_counter()
        out, report = retarget_sequence(skel, motion, skel)
        elapsed = time.perf_counter() - t0
        assert max(report.residuals) < 1e-10
        worst_kp = 0.0
        for src_pose, got_pose in zip(motion.frames, out.frames):
            dev = np.abs(fk_keypoints(skel, got_pose) - fk_keypoints(skel, src_pose)).max()
            worst_kp = max(worst_kp, dev)
        assert worst_kp < 1e-6
        assert elapsed < 5.0


def test_scale_invariance_with_bone_rescaling():
    with criterion("scale invariance: x2 rig, 100 random poses, keypoints within 1e-4"):
        src = sample_skeleton(CharacterSpec())
        joints = tuple(
            Joint(j.name, j.parent, np.asarray(j.offset) * 2.0) for j in src.joints
        )
        trgt = Skeleton(joints=joints, keypoint_names=src.keypoint_names)
        rescaled = rescale_bones(trgt, src)
        rng = np.random.default_rng(42)
        cfg = RetargetConfig(max_iterations=100)
        for _ in range(100):
            pose = random_pose(rng, src)
            solved, residual = retarget_pose(src, pose, trgt, init=None, cfg=cfg)
            dev = np.abs(
                fk_keypoints(rescaled, solved) - fk_keypoints(src, pose)
            ).max()
            assert dev < 1e-4
            assert residual < 1e-8


def test_ik_jacobian_against_finite_differences():
    with criterion("IK Jacobian: analytic vs central FD, 100 configs, rel err < 1e-6"):
        rng = np.random.default_rng(7)
        skel = sample_skeleton(CharacterSpec())
        kp_idx = skel.keypoint_indices
        for _ in range(100):
            pose = random_pose(rng, skel, rot=1.0, trans=1.0)
            _, jac = fk_keypoints_with_jacobian(skel, pose, kp_idx)
            theta = np.concatenate(
                [pose.root_translation, pose.root_rotation, pose.joint_rotations.ravel()]
            )

            def kp_at(th):
                p = Pose(th[0:3], th[3:6], th[6:].reshape(-1, 3))
                return fk_keypoints(skel, p).ravel()

            eps = 1e-6
            fd = np.empty_like(jac)
            for c in range(theta.size):
                d = np.zeros_like(theta)
                d[c] = eps
                fd[:, c] = (kp_at(theta + d) - kp_at(theta - d)) / (2 * eps)
            rel = np.linalg.norm(jac - fd) / np.linalg.norm(fd)
            assert rel < 1e-6


@pytest.fixture(scope="module")
def full_character():
    return make_sample_character()


def test_mask_partition(full_character):
    with criterion("mask partition: 100 random frames at 256^2, disjoint, union = coverage"):
        mesh, skel = full_character
        cam = make_default_camera(256, 256)
        rng = np.random.default_rng(3)
        for _ in range(100):
            pose = random_pose(rng, skel, rot=0.35, trans=0.1)
            out = render(skin(mesh, skel, pose), cam)
            total = out.masks.astype(np.int32).sum(axis=0)
            assert total.max() <= 1  # pairwise disjoint
            np.testing.assert_array_equal(total > 0, out.coverage)
            assert out.coverage.any()


@pytest.fixture(scope="module")
def desk_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("accept_ds") / "tree"
    cfg = DatasetConfig(
        out_dir=str(out),
        resolution=64,
        mode="rgbd_parts",
        n_frames=20,
        seed=9,
        character_spec={"density": 0.5, "texture_size": 64},
    )
    manifest = build_dataset(cfg)
    return out, cfg, manifest


def test_hadamard_partition_identity(desk_dataset):
    with criterion("Hadamard partition: sum of I_p equals I on coverage, bit-exact, all frames"):
        out_dir, cfg, manifest = desk_dataset
        mesh, skel = make_sample_character(
            CharacterSpec(density=0.5, texture_size=64, texture_seed=cfg.seed)
        )
        from charpipe.kinematics import load_motion
        from charpipe.charmesh import pose_vertices

        motion = load_motion(out_dir / "motion.json")
        cam = make_default_camera(64, 64)
        verts = pose_vertices(mesh, skel, motion.frames)
        verts = smooth_trajectories(verts, cfg.smoothing_sigma)
        for entry in manifest["entries"]:
            t = entry["frame_index"]
            stack = read_stack(out_dir / entry["stack"])
            rendered = render(PosedMesh(vertices=verts[t], mesh=mesh), cam)
            color = np.moveaxis(rendered.color, -1, 0)
            total = np.zeros_like(color)
            for p in range(6):
                total = total + stack.channels[3 * p : 3 * p + 3]
            np.testing.assert_array_equal(
                total[:, rendered.coverage], color[:, rendered.coverage]
            )
            assert np.all(total[:, ~rendered.coverage] == 0.0)


def test_occlusion_correctness():
    with criterion("occlusion: front plane owns overlap, depth analytic within 1e-6"):
        from charpipe.charmesh import RiggedMesh

        cam = make_default_camera(96, 96, eye=(0, 0, 3.0), target=(0, 0, 0), near=0.1, far=10.0)
        z_front, z_back = 1.0, 2.0  # camera-space depths (camera looks -z from +3)
        # world z for camera at +3 looking toward origin: cam z = 3 - world_z
        wz_front, wz_back = 3.0 - z_front, 3.0 - z_back
        s = 0.4
        verts = np.array(
            [
                (-s, -s, wz_front), (s, -s, wz_front), (s, s, wz_front), (-s, s, wz_front),
                (-3 * s, -3 * s, wz_back), (3 * s, -3 * s, wz_back),
                (3 * s, 3 * s, wz_back), (-3 * s, 3 * s, wz_back),
            ]
        )
        tris = np.array([[0, 1, 2], [0, 2, 3], [4, 5, 6], [4, 6, 7]], dtype=np.int32)
        mesh = RiggedMesh(
            vertices=verts,
            triangles=tris,
            uvs=np.zeros((8, 2)),
            texture=np.ones((2, 2, 3), dtype=np.float32),
            skin_joints=np.zeros((8, 4), dtype=np.int32),
            skin_weights=np.column_stack(
                [np.ones(8, dtype=np.float32), np.zeros((8, 3), dtype=np.float32)]
            ),
            part_labels=np.array([3, 3, 4, 4], dtype=np.uint8),
        )
        out = render(PosedMesh(vertices=verts, mesh=mesh), cam)
        front, back = out.masks[2], out.masks[3]
        assert front.any() and back.any()
        assert not (front & back).any()
        # the front plane's screen footprint is owned 100% by the front mask
        d_front = 2 * (z_front - cam.near) / (cam.far - cam.near) - 1
        d_back = 2 * (z_back - cam.near) / (cam.far - cam.near) - 1
        np.testing.assert_allclose(out.depth[front], d_front, atol=1e-6)
        np.testing.assert_allclose(out.depth[back], d_back, atol=1e-6)


def test_smoothing_criteria():
    with criterion("smoothing: constant <= 1e-12, linear interior 1e-9, conv oracle 1e-9"):
        rng = np.random.default_rng(5)
        const = np.tile(rng.normal(size=(1, 7, 3)), (30, 1, 1))
        np.testing.assert_allclose(smooth_trajectories(const, 1.0), const, atol=1e-12)

        T = 40
        a, b = rng.normal(size=3), rng.normal(size=3)
        lin = np.stack([(a + b * t)[None, :] for t in range(T)])
        sm = smooth_trajectories(lin, 1.0)
        np.testing.assert_allclose(sm[3 : T - 3], lin[3 : T - 3], atol=1e-9)

        frames = rng.normal(size=(25, 4, 3))
        radius = 3
        ref = np.zeros_like(frames)
        for t in range(25):
            acc = np.zeros((4, 3))
            wsum = 0.0
            for i in range(-radius, radius + 1):
                s = t + i
                if 0 <= s < 25:
                    w = np.exp(-(i**2) / 2.0)
                    acc += w * frames[s]
                    wsum += w
            ref[t] = acc / wsum
        np.testing.assert_allclose(smooth_trajectories(frames, 1.0), ref, atol=1e-9)


def test_dataset_determinism(tmp_path):
    with criterion("determinism: same seed -> byte-identical dataset tree"):
        def cfg(d):
            return DatasetConfig(
                out_dir=str(d),
                resolution=48,
                n_frames=8,
                seed=21,
                character_spec={"density": 0.4, "texture_size": 64},
                workers=2,
            )

        build_dataset(cfg(tmp_path / "a"))
        build_dataset(cfg(tmp_path / "b"))
        assert hash_tree(tmp_path / "a") == hash_tree(tmp_path / "b")


def test_rasterizer_performance(full_character):
    with criterion("raster performance: 10k-tri character, 256^2, < 100 ms median"):
        mesh, skel = full_character
        assert mesh.n_triangles >= 10_000
        cam = make_default_camera(256, 256)
        posed = skin(mesh, skel, Pose.rest(skel))
        render(posed, cam)  # JIT warmup, excluded from timing
        times = []
        for _ in range(11):
            t0 = time.perf_counter()
            render(posed, cam)
            times.append(time.perf_counter() - t0)
        median_ms = sorted(times)[len(times) // 2] * 1000
        print(f"  [median render {median_ms:.1f} ms]", end=" ")
        assert median_ms < 100.0


def test_stack_roundtrip_1000(tmp_path):
    with criterion("stack round-trip: 1000 random stacks bit-exact, bad headers rejected"):
        rng = np.random.default_rng(10)
        modes = list(ConditioningMode)
        path = tmp_path / "s.nrcs"
        for i in range(1000):
            mode = modes[int(rng.integers(0, len(modes)))]
            h = int(rng.integers(2, 12))
            w = int(rng.integers(2, 12))
            data = rng.uniform(-1, 1, size=(MODE_CHANNELS[mode], h, w)).astype(np.float32)
            stack = ConditioningStack(channels=data, mode=mode)
            write_stack(stack, path)
            back = read_stack(path)
            assert back.mode == mode
            np.testing.assert_array_equal(back.channels, data)
        # malformed headers rejected
        good = path.read_bytes()
        with pytest.raises(FormatError):
            stack_from_bytes(b"OOPS" + good[4:])
        with pytest.raises(FormatError):
            stack_from_bytes(good[:15])
        with pytest.raises(FormatError):
            stack_from_bytes(good + b"extra")


def test_edit_service_fixed_point_and_latency(tmp_path):
    with criterion("edit-service: fixed point within 1e-6, preview < 200 ms at 256^2"):
        from charpipe.charmesh import save_character
        from charpipe.raster import save_camera

        mesh, skel = make_sample_character(CharacterSpec(density=0.5, texture_size=128))
        save_character(mesh, skel, tmp_path / "c.obj")
        save_camera(make_default_camera(256, 256), tmp_path / "cam.json")
        app = create_app(
            default_character=str(tmp_path / "c.obj"),
            default_camera=str(tmp_path / "cam.json"),
            resolution=256,
        )
        with TestClient(app) as client:
            sess = client.post("/session", json={}).json()
            sid = sess["id"]
            world = next(j for j in sess["joints"] if j["name"] == "r_wrist")["world"]
            body = client.post(
                f"/session/{sid}/ik",
                json={"handles": [{"name": "r_wrist", "target": world}]},
            ).json()
            assert body["residual"] < 1e-10
            rest = Pose.rest(skel)
            np.testing.assert_allclose(
                np.asarray(body["pose"]["rots"]), rest.joint_rotations, atol=1e-6
            )
            client.get(f"/session/{sid}/preview.png?mode=composite")  # warmup
            t0 = time.perf_counter()
            resp = client.get(f"/session/{sid}/preview.png?mode=composite")
            latency_ms = (time.perf_counter() - t0) * 1000
            assert resp.status_code == 200
            print(f"  [preview latency {latency_ms:.0f} ms]", end=" ")
            assert latency_ms < 200.0
