import io
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from charpipe.editservice import create_app
from charpipe.kinematics import Pose, fk_keypoints
from charpipe.retarget import RetargetConfig, solve_keypoint_ik


@pytest.fixture(scope="module")
def client(asset_dir):
    app = create_app(
        default_character=str(asset_dir / "character.obj"),
        default_camera=str(asset_dir / "camera64.json"),
        resolution=64,
    )
    with TestClient(app) as c:
        yield c


def make_session(client):
    resp = client.post("/session", json={})
    assert resp.status_code == 200
    return resp.json()


def test_session_create_and_defaults(client):
    data = make_session(client)
    assert "id" in data
    assert len(data["joints"]) > 10
    assert data["camera"]["width"] == 64
    d = client.get("/defaults").json()
    assert d["resolution"] == 64
    assert d["translator"] is False


def test_session_bad_path_422(client):
    resp = client.post("/session", json={"character": "/nope/missing.obj"})
    assert resp.status_code == 422


def test_sessions_are_independent(client, tiny_character):
    mesh, skel = tiny_character
    a = make_session(client)
    b = make_session(client)
    kp = a["keypoints"][5]
    world = next(j for j in a["joints"] if j["name"] == kp)["world"]
    target = [world[0] + 0.05, world[1], world[2]]
    client.post(f"/session/{a['id']}/ik", json={"handles": [{"name": kp, "target": target}]})
    state_a = client.get(f"/session/{a['id']}").json()
    state_b = client.get(f"/session/{b['id']}").json()
    assert state_a["pose"] != state_b["pose"]
    rest = Pose.rest(skel)
    np.testing.assert_allclose(state_b["pose"]["rots"], rest.joint_rotations, atol=1e-12)


def test_unknown_session_404(client):
    assert client.get("/session/deadbeef").status_code == 404
    assert client.get("/session/deadbeef/preview.png").status_code == 404
    assert (
        client.post("/session/deadbeef/ik", json={"handles": [{"name": "x", "target": [0, 0, 0]}]}).status_code
        == 404
    )


def test_fixed_point_handle_leaves_pose(client, tiny_character):
    mesh, skel = tiny_character
    data = make_session(client)
    sid = data["id"]
    name = "l_hand"
    world = next(j for j in data["joints"] if j["name"] == name)["world"]
    resp = client.post(
        f"/session/{sid}/ik", json={"handles": [{"name": name, "target": world}]}
    )
    body = resp.json()
    assert body["residual"] < 1e-10
    rest = Pose.rest(skel)
    np.testing.assert_allclose(
        np.asarray(body["pose"]["rots"]), rest.joint_rotations, atol=1e-6
    )
    np.testing.assert_allclose(body["pose"]["root_t"], [0, 0, 0], atol=1e-6)


def test_moved_handle_matches_offline_solver(client, tiny_character):
    mesh, skel = tiny_character
    data = make_session(client)
    sid = data["id"]
    name = "l_hand"
    world = np.array(next(j for j in data["joints"] if j["name"] == name)["world"])
    target = world + np.array([-0.06, 0.08, 0.0])  # 10 cm, within reach

    resp = client.post(
        f"/session/{sid}/ik", json={"handles": [{"name": name, "target": list(target)}]}
    )
    body = resp.json()
    assert body["residual"] < 1e-6
    assert body["converged"]

    sol = solve_keypoint_ik(
        skel,
        np.array([skel.name_to_index[name]]),
        target[None, :],
        Pose.rest(skel),
        RetargetConfig(),
        lock_root_translation=True,
    )
    np.testing.assert_allclose(
        np.asarray(body["pose"]["rots"]), sol.pose.joint_rotations, atol=1e-6
    )
    # other keypoints moved continuously: bounded displacement
    after = {j["name"]: np.array(j["world"]) for j in body["joints"]}
    before = {j["name"]: np.array(j["world"]) for j in data["joints"]}
    for kp in data["keypoints"]:
        assert np.linalg.norm(after[kp] - before[kp]) < 0.5


def test_unreachable_handle_flags_nonconvergence(client):
    data = make_session(client)
    sid = data["id"]
    resp = client.post(
        f"/session/{sid}/ik",
        json={"handles": [{"name": "l_hand", "target": [50.0, 50.0, 50.0]}]},
    )
    assert resp.status_code == 200
    body = resp.json()
    assert body["converged"] is False
    assert np.all(np.isfinite(np.asarray(body["pose"]["rots"])))


def test_unknown_keypoint_422(client):
    data = make_session(client)
    resp = client.post(
        f"/session/{data['id']}/ik",
        json={"handles": [{"name": "not_a_joint", "target": [0, 0, 0]}]},
    )
    assert resp.status_code == 422


def test_ik_idempotent_for_identical_handles(client):
    data = make_session(client)
    sid = data["id"]
    handles = {"handles": [{"name": "r_hand", "target": [-0.5, 1.1, 0.1]}]}
    a = client.post(f"/session/{sid}/ik", json=handles).json()
    b = client.post(f"/session/{sid}/ik", json=handles).json()
    np.testing.assert_allclose(
        np.asarray(a["pose"]["rots"]), np.asarray(b["pose"]["rots"]), atol=1e-9
    )


def test_preview_modes_and_stability(client):
    data = make_session(client)
    sid = data["id"]
    a = client.get(f"/session/{sid}/preview.png?mode=composite")
    b = client.get(f"/session/{sid}/preview.png?mode=composite")
    assert a.status_code == 200 and a.headers["content-type"] == "image/png"
    assert a.content == b.content  # rest-pose preview is bit-stable

    depth = client.get(f"/session/{sid}/preview.png?mode=depth")
    img = Image.open(io.BytesIO(depth.content))
    assert img.mode == "L"  # single channel

    masks = client.get(f"/session/{sid}/preview.png?mode=masks")
    arr = np.asarray(Image.open(io.BytesIO(masks.content)).convert("RGB"))
    assert len(np.unique(arr.reshape(-1, 3), axis=0)) >= 6  # parts + background

    assert client.get(f"/session/{sid}/preview.png?mode=bogus").status_code == 422


def test_preview_changes_iff_pose_changes(client):
    data = make_session(client)
    sid = data["id"]
    before = client.get(f"/session/{sid}/preview.png?mode=composite").content
    world = next(j for j in data["joints"] if j["name"] == "r_hand")["world"]
    # fixed-point request: pose unchanged -> preview unchanged
    client.post(f"/session/{sid}/ik", json={"handles": [{"name": "r_hand", "target": world}]})
    same = client.get(f"/session/{sid}/preview.png?mode=composite").content
    assert same == before
    # real move -> preview changes
    target = [world[0], world[1] + 0.15, world[2]]
    client.post(f"/session/{sid}/ik", json={"handles": [{"name": "r_hand", "target": target}]})
    after = client.get(f"/session/{sid}/preview.png?mode=composite").content
    assert after != before


def test_neural_mode_501_when_unconfigured(client):
    data = make_session(client)
    resp = client.get(f"/session/{data['id']}/preview.png?mode=neural")
    assert resp.status_code == 501


def test_delete_session(client):
    data = make_session(client)
    sid = data["id"]
    assert client.delete(f"/session/{sid}").status_code == 200
    assert client.get(f"/session/{sid}").status_code == 404
