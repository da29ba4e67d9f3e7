import numpy as np
import pytest

from charpipe.charmesh import (
    CharacterSpec,
    RiggedMesh,
    load_character,
    make_sample_character,
    save_character,
    skin,
)
from charpipe.errors import InvalidSpecError, InvalidWeightsError, RigBindingError
from charpipe.kinematics import Joint, Pose, Skeleton, exp_rotation


@pytest.fixture(scope="module")
def small_character():
    return make_sample_character(CharacterSpec(density=0.45, texture_size=64))


def single_joint_rig():
    skel = Skeleton(joints=(Joint("j0", None, [0, 0, 0]),), keypoint_names=("j0",))
    verts = np.array([[0.1, 0, 0], [0, 0.2, 0], [0, 0, 0.3], [0.1, 0.1, 0.1]])
    mesh = RiggedMesh(
        vertices=verts,
        triangles=np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int32),
        uvs=np.zeros((4, 2)),
        texture=np.ones((4, 4, 3), dtype=np.float32),
        skin_joints=np.zeros((4, 4), dtype=np.int32),
        skin_weights=np.array([[1, 0, 0, 0]] * 4, dtype=np.float32),
        part_labels=np.array([1, 2], dtype=np.uint8),
    )
    return mesh, skel


def test_skin_identity_pose_is_identity(small_character):
    mesh, skel = small_character
    posed = skin(mesh, skel, Pose.rest(skel))
    np.testing.assert_allclose(posed.vertices, mesh.vertices, atol=1e-9)


def test_skin_single_joint_rigid_rotation():
    mesh, skel = single_joint_rig()
    w = np.array([0.2, 0.5, -0.4])
    pose = Pose(np.zeros(3), w, np.zeros((0, 3)))
    posed = skin(mesh, skel, pose)
    R = exp_rotation(w)
    np.testing.assert_allclose(posed.vertices, mesh.vertices @ R.T, atol=1e-12)


def test_skin_blend_lands_at_midpoint():
    # vertex weighted 0.5/0.5 between two joints, pose translates the child
    # chain: expected position is the mean of the two rigid images
    skel = Skeleton(
        joints=(Joint("a", None, [0, 0, 0]), Joint("b", 0, [1, 0, 0])),
        keypoint_names=("a", "b"),
    )
    v = np.array([[1.0, 0.5, 0.0]])
    mesh = RiggedMesh(
        vertices=v,
        triangles=np.zeros((0, 3), dtype=np.int32),
        uvs=np.zeros((1, 2)),
        texture=np.ones((2, 2, 3), dtype=np.float32),
        skin_joints=np.array([[0, 1, 0, 0]], dtype=np.int32),
        skin_weights=np.array([[0.5, 0.5, 0, 0]], dtype=np.float32),
        part_labels=np.zeros((0,), dtype=np.uint8),
    )
    # rotate root by pi/2 about z: joint a's image of v rotates about origin;
    # joint b sits at (1,0,0) -> rotates to (0,1,0), carrying v - b with it
    w = np.array([0.0, 0.0, np.pi / 2])
    pose = Pose(np.zeros(3), w, np.zeros((1, 3)))
    R = exp_rotation(w)
    img_a = R @ v[0]
    img_b = R @ (v[0] - np.array([1, 0, 0])) + R @ np.array([1, 0, 0])
    # both joints rotate with the root here, so images coincide; instead bend
    # only the child joint to separate them
    pose = Pose(np.zeros(3), np.zeros(3), np.array([[0.0, 0.0, np.pi / 2]]))
    img_a = v[0]  # joint a keeps rest transform
    img_b = np.array([1, 0, 0]) + R @ (v[0] - np.array([1, 0, 0]))
    posed = skin(mesh, skel, pose)
    np.testing.assert_allclose(posed.vertices[0], 0.5 * img_a + 0.5 * img_b, atol=1e-12)


def test_skin_rigid_equivariance(small_character):
    # a root-only rigid motion rotates the skinned mesh about the root joint
    # rest position and translates it
    mesh, skel = small_character
    rng = np.random.default_rng(0)
    rot = rng.normal(size=(skel.n_joints - 1, 3)) * 0.2
    base = skin(mesh, skel, Pose(np.zeros(3), np.zeros(3), rot)).vertices
    w = np.array([0.3, 0.6, -0.1])
    t = np.array([0.5, -0.2, 1.0])
    moved = skin(mesh, skel, Pose(t, w, rot)).vertices
    R = exp_rotation(w)
    pivot = skel.offsets[0]
    np.testing.assert_allclose(moved, (base - pivot) @ R.T + pivot + t, atol=1e-9)


def test_skin_bad_joint_reference():
    mesh, skel = single_joint_rig()
    mesh.skin_joints[0, 0] = 5
    with pytest.raises(RigBindingError):
        skin(mesh, skel, Pose.rest(skel))


def test_skin_bad_weight_sum():
    mesh, skel = single_joint_rig()
    mesh.skin_weights[1, 0] = 0.7
    with pytest.raises(InvalidWeightsError):
        skin(mesh, skel, Pose.rest(skel))


# ---------------------------------------------------------------------------
# sample character generator
# ---------------------------------------------------------------------------

def test_default_character_passes_invariants():
    mesh, skel = make_sample_character()
    mesh.validate(skel)
    assert 5000 <= mesh.n_triangles <= 15000
    assert set(np.unique(mesh.part_labels)) == {1, 2, 3, 4, 5, 6}
    assert np.all((mesh.uvs >= 0) & (mesh.uvs <= 1))
    # weight rows: at most 4 influences by construction, convex
    assert np.allclose(mesh.skin_weights.sum(axis=1), 1.0, atol=1e-6)


def test_arm_length_doubles_bone_lengths():
    base = make_sample_character(CharacterSpec(density=0.45))[1]
    doubled_spec = CharacterSpec(
        density=0.45, arm_upper_length=2 * 0.26, arm_fore_length=2 * 0.24
    )
    doubled = make_sample_character(doubled_spec)[1]
    for name in ("l_elbow", "l_wrist", "r_elbow", "r_wrist"):
        i = base.name_to_index[name]
        assert np.isclose(
            doubled.bone_lengths()[doubled.name_to_index[name]],
            2 * base.bone_lengths()[i],
        )


def test_texture_seed_changes_texture_not_geometry():
    a = make_sample_character(CharacterSpec(density=0.45, texture_seed=1))
    b = make_sample_character(CharacterSpec(density=0.45, texture_seed=2))
    np.testing.assert_array_equal(a[0].vertices, b[0].vertices)
    np.testing.assert_array_equal(a[0].triangles, b[0].triangles)
    assert not np.array_equal(a[0].texture, b[0].texture)


def test_nonpositive_dimension_rejected():
    with pytest.raises(InvalidSpecError):
        CharacterSpec(arm_radius=0.0)
    with pytest.raises(InvalidSpecError):
        CharacterSpec(leg_upper_length=-1.0)


def test_character_stands_on_ground(small_character):
    mesh, skel = small_character
    posed = skin(mesh, skel, Pose.rest(skel))
    assert posed.vertices[:, 1].min() > -0.05
    assert posed.vertices[:, 1].min() < 0.08


# ---------------------------------------------------------------------------
# OBJ + sidecar round-trip
# ---------------------------------------------------------------------------

def test_character_roundtrip(tmp_path, small_character):
    mesh, skel = small_character
    path = tmp_path / "character.obj"
    save_character(mesh, skel, path)
    back_mesh, back_skel = load_character(path)
    assert back_skel.names == skel.names
    assert back_skel.keypoint_names == skel.keypoint_names
    np.testing.assert_allclose(back_mesh.vertices, mesh.vertices, atol=1e-7)
    np.testing.assert_array_equal(back_mesh.triangles, mesh.triangles)
    np.testing.assert_array_equal(back_mesh.part_labels, mesh.part_labels)
    np.testing.assert_allclose(back_mesh.skin_weights, mesh.skin_weights, atol=1e-7)
    np.testing.assert_array_equal(back_mesh.texture, mesh.texture)
