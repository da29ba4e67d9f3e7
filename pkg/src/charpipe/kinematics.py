"""Skeleton representation, forward kinematics, and bone rescaling.

Joint rotations use the exponential map (one 3-vector per joint, radians),
which is singularity-free for the small damped steps taken by the IK solver.
Conventions:

- joints are stored in topological order, joint 0 is the single root;
- a joint's ``offset`` is the bone vector from its parent, expressed in the
  parent's frame (the root's offset is expressed in world frame);
- a joint's rotation acts on its children: the world position of joint j is
  ``p[parent] + R_world[parent] @ offset[j]`` and its world orientation is
  ``R_world[parent] @ R(rot[j])``;
- the root additionally carries a world translation, so with the identity
  pose every joint sits at the cumulative sum of offsets along its chain.

All kinematics run in double precision.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import (
    DegenerateBoneError,
    FormatError,
    NonFiniteError,
    PoseShapeError,
    SkeletonCorrespondenceError,
)


@dataclass(frozen=True)
class Joint:
    """One joint: unique name, parent index (None for the root), and rest
    offset from the parent in length units."""

    name: str
    parent: int | None
    offset: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "offset", np.asarray(self.offset, dtype=np.float64))
        if self.offset.shape != (3,):
            raise PoseShapeError(f"joint {self.name!r}: offset must be a 3-vector")
        if not np.all(np.isfinite(self.offset)):
            raise NonFiniteError(f"joint {self.name!r}: non-finite offset")


@dataclass(frozen=True)
class Skeleton:
    """Joint hierarchy plus the named keypoint subset used by retargeting.

    Invariants (checked at construction): exactly one root at index 0,
    parents precede children, non-root bones have positive length, keypoint
    names are a nonempty subset of joint names.
    """

    joints: tuple[Joint, ...]
    keypoint_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "joints", tuple(self.joints))
        object.__setattr__(self, "keypoint_names", tuple(self.keypoint_names))
        if not self.joints:
            raise PoseShapeError("skeleton must have at least one joint")
        names = [j.name for j in self.joints]
        if len(set(names)) != len(names):
            raise SkeletonCorrespondenceError("duplicate joint names")
        for i, joint in enumerate(self.joints):
            if i == 0:
                if joint.parent is not None:
                    raise PoseShapeError("joint 0 must be the root (parent=None)")
            else:
                if joint.parent is None:
                    raise PoseShapeError(f"more than one root: joint {joint.name!r}")
                if not 0 <= joint.parent < i:
                    raise PoseShapeError(
                        f"joint {joint.name!r}: parent index {joint.parent} must "
                        f"precede child index {i}"
                    )
                if float(np.linalg.norm(joint.offset)) <= 0.0:
                    raise DegenerateBoneError(
                        f"joint {joint.name!r}: non-root bone must have positive length"
                    )
        if len(self.keypoint_names) < 1:
            raise SkeletonCorrespondenceError("keypoint set must be nonempty")
        if len(set(self.keypoint_names)) != len(self.keypoint_names):
            raise SkeletonCorrespondenceError("duplicate keypoint names")
        missing = [k for k in self.keypoint_names if k not in names]
        if missing:
            raise SkeletonCorrespondenceError(f"keypoints not in skeleton: {missing}")

    # -------- derived, cached views --------

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @cached_property
    def names(self) -> tuple[str, ...]:
        return tuple(j.name for j in self.joints)

    @cached_property
    def name_to_index(self) -> dict[str, int]:
        return {j.name: i for i, j in enumerate(self.joints)}

    @cached_property
    def parents(self) -> np.ndarray:
        """(J,) int array, -1 for the root."""
        return np.array(
            [-1 if j.parent is None else j.parent for j in self.joints], dtype=np.int64
        )

    @cached_property
    def offsets(self) -> np.ndarray:
        """(J, 3) rest offsets."""
        return np.stack([j.offset for j in self.joints]).astype(np.float64)

    @cached_property
    def keypoint_indices(self) -> np.ndarray:
        return np.array([self.name_to_index[n] for n in self.keypoint_names], dtype=np.int64)

    def bone_lengths(self) -> np.ndarray:
        """(J,) Euclidean norms of the rest offsets (root entry included)."""
        return np.linalg.norm(self.offsets, axis=1)

    def joint_index(self, name: str) -> int:
        try:
            return self.name_to_index[name]
        except KeyError:
            raise SkeletonCorrespondenceError(f"unknown joint {name!r}") from None


@dataclass(frozen=True)
class Pose:
    """Root translation + exponential-map rotations for one frame.

    ``joint_rotations`` has one row per non-root joint, in joint order
    (row i corresponds to joint i+1).
    """

    root_translation: np.ndarray
    root_rotation: np.ndarray
    joint_rotations: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "root_translation", np.asarray(self.root_translation, dtype=np.float64)
        )
        object.__setattr__(
            self, "root_rotation", np.asarray(self.root_rotation, dtype=np.float64)
        )
        rots = np.asarray(self.joint_rotations, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "joint_rotations", rots)
        if self.root_translation.shape != (3,) or self.root_rotation.shape != (3,):
            raise PoseShapeError("root translation/rotation must be 3-vectors")

    @classmethod
    def rest(cls, skel: Skeleton) -> "Pose":
        return cls(
            root_translation=np.zeros(3),
            root_rotation=np.zeros(3),
            joint_rotations=np.zeros((skel.n_joints - 1, 3)),
        )

    def validate_for(self, skel: Skeleton) -> None:
        if self.joint_rotations.shape != (skel.n_joints - 1, 3):
            raise PoseShapeError(
                f"pose has {self.joint_rotations.shape[0]} joint rotations, "
                f"skeleton needs {skel.n_joints - 1}"
            )
        if not (
            np.all(np.isfinite(self.root_translation))
            and np.all(np.isfinite(self.root_rotation))
            and np.all(np.isfinite(self.joint_rotations))
        ):
            raise NonFiniteError("pose contains non-finite values")

    def all_rotations(self) -> np.ndarray:
        """(J, 3) stacked [root_rotation; joint_rotations]."""
        return np.vstack([self.root_rotation[None, :], self.joint_rotations])


@dataclass(frozen=True)
class Motion:
    """A pose sequence at a fixed frame rate."""

    fps: float
    frames: tuple[Pose, ...]

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))

    def __len__(self) -> int:
        return len(self.frames)


# ---------------------------------------------------------------------------
# Exponential map
# ---------------------------------------------------------------------------

def exp_rotation(w: np.ndarray) -> np.ndarray:
    """Rodrigues' formula, vectorized.

    Parameters
    ----------
    w : (..., 3) exponential-map rotation vectors (radians).

    Returns
    -------
    (..., 3, 3) rotation matrices.
    """
    w = np.asarray(w, dtype=np.float64)
    theta2 = np.sum(w * w, axis=-1)
    theta = np.sqrt(theta2)

    # series for sin(t)/t and (1-cos t)/t^2 near zero keeps full precision
    small = theta < 1e-8
    with np.errstate(invalid="ignore", divide="ignore"):
        a = np.where(small, 1.0 - theta2 / 6.0, np.sin(theta) / np.where(small, 1.0, theta))
        b = np.where(
            small, 0.5 - theta2 / 24.0, (1.0 - np.cos(theta)) / np.where(small, 1.0, theta2)
        )

    wx, wy, wz = w[..., 0], w[..., 1], w[..., 2]
    zeros = np.zeros_like(wx)
    K = np.stack(
        [
            np.stack([zeros, -wz, wy], axis=-1),
            np.stack([wz, zeros, -wx], axis=-1),
            np.stack([-wy, wx, zeros], axis=-1),
        ],
        axis=-2,
    )
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye + a[..., None, None] * K + b[..., None, None] * (K @ K)


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array(
        [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]], dtype=np.float64
    )


def exp_rotation_derivative(w: np.ndarray, R: np.ndarray | None = None) -> np.ndarray:
    """Derivative of the exponential map.

    Returns dR (3, 3, 3) with ``dR[i] = ∂R/∂w_i`` for the rotation matrix
    ``R = exp_rotation(w)``, using the closed form

        ∂R/∂w_i = (w_i [w]x + [w × ((I − R) e_i)]x) / |w|²  ·  R

    with the exact limit ``[e_i]x`` at w = 0.
    """
    w = np.asarray(w, dtype=np.float64)
    if R is None:
        R = exp_rotation(w)
    n2 = float(w @ w)
    out = np.empty((3, 3, 3))
    if n2 < 1e-16:
        for i in range(3):
            e = np.zeros(3)
            e[i] = 1.0
            out[i] = _skew(e)
        return out
    Wx = _skew(w)
    ImR = np.eye(3) - R
    for i in range(3):
        e = ImR[:, i]  # (I - R) e_i
        out[i] = ((w[i] * Wx + _skew(np.cross(w, e))) / n2) @ R
    return out


# ---------------------------------------------------------------------------
# Forward kinematics
# ---------------------------------------------------------------------------

def _fk_world(skel: Skeleton, pose: Pose) -> tuple[np.ndarray, np.ndarray]:
    """Unchecked FK core: world positions (J, 3) and rotations (J, 3, 3)."""
    J = skel.n_joints
    local = exp_rotation(pose.all_rotations())
    parents = skel.parents
    offsets = skel.offsets
    p = np.empty((J, 3))
    R = np.empty((J, 3, 3))
    p[0] = pose.root_translation + offsets[0]
    R[0] = local[0]
    for j in range(1, J):
        pa = parents[j]
        p[j] = p[pa] + R[pa] @ offsets[j]
        R[j] = R[pa] @ local[j]
    return p, R


def fk_keypoints(skel: Skeleton, pose: Pose) -> np.ndarray:
    """World positions of the skeleton's keypoints.

    Parameters
    ----------
    skel : Skeleton
    pose : Pose matching ``skel``.

    Returns
    -------
    (K, 3) array in ``skel.keypoint_names`` order.
    """
    pose.validate_for(skel)
    p, _ = _fk_world(skel, pose)
    return p[skel.keypoint_indices]


def fk_joint_positions(skel: Skeleton, pose: Pose) -> np.ndarray:
    """World positions of every joint, (J, 3)."""
    pose.validate_for(skel)
    p, _ = _fk_world(skel, pose)
    return p


def fk_vertex_transforms(skel: Skeleton, pose: Pose) -> np.ndarray:
    """Per-joint world rigid transforms as a (J, 4, 4) array.

    Transform j maps a point expressed in joint j's frame (origin at the
    joint, axes from the accumulated rotations) into world space; it is the
    transform linear blend skinning composes with the inverse rest transform.
    """
    pose.validate_for(skel)
    p, R = _fk_world(skel, pose)
    J = skel.n_joints
    T = np.zeros((J, 4, 4))
    T[:, :3, :3] = R
    T[:, :3, 3] = p
    T[:, 3, 3] = 1.0
    return T


def rest_joint_positions(skel: Skeleton) -> np.ndarray:
    """Joint positions under the identity pose: cumulative offset sums."""
    J = skel.n_joints
    p = np.empty((J, 3))
    p[0] = skel.offsets[0]
    for j in range(1, J):
        p[j] = p[skel.parents[j]] + skel.offsets[j]
    return p


def fk_keypoints_with_jacobian(
    skel: Skeleton, pose: Pose, keypoint_indices: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Keypoint positions plus the analytic Jacobian w.r.t. pose parameters.

    The parameter vector is ``[root_translation, root_rotation,
    joint_rotations.ravel()]`` of length 3(J+1); the Jacobian has shape
    (3K, 3(J+1)) with keypoints stacked in rows of three.
    """
    if keypoint_indices is None:
        keypoint_indices = skel.keypoint_indices
    J = skel.n_joints
    local_w = pose.all_rotations()
    local_R = exp_rotation(local_w)
    parents = skel.parents
    offsets = skel.offsets

    p = np.empty((J, 3))
    Rw = np.empty((J, 3, 3))
    p[0] = pose.root_translation + offsets[0]
    Rw[0] = local_R[0]
    for j in range(1, J):
        pa = parents[j]
        p[j] = p[pa] + Rw[pa] @ offsets[j]
        Rw[j] = Rw[pa] @ local_R[j]

    # pre_dR[j, i] = R_world[parent(j)] @ dR_j/dw_i, so a rotation-parameter
    # column is pre_dR[j, i] @ v with v the keypoint in joint j's frame
    pre_dR = np.empty((J, 3, 3, 3))
    for j in range(J):
        dR = exp_rotation_derivative(local_w[j], local_R[j])
        if parents[j] >= 0:
            for i in range(3):
                pre_dR[j, i] = Rw[parents[j]] @ dR[i]
        else:
            pre_dR[j] = dR

    K = len(keypoint_indices)
    n_params = 3 * (J + 1)
    jac = np.zeros((3 * K, n_params))
    for row, k in enumerate(keypoint_indices):
        r0 = 3 * row
        jac[r0 : r0 + 3, 0:3] = np.eye(3)
        a = parents[k]  # strict ancestors only: joint k's own rotation
        while a >= 0:  # does not move joint k
            v = Rw[a].T @ (p[k] - p[a])
            col = 3 if a == 0 else 6 + 3 * (a - 1)
            for i in range(3):
                jac[r0 : r0 + 3, col + i] = pre_dR[a, i] @ v
            a = parents[a]
    return p[keypoint_indices], jac


# ---------------------------------------------------------------------------
# Bone rescaling
# ---------------------------------------------------------------------------

def rescale_bones(target: Skeleton, source: Skeleton) -> Skeleton:
    """Return ``target`` with every non-root bone length replaced by the
    length of the same-named bone in ``source`` (directions and topology
    kept).

    Raises
    ------
    SkeletonCorrespondenceError
        If joint counts differ or a target joint has no same-named source
        joint.
    DegenerateBoneError
        If a non-root target bone has zero length (no direction to keep).
    """
    if target.n_joints != source.n_joints:
        raise SkeletonCorrespondenceError(
            f"joint count mismatch: target has {target.n_joints}, "
            f"source has {source.n_joints}"
        )
    src_index = source.name_to_index
    new_joints = [target.joints[0]]
    for i in range(1, target.n_joints):
        joint = target.joints[i]
        if joint.name not in src_index:
            raise SkeletonCorrespondenceError(
                f"target joint {joint.name!r} has no source counterpart"
            )
        src_len = float(np.linalg.norm(source.offsets[src_index[joint.name]]))
        t_off = joint.offset
        t_len = float(np.linalg.norm(t_off))
        if t_len == 0.0:
            raise DegenerateBoneError(f"target joint {joint.name!r} has zero-length bone")
        new_joints.append(Joint(joint.name, joint.parent, t_off * (src_len / t_len)))
    if target.joints[0].name not in src_index:
        raise SkeletonCorrespondenceError(
            f"target root {target.joints[0].name!r} has no source counterpart"
        )
    return Skeleton(joints=tuple(new_joints), keypoint_names=target.keypoint_names)


# ---------------------------------------------------------------------------
# Rig / motion JSON files
# ---------------------------------------------------------------------------

def skeleton_to_dict(skel: Skeleton) -> dict:
    return {
        "joints": [
            {
                "name": j.name,
                "parent": j.parent,
                "offset": [float(x) for x in j.offset],
            }
            for j in skel.joints
        ],
        "keypoints": list(skel.keypoint_names),
    }


def skeleton_from_dict(data: dict) -> Skeleton:
    try:
        joints = tuple(
            Joint(
                name=j["name"],
                parent=(None if j["parent"] in (None, -1) else int(j["parent"])),
                offset=np.asarray(j["offset"], dtype=np.float64),
            )
            for j in data["joints"]
        )
        keypoints = tuple(data["keypoints"])
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed rig data: {exc}") from exc
    return Skeleton(joints=joints, keypoint_names=keypoints)


def load_rig(path) -> Skeleton:
    try:
        with open(path, "r") as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise FormatError(f"rig file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"rig file {path} is not valid JSON: {exc}") from exc
    return skeleton_from_dict(data)


def save_rig(skel: Skeleton, path) -> None:
    with open(path, "w") as fh:
        json.dump(skeleton_to_dict(skel), fh, indent=1, sort_keys=True)


def pose_to_dict(pose: Pose) -> dict:
    return {
        "root_t": [float(x) for x in pose.root_translation],
        "root_r": [float(x) for x in pose.root_rotation],
        "rots": [[float(x) for x in row] for row in pose.joint_rotations],
    }


def pose_from_dict(data: dict) -> Pose:
    try:
        return Pose(
            root_translation=np.asarray(data["root_t"], dtype=np.float64),
            root_rotation=np.asarray(data["root_r"], dtype=np.float64),
            joint_rotations=np.asarray(data["rots"], dtype=np.float64).reshape(-1, 3),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed pose data: {exc}") from exc


def load_motion(path) -> Motion:
    try:
        with open(path, "r") as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise FormatError(f"motion file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"motion file {path} is not valid JSON: {exc}") from exc
    try:
        fps = float(data["fps"])
        frames = tuple(pose_from_dict(f) for f in data["frames"])
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed motion file {path}: {exc}") from exc
    return Motion(fps=fps, frames=frames)


def save_motion(motion: Motion, path) -> None:
    data = {"fps": motion.fps, "frames": [pose_to_dict(p) for p in motion.frames]}
    with open(path, "w") as fh:
        json.dump(data, fh)
