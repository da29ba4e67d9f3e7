"""Rigged, textured, part-labeled character meshes.

A RiggedMesh stores rest-pose geometry, per-vertex UVs, an RGB texture in
[0, 1], up to four (joint, weight) skinning influences per vertex, and one
body-part label per triangle (1=head, 2=torso, 3=left arm, 4=right arm,
5=left leg, 6=right leg). Posing uses linear blend skinning against the
kinematics module's joint transforms.

make_sample_character builds a capsule-limb humanoid with a checkerboard
per-part tinted texture; it stands on y=0 facing +z.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    AssetError,
    FormatError,
    InvalidSpecError,
    InvalidWeightsError,
    RigBindingError,
    ShapeError,
)
from .kinematics import (
    Pose,
    Skeleton,
    Joint,
    fk_vertex_transforms,
    rest_joint_positions,
    skeleton_from_dict,
)

PART_NAMES = {1: "head", 2: "torso", 3: "left_arm", 4: "right_arm", 5: "left_leg", 6: "right_leg"}
MAX_INFLUENCES = 4


@dataclass
class RiggedMesh:
    vertices: np.ndarray      # (V, 3) float64, rest pose
    triangles: np.ndarray     # (F, 3) int32
    uvs: np.ndarray           # (V, 2) float64 in [0, 1]^2
    texture: np.ndarray       # (TH, TW, 3) float32 in [0, 1]
    skin_joints: np.ndarray   # (V, 4) int32, padded with 0
    skin_weights: np.ndarray  # (V, 4) float32, padded with 0
    part_labels: np.ndarray   # (F,) uint8 in 1..6

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        self.triangles = np.asarray(self.triangles, dtype=np.int32)
        self.uvs = np.asarray(self.uvs, dtype=np.float64)
        self.texture = np.asarray(self.texture, dtype=np.float32)
        self.skin_joints = np.asarray(self.skin_joints, dtype=np.int32)
        self.skin_weights = np.asarray(self.skin_weights, dtype=np.float32)
        self.part_labels = np.asarray(self.part_labels, dtype=np.uint8)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def validate(self, skel: Skeleton | None = None) -> None:
        V = self.n_vertices
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= V):
            raise ShapeError("triangle index out of range")
        if self.uvs.shape != (V, 2) or not np.all(np.isfinite(self.uvs)):
            raise ShapeError("uvs must be finite (V, 2)")
        if self.texture.ndim != 3 or self.texture.shape[2] != 3 or self.texture.size == 0:
            raise ShapeError("texture must be a nonempty (H, W, 3) image")
        if self.part_labels.shape != (self.n_triangles,):
            raise ShapeError("one part label per triangle required")
        if self.n_triangles and not np.all((self.part_labels >= 1) & (self.part_labels <= 6)):
            raise ShapeError("part labels must be in 1..6")
        if self.skin_joints.shape != (V, MAX_INFLUENCES) or self.skin_weights.shape != (
            V,
            MAX_INFLUENCES,
        ):
            raise ShapeError("skinning arrays must be (V, 4)")
        if np.any(self.skin_weights < 0):
            raise InvalidWeightsError("negative skin weight")
        sums = self.skin_weights.sum(axis=1)
        if V and np.max(np.abs(sums - 1.0)) > 1e-6:
            raise InvalidWeightsError("per-vertex weights must sum to 1 within 1e-6")
        if skel is not None:
            if V and (self.skin_joints.min() < 0 or self.skin_joints.max() >= skel.n_joints):
                raise RigBindingError("skin weights reference unknown joints")


@dataclass
class PosedMesh:
    """World-space vertices sharing topology/uv/labels with a RiggedMesh."""

    vertices: np.ndarray
    mesh: RiggedMesh

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        if self.vertices.shape != self.mesh.vertices.shape:
            raise ShapeError("posed vertex count must match source mesh")


def skinning_matrices(mesh: RiggedMesh, skel: Skeleton, pose: Pose) -> np.ndarray:
    """(J, 4, 4) matrices mapping rest-space points to world per joint."""
    T_pose = fk_vertex_transforms(skel, pose)
    rest_p = rest_joint_positions(skel)
    M = T_pose.copy()
    # rest transforms are pure translations, so inv(T_rest) just subtracts
    # the rest joint position before applying the posed transform
    M[:, :3, 3] = T_pose[:, :3, 3] - np.einsum("jab,jb->ja", T_pose[:, :3, :3], rest_p)
    return M


def skin(mesh: RiggedMesh, skel: Skeleton, pose: Pose) -> PosedMesh:
    """Linear blend skinning: v' = sum_j w_j * (M_j @ v)."""
    mesh.validate(skel)
    M = skinning_matrices(mesh, skel, pose)
    R = M[mesh.skin_joints][:, :, :3, :3]  # (V, 4, 3, 3)
    t = M[mesh.skin_joints][:, :, :3, 3]   # (V, 4, 3)
    moved = np.einsum("vkab,vb->vka", R, mesh.vertices) + t
    w = mesh.skin_weights.astype(np.float64)
    out = np.einsum("vk,vka->va", w, moved)
    return PosedMesh(vertices=out, mesh=mesh)


def pose_vertices(mesh: RiggedMesh, skel: Skeleton, poses) -> np.ndarray:
    """Skin a pose sequence: (T, V, 3) world vertices (validates once)."""
    mesh.validate(skel)
    out = np.empty((len(poses), mesh.n_vertices, 3))
    w = mesh.skin_weights.astype(np.float64)
    for i, pose in enumerate(poses):
        M = skinning_matrices(mesh, skel, pose)
        R = M[mesh.skin_joints][:, :, :3, :3]
        t = M[mesh.skin_joints][:, :, :3, 3]
        moved = np.einsum("vkab,vb->vka", R, mesh.vertices) + t
        out[i] = np.einsum("vk,vka->va", w, moved)
    return out


# ---------------------------------------------------------------------------
# Procedural sample character
# ---------------------------------------------------------------------------

@dataclass
class CharacterSpec:
    """Proportions (length units) and tessellation of the sample humanoid."""

    torso_length: float = 0.55
    torso_radius: float = 0.13
    neck_length: float = 0.07
    neck_radius: float = 0.045
    head_radius: float = 0.10
    shoulder_width: float = 0.40
    arm_upper_length: float = 0.26
    arm_fore_length: float = 0.24
    hand_length: float = 0.09
    arm_radius: float = 0.048
    hip_width: float = 0.19
    leg_upper_length: float = 0.40
    leg_lower_length: float = 0.38
    foot_length: float = 0.16
    leg_radius: float = 0.062
    ankle_height: float = 0.07
    density: float = 1.0          # scales tessellation (triangle count ~ density^2)
    texture_size: int = 256
    texture_seed: int = 0
    checker: int = 8

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("texture_seed",):
                continue
            if not np.isfinite(v) or v <= 0:
                raise InvalidSpecError(f"{f.name} must be positive, got {v}")

    @classmethod
    def from_dict(cls, data: dict) -> "CharacterSpec":
        known = {f.name for f in fields(cls)}
        bad = set(data) - known
        if bad:
            raise InvalidSpecError(f"unknown character spec fields: {sorted(bad)}")
        return cls(**data)


def sample_skeleton(spec: CharacterSpec) -> Skeleton:
    pelvis_h = spec.leg_upper_length + spec.leg_lower_length + spec.ankle_height
    half_t = spec.torso_length / 2
    joints = [
        Joint("pelvis", None, [0, pelvis_h, 0]),
        Joint("spine", 0, [0, half_t, 0]),
        Joint("chest", 1, [0, half_t, 0]),
        Joint("neck", 2, [0, spec.neck_length, 0]),
        Joint("head", 3, [0, spec.head_radius, 0]),
        Joint("head_top", 4, [0, spec.head_radius, 0]),
    ]
    names = [j.name for j in joints]

    def add(name, parent_name, offset):
        joints.append(Joint(name, names.index(parent_name), offset))
        names.append(name)

    for side, sx in (("l", 1.0), ("r", -1.0)):
        add(f"{side}_shoulder", "chest", [sx * spec.shoulder_width / 2, 0, 0])
        add(f"{side}_elbow", f"{side}_shoulder", [sx * spec.arm_upper_length, 0, 0])
        add(f"{side}_wrist", f"{side}_elbow", [sx * spec.arm_fore_length, 0, 0])
        add(f"{side}_hand", f"{side}_wrist", [sx * spec.hand_length, 0, 0])
    for side, sx in (("l", 1.0), ("r", -1.0)):
        add(f"{side}_hip", "pelvis", [sx * spec.hip_width / 2, 0, 0])
        add(f"{side}_knee", f"{side}_hip", [0, -spec.leg_upper_length, 0])
        add(f"{side}_ankle", f"{side}_knee", [0, -spec.leg_lower_length, 0])
        add(f"{side}_toe", f"{side}_ankle", [0, -spec.ankle_height / 2, spec.foot_length])

    keypoints = (
        "pelvis", "spine", "chest", "head", "head_top",
        "l_elbow", "l_wrist", "l_hand", "r_elbow", "r_wrist", "r_hand",
        "l_knee", "l_ankle", "l_toe", "r_knee", "r_ankle", "r_toe",
    )
    return Skeleton(joints=tuple(joints), keypoint_names=keypoints)


class _MeshBuilder:
    def __init__(self):
        self.vertices: list = []
        self.uvs: list = []
        self.tris: list = []
        self.labels: list = []
        self.joints: list = []
        self.weights: list = []

    def add_vertex(self, p, uv, influences):
        self.vertices.append(p)
        self.uvs.append(uv)
        js = [j for j, _ in influences] + [0] * (MAX_INFLUENCES - len(influences))
        ws = [w for _, w in influences] + [0.0] * (MAX_INFLUENCES - len(influences))
        self.joints.append(js)
        self.weights.append(ws)
        return len(self.vertices) - 1

    def add_triangle(self, a, b, c, label):
        self.tris.append((a, b, c))
        self.labels.append(label)


def _perp_basis(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ref = np.array([0.0, 0.0, 1.0]) if abs(d[1]) > 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(ref, d)
    u /= np.linalg.norm(u)
    return u, np.cross(d, u)


def _cell_uv(part: int, u: float, v: float) -> tuple[float, float]:
    # 3x2 atlas of part cells with a small inset against bilinear bleed
    col = (part - 1) % 3
    row = (part - 1) // 3
    m = 0.02
    return ((col + m + u * (1 - 2 * m)) / 3.0, (row + m + v * (1 - 2 * m)) / 2.0)


def _capsule(
    b: _MeshBuilder,
    p0: np.ndarray,
    p1: np.ndarray,
    radius: float,
    part: int,
    joint_lo: int,
    joint_hi: int,
    n_seg: int,
    n_rings: int,
    n_cap: int,
    blend: float = 0.3,
):
    """Capsule from p0 to p1 with hemispherical caps; skin weights ramp from
    joint_lo to a 50/50 blend with joint_hi near the p1 end."""
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    axis = p1 - p0
    length = float(np.linalg.norm(axis))
    d = axis / length
    bu, bv = _perp_basis(d)

    def influences(t):
        t = min(max(t, 0.0), 1.0)
        if joint_hi == joint_lo:
            return [(joint_lo, 1.0)]
        if t <= 1.0 - blend:
            return [(joint_lo, 1.0)]
        w_hi = 0.5 * (t - (1.0 - blend)) / blend
        return [(joint_lo, 1.0 - w_hi), (joint_hi, w_hi)]

    # rows: bottom pole, bottom cap arcs, cylinder rings, top cap arcs, top pole
    rows = []  # (center, ring_radius, axial t for weights, v texcoord)
    total_len = length + 2 * radius  # for v parameterization
    for i in range(n_cap, 0, -1):
        phi = (np.pi / 2) * i / n_cap
        c = p0 - d * (radius * np.sin(phi))
        r = radius * np.cos(phi)
        varc = (radius - radius * np.sin(phi)) / total_len
        rows.append((c, r, 0.0, varc))
    for i in range(n_rings + 1):
        t = i / n_rings
        rows.append((p0 + axis * t, radius, t, (radius + t * length) / total_len))
    for i in range(1, n_cap + 1):
        phi = (np.pi / 2) * i / n_cap
        c = p1 + d * (radius * np.sin(phi))
        r = radius * np.cos(phi)
        rows.append((c, r, 1.0, (radius + length + radius * np.sin(phi)) / total_len))

    ring_ids = []
    for center, r, t, v in rows:
        ids = []
        for s in range(n_seg + 1):  # duplicated seam column for clean uvs
            ang = 2 * np.pi * s / n_seg
            pos = center + r * (np.cos(ang) * bu + np.sin(ang) * bv)
            ids.append(b.add_vertex(pos, _cell_uv(part, s / n_seg, v), influences(t)))
        ring_ids.append(ids)

    bot = b.add_vertex(p0 - d * radius, _cell_uv(part, 0.5, 0.0), influences(0.0))
    top = b.add_vertex(p1 + d * radius, _cell_uv(part, 0.5, 1.0), influences(1.0))

    for s in range(n_seg):
        b.add_triangle(bot, ring_ids[0][s + 1], ring_ids[0][s], part)
        b.add_triangle(top, ring_ids[-1][s], ring_ids[-1][s + 1], part)
    for r0, r1 in zip(ring_ids, ring_ids[1:]):
        for s in range(n_seg):
            b.add_triangle(r0[s], r0[s + 1], r1[s], part)
            b.add_triangle(r1[s], r0[s + 1], r1[s + 1], part)


def _hsv_to_rgb(h, s, v):
    i = int(h * 6) % 6
    f = h * 6 - int(h * 6)
    p, q, t = v * (1 - s), v * (1 - f * s), v * (1 - (1 - f) * s)
    return [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][i]


def make_sample_texture(size: int, seed: int, checker: int) -> np.ndarray:
    """Per-part tinted checkerboard atlas (3x2 part cells), float32 [0, 1]."""
    rng = np.random.default_rng(seed)
    base_hues = {1: 0.08, 2: 0.58, 3: 0.33, 4: 0.83, 5: 0.12, 6: 0.45}
    tex = np.zeros((size, size, 3), dtype=np.float32)
    cw, ch = size // 3, size // 2
    for part in range(1, 7):
        col, row = (part - 1) % 3, (part - 1) // 3
        hue = (base_hues[part] + rng.uniform(-0.08, 0.08)) % 1.0
        sat = rng.uniform(0.45, 0.7)
        val = rng.uniform(0.75, 0.95)
        a = np.array(_hsv_to_rgb(hue, sat, val), dtype=np.float32)
        bcol = a * rng.uniform(0.55, 0.7)
        ys, xs = np.mgrid[0:ch, 0:cw]
        mask = ((xs * checker // cw) + (ys * checker // ch)) % 2 == 0
        cell = np.where(mask[..., None], a, bcol)
        tex[row * ch : (row + 1) * ch, col * cw : (col + 1) * cw] = cell
    # quantize to 8-bit levels so PNG round-trips are exact
    return np.round(tex * 255.0).astype(np.float32) / 255.0


def make_sample_character(spec: CharacterSpec | None = None) -> tuple[RiggedMesh, Skeleton]:
    """Capsule-limb humanoid with valid skinning and six part labels."""
    spec = spec or CharacterSpec()
    skel = sample_skeleton(spec)
    rest = rest_joint_positions(skel)
    jid = skel.name_to_index

    n_seg = max(6, int(round(18 * spec.density)))
    n_rings = max(2, int(round(7 * spec.density)))
    n_cap = max(2, int(round(5 * spec.density)))

    b = _MeshBuilder()

    def cap(lo, hi, radius, part, p0=None, p1=None):
        _capsule(
            b,
            rest[jid[lo]] if p0 is None else p0,
            rest[jid[hi]] if p1 is None else p1,
            radius,
            part,
            jid[lo],
            jid[hi],
            n_seg,
            n_rings,
            n_cap,
        )

    # torso column + clavicles (label 2)
    cap("pelvis", "spine", spec.torso_radius, 2)
    cap("spine", "chest", spec.torso_radius * 0.92, 2)
    cap("chest", "neck", spec.neck_radius, 2)
    cap("chest", "l_shoulder", spec.arm_radius * 0.95, 2)
    cap("chest", "r_shoulder", spec.arm_radius * 0.95, 2)
    # head (label 1)
    cap("neck", "head_top", spec.head_radius, 1, p1=rest[jid["head_top"]])
    # arms (3 = left, 4 = right)
    for side, part in (("l", 3), ("r", 4)):
        cap(f"{side}_shoulder", f"{side}_elbow", spec.arm_radius, part)
        cap(f"{side}_elbow", f"{side}_wrist", spec.arm_radius * 0.85, part)
        cap(f"{side}_wrist", f"{side}_hand", spec.arm_radius * 0.8, part)
    # legs (5 = left, 6 = right)
    for side, part in (("l", 5), ("r", 6)):
        cap(f"{side}_hip", f"{side}_knee", spec.leg_radius, part)
        cap(f"{side}_knee", f"{side}_ankle", spec.leg_radius * 0.82, part)
        cap(f"{side}_ankle", f"{side}_toe", spec.leg_radius * 0.62, part)

    mesh = RiggedMesh(
        vertices=np.array(b.vertices),
        triangles=np.array(b.tris, dtype=np.int32),
        uvs=np.array(b.uvs),
        texture=make_sample_texture(spec.texture_size, spec.texture_seed, spec.checker),
        skin_joints=np.array(b.joints, dtype=np.int32),
        skin_weights=np.array(b.weights, dtype=np.float32),
        part_labels=np.array(b.labels, dtype=np.uint8),
    )
    mesh.validate(skel)
    return mesh, skel


# ---------------------------------------------------------------------------
# OBJ + rig sidecar I/O
# ---------------------------------------------------------------------------

def _sidecar_paths(obj_path: Path) -> tuple[Path, Path]:
    stem = obj_path.with_suffix("")
    return Path(str(stem) + ".rig.json"), Path(str(stem) + ".texture.png")


def save_character(mesh: RiggedMesh, skel: Skeleton, obj_path) -> None:
    """Write character.obj plus character.rig.json and character.texture.png."""
    obj_path = Path(obj_path)
    rig_path, tex_path = _sidecar_paths(obj_path)
    with open(obj_path, "w") as fh:
        fh.write("# charpipe character mesh\n")
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for uv in mesh.uvs:
            fh.write(f"vt {uv[0]:.9g} {uv[1]:.9g}\n")
        for t in mesh.triangles:
            fh.write(f"f {t[0]+1}/{t[0]+1} {t[1]+1}/{t[1]+1} {t[2]+1}/{t[2]+1}\n")
    weights = [
        [[int(j), float(w)] for j, w in zip(js, ws) if w > 0]
        for js, ws in zip(mesh.skin_joints, mesh.skin_weights)
    ]
    rig = {
        "skeleton": {
            "joints": [
                {"name": j.name, "parent": j.parent, "offset": [float(x) for x in j.offset]}
                for j in skel.joints
            ]
        },
        "keypoints": list(skel.keypoint_names),
        "weights": weights,
        "part_labels": [int(x) for x in mesh.part_labels],
        "texture": tex_path.name,
    }
    with open(rig_path, "w") as fh:
        json.dump(rig, fh)
    img = Image.fromarray(np.round(mesh.texture * 255.0).astype(np.uint8))
    img.save(tex_path)


def load_character(obj_path) -> tuple[RiggedMesh, Skeleton]:
    obj_path = Path(obj_path)
    if not obj_path.exists():
        raise AssetError(f"character mesh not found: {obj_path}")
    rig_path, _ = _sidecar_paths(obj_path)
    if not rig_path.exists():
        raise AssetError(f"rig sidecar not found: {rig_path}")

    verts, uvs, tris = [], [], []
    with open(obj_path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "vt":
                uvs.append([float(x) for x in parts[1:3]])
            elif parts[0] == "f":
                idx = [int(tok.split("/")[0]) - 1 for tok in parts[1:4]]
                tris.append(idx)
    try:
        with open(rig_path) as fh:
            rig = json.load(fh)
        skel = skeleton_from_dict(
            {"joints": rig["skeleton"]["joints"], "keypoints": rig["keypoints"]}
        )
        raw_weights = rig["weights"]
        labels = np.asarray(rig["part_labels"], dtype=np.uint8)
        tex_name = rig["texture"]
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise FormatError(f"malformed rig sidecar {rig_path}: {exc}") from exc

    tex_path = rig_path.parent / tex_name
    if not tex_path.exists():
        raise AssetError(f"texture not found: {tex_path}")
    texture = np.asarray(Image.open(tex_path).convert("RGB"), dtype=np.float32) / 255.0

    V = len(verts)
    if len(raw_weights) != V:
        raise FormatError("weight list length != vertex count")
    sj = np.zeros((V, MAX_INFLUENCES), dtype=np.int32)
    sw = np.zeros((V, MAX_INFLUENCES), dtype=np.float32)
    for i, infl in enumerate(raw_weights):
        if len(infl) > MAX_INFLUENCES:
            raise InvalidWeightsError(f"vertex {i}: more than {MAX_INFLUENCES} influences")
        for k, (j, w) in enumerate(infl):
            sj[i, k] = j
            sw[i, k] = w

    mesh = RiggedMesh(
        vertices=np.asarray(verts),
        triangles=np.asarray(tris, dtype=np.int32),
        uvs=np.asarray(uvs),
        texture=texture,
        skin_joints=sj,
        skin_weights=sw,
        part_labels=labels,
    )
    mesh.validate(skel)
    return mesh, skel
