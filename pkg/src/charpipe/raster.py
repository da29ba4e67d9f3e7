"""Pinhole-camera software rasterizer.

Produces the conditioning images: textured color, normalized depth, six
binary part masks, and the silhouette coverage, plus skeleton line renders
and static background plates.

Conventions:
- camera space is x-right, y-down, z-forward; a point projects to
  ``(fx*x/z + cx, fy*y/z + cy)`` with image y growing downward;
- projected coordinates are snapped to a 1/256 subpixel grid and coverage
  uses exact integer edge functions with the top-left fill rule, so shared
  edges are crack- and overlap-free and rendering is bit-deterministic;
- the z-buffer holds camera-space z (nearest wins, earlier triangle wins
  ties); the depth image is ``clamp(2(z - near)/(far - near) - 1, -1, 1)``
  with +1 where nothing is covered;
- colors are computed in linear [0, 1] and returned in normalized [-1, 1];
  texture v=0 addresses the bottom texture row (OBJ convention), sampling
  is bilinear with clamp-to-edge;
- no backface culling (character meshes may be open); lit shading is
  two-sided flat diffuse.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit
from PIL import Image

from .errors import AssetError, CameraError, NonFiniteError
from .kinematics import Pose, Skeleton, fk_joint_positions

SUBPIX = 256  # subpixel snap denominator
_COORD_LIMIT = 1 << 29  # keeps int64 edge products far from overflow


@dataclass
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    extrinsic: np.ndarray  # (4, 4) world-to-camera
    near: float = 0.05
    far: float = 20.0

    def __post_init__(self):
        self.extrinsic = np.asarray(self.extrinsic, dtype=np.float64)
        self.validate()

    def validate(self) -> None:
        if self.extrinsic.shape != (4, 4) or not np.all(np.isfinite(self.extrinsic)):
            raise CameraError("extrinsic must be a finite 4x4 matrix")
        if not (0 < self.near < self.far):
            raise CameraError(f"need 0 < near < far, got near={self.near} far={self.far}")
        if self.fx <= 0 or self.fy <= 0:
            raise CameraError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise CameraError("image dimensions must be >= 1")

    def world_to_cam(self, points: np.ndarray) -> np.ndarray:
        R = self.extrinsic[:3, :3]
        t = self.extrinsic[:3, 3]
        return points @ R.T + t

    def project(self, cam_points: np.ndarray) -> np.ndarray:
        """(N, 3) camera-space -> (N, 2) pixel coordinates (callers guard z)."""
        z = cam_points[:, 2]
        return np.stack(
            [self.fx * cam_points[:, 0] / z + self.cx, self.fy * cam_points[:, 1] / z + self.cy],
            axis=1,
        )

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
            "extrinsic": [float(x) for x in self.extrinsic.reshape(-1)],
            "near": self.near,
            "far": self.far,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Camera":
        try:
            return cls(
                fx=float(data["fx"]),
                fy=float(data["fy"]),
                cx=float(data["cx"]),
                cy=float(data["cy"]),
                width=int(data["width"]),
                height=int(data["height"]),
                extrinsic=np.asarray(data["extrinsic"], dtype=np.float64).reshape(4, 4),
                near=float(data["near"]),
                far=float(data["far"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CameraError(f"malformed camera data: {exc}") from exc


def load_camera(path) -> Camera:
    path = Path(path)
    if not path.exists():
        raise CameraError(f"camera file not found: {path}")
    try:
        with open(path) as fh:
            return Camera.from_dict(json.load(fh))
    except json.JSONDecodeError as exc:
        raise CameraError(f"camera file {path} is not valid JSON: {exc}") from exc


def save_camera(cam: Camera, path) -> None:
    with open(path, "w") as fh:
        json.dump(cam.to_dict(), fh, indent=1, sort_keys=True)


def look_at_extrinsic(eye, target, world_up=(0.0, 1.0, 0.0)) -> np.ndarray:
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(world_up, dtype=np.float64))
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    E = np.eye(4)
    E[:3, :3] = np.stack([right, down, forward])
    E[:3, 3] = -E[:3, :3] @ eye
    return E


def make_default_camera(
    width: int = 256,
    height: int = 256,
    *,
    eye=(0.0, 1.1, 2.6),
    target=(0.0, 0.85, 0.0),
    fov_deg: float = 50.0,
    near: float = 0.05,
    far: float = 20.0,
) -> Camera:
    f = (width / 2.0) / np.tan(np.radians(fov_deg) / 2.0)
    return Camera(
        fx=f, fy=f, cx=width / 2.0, cy=height / 2.0,
        width=width, height=height,
        extrinsic=look_at_extrinsic(eye, target), near=near, far=far,
    )


@dataclass
class RenderOutput:
    color: np.ndarray     # (H, W, 3) float32 in [-1, 1]
    depth: np.ndarray     # (H, W) float32 in [-1, 1], +1 where empty
    masks: np.ndarray     # (6, H, W) bool, disjoint
    coverage: np.ndarray  # (H, W) bool, union of masks
    label: np.ndarray     # (H, W) uint8, 0 = background


@dataclass
class DiffuseShading:
    """Two-sided flat diffuse: shade = ambient + (1-ambient)*|n . light_dir|."""

    light_dir: tuple = (0.35, 0.75, 0.55)  # direction toward the light, world space
    ambient: float = 0.35


# ---------------------------------------------------------------------------
# Rasterization core
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _raster_kernel(
    xf, yf,            # (M, 3) int64 subpixel coords
    zs,                # (M, 3) float64 camera z
    uvs,               # (M, 3, 2) float64
    labels,            # (M,) uint8
    shades,            # (M,) float64
    flat_colors,       # (M, 3) float32 linear
    textured,          # bool
    tex,               # (TH, TW, 3) float32
    width, height,     # int64
    color_buf,         # (H, W, 3) float32 linear, pre-filled
    z_buf,             # (H, W) float64, pre-filled +inf
    label_buf,         # (H, W) uint8 zeros
):
    TH, TW = tex.shape[0], tex.shape[1]
    for m in range(xf.shape[0]):
        x0, y0 = xf[m, 0], yf[m, 0]
        x1, y1 = xf[m, 1], yf[m, 1]
        x2, y2 = xf[m, 2], yf[m, 2]
        z0, z1, z2 = zs[m, 0], zs[m, 1], zs[m, 2]
        u0, v0 = uvs[m, 0, 0], uvs[m, 0, 1]
        u1, v1 = uvs[m, 1, 0], uvs[m, 1, 1]
        u2, v2 = uvs[m, 2, 0], uvs[m, 2, 1]

        area2 = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area2 == 0:
            continue
        if area2 < 0:  # normalize winding so edge functions are >= 0 inside
            x1, x2 = x2, x1
            y1, y2 = y2, y1
            z1, z2 = z2, z1
            u1, u2 = u2, u1
            v1, v2 = v2, v1
            area2 = -area2

        minx = min(x0, min(x1, x2))
        maxx = max(x0, max(x1, x2))
        miny = min(y0, min(y1, y2))
        maxy = max(y0, max(y1, y2))
        # pixels whose center (p*256 + 128) lies within the bbox
        px0 = max(0, -((-(minx - 128)) // SUBPIX))
        px1 = min(width - 1, (maxx - 128) // SUBPIX)
        py0 = max(0, -((-(miny - 128)) // SUBPIX))
        py1 = min(height - 1, (maxy - 128) // SUBPIX)
        if px0 > px1 or py0 > py1:
            continue

        # top-left fill rule bias per edge (edge i is opposite vertex i)
        dx0, dy0 = x2 - x1, y2 - y1
        dx1, dy1 = x0 - x2, y0 - y2
        dx2, dy2 = x1 - x0, y1 - y0
        b0 = 0 if (dy0 < 0 or (dy0 == 0 and dx0 > 0)) else 1
        b1 = 0 if (dy1 < 0 or (dy1 == 0 and dx1 > 0)) else 1
        b2 = 0 if (dy2 < 0 or (dy2 == 0 and dx2 > 0)) else 1

        inv_area = 1.0 / area2
        iz0, iz1, iz2 = 1.0 / z0, 1.0 / z1, 1.0 / z2
        shade = shades[m]
        lab = labels[m]

        for py in range(py0, py1 + 1):
            sy = py * SUBPIX + 128
            for px in range(px0, px1 + 1):
                sx = px * SUBPIX + 128
                w0 = (x2 - x1) * (sy - y1) - (y2 - y1) * (sx - x1)
                if w0 < b0:
                    continue
                w1 = (x0 - x2) * (sy - y2) - (y0 - y2) * (sx - x2)
                if w1 < b1:
                    continue
                w2 = (x1 - x0) * (sy - y0) - (y1 - y0) * (sx - x0)
                if w2 < b2:
                    continue
                l0 = w0 * inv_area
                l1 = w1 * inv_area
                l2 = w2 * inv_area
                inv_z = l0 * iz0 + l1 * iz1 + l2 * iz2
                z = 1.0 / inv_z
                if z < z_buf[py, px]:
                    z_buf[py, px] = z
                    if textured:
                        u = (l0 * u0 * iz0 + l1 * u1 * iz1 + l2 * u2 * iz2) * z
                        v = (l0 * v0 * iz0 + l1 * v1 * iz1 + l2 * v2 * iz2) * z
                        # bilinear, clamp-to-edge, v=0 at the bottom row
                        tx = u * TW - 0.5
                        ty = (1.0 - v) * TH - 0.5
                        ix = int(np.floor(tx))
                        iy = int(np.floor(ty))
                        fx_ = tx - ix
                        fy_ = ty - iy
                        ix0 = min(max(ix, 0), TW - 1)
                        ix1 = min(max(ix + 1, 0), TW - 1)
                        iy0 = min(max(iy, 0), TH - 1)
                        iy1 = min(max(iy + 1, 0), TH - 1)
                        for c in range(3):
                            t00 = tex[iy0, ix0, c]
                            t10 = tex[iy0, ix1, c]
                            t01 = tex[iy1, ix0, c]
                            t11 = tex[iy1, ix1, c]
                            val = (
                                t00 * (1 - fx_) * (1 - fy_)
                                + t10 * fx_ * (1 - fy_)
                                + t01 * (1 - fx_) * fy_
                                + t11 * fx_ * fy_
                            ) * shade
                            color_buf[py, px, c] = min(max(val, 0.0), 1.0)
                    else:
                        for c in range(3):
                            val = flat_colors[m, c] * shade
                            color_buf[py, px, c] = min(max(val, 0.0), 1.0)
                    label_buf[py, px] = lab


def _clip_triangles_near(
    verts: np.ndarray, uvs: np.ndarray, labels: np.ndarray, shades: np.ndarray,
    colors: np.ndarray, near: float,
):
    """Clip camera-space triangles against z = near (Sutherland-Hodgman).

    Fully-inside triangles pass through vectorized; partially-behind ones are
    re-triangulated; fully-behind ones are dropped.
    """
    z = verts[:, :, 2]
    inside = z >= near
    keep = inside.all(axis=1)
    partial = inside.any(axis=1) & ~keep

    out_v = [verts[keep]]
    out_uv = [uvs[keep]]
    out_lab = [labels[keep]]
    out_sh = [shades[keep]]
    out_col = [colors[keep]]

    for m in np.nonzero(partial)[0]:
        poly = []  # (pos, uv) tuples
        for i in range(3):
            j = (i + 1) % 3
            pi, pj = verts[m, i], verts[m, j]
            ui, uj = uvs[m, i], uvs[m, j]
            zi, zj = pi[2], pj[2]
            if zi >= near:
                poly.append((pi, ui))
            if (zi >= near) != (zj >= near):
                t = (near - zi) / (zj - zi)
                poly.append((pi + t * (pj - pi), ui + t * (uj - ui)))
        for k in range(1, len(poly) - 1):  # fan triangulation
            out_v.append(np.stack([poly[0][0], poly[k][0], poly[k + 1][0]])[None])
            out_uv.append(np.stack([poly[0][1], poly[k][1], poly[k + 1][1]])[None])
            out_lab.append(labels[m : m + 1])
            out_sh.append(shades[m : m + 1])
            out_col.append(colors[m : m + 1])

    return (
        np.concatenate(out_v) if len(out_v) > 1 else out_v[0],
        np.concatenate(out_uv) if len(out_uv) > 1 else out_uv[0],
        np.concatenate(out_lab) if len(out_lab) > 1 else out_lab[0],
        np.concatenate(out_sh) if len(out_sh) > 1 else out_sh[0],
        np.concatenate(out_col) if len(out_col) > 1 else out_col[0],
    )


def _rasterize(
    cam: Camera,
    tri_world: np.ndarray,   # (M, 3, 3)
    tri_uv: np.ndarray,      # (M, 3, 2)
    tri_label: np.ndarray,   # (M,) uint8
    tri_shade: np.ndarray,   # (M,) float64
    tri_color: np.ndarray,   # (M, 3) float32 linear (used when texture is None)
    texture: np.ndarray | None,
    fill_linear: float,
    size: tuple[int, int] | None = None,
    scale: float = 1.0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    W, H = size if size is not None else (cam.width, cam.height)
    color = np.full((H, W, 3), fill_linear, dtype=np.float32)
    zbuf = np.full((H, W), np.inf, dtype=np.float64)
    label = np.zeros((H, W), dtype=np.uint8)

    M = tri_world.shape[0]
    if M:
        flat = tri_world.reshape(-1, 3)
        cam_pts = cam.world_to_cam(flat).reshape(M, 3, 3)
        v, uv, lab, sh, col = _clip_triangles_near(
            cam_pts, tri_uv, tri_label, tri_shade, tri_color, cam.near
        )
        if v.shape[0]:
            z = v[:, :, 2]
            xs = (cam.fx * scale) * v[:, :, 0] / z + cam.cx * scale
            ys = (cam.fy * scale) * v[:, :, 1] / z + cam.cy * scale
            xf = np.clip(np.round(xs * SUBPIX), -_COORD_LIMIT, _COORD_LIMIT).astype(np.int64)
            yf = np.clip(np.round(ys * SUBPIX), -_COORD_LIMIT, _COORD_LIMIT).astype(np.int64)
            textured = texture is not None
            tex = texture if textured else np.zeros((1, 1, 3), dtype=np.float32)
            _raster_kernel(
                xf, yf, np.ascontiguousarray(z), np.ascontiguousarray(uv),
                lab, sh, col, textured, tex, W, H, color, zbuf, label,
            )
    return color, zbuf, label


def _triangle_shades(tri_world: np.ndarray, shading: DiffuseShading | None) -> np.ndarray:
    M = tri_world.shape[0]
    if shading is None:
        return np.ones(M, dtype=np.float64)
    n = np.cross(
        tri_world[:, 1] - tri_world[:, 0], tri_world[:, 2] - tri_world[:, 0]
    )
    norm = np.linalg.norm(n, axis=1)
    norm[norm == 0] = 1.0
    n /= norm[:, None]
    l = np.asarray(shading.light_dir, dtype=np.float64)
    l = l / np.linalg.norm(l)
    lambert = np.abs(n @ l)
    return shading.ambient + (1.0 - shading.ambient) * lambert


def render(
    posed,
    cam: Camera,
    *,
    shading: DiffuseShading | None = None,
    fill: float = 0.0,
    supersample: int = 1,
) -> RenderOutput:
    """Rasterize a posed character: color, depth, part masks, coverage.

    fill is the color written where nothing is covered, in normalized
    [-1, 1] space. supersample=2 renders the color channel at twice the
    resolution and box-filters it down; masks and depth always come from the
    1x pass so masks stay binary.
    """
    cam.validate()
    mesh = posed.mesh
    if not np.all(np.isfinite(posed.vertices)):
        raise NonFiniteError("posed mesh has non-finite vertices")

    tri_world = posed.vertices[mesh.triangles]  # (F, 3, 3)
    tri_uv = mesh.uvs[mesh.triangles]
    tri_label = mesh.part_labels
    tri_shade = _triangle_shades(tri_world, shading)
    tri_color = np.zeros((tri_world.shape[0], 3), dtype=np.float32)
    fill_linear = float(np.clip((fill + 1.0) / 2.0, 0.0, 1.0))

    color_lin, zbuf, label = _rasterize(
        cam, tri_world, tri_uv, tri_label, tri_shade, tri_color, mesh.texture, fill_linear
    )
    if supersample == 2:
        hi, _, _ = _rasterize(
            cam, tri_world, tri_uv, tri_label, tri_shade, tri_color, mesh.texture,
            fill_linear, size=(cam.width * 2, cam.height * 2), scale=2.0,
        )
        color_lin = hi.reshape(cam.height, 2, cam.width, 2, 3).mean(axis=(1, 3))

    coverage = label > 0
    depth = np.where(
        coverage,
        np.clip(2.0 * (zbuf - cam.near) / (cam.far - cam.near) - 1.0, -1.0, 1.0),
        1.0,
    ).astype(np.float32)
    masks = np.stack([label == p for p in range(1, 7)])
    color = (2.0 * color_lin - 1.0).astype(np.float32)
    return RenderOutput(color=color, depth=depth, masks=masks, coverage=coverage, label=label)


# ---------------------------------------------------------------------------
# Background plates
# ---------------------------------------------------------------------------

@dataclass
class SolidBackground:
    rgb: tuple = (0.42, 0.45, 0.5)  # linear [0, 1]


@dataclass
class RoomBackground:
    floor_rgb: tuple = (0.55, 0.52, 0.48)
    wall_rgb: tuple = (0.72, 0.74, 0.78)
    floor_y: float = 0.0
    wall_z: float = -1.6
    extent: float = 60.0


@dataclass
class ImageBackground:
    path: str = ""


def background_from_dict(data: dict):
    kind = data.get("kind", "room")
    if kind == "solid":
        return SolidBackground(rgb=tuple(data.get("rgb", SolidBackground.rgb)))
    if kind == "room":
        out = RoomBackground()
        for k in ("floor_rgb", "wall_rgb"):
            if k in data:
                setattr(out, k, tuple(data[k]))
        for k in ("floor_y", "wall_z", "extent"):
            if k in data:
                setattr(out, k, float(data[k]))
        return out
    if kind == "image":
        if "path" not in data:
            raise AssetError("image background requires a path")
        return ImageBackground(path=data["path"])
    raise AssetError(f"unknown background kind {kind!r}")


def render_background(scene, cam: Camera) -> np.ndarray:
    """Static plate in normalized [-1, 1], same dimensions as the camera."""
    cam.validate()
    H, W = cam.height, cam.width
    if isinstance(scene, SolidBackground):
        img = np.empty((H, W, 3), dtype=np.float32)
        img[:] = 2.0 * np.asarray(scene.rgb, dtype=np.float32) - 1.0
        return np.clip(img, -1.0, 1.0)
    if isinstance(scene, ImageBackground):
        path = Path(scene.path)
        if not path.exists():
            raise AssetError(f"background image not found: {path}")
        arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float32)
        if arr.shape[:2] != (H, W):
            raise AssetError(
                f"background image is {arr.shape[1]}x{arr.shape[0]}, camera wants {W}x{H}"
            )
        return (arr / 127.5 - 1.0).astype(np.float32)
    if isinstance(scene, RoomBackground):
        e = scene.extent
        y, zw = scene.floor_y, scene.wall_z
        floor = [(-e, y, zw), (e, y, zw), (e, y, e), (-e, y, e)]
        wall = [(-e, -e, zw), (e, -e, zw), (e, e, zw), (-e, e, zw)]
        quads = np.array([floor, wall], dtype=np.float64)
        tris = np.concatenate(
            [quads[:, [0, 1, 2]], quads[:, [0, 2, 3]]], axis=0
        )
        cols = np.array(
            [scene.floor_rgb, scene.wall_rgb, scene.floor_rgb, scene.wall_rgb],
            dtype=np.float32,
        )
        color_lin, _, _ = _rasterize(
            cam,
            tris,
            np.zeros((4, 3, 2)),
            np.ones(4, dtype=np.uint8),
            np.ones(4, dtype=np.float64),
            cols,
            None,
            float(np.mean(scene.wall_rgb)),
        )
        return (2.0 * color_lin - 1.0).astype(np.float32)
    raise AssetError(f"unsupported background scene: {type(scene).__name__}")


def silhouette_mask(
    cam: Camera, vertices: np.ndarray, triangles: np.ndarray
) -> np.ndarray:
    """(H, W) bool coverage of arbitrary world-space triangles (shadow pass)."""
    M = triangles.shape[0]
    _, _, label = _rasterize(
        cam,
        vertices[triangles],
        np.zeros((M, 3, 2)),
        np.ones(M, dtype=np.uint8),
        np.ones(M, dtype=np.float64),
        np.zeros((M, 3), dtype=np.float32),
        None,
        0.0,
    )
    return label > 0


# ---------------------------------------------------------------------------
# Skeleton rendering
# ---------------------------------------------------------------------------

def _bone_palette(n: int) -> np.ndarray:
    hues = (0.61803398875 * np.arange(n)) % 1.0
    out = np.empty((n, 3), dtype=np.float32)
    for i, h in enumerate(hues):
        k = int(h * 6) % 6
        f = h * 6 - int(h * 6)
        v, s = 0.95, 0.85
        p, q, t = v * (1 - s), v * (1 - f * s), v * (1 - (1 - f) * s)
        out[i] = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][k]
    return out


def render_skeleton(
    skel: Skeleton,
    pose: Pose,
    cam: Camera,
    *,
    line_width: float = 2.0,
    fill: float = 0.0,
    draw_zero_length_bones: bool = True,
) -> np.ndarray:
    """Bones as fixed-color 2D segments between projected joints, (H, W, 3)
    in [-1, 1]. Bones with an endpoint behind the near plane are skipped."""
    cam.validate()
    H, W = cam.height, cam.width
    img = np.full((H, W, 3), float(np.clip((fill + 1) / 2, 0, 1)), dtype=np.float32)
    joints_w = fk_joint_positions(skel, pose)
    cam_pts = cam.world_to_cam(joints_w)
    palette = _bone_palette(skel.n_joints)
    r = line_width / 2.0

    for j in range(1, skel.n_joints):
        pa = skel.parents[j]
        if cam_pts[j, 2] < cam.near or cam_pts[pa, 2] < cam.near:
            continue
        p0 = cam.project(cam_pts[pa : pa + 1])[0]
        p1 = cam.project(cam_pts[j : j + 1])[0]
        seg = p1 - p0
        seg_len2 = float(seg @ seg)
        if seg_len2 < 1e-18 and not draw_zero_length_bones:
            continue
        x0 = int(np.floor(min(p0[0], p1[0]) - r - 1))
        x1 = int(np.ceil(max(p0[0], p1[0]) + r + 1))
        y0 = int(np.floor(min(p0[1], p1[1]) - r - 1))
        y1 = int(np.ceil(max(p0[1], p1[1]) + r + 1))
        x0, x1 = max(0, x0), min(W - 1, x1)
        y0, y1 = max(0, y0), min(H - 1, y1)
        if x0 > x1 or y0 > y1:
            continue
        ys, xs = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
        px = np.stack([xs + 0.5, ys + 0.5], axis=-1)
        if seg_len2 < 1e-18:
            d2 = ((px - p0) ** 2).sum(axis=-1)
        else:
            t = np.clip(((px - p0) @ seg) / seg_len2, 0.0, 1.0)
            closest = p0 + t[..., None] * seg
            d2 = ((px - closest) ** 2).sum(axis=-1)
        hit = d2 <= r * r
        img[y0 : y1 + 1, x0 : x1 + 1][hit] = palette[j]
    return (2.0 * img - 1.0).astype(np.float32)


# ---------------------------------------------------------------------------
# PNG helpers
# ---------------------------------------------------------------------------

def to_uint8(img: np.ndarray) -> np.ndarray:
    """Map normalized [-1, 1] to 8-bit via round(127.5 * (v + 1))."""
    return np.clip(np.round(127.5 * (np.asarray(img, dtype=np.float64) + 1.0)), 0, 255).astype(
        np.uint8
    )


def save_png(img: np.ndarray, path) -> None:
    """img is (H, W, 3) or (H, W) in [-1, 1]; grayscale saves as mode L."""
    u8 = to_uint8(img)
    mode = "L" if u8.ndim == 2 else "RGB"
    Image.fromarray(u8, mode=mode).save(path)


def load_png(path) -> np.ndarray:
    """Inverse of save_png for RGB images: (H, W, 3) float32 in [-1, 1]."""
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float32)
    return arr / 127.5 - 1.0
