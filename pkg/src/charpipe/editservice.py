"""Local HTTP service for interactive handle-based IK editing.

JSON over HTTP (FastAPI), CORS enabled for the local UI. Sessions hold a
character, camera, and current pose; /ik solves the handle least-squares
warm-started from the session pose, and preview endpoints render the
current state. Pose updates are atomic: a preview sees either the previous
or the new pose, never a partial one.

Endpoints:
    POST   /session                      -> create a session
    POST   /session/{id}/ik              -> solve handles, update pose
    GET    /session/{id}/preview.png     -> composite | masks | depth | neural
    GET    /session/{id}                 -> session state
    DELETE /session/{id}                 -> drop a session
    GET    /defaults                     -> server-configured asset defaults
"""

from __future__ import annotations

import io
import threading
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .charmesh import RiggedMesh, skin
from .conditioning import ConditioningMode, compose, stack_to_bytes
from .errors import CharpipeError
from .kinematics import Pose, Skeleton, fk_joint_positions, pose_to_dict
from .raster import (
    Camera,
    DiffuseShading,
    RoomBackground,
    load_camera,
    make_default_camera,
    render,
    render_background,
    to_uint8,
)
from .retarget import RetargetConfig, solve_keypoint_ik

PREVIEW_MODES = ("composite", "masks", "depth", "neural")

_MASK_PALETTE = np.array(
    [[40, 40, 40], [230, 60, 60], [60, 180, 60], [60, 90, 230],
     [230, 200, 60], [180, 60, 200], [60, 210, 210]],
    dtype=np.uint8,
)


class SessionRequest(BaseModel):
    character: str | None = None
    camera: str | None = None
    resolution: int | None = None


class Handle(BaseModel):
    name: str
    target: list[float]


class IKRequest(BaseModel):
    handles: list[Handle]
    max_iterations: int = 50


@dataclass
class _Session:
    mesh: RiggedMesh
    skel: Skeleton
    cam: Camera
    bg: np.ndarray
    pose: Pose
    lock: threading.Lock = field(default_factory=threading.Lock)


def _session_payload(sess: _Session, extra: dict | None = None) -> dict:
    joints_w = fk_joint_positions(sess.skel, sess.pose)
    cam_pts = sess.cam.world_to_cam(joints_w)
    safe_z = np.maximum(cam_pts[:, 2], sess.cam.near)
    screen = np.stack(
        [
            sess.cam.fx * cam_pts[:, 0] / safe_z + sess.cam.cx,
            sess.cam.fy * cam_pts[:, 1] / safe_z + sess.cam.cy,
        ],
        axis=1,
    )
    payload = {
        "pose": pose_to_dict(sess.pose),
        "joints": [
            {
                "name": sess.skel.names[j],
                "world": [float(x) for x in joints_w[j]],
                "screen": [float(screen[j, 0]), float(screen[j, 1])],
                "depth": float(cam_pts[j, 2]),
                "parent": int(sess.skel.parents[j]),
            }
            for j in range(sess.skel.n_joints)
        ],
        "keypoints": list(sess.skel.keypoint_names),
        "camera": {
            "fx": sess.cam.fx,
            "fy": sess.cam.fy,
            "cx": sess.cam.cx,
            "cy": sess.cam.cy,
            "width": sess.cam.width,
            "height": sess.cam.height,
            "extrinsic": [float(x) for x in sess.cam.extrinsic.reshape(-1)],
        },
    }
    if extra:
        payload.update(extra)
    return payload


def create_app(
    default_character: str | None = None,
    default_camera: str | None = None,
    resolution: int = 256,
    translator_url: str | None = None,
    ui_dir: str | None = None,
) -> FastAPI:
    app = FastAPI(title="charpipe edit service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    sessions: dict[str, _Session] = {}

    def get_session(session_id: str) -> _Session:
        sess = sessions.get(session_id)
        if sess is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return sess

    @app.get("/defaults")
    def defaults():
        return {
            "character": default_character,
            "camera": default_camera,
            "resolution": resolution,
            "translator": translator_url is not None,
        }

    @app.post("/session")
    def create_session(req: SessionRequest):
        from .charmesh import load_character

        char_path = req.character or default_character
        if not char_path:
            raise HTTPException(status_code=422, detail="no character configured")
        try:
            mesh, skel = load_character(char_path)
            res = req.resolution or resolution
            cam_path = req.camera or default_camera
            cam = load_camera(cam_path) if cam_path else make_default_camera(res, res)
            bg = render_background(RoomBackground(), cam)
        except CharpipeError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        sess = _Session(mesh=mesh, skel=skel, cam=cam, bg=bg, pose=Pose.rest(skel))
        session_id = uuid.uuid4().hex
        sessions[session_id] = sess
        return _session_payload(sess, {"id": session_id})

    @app.get("/session/{session_id}")
    def session_state(session_id: str):
        sess = get_session(session_id)
        with sess.lock:
            return _session_payload(sess)

    @app.delete("/session/{session_id}")
    def delete_session(session_id: str):
        get_session(session_id)
        del sessions[session_id]
        return {"ok": True}

    @app.post("/session/{session_id}/ik")
    def solve_ik(session_id: str, req: IKRequest):
        sess = get_session(session_id)
        if not req.handles:
            raise HTTPException(status_code=422, detail="at least one handle required")
        kp_set = set(sess.skel.keypoint_names)
        for h in req.handles:
            if h.name not in kp_set:
                raise HTTPException(status_code=422, detail=f"unknown keypoint {h.name!r}")
            if len(h.target) != 3:
                raise HTTPException(status_code=422, detail="handle target must be a 3-vector")
        idx = np.array([sess.skel.name_to_index[h.name] for h in req.handles], dtype=np.int64)
        targets = np.array([h.target for h in req.handles], dtype=np.float64)
        cfg = RetargetConfig(max_iterations=req.max_iterations)
        # the body stays put while limbs are dragged; dragging the root
        # keypoint itself frees the global translation
        lock_root = not any(h.name == sess.skel.names[0] for h in req.handles)
        with sess.lock:
            sol = solve_keypoint_ik(
                sess.skel, idx, targets, sess.pose, cfg, lock_root_translation=lock_root
            )
            sess.pose = sol.pose  # atomic swap under the session lock
            return _session_payload(
                sess,
                {
                    "residual": sol.residual,
                    "converged": sol.converged,
                    "iterations": sol.iterations,
                },
            )

    @app.get("/session/{session_id}/preview.png")
    def preview(session_id: str, mode: str = "composite"):
        if mode not in PREVIEW_MODES:
            raise HTTPException(status_code=422, detail=f"mode must be one of {PREVIEW_MODES}")
        sess = get_session(session_id)
        with sess.lock:
            pose = sess.pose  # poses are immutable; grabbing the ref is atomic
        posed = skin(sess.mesh, sess.skel, pose)

        if mode == "neural":
            if not translator_url:
                raise HTTPException(status_code=501, detail="no translator configured")
            out = render(posed, sess.cam)
            stack = compose(out, sess.bg, ConditioningMode.rgbd_parts)
            try:
                import httpx

                resp = httpx.post(
                    translator_url.rstrip("/") + "/infer",
                    content=stack_to_bytes(stack),
                    timeout=30.0,
                )
            except Exception as exc:  # connection-level failure
                raise HTTPException(status_code=502, detail=f"translator unreachable: {exc}")
            if resp.status_code != 200:
                raise HTTPException(
                    status_code=502, detail=f"translator error {resp.status_code}"
                )
            return Response(content=resp.content, media_type="image/png")

        if mode == "depth":
            out = render(posed, sess.cam)
            png = _encode_png(to_uint8(out.depth))
        elif mode == "masks":
            out = render(posed, sess.cam)
            png = _encode_png(_MASK_PALETTE[out.label])
        else:  # composite: lit render over the background plate
            out = render(posed, sess.cam, shading=DiffuseShading())
            img = sess.bg.copy()
            img[out.coverage] = out.color[out.coverage]
            png = _encode_png(to_uint8(img))
        return Response(content=png, media_type="image/png")

    if ui_dir:
        from pathlib import Path

        from fastapi.staticfiles import StaticFiles

        if Path(ui_dir).is_dir():
            app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def _encode_png(arr: np.ndarray) -> bytes:
    from PIL import Image

    mode = "L" if arr.ndim == 2 else "RGB"
    buf = io.BytesIO()
    Image.fromarray(arr, mode=mode).save(buf, format="PNG")
    return buf.getvalue()
