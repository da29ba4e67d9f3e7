"""Inference HTTP service: POST /infer with .nrcs bytes, PNG response.

Requests are served one at a time (a lock serializes the forward pass)."""

from __future__ import annotations

import io
import threading

import numpy as np
from fastapi import FastAPI, HTTPException, Request, Response
from PIL import Image

from . import nrcs
from .errors import Char2ImageError
from .train import infer, load_generator


def create_app(ckpt_path, device: str = "cpu") -> FastAPI:
    G, ckpt = load_generator(ckpt_path, device=device)
    app = FastAPI(title="char2image inference")
    lock = threading.Lock()

    @app.get("/health")
    def health():
        return {
            "mode": ckpt["mode"],
            "channels": ckpt["channels"],
            "resolution": ckpt["resolution"],
        }

    @app.post("/infer")
    async def do_infer(request: Request):
        blob = await request.body()
        try:
            stack = nrcs.from_bytes(blob, source="request body")
            with lock:
                img, ms = infer(G, stack.channels, device=device)
        except Char2ImageError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        u8 = np.clip(np.round(127.5 * (np.moveaxis(img, 0, -1) + 1.0)), 0, 255).astype(np.uint8)
        buf = io.BytesIO()
        Image.fromarray(u8).save(buf, format="PNG")
        return Response(
            content=buf.getvalue(),
            media_type="image/png",
            headers={"X-Inference-Ms": f"{ms:.1f}"},
        )

    return app
