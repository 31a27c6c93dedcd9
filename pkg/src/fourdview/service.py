"""HTTP render/edit service over an immutable scene snapshot.

State is loaded once: scene, trained stage models, and an append-only edit
log. Rendering is a pure function of (scene, models, edit log, request),
so identical requests produce byte-identical responses regardless of cache
temperature.
"""

from __future__ import annotations

import io
import json
import logging
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from PIL import Image as PILImage

from . import scene_io
from .compositor import CompositorModel
from .compositor.multistage import STAGE_ORDER, multi_stage_infer, single_stage_infer
from .editing import (EditMask, PropagatedMask, decode_mask_envelope,
                      disocclude, encode_mask_envelope, lift_mask,
                      propagate_mask, remove_region)
from .errors import EmptyLift, EngineError, OutOfRange, TrackLost
from .fusion import FusionConfig, ViewLayers
from .geometry import PinholeCamera
from .image import Image
from .pipeline import LayerCache

logger = logging.getLogger(__name__)

API_VERSION = 1


@dataclass
class RegisteredEdit:
    edit_id: int
    mask: EditMask
    propagated: PropagatedMask


@dataclass
class SessionState:
    scene: scene_io.SceneManifest
    models: dict[str, CompositorModel]
    cache: LayerCache
    edits: dict[int, RegisteredEdit] = field(default_factory=dict)
    next_edit_id: int = 1

    @classmethod
    def load(cls, scene_dir, model_paths: dict[str, str] | None = None,
             fusion: FusionConfig | None = None) -> "SessionState":
        from .compositor.checkpoint import load_model
        scene = scene_io.load_manifest(scene_dir)
        models = {}
        for stage, p in (model_paths or {}).items():
            models[stage] = load_model(p)
        return cls(scene=scene, models=models,
                   cache=LayerCache(scene, fusion or FusionConfig()))


def _parse_camera(state: SessionState, spec) -> tuple[PinholeCamera, str | None]:
    """Camera from an id string or an explicit {K, R, t} pose."""
    if isinstance(spec, str):
        if spec not in state.scene.camera_ids:
            raise KeyError(spec)
        return state.scene.camera(spec), spec
    K = np.asarray(spec["K"], dtype=np.float64)
    R = np.asarray(spec["R"], dtype=np.float64)
    t = np.asarray(spec["t"], dtype=np.float64)
    w, h = state.scene.resolution
    return PinholeCamera(K, R, t, w, h), None


def _png_bytes(img: Image) -> bytes:
    data = np.clip(np.rint(img.data * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    PILImage.fromarray(data, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def _apply_edits(state: SessionState, layers: ViewLayers, volume,
                 edit_ids: list[int], time: int) -> tuple[ViewLayers, bool]:
    fallback = False
    for eid in edit_ids:
        reg = state.edits[eid]
        if time not in reg.propagated.masks:
            continue
        mask = reg.propagated.masks[time]
        if mask.shape != layers.foreground.mask.shape:
            # propagation ran at the cache's working resolution; rescale
            from .image import resize_nearest
            m3 = Image(np.repeat(mask[:, :, None], 3, axis=2).astype(float))
            mask = resize_nearest(m3, *layers.foreground.mask.shape).data[:, :, 0] > 0.5
        if reg.mask.op == "remove":
            layers = remove_region(layers, mask)
        else:
            layers = disocclude(volume, layers, mask, order=1,
                                params=state.cache.config.consensus)
            missing = mask & ~layers.foreground.mask
            if missing.any():
                fallback = True
    return layers, fallback


def create_app(state: SessionState) -> FastAPI:
    app = FastAPI(title="fourdview render service", version=str(API_VERSION))

    @app.exception_handler(EngineError)
    async def engine_error_handler(_req: Request, exc: EngineError):
        status = 422 if isinstance(exc, (EmptyLift, TrackLost)) else 400
        if isinstance(exc, OutOfRange):
            status = 400
        return JSONResponse(status_code=status,
                            content={"error": type(exc).__name__, "detail": str(exc)})

    @app.get("/manifest")
    def manifest():
        s = state.scene
        return {"api_version": API_VERSION, "scene_id": s.scene_id,
                "num_cameras": s.num_cameras, "num_frames": s.num_frames,
                "frame_rate": s.frame_rate, "resolution": list(s.resolution),
                "camera_ids": s.camera_ids,
                "has_ground_truth": s.has_ground_truth,
                "stages": sorted(state.models.keys()),
                "cameras": [
                    {"camera_id": cid,
                     "K": s.calibration[cid].K.tolist(),
                     "R": s.calibration[cid].R.tolist(),
                     "t": s.calibration[cid].t.tolist()} for cid in s.camera_ids]}

    @app.get("/frame")
    def frame(camera: str, t: int):
        if camera not in state.scene.camera_ids:
            return JSONResponse(status_code=404,
                                content={"error": "UnknownCamera", "detail": camera})
        try:
            img = scene_io.fetch_frame(state.scene, camera, t)
        except OutOfRange as exc:
            return JSONResponse(status_code=400,
                                content={"error": "OutOfRange", "detail": str(exc)})
        return Response(content=_png_bytes(img), media_type="image/png")

    @app.post("/render")
    async def render(request: Request):
        body = await request.json()
        if "camera" not in body or "time" not in body:
            return JSONResponse(status_code=400,
                                content={"error": "BadRequest",
                                         "detail": "camera and time are required"})
        stage = body.get("stage", "cascade")
        if stage not in ("low", "mid", "hi", "cascade"):
            return JSONResponse(status_code=400,
                                content={"error": "BadRequest",
                                         "detail": f"unknown stage {stage!r}"})
        needed = list(STAGE_ORDER) if stage == "cascade" else [stage]
        missing = [s for s in needed if s not in state.models]
        if missing:
            return JSONResponse(status_code=409,
                                content={"error": "MissingStage",
                                         "detail": f"no model for {missing}"})
        try:
            cam, cam_id = _parse_camera(state, body["camera"])
        except KeyError as exc:
            return JSONResponse(status_code=404,
                                content={"error": "UnknownCamera", "detail": str(exc)})
        time_f = float(body["time"])
        t = int(round(time_f))
        if t < 0 or t >= state.scene.num_frames:
            return JSONResponse(status_code=400,
                                content={"error": "OutOfRange",
                                         "detail": f"time {time_f} outside [0, {state.scene.num_frames - 1}]"})
        edit_ids = [int(e) for e in body.get("edits", [])]
        unknown = [e for e in edit_ids if e not in state.edits]
        if unknown:
            return JSONResponse(status_code=404,
                                content={"error": "UnknownEdit", "detail": str(unknown)})

        bundle = state.cache.bundle(cam_id if cam_id else cam, t)
        layers = bundle.view_layers()
        layers, fallback = _apply_edits(state, layers, bundle.products.volume,
                                        edit_ids, t)
        if stage == "cascade":
            out = multi_stage_infer(state.models, layers)
        else:
            out = single_stage_infer(state.models[stage], layers)

        meta = {"api_version": API_VERSION, "stage": stage, "time": t,
                "fallback_to_background": fallback}
        if cam_id is not None and not edit_ids:
            from .image import downsample_valid
            from .metrics import psnr
            ref = scene_io.fetch_frame(state.scene, cam_id, t)
            ref = downsample_valid(ref, out.height, out.width)
            meta["psnr_vs_frame"] = round(psnr(out.data, ref.data), 4)
        return Response(content=_png_bytes(out), media_type="image/png",
                        headers={"X-Render-Meta": json.dumps(meta, sort_keys=True)})

    @app.post("/edits")
    async def post_edit(request: Request):
        body = await request.json()
        mask = decode_mask_envelope(body)
        if mask.camera_id not in state.scene.camera_ids:
            return JSONResponse(status_code=404,
                                content={"error": "UnknownCamera",
                                         "detail": mask.camera_id})
        if not (0 <= mask.time < state.scene.num_frames):
            return JSONResponse(status_code=400,
                                content={"error": "OutOfRange",
                                         "detail": f"time {mask.time}"})
        bundle = state.cache.bundle(mask.camera_id, mask.time)
        layers = bundle.view_layers()
        work_mask = mask.mask
        if work_mask.shape != layers.foreground.mask.shape:
            from .image import resize_nearest
            m3 = Image(np.repeat(work_mask[:, :, None], 3, axis=2).astype(float))
            work_mask = resize_nearest(m3, *layers.foreground.mask.shape).data[:, :, 0] > 0.5
        try:
            points = lift_mask(EditMask(mask.camera_id, mask.time, work_mask, mask.op),
                               layers)
            propagated = propagate_mask(
                points, lambda tt: state.cache.bundle(mask.camera_id, tt).view_layers(),
                window=range(state.scene.num_frames), anchor_time=mask.time)
        except EmptyLift as exc:
            return JSONResponse(status_code=422,
                                content={"error": "EmptyLift", "detail": str(exc)})
        except TrackLost as exc:
            return JSONResponse(status_code=422,
                                content={"error": "TrackLost", "detail": str(exc)})
        eid = state.next_edit_id
        state.next_edit_id += 1
        state.edits[eid] = RegisteredEdit(eid, mask, propagated)
        return {"id": eid, "op": mask.op, "camera_id": mask.camera_id,
                "time": mask.time,
                "frames_tracked": len(propagated.masks)}

    @app.get("/edits")
    def list_edits():
        return {"edits": [
            {"id": e.edit_id, "op": e.mask.op, "camera_id": e.mask.camera_id,
             "time": e.mask.time} for e in state.edits.values()]}

    @app.get("/edits/{edit_id}")
    def get_edit(edit_id: int):
        if edit_id not in state.edits:
            return JSONResponse(status_code=404,
                                content={"error": "UnknownEdit", "detail": str(edit_id)})
        return encode_mask_envelope(state.edits[edit_id].mask) | {"id": edit_id}

    @app.delete("/edits/{edit_id}")
    def delete_edit(edit_id: int):
        if edit_id not in state.edits:
            return JSONResponse(status_code=404,
                                content={"error": "UnknownEdit", "detail": str(edit_id)})
        del state.edits[edit_id]
        return {"deleted": edit_id}

    return app
