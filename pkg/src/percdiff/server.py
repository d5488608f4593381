"""HTTP backend for the interactive correction studio.

Exposes trained checkpoints over a small JSON API: browse scenes, open a
session on one scene, run guided denoising with adjustable weights and an
optional negative condition, ask the advisor for negative suggestions, and
run the full multi-branch correction workflow. Responses are deterministic
given the seeds in the request, so equal sessions return equal payloads.
"""

from __future__ import annotations

import base64
import io
import threading
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .denoiser import DenoiserParams, load_checkpoint
from .guidance import (GuidanceWeights, propose_negatives, run_correction_workflow,
                       sample_trajectory, step_grid)
from .toytask import (Condition, GenerationError, MaskExtractionConfig, TaskConfig,
                      ToyScene, generate_scene, iou)


# --------------------------------------------------------------------------
# payload helpers

def encode_rle(mask: np.ndarray) -> dict:
    """Row-major run-length encoding; counts alternate off/on, starting off."""
    flat = np.asarray(mask, dtype=bool).ravel()
    counts = []
    current, run = False, 0
    for v in flat:
        if v == current:
            run += 1
        else:
            counts.append(run)
            current, run = v, 1
    counts.append(run)
    return {"size": list(mask.shape), "counts": counts}


def decode_rle(rle: dict) -> np.ndarray:
    total = int(np.prod(rle["size"]))
    if sum(rle["counts"]) != total:
        raise ValueError("run lengths do not cover the mask")
    flat = np.zeros(total, dtype=bool)
    pos, value = 0, False
    for run in rle["counts"]:
        flat[pos:pos + run] = value
        pos += run
        value = not value
    return flat.reshape(rle["size"])


def image_to_png_b64(image: np.ndarray, upscale: int = 1) -> str:
    """3 x G x G array in [-1, 1] -> base64 PNG string."""
    from PIL import Image

    arr = np.clip((image + 1.0) * 127.5, 0, 255).astype(np.uint8)
    arr = np.transpose(arr, (1, 2, 0))  # HWC
    if upscale > 1:
        arr = np.repeat(np.repeat(arr, upscale, axis=0), upscale, axis=1)
    img = Image.fromarray(arr, mode="RGB")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": code, "message": message})


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status, self.code, self.message = status, code, message


# --------------------------------------------------------------------------
# request models

class ConditionBody(BaseModel):
    shape: str | None = None
    color: str | None = None
    qualifier: str = "any"
    negated: bool = False

    def to_condition(self) -> Condition:
        try:
            cond = Condition(shape=self.shape, color=self.color,
                             qualifier=self.qualifier, negated=self.negated)
            cond.encode()  # validates vocabulary membership
        except (ValueError, KeyError) as exc:
            raise ApiError(400, "bad_condition", str(exc)) from exc
        return cond


class SessionBody(BaseModel):
    checkpoint_id: str
    scene_seed: int = 0
    condition: ConditionBody | None = None


class WeightsBody(BaseModel):
    w_img: float = Field(default=1.5, ge=0, le=10)
    w_cond: float = Field(default=3.0, ge=0, le=10)
    w_neg: float = Field(default=2.0, ge=0, le=10)


class RunBody(BaseModel):
    steps: int = 50
    weights: WeightsBody = Field(default_factory=WeightsBody)
    negative: ConditionBody | None = None
    checkpoints: list[int] = Field(default_factory=list)
    seed: int | None = None


class AdviseBody(BaseModel):
    k: int = 3


class WorkflowBody(BaseModel):
    k: int = 3
    steps: int = 50
    weights: WeightsBody = Field(default_factory=WeightsBody)
    seed: int | None = None


# --------------------------------------------------------------------------
# state

@dataclass
class Session:
    session_id: str
    checkpoint_id: str
    scene_seed: int
    scene: ToyScene
    condition: Condition
    gt_mask: np.ndarray
    lock: threading.Lock


@dataclass
class LoadedCheckpoint:
    checkpoint_id: str
    params: DenoiserParams
    header: dict


def create_app(config, checkpoints: dict[str, tuple[DenoiserParams, dict]]) -> FastAPI:
    """Build the studio app over already-loaded checkpoints.

    ``config`` is an ExperimentConfig; its task / schedule / extraction
    sections drive scene generation and mask extraction.
    """
    if not checkpoints:
        raise ValueError("at least one checkpoint is required")
    app = FastAPI(title="correction studio backend")
    registry = {cid: LoadedCheckpoint(cid, p, h) for cid, (p, h) in checkpoints.items()}
    sessions: dict[str, Session] = {}
    sessions_lock = threading.Lock()
    schedule = config.schedule()
    task_cfg: TaskConfig = config.task_config()
    extraction: MaskExtractionConfig = config.extraction()

    @app.exception_handler(ApiError)
    async def handle_api_error(request: Request, exc: ApiError):
        return _error(exc.status, exc.code, exc.message)

    @app.exception_handler(RequestValidationError)
    async def handle_validation(request: Request, exc: RequestValidationError):
        return _error(400, "invalid_request", str(exc.errors()))

    def get_checkpoint(cid: str) -> LoadedCheckpoint:
        if cid not in registry:
            raise ApiError(404, "unknown_checkpoint", f"no checkpoint {cid!r}")
        return registry[cid]

    def get_session(sid: str) -> Session:
        with sessions_lock:
            if sid not in sessions:
                raise ApiError(404, "unknown_session", f"no session {sid!r}")
            return sessions[sid]

    def scene_for_seed(seed: int) -> tuple[ToyScene, Condition, np.ndarray]:
        try:
            return generate_scene(task_cfg, np.random.default_rng(seed))
        except GenerationError as exc:
            raise ApiError(400, "scene_generation_failed", str(exc)) from exc

    @app.get("/api/checkpoints")
    def list_checkpoints() -> dict:
        return {"checkpoints": [
            {"id": c.checkpoint_id,
             "target_kind": c.header.get("target_kind", "eps"),
             "grid_size": c.header.get("grid_size"),
             "hidden": c.header.get("hidden"),
             "seed": c.header.get("seed")}
            for c in registry.values()]}

    @app.get("/api/scenes")
    def list_scenes(seed: int = 0, count: int = 8) -> dict:
        if not 1 <= count <= 64:
            raise ApiError(400, "bad_count", "count must be in 1..64")
        out = []
        for i in range(count):
            scene, cond, gt = scene_for_seed(seed + i)
            out.append({
                "scene_seed": seed + i,
                "image_b64": image_to_png_b64(scene.grid),
                "condition": cond.to_dict(),
                "condition_text": cond.describe(),
                "gt_rle": encode_rle(gt),
                "objects": [{"shape": o.shape, "color": o.color,
                             "center": list(o.center), "size": o.size}
                            for o in scene.objects],
            })
        return {"scenes": out}

    @app.post("/api/sessions")
    def create_session(body: SessionBody) -> dict:
        get_checkpoint(body.checkpoint_id)
        scene, generated_cond, gt = scene_for_seed(body.scene_seed)
        cond = body.condition.to_condition() if body.condition else generated_cond
        if body.condition is not None:
            from .toytask import render_target, resolve_condition
            idx = resolve_condition(scene, cond)
            if idx is None:
                raise ApiError(400, "unresolvable_condition",
                               "condition does not uniquely refer to an object")
            gt = scene.masks[idx]
        sid = uuid.uuid4().hex[:12]
        session = Session(session_id=sid, checkpoint_id=body.checkpoint_id,
                          scene_seed=body.scene_seed, scene=scene, condition=cond,
                          gt_mask=gt, lock=threading.Lock())
        with sessions_lock:
            sessions[sid] = session
        return {"session_id": sid,
                "checkpoint_id": body.checkpoint_id,
                "scene_seed": body.scene_seed,
                "image_b64": image_to_png_b64(scene.grid),
                "condition": cond.to_dict(),
                "condition_text": cond.describe(),
                "gt_rle": encode_rle(gt)}

    @app.post("/api/sessions/{sid}/run")
    def run_session(sid: str, body: RunBody) -> dict:
        session = get_session(sid)
        ckpt = get_checkpoint(session.checkpoint_id)
        weights = GuidanceWeights(body.weights.w_img, body.weights.w_cond,
                                  body.weights.w_neg)
        negative = body.negative.to_condition() if body.negative else None
        seed = body.seed if body.seed is not None else session.scene_seed
        with session.lock:
            try:
                checkpoint_ts = body.checkpoints or _default_frames(schedule.T,
                                                                    body.steps)
                traj = sample_trajectory(
                    ckpt.params, session.scene, session.condition, negative, weights,
                    schedule, body.steps, checkpoint_ts, seed,
                    target_kind=ckpt.header.get("target_kind", "eps"),
                    gt_mask=session.gt_mask, extraction=extraction)
            except ValueError as exc:
                raise ApiError(400, "bad_run_request", str(exc)) from exc
        frames = [{"t": c.t,
                   "image_b64": image_to_png_b64(c.x0_snapshot),
                   "mask_rle": encode_rle(c.mask),
                   "iou": c.metric}
                  for c in sorted(traj.checkpoints, key=lambda c: -c.t)]
        return {
            "frames": frames,
            "final_iou": traj.final_metric,
            "final_image_b64": image_to_png_b64(traj.final),
            "final_mask_rle": encode_rle(traj.final_mask),
            "provenance": {
                "condition": session.condition.to_dict(),
                "negative": negative.to_dict() if negative else None,
                "weights": [weights.w_img, weights.w_cond, weights.w_neg],
                "steps": body.steps,
                "seed": seed,
                "checkpoint_id": session.checkpoint_id,
            },
        }

    @app.post("/api/sessions/{sid}/advise")
    def advise(sid: str, body: AdviseBody) -> dict:
        session = get_session(sid)
        if body.k < 1:
            raise ApiError(400, "bad_k", "k must be >= 1")
        negatives = propose_negatives(session.scene, session.condition, body.k)
        return {"negatives": [dict(n.to_dict(), text=n.describe()) for n in negatives]}

    @app.post("/api/sessions/{sid}/workflow")
    def workflow(sid: str, body: WorkflowBody) -> dict:
        session = get_session(sid)
        ckpt = get_checkpoint(session.checkpoint_id)
        if body.k < 1:
            raise ApiError(400, "bad_k", "k must be >= 1")
        weights = GuidanceWeights(body.weights.w_img, body.weights.w_cond,
                                  body.weights.w_neg)
        seed = body.seed if body.seed is not None else session.scene_seed
        with session.lock:
            mask, prov = run_correction_workflow(
                ckpt.params, session.scene, session.condition, body.k, weights,
                schedule, body.steps, seed,
                target_kind=ckpt.header.get("target_kind", "eps"),
                gt_mask=session.gt_mask)
        return {"mask_rle": encode_rle(mask),
                "iou": iou(mask, session.gt_mask),
                "provenance": prov.to_dict()}

    return app


def _default_frames(T: int, steps: int) -> list[int]:
    """Six evenly spread frame timesteps along the sampling grid."""
    grid = step_grid(T, steps)
    if len(grid) <= 6:
        return grid
    idx = np.linspace(0, len(grid) - 1, 6).round().astype(int)
    return [grid[i] for i in idx]


def load_checkpoints(paths: list[str | Path]) -> dict[str, tuple[DenoiserParams, dict]]:
    out: dict[str, tuple[DenoiserParams, dict]] = {}
    for p in paths:
        cid = Path(p).stem
        if cid in out:
            cid = f"{cid}-{len(out)}"
        out[cid] = load_checkpoint(p)
    return out


def serve(config, checkpoint_paths: list[str | Path], host: str = "127.0.0.1",
          port: int = 8601) -> None:
    import uvicorn

    app = create_app(config, load_checkpoints(checkpoint_paths))
    uvicorn.run(app, host=host, port=port)
