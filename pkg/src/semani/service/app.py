"""HTTP face of a run directory: sync segment/align, async manipulate."""

from __future__ import annotations

import base64
import binascii
import hashlib
import threading
from typing import Any

import numpy as np
from fastapi import FastAPI, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from semani.align.masks import mask_to_tokens
from semani.align.providers import segment
from semani.config import DecodeParams, SamplerParams
from semani.corpus.scenes import to_grayscale
from semani.errors import (
    ConfigurationError,
    DomainError,
    EmptySegmentationError,
    SemaniError,
    ShapeMismatchError,
)
from semani.service.jobs import JobStore
from semani.service.registry import ModelRegistry, resolve_home
from semani.service.schemas import (
    AlignRequest,
    AlignResponse,
    CountersResponse,
    ManipulateAccepted,
    ManipulateParams,
    ManipulateRequest,
    MaskView,
    SegmentRequest,
    SegmentResponse,
)
from semani.storage import image_to_png, mask_to_png, png_to_image, png_to_mask
from semani.transgen.generate import decode_image
from semani.transgen.generate import manipulate as trans_manipulate

MAX_IMAGE_BYTES = 1 << 20


class ApiError(Exception):
    """Maps directly onto a machine-readable HTTP error body."""

    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


class MaskStore:
    """Content-addressed PNG masks minted by segment/align responses."""

    def __init__(self) -> None:
        self._masks: dict[str, bytes] = {}
        self._lock = threading.Lock()

    def put(self, png: bytes) -> str:
        ref = hashlib.sha256(png).hexdigest()[:16]
        with self._lock:
            self._masks[ref] = png
        return ref

    def get(self, ref: str) -> bytes | None:
        with self._lock:
            return self._masks.get(ref)


def _decode_image(b64: str) -> np.ndarray:
    try:
        raw = base64.b64decode(b64, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise ApiError(400, "undecodable_image", f"invalid base64: {exc}") from exc
    if len(raw) > MAX_IMAGE_BYTES:
        raise ApiError(
            413, "image_too_large", f"image is {len(raw)} bytes; limit {MAX_IMAGE_BYTES}"
        )
    try:
        return png_to_image(raw)
    except Exception as exc:
        raise ApiError(400, "undecodable_image", f"invalid PNG: {exc}") from exc


def _mask_views(masks: list[np.ndarray], store: MaskStore) -> list[MaskView]:
    views = []
    for i, m in enumerate(masks):
        png = mask_to_png(m)
        views.append(
            MaskView(
                id=i,
                mask_ref=store.put(png),
                png=base64.b64encode(png).decode("ascii"),
            )
        )
    return views


def create_app(home: str | None = None, max_workers: int = 2) -> FastAPI:
    registry = ModelRegistry(resolve_home(home))
    jobs = JobStore(max_workers=max_workers)
    masks = MaskStore()
    app = FastAPI(title="semani", version="1")
    app.state.registry = registry
    app.state.jobs = jobs
    app.state.masks = masks
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    engine_lock = threading.Lock()
    engine_holder: dict[str, Any] = {"engine": None}
    counters = {"segment_calls": 0, "manipulate_jobs": 0}

    def get_engine():
        # lazy so mask-override flows never touch the scoring models
        with engine_lock:
            if engine_holder["engine"] is None:
                engine_holder["engine"] = registry.engine()
            return engine_holder["engine"]

    def align_calls() -> int:
        with engine_lock:
            engine = engine_holder["engine"]
            return 0 if engine is None else engine.calls

    @app.exception_handler(ApiError)
    async def _api_error(_, exc: ApiError):
        return JSONResponse(
            status_code=exc.status,
            content={"error": {"code": exc.code, "message": exc.message}},
        )

    @app.exception_handler(SemaniError)
    async def _domain_error(_, exc: SemaniError):
        code = {
            ConfigurationError: "configuration",
            EmptySegmentationError: "no_entity",
            ShapeMismatchError: "shape_mismatch",
            DomainError: "invalid_input",
        }.get(type(exc), "invalid_input")
        status = 422
        return JSONResponse(
            status_code=status,
            content={"error": {"code": code, "message": str(exc)}},
        )

    @app.get("/v1/health")
    def health() -> dict[str, str]:
        return {"status": "ok"}

    @app.post("/v1/segment", response_model=SegmentResponse)
    def segment_endpoint(req: SegmentRequest) -> SegmentResponse:
        image = _decode_image(req.image)
        counters["segment_calls"] += 1
        segmenter = registry.segmenter if req.provider == "learned" else None
        try:
            found = segment(image, req.provider, segmenter=segmenter)
        except EmptySegmentationError as exc:
            raise ApiError(422, "no_entity", str(exc)) from exc
        return SegmentResponse(masks=_mask_views(found, masks), scores=None)

    @app.post("/v1/align", response_model=AlignResponse)
    def align_endpoint(req: AlignRequest) -> AlignResponse:
        image = _decode_image(req.image)
        try:
            result = get_engine().align(
                image,
                req.prompt,
                scoring=req.scoring,
                mode=req.mode,
                provider=req.provider,
                theta=req.theta,
            )
        except EmptySegmentationError as exc:
            raise ApiError(422, "no_entity", str(exc)) from exc
        if req.mode == "threshold" and not result.selected:
            raise ApiError(
                422,
                "no_entity_matched",
                f"no entity scored above theta={result.theta}",
            )
        return AlignResponse(
            masks=_mask_views(result.masks, masks),
            scores=[float(s) for s in result.scores],
            selected=list(result.selected),
            mode=result.mode,
            scoring=result.scoring,
            status=result.status,
            theta=result.theta,
        )

    @app.post("/v1/manipulate", response_model=ManipulateAccepted, status_code=202)
    def manipulate_endpoint(req: ManipulateRequest) -> ManipulateAccepted:
        image = _decode_image(req.image)
        if req.mask_ref is not None:
            png = masks.get(req.mask_ref)
            if png is None:
                raise ApiError(409, "unknown_mask_ref", f"no mask {req.mask_ref!r}")
            mask = png_to_mask(png)
            if mask.shape != image.shape[:2]:
                raise ApiError(
                    422, "shape_mismatch", f"mask {mask.shape} vs image {image.shape[:2]}"
                )
            mask_png = png
        else:
            try:
                aligned = get_engine().align(
                    image, req.prompt, scoring=req.scoring, mode="argmax"
                )
            except (EmptySegmentationError, DomainError) as exc:
                raise ApiError(422, "alignment_failure", str(exc)) from exc
            mask = aligned.selected_mask()
            mask_png = mask_to_png(mask)
        if not (mask > 0).any():
            raise ApiError(422, "empty_mask", "selected mask has no pixels")
        mask_ref = masks.put(mask_png)

        if req.method == "trans":
            registry.require("vqae", "transgen")
        else:
            registry.require("diffgen")
        model_names = ("vqae", "transgen") if req.method == "trans" else ("diffgen",)
        hashes = registry.hashes(model_names)
        params = req.params
        text = req.text
        method = req.method

        def run() -> dict[str, Any]:
            out = _run_edit(registry, method, image, mask, text, params)
            return {
                "image": base64.b64encode(image_to_png(out)).decode("ascii"),
                "mask": base64.b64encode(mask_png).decode("ascii"),
                "mask_ref": mask_ref,
                "model_hashes": hashes,
                "seed": params.seed,
                "method": method,
                "params": params.model_dump(),
            }

        job_params = {
            "method": method,
            "text": text,
            "prompt": req.prompt,
            "mask_ref": mask_ref,
            "params": params.model_dump(),
            "image_sha256": hashlib.sha256(req.image.encode("ascii")).hexdigest(),
        }
        counters["manipulate_jobs"] += 1
        return ManipulateAccepted(job_id=jobs.submit("manipulate", job_params, run))

    @app.get("/v1/jobs/{job_id}")
    def job_endpoint(job_id: str) -> dict[str, Any]:
        view = jobs.get(job_id)
        if view is None:
            raise ApiError(404, "unknown_job", f"no job {job_id!r}")
        return view

    @app.get("/v1/masks/{ref}")
    def mask_endpoint(ref: str) -> Response:
        png = masks.get(ref)
        if png is None:
            raise ApiError(404, "unknown_mask_ref", f"no mask {ref!r}")
        return Response(content=png, media_type="image/png")

    @app.get("/v1/counters", response_model=CountersResponse)
    def counters_endpoint() -> CountersResponse:
        return CountersResponse(
            align_calls=align_calls(),
            segment_calls=counters["segment_calls"],
            manipulate_jobs=counters["manipulate_jobs"],
        )

    return app


def _run_edit(
    registry: ModelRegistry,
    method: str,
    image: np.ndarray,
    mask: np.ndarray,
    text: str,
    params: ManipulateParams,
) -> np.ndarray:
    if method == "trans":
        vqae = registry.vqae
        trans = registry.transgen
        tokens = vqae.tokens(image)
        h, w = tokens.shape
        token_mask = mask_to_tokens(mask, h, w)
        gray = vqae.tokens(to_grayscale(image)) if params.use_gray else None
        text_ids = registry.vocabulary.tokenize(text).ids
        decode = DecodeParams(
            temperature=params.temperature, top_k=params.top_k, seed=params.seed
        )
        out_tokens = trans_manipulate(
            trans.model, tokens, token_mask, text_ids, gray, decode
        )
        return decode_image(vqae, out_tokens, image, mask)
    from semani.diffgen.manipulate import manipulate as diff_manipulate

    sampler = SamplerParams(
        ddim_steps=params.steps,
        guidance_scale=params.guidance,
        eta=params.eta,
        seed=params.seed,
    )
    return diff_manipulate(registry.diffgen, image, mask, text, sampler)
