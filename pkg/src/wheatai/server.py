"""HTTP API for the web UI and programmatic clients.

All endpoints live under /api/v1; payload field names match the persisted
job documents. Error responses carry a stable `code` from the documented
set and never leak stack traces.
"""

from __future__ import annotations

from contextlib import asynccontextmanager
from pathlib import Path

from fastapi import FastAPI, Request, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles

from .errors import (
    CalibrationRequired,
    InvalidParams,
    JobNotFinished,
    NotADirectory,
    UnknownImage,
    UnknownJob,
    UnknownPipeline,
    WheatAIError,
)
from .jobs import COMPLETED, ContentImageStore, JobEngine, JobSpec
from .pipelines import list_descriptors

MAX_UPLOAD_BYTES = 64 * 1024 * 1024

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
JPEG_MAGIC = b"\xff\xd8\xff"

_STATUS_BY_CODE = {
    UnknownPipeline.code: 400,
    InvalidParams.code: 400,
    CalibrationRequired.code: 400,
    NotADirectory.code: 400,
    UnknownImage.code: 404,
    UnknownJob.code: 404,
    JobNotFinished.code: 409,
}


def _error(code: str, message: str, status: int) -> JSONResponse:
    return JSONResponse({"code": code, "message": message}, status_code=status)


def create_app(
    data_dir: str | Path,
    workers: int = 4,
    per_job_workers: int = 1,
    static_dir: str | Path | None = None,
    max_upload_bytes: int = MAX_UPLOAD_BYTES,
    cors_origins: tuple[str, ...] = ("*",),
) -> FastAPI:
    data_dir = Path(data_dir)
    store = ContentImageStore(data_dir / "images")
    engine = JobEngine(data_dir, store, workers=workers, per_job_workers=per_job_workers)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        engine.start()
        yield
        engine.shutdown()

    app = FastAPI(title="wheatai", lifespan=lifespan)
    app.state.engine = engine
    app.state.store = store
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(WheatAIError)
    async def wheatai_error_handler(request: Request, exc: WheatAIError):
        return _error(exc.code, exc.message, _STATUS_BY_CODE.get(exc.code, 400))

    @app.get("/api/v1/health")
    def health():
        return {"status": "ok", "jobs": len(engine.list_jobs())}

    @app.get("/api/v1/pipelines")
    def pipelines():
        return {"pipelines": list_descriptors()}

    @app.post("/api/v1/images")
    async def upload_image(file: UploadFile):
        data = await file.read()
        if len(data) > max_upload_bytes:
            return _error("payload_too_large", f"image exceeds {max_upload_bytes} bytes", 413)
        if not (data.startswith(PNG_MAGIC) or data.startswith(JPEG_MAGIC)):
            return _error("unsupported_media_type", "only PNG or JPEG images are accepted", 415)
        image_id = store.put(data, file.filename or "image.png")
        return JSONResponse(
            {"image_id": image_id, "filename": store.handle(image_id).filename}, status_code=200
        )

    @app.post("/api/v1/jobs")
    def submit_job(body: dict):
        mode = body.get("mode", "bulk")
        if mode not in ("bulk", "single"):
            return _error("invalid_params", f"mode must be 'single' or 'bulk', got {mode!r}", 400)
        image_ids = body.get("image_ids") or []
        spec = JobSpec(
            pipeline_id=body.get("pipeline", ""),
            image_ids=tuple(image_ids),
            params=body.get("params") or {},
            backend_ref=body.get("backend_ref", ""),
        )
        if mode == "single":
            if len(spec.image_ids) != 1:
                return _error("single_mode_one_image", "single mode takes exactly one image", 400)
            job_id, doc = engine.execute_now(spec)
            record = engine.status(job_id)
            return JSONResponse(
                {"job_id": job_id, "state": record.state, "results": doc}, status_code=200
            )
        job_id = engine.submit(spec)
        return JSONResponse({"job_id": job_id, "state": "queued"}, status_code=202)

    @app.get("/api/v1/jobs/{job_id}")
    def job_status(job_id: str):
        return engine.status(job_id).to_json()

    @app.get("/api/v1/jobs/{job_id}/results")
    def job_results(job_id: str):
        return engine.results_document(job_id)

    @app.get("/api/v1/jobs/{job_id}/results.csv")
    def job_results_csv(job_id: str):
        record = engine.status(job_id)
        if record.state != COMPLETED:
            raise JobNotFinished(f"job {job_id} is {record.state}")
        path = engine.artifact_path(job_id, "results.csv")
        return FileResponse(path, media_type="text/csv", filename=f"{record.spec.pipeline_id}.csv")

    @app.get("/api/v1/jobs/{job_id}/summary.csv")
    def job_summary_csv(job_id: str):
        record = engine.status(job_id)
        if record.state != COMPLETED:
            raise JobNotFinished(f"job {job_id} is {record.state}")
        path = engine.artifact_path(job_id, "summary.csv")
        if not path.is_file():
            raise UnknownJob(f"job {job_id} has no summary table")
        return FileResponse(path, media_type="text/csv", filename=f"{record.spec.pipeline_id}_summary.csv")

    @app.get("/api/v1/jobs/{job_id}/overlays/{image_id}.png")
    def job_overlay(job_id: str, image_id: str):
        record = engine.status(job_id)
        if record.state != COMPLETED:
            raise JobNotFinished(f"job {job_id} is {record.state}")
        path = engine.artifact_path(job_id, f"overlays/{image_id}.png")
        if not path.is_file():
            raise UnknownImage(f"job {job_id} has no overlay for image {image_id!r}")
        return FileResponse(path, media_type="image/png")

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
