"""Batch-job orchestration over a file-backed store.

Layout under the data directory::

    data/
      images/<image_id>/{<original filename>, meta.json}   (content store)
      jobs/<job_id>/{manifest.json, status.json, results.json,
                     results.csv, summary.csv, overlays/, crops/}
      claims.log

Every status mutation rewrites status.json via write-temp-then-rename, so
readers always see a consistent snapshot and a crash between writes leaves
the previous version intact. One process owns the queue; worker threads
claim queued jobs under a per-job lock (at-most-once, recorded in the claim
log). Results are aggregated in submission order and exported with
deterministic sorting, so reruns are byte-identical regardless of worker
counts.
"""

from __future__ import annotations

import hashlib
import json
import os
import queue
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

from PIL import Image

from .errors import (
    InvalidParams,
    NotADirectory,
    UnknownImage,
    UnknownJob,
    UnknownPipeline,
    WheatAIError,
)
from .export import CSV_SCHEMAS, OverlayStyle, export_crops, render_overlay, write_results_csv
from .infer import open_fixture_backend
from .pipelines import (
    PIPELINES,
    ImageHandle,
    ImageResult,
    JobResult,
    result_to_json,
    run_pipeline_image,
    validate_params,
)

QUEUED = "queued"
RUNNING = "running"
COMPLETED = "completed"
FAILED = "failed"
CANCELLED = "cancelled"

LEGAL_TRANSITIONS = {
    QUEUED: {RUNNING, CANCELLED},
    RUNNING: {COMPLETED, FAILED, CANCELLED},
    COMPLETED: set(),
    FAILED: set(),
    CANCELLED: set(),
}

ERR_ALL_IMAGES_FAILED = "all_images_failed"
ERR_INTERRUPTED = "interrupted"

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


def write_json_atomic(path: Path, doc: dict) -> None:
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_text(json.dumps(doc, indent=1, sort_keys=True), "utf-8")
    os.replace(tmp, path)


@dataclass(frozen=True)
class JobSpec:
    pipeline_id: str
    image_ids: tuple[str, ...]
    params: dict = field(default_factory=dict)
    backend_ref: str = ""


@dataclass(frozen=True)
class Progress:
    done: int
    total: int


@dataclass(frozen=True)
class JobRecord:
    job_id: str
    spec: JobSpec
    state: str
    progress: Progress
    submitted: str
    started: str | None = None
    finished: str | None = None
    error: str | None = None
    claimed_by: str | None = None
    cancel_requested: bool = False
    result_paths: dict = field(default_factory=dict)
    history: tuple[tuple[str, str], ...] = ()

    def to_json(self) -> dict:
        return {
            "job_id": self.job_id,
            "pipeline": self.spec.pipeline_id,
            "image_ids": list(self.spec.image_ids),
            "params": self.spec.params,
            "backend_ref": self.spec.backend_ref,
            "state": self.state,
            "progress": {"done": self.progress.done, "total": self.progress.total},
            "submitted": self.submitted,
            "started": self.started,
            "finished": self.finished,
            "error": self.error,
            "claimed_by": self.claimed_by,
            "cancel_requested": self.cancel_requested,
            "result_paths": self.result_paths,
            "history": [{"state": s, "ts": t} for s, t in self.history],
        }


class DirectoryImageSource:
    """Images straight from a directory; ids are file names."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        if not self.root.is_dir():
            raise NotADirectory(f"image directory {root} does not exist")

    def list_ids(self) -> list[str]:
        return sorted(
            p.name for p in self.root.iterdir()
            if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
        )

    def exists(self, image_id: str) -> bool:
        return (self.root / image_id).is_file()

    def handle(self, image_id: str) -> ImageHandle:
        return ImageHandle(image_id=image_id, filename=image_id, path=self.root / image_id)


class ContentImageStore:
    """Content-addressed image store under data/images; upload is idempotent
    (same bytes yield the same id)."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def put(self, data: bytes, filename: str) -> str:
        image_id = hashlib.sha256(data).hexdigest()[:16]
        folder = self.root / image_id
        if not folder.exists():
            tmp = self.root / f".tmp-{uuid.uuid4().hex}"
            tmp.mkdir()
            safe_name = Path(filename).name or "image"
            (tmp / safe_name).write_bytes(data)
            write_json_atomic(tmp / "meta.json", {"filename": safe_name, "bytes": len(data)})
            try:
                os.replace(tmp, folder)
            except OSError:
                # concurrent identical upload won the rename; content matches
                import shutil

                shutil.rmtree(tmp, ignore_errors=True)
        return image_id

    def exists(self, image_id: str) -> bool:
        return (self.root / image_id / "meta.json").is_file()

    def handle(self, image_id: str) -> ImageHandle:
        meta_path = self.root / image_id / "meta.json"
        if not meta_path.is_file():
            raise UnknownImage(f"unknown image {image_id!r}")
        meta = json.loads(meta_path.read_text("utf-8"))
        return ImageHandle(
            image_id=image_id,
            filename=meta["filename"],
            path=self.root / image_id / meta["filename"],
        )


class JobEngine:
    """One engine per data directory: submission, a worker pool, cancellation
    and restart recovery."""

    def __init__(self, data_dir: str | Path, image_source, workers: int = 1, per_job_workers: int = 1):
        self.data_dir = Path(data_dir)
        self.jobs_dir = self.data_dir / "jobs"
        self.jobs_dir.mkdir(parents=True, exist_ok=True)
        self.image_source = image_source
        self.workers = max(1, int(workers))
        self.per_job_workers = max(1, int(per_job_workers))
        self._queue: queue.Queue[str] = queue.Queue()
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        self._cancel_events: dict[str, threading.Event] = {}
        self._threads: list[threading.Thread] = []
        self._stop = threading.Event()
        self._claims_guard = threading.Lock()

    # -- store helpers -------------------------------------------------

    def _job_dir(self, job_id: str) -> Path:
        return self.jobs_dir / job_id

    def _lock(self, job_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(job_id, threading.Lock())

    def _read_record(self, job_id: str) -> JobRecord:
        status_path = self._job_dir(job_id) / "status.json"
        manifest_path = self._job_dir(job_id) / "manifest.json"
        if not status_path.is_file() or not manifest_path.is_file():
            raise UnknownJob(f"unknown job {job_id!r}")
        status = json.loads(status_path.read_text("utf-8"))
        manifest = json.loads(manifest_path.read_text("utf-8"))
        spec = JobSpec(
            manifest["pipeline"],
            tuple(manifest["image_ids"]),
            manifest["params"],
            manifest["backend_ref"],
        )
        return JobRecord(
            job_id=job_id,
            spec=spec,
            state=status["state"],
            progress=Progress(status["progress"]["done"], status["progress"]["total"]),
            submitted=manifest["submitted"],
            started=status.get("started"),
            finished=status.get("finished"),
            error=status.get("error"),
            claimed_by=status.get("claimed_by"),
            cancel_requested=status.get("cancel_requested", False),
            result_paths=status.get("result_paths", {}),
            history=tuple((h["state"], h["ts"]) for h in status.get("history", [])),
        )

    def _write_status(self, record: JobRecord) -> None:
        doc = record.to_json()
        for key in ("pipeline", "image_ids", "params", "backend_ref", "submitted"):
            doc.pop(key)
        write_json_atomic(self._job_dir(record.job_id) / "status.json", doc)

    def _transition(self, record: JobRecord, new_state: str, **updates) -> JobRecord:
        if new_state != record.state:
            if new_state not in LEGAL_TRANSITIONS[record.state]:
                raise WheatAIError(f"illegal transition {record.state} -> {new_state}")
            updates.setdefault("history", record.history + ((new_state, _utcnow()),))
        updated = replace(record, state=new_state, **updates)
        self._write_status(updated)
        return updated

    # -- lifecycle -------------------------------------------------------

    def start(self) -> None:
        """Recover persisted state, then launch the worker pool."""
        self.recover()
        for i in range(self.workers):
            t = threading.Thread(target=self._worker_loop, name=f"worker-{i}", daemon=True)
            t.start()
            self._threads.append(t)

    def recover(self) -> None:
        """Jobs found running were interrupted by a crash or restart and are
        marked failed; queued jobs are re-enqueued."""
        for job_dir in sorted(self.jobs_dir.iterdir() if self.jobs_dir.is_dir() else []):
            if not (job_dir / "status.json").is_file():
                continue
            job_id = job_dir.name
            with self._lock(job_id):
                record = self._read_record(job_id)
                if record.state == RUNNING:
                    self._transition(
                        record, FAILED, error=ERR_INTERRUPTED, finished=_utcnow()
                    )
                elif record.state == QUEUED:
                    self._queue.put(job_id)

    def shutdown(self, timeout: float | None = 30.0) -> None:
        """Stop accepting work and drain in-flight jobs."""
        self._stop.set()
        for t in self._threads:
            t.join(timeout)
        self._threads.clear()

    # -- submission ------------------------------------------------------

    def _validate_spec(self, spec: JobSpec) -> dict:
        if spec.pipeline_id not in PIPELINES:
            raise UnknownPipeline(f"unknown pipeline {spec.pipeline_id!r}")
        if not spec.image_ids:
            raise InvalidParams("image_ids must be non-empty")
        if len(set(spec.image_ids)) != len(spec.image_ids):
            raise InvalidParams("image_ids must be unique")
        for image_id in spec.image_ids:
            if not self.image_source.exists(image_id):
                raise UnknownImage(f"unknown image {image_id!r}")
        params = validate_params(spec.pipeline_id, spec.params)
        backend_root = self.resolve_backend(spec.backend_ref)
        if not backend_root.is_dir():
            raise NotADirectory(f"backend_ref {spec.backend_ref!r} is not a directory")
        return params

    def resolve_backend(self, backend_ref: str) -> Path:
        path = Path(backend_ref)
        return path if path.is_absolute() else (self.data_dir / path)

    def _persist_new_job(self, spec: JobSpec, params: dict) -> str:
        job_id = uuid.uuid4().hex[:12]
        job_dir = self._job_dir(job_id)
        job_dir.mkdir(parents=True)
        submitted = _utcnow()
        write_json_atomic(
            job_dir / "manifest.json",
            {
                "job_id": job_id,
                "pipeline": spec.pipeline_id,
                "image_ids": list(spec.image_ids),
                "params": params,
                "backend_ref": spec.backend_ref,
                "submitted": submitted,
            },
        )
        record = JobRecord(
            job_id=job_id,
            spec=JobSpec(spec.pipeline_id, tuple(spec.image_ids), params, spec.backend_ref),
            state=QUEUED,
            progress=Progress(0, len(spec.image_ids)),
            submitted=submitted,
            history=((QUEUED, submitted),),
        )
        self._write_status(record)
        return job_id

    def submit(self, spec: JobSpec) -> str:
        """Validate, persist (durable before return), and enqueue."""
        params = self._validate_spec(spec)
        job_id = self._persist_new_job(spec, params)
        self._queue.put(job_id)
        return job_id

    def execute_now(self, spec: JobSpec) -> tuple[str, dict]:
        """Single-image quick check: same persistence and execution path,
        executed synchronously in the caller's thread."""
        params = self._validate_spec(spec)
        job_id = self._persist_new_job(spec, params)
        if self._claim(job_id, "inline"):
            self._execute(job_id)
        results_path = self._job_dir(job_id) / "results.json"
        return job_id, json.loads(results_path.read_text("utf-8"))

    # -- execution ---------------------------------------------------------

    def _worker_loop(self) -> None:
        name = threading.current_thread().name
        while not self._stop.is_set():
            try:
                job_id = self._queue.get(timeout=0.1)
            except queue.Empty:
                continue
            try:
                if self._claim(job_id, name):
                    self._execute(job_id)
            finally:
                self._queue.task_done()

    def _claim(self, job_id: str, worker: str) -> bool:
        with self._lock(job_id):
            record = self._read_record(job_id)
            if record.state != QUEUED:
                return False
            self._cancel_events.setdefault(job_id, threading.Event())
            self._transition(record, RUNNING, claimed_by=worker, started=_utcnow())
        with self._claims_guard:
            with (self.data_dir / "claims.log").open("a", encoding="utf-8") as fh:
                fh.write(f"{job_id} {worker} {_utcnow()}\n")
        return True

    def _load_image(self, handle: ImageHandle):
        if handle.path is None or not Path(handle.path).is_file():
            return None
        return Image.open(handle.path)

    def _run_one_image(self, pipeline_id: str, params: dict, backend, image_id: str) -> ImageResult:
        handle = self.image_source.handle(image_id)
        try:
            output = run_pipeline_image(
                pipeline_id, handle, backend, params, lambda: self._load_image(handle)
            )
            return ImageResult(handle.image_id, handle.filename, output=output)
        except WheatAIError as exc:
            return ImageResult(handle.image_id, handle.filename, error=exc.code, error_message=exc.message)
        except Exception as exc:  # defensive: a bad image must not sink the batch
            return ImageResult(handle.image_id, handle.filename, error="internal_error", error_message=str(exc))

    def _execute(self, job_id: str) -> None:
        record = self._read_record(job_id)
        spec = record.spec
        cancel = self._cancel_events.setdefault(job_id, threading.Event())
        try:
            backend = open_fixture_backend(self.resolve_backend(spec.backend_ref))
        except WheatAIError as exc:
            with self._lock(job_id):
                record = self._read_record(job_id)
                self._transition(record, FAILED, error=exc.code, finished=_utcnow())
            return

        results: dict[str, ImageResult] = {}
        processed: list[str] = []

        def run_image(image_id: str) -> ImageResult | None:
            if cancel.is_set():
                return None
            return self._run_one_image(spec.pipeline_id, spec.params, backend, image_id)

        if self.per_job_workers > 1:
            with ThreadPoolExecutor(max_workers=self.per_job_workers) as pool:
                futures = {iid: pool.submit(run_image, iid) for iid in spec.image_ids}
                for image_id in spec.image_ids:
                    res = futures[image_id].result()
                    if res is None:
                        continue
                    results[image_id] = res
                    processed.append(image_id)
                    self._bump_progress(job_id, len(processed))
        else:
            for image_id in spec.image_ids:
                res = run_image(image_id)
                if res is None:
                    break
                results[image_id] = res
                processed.append(image_id)
                self._bump_progress(job_id, len(processed))

        ordered = tuple(results[iid] for iid in spec.image_ids if iid in results)
        n_failed = sum(1 for r in ordered if r.output is None)
        job_result = JobResult(
            pipeline_id=spec.pipeline_id,
            images=ordered,
            aggregate={
                "n_images": len(ordered),
                "n_failed": n_failed,
                "n_records": sum(len(r.output.records) for r in ordered if r.output),
            },
        )
        result_paths = self._persist_results(job_id, job_result)

        with self._lock(job_id):
            record = self._read_record(job_id)
            finished = _utcnow()
            if cancel.is_set():
                self._transition(record, CANCELLED, finished=finished, result_paths=result_paths)
            elif ordered and n_failed == len(ordered):
                self._transition(
                    record, FAILED, error=ERR_ALL_IMAGES_FAILED,
                    finished=finished, result_paths=result_paths,
                )
            else:
                self._transition(record, COMPLETED, finished=finished, result_paths=result_paths)

    def _bump_progress(self, job_id: str, done: int) -> None:
        with self._lock(job_id):
            record = self._read_record(job_id)
            if done > record.progress.done:
                self._write_status(replace(record, progress=Progress(done, record.progress.total)))

    def _persist_results(self, job_id: str, job_result: JobResult) -> dict:
        job_dir = self._job_dir(job_id)
        write_json_atomic(job_dir / "results.json", result_to_json(job_result))
        paths = {"results": "results.json"}
        csv_path = job_dir / "results.csv"
        write_results_csv(job_result, job_result.pipeline_id, csv_path, table="records")
        paths["results_csv"] = "results.csv"
        if CSV_SCHEMAS[job_result.pipeline_id]["summary"] is not None:
            write_results_csv(job_result, job_result.pipeline_id, job_dir / "summary.csv", table="summary")
            paths["summary_csv"] = "summary.csv"
        overlays_dir = job_dir / "overlays"
        crops_dir = job_dir / "crops"
        for image_result in job_result.images:
            if image_result.output is None or image_result.output.overlay is None:
                continue
            handle = self.image_source.handle(image_result.image_id)
            image = self._load_image(handle)
            if image is None:
                continue
            try:
                overlay = render_overlay(image, image_result.output.overlay, OverlayStyle())
            except WheatAIError:
                continue
            overlays_dir.mkdir(exist_ok=True)
            overlay.save(overlays_dir / f"{image_result.image_id}.png", format="PNG")
            paths["overlays"] = "overlays"
            if image_result.output.crops is not None and len(image_result.output.crops.detections):
                export_crops(
                    image, image_result.output.crops, crops_dir,
                    padding=image_result.output.crop_padding,
                    stem=Path(image_result.filename).stem,
                )
                paths["crops"] = "crops"
        return paths

    # -- queries ----------------------------------------------------------

    def status(self, job_id: str) -> JobRecord:
        with self._lock(job_id):
            return self._read_record(job_id)

    def cancel(self, job_id: str) -> JobRecord:
        """queued -> cancelled now; running -> cancellation at the next image
        boundary; terminal states acknowledge without change."""
        with self._lock(job_id):
            record = self._read_record(job_id)
            if record.state == QUEUED:
                return self._transition(record, CANCELLED, finished=_utcnow())
            if record.state == RUNNING:
                self._cancel_events.setdefault(job_id, threading.Event()).set()
                updated = replace(record, cancel_requested=True)
                self._write_status(updated)
                return updated
            return record

    def list_jobs(self) -> list[str]:
        if not self.jobs_dir.is_dir():
            return []
        return sorted(p.name for p in self.jobs_dir.iterdir() if (p / "status.json").is_file())

    def results_document(self, job_id: str) -> dict:
        record = self.status(job_id)
        if record.state != COMPLETED:
            from .errors import JobNotFinished

            raise JobNotFinished(f"job {job_id} is {record.state}")
        return json.loads((self._job_dir(job_id) / "results.json").read_text("utf-8"))

    def artifact_path(self, job_id: str, relative: str) -> Path:
        return self._job_dir(job_id) / relative
