"""Command line entry points: `wheatai run` for local batch processing and
`wheatai serve` for the HTTP service.

Exit codes: 0 success, 1 fatal error, 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .errors import WheatAIError
from .export import CSV_SCHEMAS, OverlayStyle, export_crops, render_overlay, write_results_csv
from .infer import open_fixture_backend
from .jobs import DirectoryImageSource, write_json_atomic
from .pipelines import (
    PIPELINES,
    ImageResult,
    JobResult,
    result_to_json,
    run_pipeline_image,
    validate_params,
)

# CLI flag -> pipeline parameter
_FLAG_PARAMS = {
    "conf": "conf_thresh",
    "nms_iou": "nms_iou",
    "gsd": "gsd_mm_per_px",
    "tile": "tile_size",
    "overlap": "overlap",
    "tau": "tau",
    "crop_padding": "crop_padding",
    "px_per_mm": "px_per_mm",
    "marker_mm": "marker_side_mm",
    "px_per_um": "px_per_um",
    "open_thresh": "open_thresh",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wheatai", description="Wheat phenotyping pipelines")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="process a directory of images locally")
    run.add_argument("--pipeline", required=True, choices=sorted(PIPELINES))
    run.add_argument("--input", required=True, help="directory of images")
    run.add_argument("--backend", required=True, help="directory of *.pred.json fixtures")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--conf", type=float, help="confidence threshold")
    run.add_argument("--nms-iou", dest="nms_iou", type=float, help="NMS IoU threshold")
    run.add_argument("--gsd", type=float, help="ground sampling distance, mm/px")
    run.add_argument("--tile", type=int, help="tile size, px")
    run.add_argument("--overlap", type=int, help="tile overlap, px")
    run.add_argument("--tau", type=float, help="spikelet assignment threshold")
    run.add_argument("--crop-padding", dest="crop_padding", type=float, help="spike crop padding")
    run.add_argument("--px-per-mm", dest="px_per_mm", type=float, help="manual mm calibration")
    run.add_argument("--marker-mm", dest="marker_mm", type=float, help="fiducial marker side, mm")
    run.add_argument("--px-per-um", dest="px_per_um", type=float, help="manual um calibration")
    run.add_argument("--open-thresh", dest="open_thresh", type=float, help="stomata open threshold")
    run.add_argument("--workers", type=int, default=1, help="concurrent images")
    run.add_argument("--no-overlays", action="store_true", help="skip overlay rendering")

    serve = sub.add_parser("serve", help="serve the HTTP API (and optionally the UI)")
    serve.add_argument("--port", type=int, default=None)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--data-dir", dest="data_dir", default=None)
    serve.add_argument("--workers", type=int, default=None)
    serve.add_argument("--static-dir", dest="static_dir", default=None)
    return parser


def _collect_params(args: argparse.Namespace) -> dict:
    params = {}
    for flag, param in _FLAG_PARAMS.items():
        value = getattr(args, flag, None)
        if value is not None:
            params[param] = value
    return params


def cmd_run(args: argparse.Namespace) -> int:
    try:
        params = validate_params(args.pipeline, _collect_params(args))
    except WheatAIError as exc:
        print(f"error: {exc.code}: {exc.message}", file=sys.stderr)
        return 2

    try:
        source = DirectoryImageSource(args.input)
        backend = open_fixture_backend(args.backend)
    except WheatAIError as exc:
        print(f"error: {exc.code}: {exc.message}", file=sys.stderr)
        return 1
    image_ids = source.list_ids()
    if not image_ids:
        print(f"error: no images found under {args.input}", file=sys.stderr)
        return 1

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def run_one(image_id: str) -> ImageResult:
        handle = source.handle(image_id)

        def load():
            from PIL import Image

            return Image.open(handle.path)

        try:
            output = run_pipeline_image(args.pipeline, handle, backend, params, load)
            return ImageResult(handle.image_id, handle.filename, output=output)
        except WheatAIError as exc:
            return ImageResult(handle.image_id, handle.filename, error=exc.code, error_message=exc.message)

    if args.workers > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(run_one, image_ids))
    else:
        results = [run_one(i) for i in image_ids]

    n_failed = 0
    for res in results:
        if res.output is None:
            n_failed += 1
            print(f"warning: {res.filename}: {res.error}: {res.error_message}", file=sys.stderr)
        else:
            for w in res.output.warnings:
                print(f"warning: {res.filename}: {w}", file=sys.stderr)

    job_result = JobResult(
        pipeline_id=args.pipeline,
        images=tuple(results),
        aggregate={
            "n_images": len(results),
            "n_failed": n_failed,
            "n_records": sum(len(r.output.records) for r in results if r.output),
        },
    )
    n_rows = write_results_csv(job_result, args.pipeline, out_dir / f"{args.pipeline}.csv")
    if CSV_SCHEMAS[args.pipeline]["summary"] is not None:
        write_results_csv(
            job_result, args.pipeline, out_dir / f"{args.pipeline}_summary.csv", table="summary"
        )
    write_json_atomic(out_dir / "results.json", result_to_json(job_result))

    if not args.no_overlays:
        from PIL import Image

        for res in results:
            if res.output is None or res.output.overlay is None:
                continue
            handle = source.handle(res.image_id)
            with Image.open(handle.path) as image:
                try:
                    overlay = render_overlay(image, res.output.overlay, OverlayStyle())
                except WheatAIError as exc:
                    print(f"warning: {res.filename}: {exc.code}", file=sys.stderr)
                    continue
                stem = Path(res.filename).stem
                overlays_dir = out_dir / "overlays"
                overlays_dir.mkdir(exist_ok=True)
                overlay.save(overlays_dir / f"{stem}.png", format="PNG")
                if res.output.crops is not None and len(res.output.crops.detections):
                    export_crops(
                        image, res.output.crops, out_dir / "crops",
                        padding=res.output.crop_padding, stem=stem,
                    )

    print(f"{args.pipeline}: {len(results)} images, {n_rows} records, {n_failed} failed")
    if n_failed == len(results):
        print("error: all_images_failed", file=sys.stderr)
        return 1
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .server import create_app

    port = args.port if args.port is not None else int(os.environ.get("WHEATAI_PORT", "8080"))
    data_dir = args.data_dir if args.data_dir is not None else os.environ.get("WHEATAI_DATA_DIR", "data")
    workers = args.workers if args.workers is not None else int(os.environ.get("WHEATAI_WORKERS", "4"))
    app = create_app(data_dir, workers=workers, static_dir=args.static_dir)
    try:
        uvicorn.run(app, host=args.host, port=port, log_level="warning")
    except (OSError, SystemExit) as exc:
        print(f"error: server failed to start: {exc}", file=sys.stderr)
        return 1
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "run":
        return cmd_run(args)
    if args.command == "serve":
        return cmd_serve(args)
    parser.error(f"unknown command {args.command!r}")
    return 2


if __name__ == "__main__":
    sys.exit(main())
