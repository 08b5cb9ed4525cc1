"""Pipeline registry: the eight trait pipelines behind the model-selection
dropdown, their parameter schemas, and per-image execution.

Each pipeline consumes one image (via its fixture predictions and, where
needed, its pixels) and emits CSV-ready records, an optional summary row,
JSON summary values, warnings, and the detection set to draw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable

import numpy as np

from . import counting, disease, morpho
from .calib import (
    Unit,
    calibration_from_fiducials,
    calibration_manual,
    detect_fiducials,
)
from .errors import CalibrationRequired, InvalidParams, UnknownPipeline
from .infer import DetectionSet, FixtureBackend, InferenceParams, detect, postprocess


@dataclass(frozen=True)
class ParamSpec:
    name: str
    type: str  # "float" | "int"
    default: object = None
    minimum: float | None = None
    maximum: float | None = None
    exclusive_min: bool = False
    required: bool = False
    description: str = ""

    def validate(self, value):
        if value is None:
            if self.required:
                raise InvalidParams(f"parameter {self.name!r} is required")
            return None
        if self.type == "int":
            if isinstance(value, bool) or not isinstance(value, int):
                raise InvalidParams(f"parameter {self.name!r} must be an integer, got {value!r}")
        else:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise InvalidParams(f"parameter {self.name!r} must be a number, got {value!r}")
            value = float(value)
            if not math.isfinite(value):
                raise InvalidParams(f"parameter {self.name!r} must be finite")
        if self.minimum is not None:
            if self.exclusive_min and not value > self.minimum:
                raise InvalidParams(f"parameter {self.name!r} must be > {self.minimum}")
            if not self.exclusive_min and value < self.minimum:
                raise InvalidParams(f"parameter {self.name!r} must be >= {self.minimum}")
        if self.maximum is not None and value > self.maximum:
            raise InvalidParams(f"parameter {self.name!r} must be <= {self.maximum}")
        return value

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "type": self.type,
            "default": self.default,
            "min": self.minimum,
            "max": self.maximum,
            "exclusive_min": self.exclusive_min,
            "required": self.required,
            "description": self.description,
        }


_COMMON_PARAMS = (
    ParamSpec("conf_thresh", "float", 0.25, 0.0, 1.0, description="detection confidence threshold"),
    ParamSpec("nms_iou", "float", 0.30, 0.0, 1.0, exclusive_min=True, description="oriented NMS IoU threshold"),
)


@dataclass(frozen=True)
class ImageHandle:
    """One image to process: id in the store, display filename, pixels."""

    image_id: str
    filename: str
    path: Path | None = None

    @property
    def stem(self) -> str:
        return Path(self.filename).stem


@dataclass(frozen=True)
class ImageOutput:
    records: tuple[dict, ...] = ()
    summary_row: dict | None = None
    summary: dict = field(default_factory=dict)
    warnings: tuple[str, ...] = ()
    overlay: DetectionSet | None = None
    crops: DetectionSet | None = None
    crop_padding: float = 0.1


@dataclass(frozen=True)
class ImageResult:
    image_id: str
    filename: str
    output: ImageOutput | None = None
    error: str | None = None  # stable code when the image failed
    error_message: str | None = None


@dataclass(frozen=True)
class JobResult:
    pipeline_id: str
    images: tuple[ImageResult, ...]
    aggregate: dict = field(default_factory=dict)


def _infer_params(params: dict) -> InferenceParams:
    return InferenceParams(conf_thresh=params["conf_thresh"], nms_iou=params["nms_iou"])


def _load_gray(load_image) -> np.ndarray:
    image = load_image()
    if image is None:
        raise CalibrationRequired("fiducial calibration needs image pixels")
    return np.asarray(image.convert("L"))


def _run_spike(handle: ImageHandle, backend: FixtureBackend, params: dict, load_image) -> ImageOutput:
    res = counting.count_spikes(handle.stem, backend, _infer_params(params))
    density = counting.spikes_per_area(
        res.spike_count, params.get("gsd_mm_per_px"),
        res.detections.image_width, res.detections.image_height,
    )
    row = {"spike_count": res.spike_count, "spikes_per_m2": density}
    return ImageOutput(
        records=(row,),
        summary={"spike_count": res.spike_count, "spikes_per_m2": density},
        overlay=res.detections,
    )


def _run_spike_uav(handle: ImageHandle, backend: FixtureBackend, params: dict, load_image) -> ImageOutput:
    width, height = backend.dims(handle.stem)
    grid = counting.plan_tiles(width, height, params["tile_size"], params["overlap"])
    merged = counting.tile_and_merge(handle.stem, grid, backend, _infer_params(params))
    count = merged.count_category("spike")
    density = counting.spikes_per_area(count, params.get("gsd_mm_per_px"), width, height)
    row = {"spike_count": count, "spikes_per_m2": density}
    return ImageOutput(
        records=(row,),
        summary={"spike_count": count, "spikes_per_m2": density, "n_tiles": len(grid.tiles)},
        overlay=merged,
    )


def _run_spikelet(handle: ImageHandle, backend: FixtureBackend, params: dict, load_image) -> ImageOutput:
    p = _infer_params(params)
    spikes = postprocess(detect(backend, handle.stem, "spike"), p)
    spikelets = postprocess(detect(backend, handle.stem, "spikelet"), p)
    assignment = counting.associate_spikelets(spikes, spikelets, params["tau"])
    records = tuple(
        {"spike_index": i, "spikelet_count": assignment.per_spike_counts[i]}
        for i in range(len(spikes.detections))
    )
    combined = DetectionSet(
        spikes.image_ref, spikes.image_width, spikes.image_height,
        spikes.detections + spikelets.detections,
    )
    return ImageOutput(
        records=records,
        summary_row={"unassigned_spikelets": len(assignment.unassigned)},
        summary={
            "spike_count": len(spikes.detections),
            "spikelet_count": len(spikelets.detections),
            "unassigned_spikelets": len(assignment.unassigned),
        },
        overlay=combined,
    )


def _run_fhb_single(handle: ImageHandle, backend: FixtureBackend, params: dict, load_image) -> ImageOutput:
    p = _infer_params(params)
    rec = disease.fhb_single_spike(handle.stem, backend, p)
    processed = postprocess(detect(backend, handle.stem, "fhb_spike_single"), p)
    row = {
        "total_spikelets": rec.total_spikelets,
        "diseased_spikelets": rec.diseased_spikelets,
        "severity": rec.severity,
    }
    return ImageOutput(
        records=(row,),
        summary={"severity": float(rec.severity)},
        overlay=processed,
    )


def _run_fhb_field(handle: ImageHandle, backend: FixtureBackend, params: dict, load_image) -> ImageOutput:
    out = disease.fhb_field_pipeline(
        handle.stem, backend, _infer_params(params), crop_padding=params["crop_padding"]
    )
    records = tuple(
        {
            "spike_index": r.spike_index,
            "view": r.view,
            "total_spikelets": r.total_spikelets,
            "diseased_spikelets": r.diseased_spikelets,
            "severity": r.severity,
        }
        for r in out.records
    )
    summary_row = None
    summary: dict = {"n_spikes_detected": len(out.spikes.detections) if out.spikes else 0}
    if out.summary is not None:
        s = out.summary
        summary_row = {
            "n_assessed": s.n_assessed,
            "n_infected": s.n_infected,
            "incidence": s.incidence,
            "severity_infected": s.severity_infected,
            "severity_all": s.severity_all,
            "fhb_index": s.index,
        }
        summary.update(
            {
                "n_assessed": s.n_assessed,
                "n_infected": s.n_infected,
                "incidence": float(s.incidence),
                "severity_infected": float(s.severity_infected),
                "severity_all": float(s.severity_all),
                "fhb_index": float(s.index),
            }
        )
    crops = None
    if out.spikes is not None and out.kept_indices:
        kept = tuple(out.spikes.detections[i] for i in out.kept_indices)
        crops = DetectionSet(
            out.spikes.image_ref, out.spikes.image_width, out.spikes.image_height, kept
        )
    return ImageOutput(
        records=records,
        summary_row=summary_row,
        summary=summary,
        warnings=out.warnings,
        overlay=out.spikes,
        crops=crops,
        crop_padding=params["crop_padding"],
    )


def _run_fdk(handle: ImageHandle, backend: FixtureBackend, params: dict, load_image) -> ImageOutput:
    p = _infer_params(params)
    res = disease.fdk_assess(handle.stem, backend, p, seg_backend=backend)
    processed = postprocess(detect(backend, handle.stem, "kernel"), p)
    row = {
        "total_kernels": res.total_kernels,
        "damaged_kernels": res.damaged_kernels,
        "fdk_ratio": res.fdk_ratio,
        "area_weighted_ratio": res.area_weighted_ratio,
    }
    return ImageOutput(
        records=(row,),
        summary={
            "total_kernels": res.total_kernels,
            "damaged_kernels": res.damaged_kernels,
            "fdk_ratio": float(res.fdk_ratio),
        },
        overlay=processed,
    )


def _kernel_calibration(handle: ImageHandle, params: dict, load_image):
    if params.get("px_per_mm") is not None:
        return calibration_manual(params["px_per_mm"], Unit.MM), ()
    gray = _load_gray(load_image)
    dets = detect_fiducials(gray)
    cal = calibration_from_fiducials(dets, params["marker_side_mm"])
    return cal, tuple(f"fiducial:{d.marker_id}" for d in dets)


def _run_kernel_morph(handle: ImageHandle, backend: FixtureBackend, params: dict, load_image) -> ImageOutput:
    cal, cal_notes = _kernel_calibration(handle, params, load_image)
    records, summary, warnings = morpho.kernel_morphometrics(
        handle.stem, backend, _infer_params(params), cal
    )
    rows = tuple(
        {
            "kernel_index": r.kernel_index,
            "category": r.category,
            "length_mm": r.length_mm,
            "width_mm": r.width_mm,
            "area_mm2": r.area_mm2,
            "mask_source": r.mask_source,
        }
        for r in records
    )
    processed = postprocess(detect(backend, handle.stem, "kernel"), _infer_params(params))
    return ImageOutput(
        records=rows,
        summary={
            "n": summary.n,
            "mean_length_mm": summary.mean_length_mm,
            "stddev_length_mm": summary.stddev_length_mm,
            "mean_width_mm": summary.mean_width_mm,
            "stddev_width_mm": summary.stddev_width_mm,
            "mean_area_mm2": summary.mean_area_mm2,
            "stddev_area_mm2": summary.stddev_area_mm2,
            "px_per_mm": cal.px_per_unit,
            "calibration_method": cal.method.value,
            "calibration_cv": cal.dispersion_cv,
        },
        warnings=warnings,
        overlay=processed,
    )


def _run_stomata(handle: ImageHandle, backend: FixtureBackend, params: dict, load_image) -> ImageOutput:
    cal = calibration_manual(params["px_per_um"], Unit.UM)
    records, summary, warnings = morpho.stomata_morphometrics(
        handle.stem, backend, _infer_params(params), cal,
        open_thresh=params["open_thresh"], seg_backend=backend,
    )
    rows = tuple(
        {
            "stoma_index": r.stoma_index,
            "stoma_area_um2": r.stoma_area_um2,
            "pore_length_um": r.pore_length_um,
            "pore_width_um": r.pore_width_um,
            "pore_area_um2": r.pore_area_um2,
            "aperture_ratio": r.aperture_ratio,
            "open_flag": r.open_flag,
        }
        for r in records
    )
    p = _infer_params(params)
    stomata = postprocess(detect(backend, handle.stem, "stoma"), p)
    pores = postprocess(detect(backend, handle.stem, "pore"), p)
    combined = DetectionSet(
        stomata.image_ref, stomata.image_width, stomata.image_height,
        stomata.detections + pores.detections,
    )
    return ImageOutput(
        records=rows,
        summary_row={
            "stomata_count": summary.stomata_count,
            "fov_area_mm2": summary.fov_area_mm2,
            "density_per_mm2": summary.density_per_mm2,
            "mean_aperture_ratio": summary.mean_aperture_ratio,
        },
        summary={
            "stomata_count": summary.stomata_count,
            "fov_area_mm2": summary.fov_area_mm2,
            "density_per_mm2": summary.density_per_mm2,
            "mean_aperture_ratio": summary.mean_aperture_ratio,
        },
        warnings=warnings,
        overlay=combined,
    )


@dataclass(frozen=True)
class PipelineDef:
    pipeline_id: str
    display_name: str
    params: tuple[ParamSpec, ...]
    run: Callable[[ImageHandle, FixtureBackend, dict, Callable], ImageOutput]

    def to_descriptor(self) -> dict:
        return {
            "pipeline_id": self.pipeline_id,
            "display_name": self.display_name,
            "params": [p.to_json() for p in self.params],
        }


PIPELINES: dict[str, PipelineDef] = {
    "spike": PipelineDef(
        "spike", "Wheat Spike", _COMMON_PARAMS + (
            ParamSpec("gsd_mm_per_px", "float", None, 0.0, exclusive_min=True,
                      description="ground sampling distance (mm/px) for density"),
        ), _run_spike,
    ),
    "spike-uav": PipelineDef(
        "spike-uav", "UAV Spike", _COMMON_PARAMS + (
            ParamSpec("gsd_mm_per_px", "float", None, 0.0, exclusive_min=True,
                      description="ground sampling distance (mm/px) for density"),
            ParamSpec("tile_size", "int", counting.DEFAULT_TILE_SIZE, 64, 8192,
                      description="tile side, px"),
            ParamSpec("overlap", "int", counting.DEFAULT_TILE_OVERLAP, 0, 8191,
                      description="tile overlap, px"),
        ), _run_spike_uav,
    ),
    "spikelet": PipelineDef(
        "spikelet", "Spikelet", _COMMON_PARAMS + (
            ParamSpec("tau", "float", counting.DEFAULT_ASSIGN_TAU, 0.0, 1.0,
                      description="min intersection-over-spikelet-area for assignment"),
        ), _run_spikelet,
    ),
    "fhb-single": PipelineDef("fhb-single", "FHB Single Spike", _COMMON_PARAMS, _run_fhb_single),
    "fhb-field": PipelineDef(
        "fhb-field", "FHB Field", _COMMON_PARAMS + (
            ParamSpec("crop_padding", "float", disease.DEFAULT_CROP_PADDING, 0.0, 0.5,
                      description="spike crop padding per side, fraction"),
        ), _run_fhb_field,
    ),
    "fdk": PipelineDef("fdk", "FDK", _COMMON_PARAMS, _run_fdk),
    "kernel-morph": PipelineDef(
        "kernel-morph", "Kernel Morphometrics", _COMMON_PARAMS + (
            ParamSpec("px_per_mm", "float", None, 0.0, exclusive_min=True,
                      description="manual scale factor"),
            ParamSpec("marker_side_mm", "float", None, 0.0, exclusive_min=True,
                      description="physical side of fiducial markers, mm"),
        ), _run_kernel_morph,
    ),
    "stomata": PipelineDef(
        "stomata", "Stomata", _COMMON_PARAMS + (
            ParamSpec("px_per_um", "float", None, 0.0, exclusive_min=True, required=True,
                      description="manual scale factor (e.g. the 400x preset)"),
            ParamSpec("open_thresh", "float", morpho.DEFAULT_OPEN_THRESH, 0.0, 1.0,
                      description="aperture ratio at or above which a stoma counts as open"),
        ), _run_stomata,
    ),
}


def list_descriptors() -> list[dict]:
    return [PIPELINES[pid].to_descriptor() for pid in PIPELINES]


def validate_params(pipeline_id: str, raw: dict | None) -> dict:
    """Apply defaults and range checks; reject unknown keys.

    kernel-morph additionally requires exactly one calibration source
    (px_per_mm or marker_side_mm).
    """
    if pipeline_id not in PIPELINES:
        raise UnknownPipeline(f"unknown pipeline {pipeline_id!r}")
    spec = PIPELINES[pipeline_id]
    raw = dict(raw or {})
    known = {p.name for p in spec.params}
    unknown = set(raw) - known
    if unknown:
        raise InvalidParams(f"unknown parameters for {pipeline_id}: {sorted(unknown)}")
    out = {}
    for p in spec.params:
        value = raw.get(p.name, p.default)
        out[p.name] = p.validate(value)
    if pipeline_id == "spike-uav" and out["overlap"] >= out["tile_size"]:
        raise InvalidParams("overlap must be smaller than tile_size")
    if pipeline_id == "kernel-morph":
        have = [k for k in ("px_per_mm", "marker_side_mm") if out.get(k) is not None]
        if len(have) != 1:
            raise CalibrationRequired(
                "kernel-morph needs exactly one of px_per_mm or marker_side_mm"
            )
    return out


def run_pipeline_image(
    pipeline_id: str,
    handle: ImageHandle,
    backend: FixtureBackend,
    params: dict,
    load_image: Callable = lambda: None,
) -> ImageOutput:
    """Run one validated pipeline on one image."""
    return PIPELINES[pipeline_id].run(handle, backend, params, load_image)


def result_to_json(result: JobResult) -> dict:
    """JSON document for results persistence and the HTTP results endpoint."""

    def cell(v):
        if isinstance(v, Fraction):
            return float(v)
        return v

    images = []
    for im in result.images:
        entry: dict = {"image_id": im.image_id, "image": im.filename}
        if im.output is None:
            entry["error"] = im.error
            if im.error_message:
                entry["error_message"] = im.error_message
        else:
            entry["records"] = [
                {k: cell(v) for k, v in row.items()} for row in im.output.records
            ]
            if im.output.summary_row is not None:
                entry["summary_row"] = {k: cell(v) for k, v in im.output.summary_row.items()}
            entry["summary"] = {k: cell(v) for k, v in im.output.summary.items()}
            entry["warnings"] = list(im.output.warnings)
        images.append(entry)
    return {
        "pipeline": result.pipeline_id,
        "images": images,
        "aggregate": result.aggregate,
    }
