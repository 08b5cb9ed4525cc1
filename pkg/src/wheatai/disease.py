"""Fusarium head blight assessment (single-spike and field pipelines) and
Fusarium-damaged-kernel ratios.

Ratios are exact rationals internally (`fractions.Fraction`); export renders
them as decimals. Empty or degenerate inputs yield absent summaries plus a
stable warning code, never NaN.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .geom import polygon_area
from .infer import (
    DetectionSet,
    FixtureBackend,
    InferenceParams,
    classify,
    crop_detections,
    detect,
    postprocess,
    segment,
)
from .errors import MissingPrediction, MissingVerdict, NoKernels, NoSpikelets

HEALTHY = "healthy"
DISEASED = "diseased"
DAMAGED = "damaged"

WARN_NO_ASSESSABLE_SPIKES = "no_assessable_spikes"
WARN_SPIKE_WITHOUT_SPIKELETS = "spike_without_spikelets"

DEFAULT_CROP_PADDING = 0.1


@dataclass(frozen=True)
class SpikeFHBRecord:
    spike_index: int
    total_spikelets: int
    diseased_spikelets: int
    severity: Fraction
    view: str | None = None

    def __post_init__(self):
        if self.diseased_spikelets > self.total_spikelets:
            raise ValueError("diseased spikelets cannot exceed the total")
        if self.total_spikelets <= 0:
            raise ValueError("severity is undefined without spikelets")


@dataclass(frozen=True)
class FHBSummary:
    n_assessed: int
    n_infected: int
    incidence: Fraction
    severity_infected: Fraction
    severity_all: Fraction
    index: Fraction


@dataclass(frozen=True)
class FHBFieldResult:
    records: tuple[SpikeFHBRecord, ...]
    summary: FHBSummary | None
    warnings: tuple[str, ...] = field(default_factory=tuple)
    spikes: DetectionSet | None = None  # post-processed stage-1 detections
    kept_indices: tuple[int, ...] = field(default_factory=tuple)


@dataclass(frozen=True)
class FDKResult:
    total_kernels: int
    damaged_kernels: int
    fdk_ratio: Fraction
    area_weighted_ratio: float | None = None

    def __post_init__(self):
        if self.damaged_kernels > self.total_kernels:
            raise ValueError("damaged kernels cannot exceed the total")


def _count_spikelets(processed: DetectionSet) -> tuple[int, int]:
    total = len(processed.detections)
    diseased = processed.count_category(DISEASED)
    return total, diseased


def fhb_single_spike(image_ref: str, backend: FixtureBackend, params: InferenceParams) -> SpikeFHBRecord:
    """Severity of one photographed spike: diseased / total spikelets."""
    processed = postprocess(detect(backend, image_ref, "fhb_spike_single"), params)
    total, diseased = _count_spikelets(processed)
    if total == 0:
        raise NoSpikelets(f"image {image_ref!r}: no spikelets detected")
    return SpikeFHBRecord(0, total, diseased, Fraction(diseased, total))


def fhb_metrics(records: list[SpikeFHBRecord]) -> FHBSummary | None:
    """Incidence, severity and index over assessed spikes; None when empty.

    incidence = infected / assessed; severity_infected averages severity over
    infected spikes only (the index convention), severity_all over all
    assessed spikes; index = incidence * severity_infected.
    """
    n = len(records)
    if n == 0:
        return None
    infected = [r for r in records if r.severity > 0]
    incidence = Fraction(len(infected), n)
    severity_infected = (
        sum((r.severity for r in infected), Fraction(0)) / len(infected) if infected else Fraction(0)
    )
    severity_all = sum((r.severity for r in records), Fraction(0)) / n
    return FHBSummary(
        n_assessed=n,
        n_infected=len(infected),
        incidence=incidence,
        severity_infected=severity_infected,
        severity_all=severity_all,
        index=incidence * severity_infected,
    )


def crop_region(box, padding: float, width: int, height: int) -> tuple[int, int, int, int]:
    """Axis-aligned crop window: OBB corner bbox padded per side, clamped."""
    xs = [x for x, _ in box.corners()]
    ys = [y for _, y in box.corners()]
    pad_x = (max(xs) - min(xs)) * padding
    pad_y = (max(ys) - min(ys)) * padding
    x0 = max(0, int(min(xs) - pad_x))
    y0 = max(0, int(min(ys) - pad_y))
    x1 = min(width, int(max(xs) + pad_x + 1))
    y1 = min(height, int(max(ys) + pad_y + 1))
    return x0, y0, x1, y1


def fhb_field_pipeline(
    image_ref: str,
    backend: FixtureBackend,
    params: InferenceParams,
    crop_padding: float = DEFAULT_CROP_PADDING,
) -> FHBFieldResult:
    """Field canopy pipeline: spike detection, per-spike orientation/quality
    verdicts, per-crop spikelet classification, then summary metrics.

    Spikes with a discard verdict are dropped; kept spikes whose crop holds
    no spikelets are excluded from the metrics and flagged.
    """
    spikes = postprocess(detect(backend, image_ref, "spike"), params)
    warnings: list[str] = []
    records: list[SpikeFHBRecord] = []
    kept: list[int] = []
    for position, det in enumerate(spikes.detections):
        try:
            verdict = classify(backend, image_ref, "spike_view", det.source_index)
        except MissingVerdict as exc:
            raise MissingVerdict(
                f"spike {position} (detection {det.source_index}): {exc.message}"
            ) from exc
        if not verdict.keep:
            continue
        kept.append(position)
        crop_set = crop_detections(backend, image_ref, "fhb_spikelet", det.source_index)
        if crop_set is None:
            raise MissingPrediction(
                f"image {image_ref!r}: no crop spikelet predictions for kept spike "
                f"{position} (detection {det.source_index})"
            )
        processed = postprocess(crop_set, params)
        total, diseased = _count_spikelets(processed)
        if total == 0:
            warnings.append(f"{WARN_SPIKE_WITHOUT_SPIKELETS}:{position}")
            continue
        records.append(
            SpikeFHBRecord(position, total, diseased, Fraction(diseased, total), verdict.view)
        )
    summary = fhb_metrics(records)
    if summary is None:
        warnings.append(WARN_NO_ASSESSABLE_SPIKES)
    return FHBFieldResult(tuple(records), summary, tuple(warnings), spikes, tuple(kept))


def fdk_assess(
    image_ref: str,
    backend: FixtureBackend,
    params: InferenceParams,
    seg_backend: FixtureBackend | None = None,
) -> FDKResult:
    """Count healthy vs damaged kernels; optionally weight by mask area."""
    processed = postprocess(detect(backend, image_ref, "kernel"), params)
    total = len(processed.detections)
    if total == 0:
        raise NoKernels(f"image {image_ref!r}: no kernels detected")
    damaged = processed.count_category(DAMAGED)

    area_weighted = None
    if seg_backend is not None:
        masks = segment(
            seg_backend,
            image_ref,
            "kernel",
            [d.box for d in processed.detections],
            strict=False,
            indices=[d.source_index for d in processed.detections],
        )
        damaged_area = total_area = 0.0
        for det, mask in zip(processed.detections, masks):
            area = polygon_area(mask.boundary)
            total_area += area
            if det.category == DAMAGED:
                damaged_area += area
        if total_area > 0:
            area_weighted = damaged_area / total_area
    return FDKResult(total, damaged, Fraction(damaged, total), area_weighted)
