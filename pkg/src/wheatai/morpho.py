"""Physical-unit morphometrics: kernel length/width/area and stomatal
density plus pore aperture metrics.

Lengths and widths come from the minimum-area rectangle over the instance
boundary; areas come from the polygon (exact) or the pixel count (bitmask).
All pixel values convert through a ScaleCalibration.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field

import numpy as np

from .calib import ScaleCalibration, convert_measurement
from .errors import DegenerateInput, DegenerateMask, NoKernels, NoStomata
from .geom import min_area_rect, polygon_area, ConvexPolygon
from .infer import (
    DetectionSet,
    FixtureBackend,
    InferenceParams,
    MaskSegment,
    detect,
    inscribed_ellipse,
    postprocess,
    segment,
)

MIN_MASK_PIXELS = 16
# bitmask calipers run over lit pixel centers, which sit up to half a pixel
# inside the true silhouette on each side
BITMASK_SIDE_PAD = 1.0

DEFAULT_OPEN_THRESH = 0.3

WARN_DEGENERATE_MASK = "degenerate_mask"
WARN_DUPLICATE_PORE = "duplicate_pore"


@dataclass(frozen=True)
class KernelRecord:
    kernel_index: int
    length_mm: float
    width_mm: float
    area_mm2: float
    category: str  # healthy | damaged | unknown
    mask_source: str

    def __post_init__(self):
        if self.width_mm > self.length_mm:
            raise ValueError("length must be the longer side")
        if self.area_mm2 > self.length_mm * self.width_mm * 1.01:
            raise ValueError("area exceeds the enclosing rectangle bound")


@dataclass(frozen=True)
class MorphometricsSummary:
    n: int
    mean_length_mm: float | None = None
    stddev_length_mm: float | None = None
    mean_width_mm: float | None = None
    stddev_width_mm: float | None = None
    mean_area_mm2: float | None = None
    stddev_area_mm2: float | None = None


@dataclass(frozen=True)
class StomaRecord:
    stoma_index: int
    stoma_area_um2: float
    pore_length_um: float | None = None
    pore_width_um: float | None = None
    pore_area_um2: float | None = None
    aperture_ratio: float | None = None
    open_flag: bool | None = None


@dataclass(frozen=True)
class StomataSummary:
    stomata_count: int
    fov_area_mm2: float
    density_per_mm2: float
    mean_aperture_ratio: float | None = None


@dataclass(frozen=True)
class PoreAssignment:
    stoma_to_pore: dict[int, int]
    duplicate_pores: tuple[int, ...] = field(default_factory=tuple)
    unassigned_pores: tuple[int, ...] = field(default_factory=tuple)


def _bitmask_boundary_points(mask: np.ndarray) -> list[tuple[float, float]]:
    """Row-extreme pixel centers; the convex hull over these equals the hull
    over all lit pixel centers."""
    rows = np.flatnonzero(mask.any(axis=1))
    pts: list[tuple[float, float]] = []
    for r in rows:
        cols = np.flatnonzero(mask[r])
        pts.append((cols[0] + 0.5, r + 0.5))
        if cols[-1] != cols[0]:
            pts.append((cols[-1] + 0.5, r + 0.5))
    return pts


def mask_dimensions(mask: MaskSegment, calibration: ScaleCalibration) -> tuple[float, float, float]:
    """(length, width, area) of one instance mask in physical units.

    Length/width are the long/short sides of the minimum-area enclosing
    rectangle of the boundary; area is the exact polygon area or the bitmask
    pixel count.
    """
    boundary = mask.boundary
    if isinstance(boundary, ConvexPolygon):
        if len(boundary.vertices) < 3:
            raise DegenerateMask(f"mask {mask.detection_index}: fewer than 3 boundary points")
        try:
            rect = min_area_rect(boundary.coords())
        except DegenerateInput as exc:
            raise DegenerateMask(f"mask {mask.detection_index}: {exc.message}") from exc
        length_px, width_px = rect.w, rect.h
        area_px = polygon_area(boundary)
    else:
        bits = np.asarray(boundary).astype(bool)
        count = int(bits.sum())
        if count < MIN_MASK_PIXELS:
            raise DegenerateMask(f"mask {mask.detection_index}: only {count} px")
        try:
            rect = min_area_rect(_bitmask_boundary_points(bits))
        except DegenerateInput as exc:
            raise DegenerateMask(f"mask {mask.detection_index}: {exc.message}") from exc
        length_px = rect.w + BITMASK_SIDE_PAD
        width_px = rect.h + BITMASK_SIDE_PAD
        area_px = float(count)
    return (
        convert_measurement(length_px, "length", calibration),
        convert_measurement(width_px, "length", calibration),
        convert_measurement(area_px, "area", calibration),
    )


def _summary_stats(values: list[float]) -> tuple[float, float]:
    mean = statistics.fmean(values)
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return mean, std


def summarize_kernels(records: list[KernelRecord]) -> MorphometricsSummary:
    if not records:
        return MorphometricsSummary(0)
    ml, sl = _summary_stats([r.length_mm for r in records])
    mw, sw = _summary_stats([r.width_mm for r in records])
    ma, sa = _summary_stats([r.area_mm2 for r in records])
    return MorphometricsSummary(len(records), ml, sl, mw, sw, ma, sa)


def kernel_morphometrics(
    image_ref: str,
    backend: FixtureBackend,
    params: InferenceParams,
    calibration: ScaleCalibration,
) -> tuple[list[KernelRecord], MorphometricsSummary, list[str]]:
    """Per-kernel length/width/area records plus summary statistics.

    Kernels whose mask is degenerate are skipped with a warning rather than
    failing the image.
    """
    processed = postprocess(detect(backend, image_ref, "kernel"), params)
    if len(processed.detections) == 0:
        raise NoKernels(f"image {image_ref!r}: no kernels detected")
    masks = segment(
        backend,
        image_ref,
        "kernel",
        [d.box for d in processed.detections],
        strict=False,
        indices=[d.source_index for d in processed.detections],
    )
    records: list[KernelRecord] = []
    warnings: list[str] = []
    for position, (det, mask) in enumerate(zip(processed.detections, masks)):
        try:
            length, width, area = mask_dimensions(mask, calibration)
        except DegenerateMask:
            warnings.append(f"{WARN_DEGENERATE_MASK}:{position}")
            continue
        category = det.category if det.category in ("healthy", "damaged") else "unknown"
        records.append(KernelRecord(position, length, width, area, category, mask.source))
    return records, summarize_kernels(records), warnings


def associate_pores(stomata: DetectionSet, pores: DetectionSet) -> PoreAssignment:
    """Attach each pore to the stoma whose box contains its center.

    A stoma with several candidate pores keeps the highest-confidence one
    (ties to the lower pore index); the rest are flagged duplicates. Pores
    inside no stoma are listed unassigned.
    """
    candidates: dict[int, list[int]] = {}
    unassigned: list[int] = []
    for pi, pore in enumerate(pores.detections):
        owner = None
        for si, stoma in enumerate(stomata.detections):
            if stoma.box.contains_point(pore.box.cx, pore.box.cy):
                owner = si
                break
        if owner is None:
            unassigned.append(pi)
        else:
            candidates.setdefault(owner, []).append(pi)
    stoma_to_pore: dict[int, int] = {}
    duplicates: list[int] = []
    for si, plist in candidates.items():
        plist.sort(key=lambda pi: (-pores.detections[pi].confidence, pi))
        stoma_to_pore[si] = plist[0]
        duplicates.extend(plist[1:])
    return PoreAssignment(stoma_to_pore, tuple(sorted(duplicates)), tuple(unassigned))


def stomata_morphometrics(
    image_ref: str,
    backend: FixtureBackend,
    params: InferenceParams,
    calibration: ScaleCalibration,
    open_thresh: float = DEFAULT_OPEN_THRESH,
    seg_backend: FixtureBackend | None = None,
) -> tuple[list[StomaRecord], StomataSummary, list[str]]:
    """Stomatal density plus per-stoma size and pore aperture metrics.

    Without a segmenter, areas fall back to the ellipse inscribed in each
    detection box. Stomata without an attached pore keep absent aperture
    fields but still count toward density.
    """
    stomata = postprocess(detect(backend, image_ref, "stoma"), params)
    if len(stomata.detections) == 0:
        raise NoStomata(f"image {image_ref!r}: no stomata detected")
    pores = postprocess(detect(backend, image_ref, "pore"), params)
    assignment = associate_pores(stomata, pores)
    warnings = [f"{WARN_DUPLICATE_PORE}:{pi}" for pi in assignment.duplicate_pores]

    def masks_for(role: str, dets) -> list[MaskSegment]:
        if seg_backend is not None:
            return segment(
                seg_backend, image_ref, role,
                [d.box for d in dets], strict=False,
                indices=[d.source_index for d in dets],
            )
        return [
            MaskSegment(d.source_index, inscribed_ellipse(d.box), "inscribed_ellipse")
            for d in dets
        ]

    stoma_masks = masks_for("stoma", stomata.detections)
    pore_masks = masks_for("pore", pores.detections)

    records: list[StomaRecord] = []
    for si, (det, mask) in enumerate(zip(stomata.detections, stoma_masks)):
        area_um2 = convert_measurement(polygon_area_or_count(mask), "area", calibration)
        pi = assignment.stoma_to_pore.get(si)
        if pi is None:
            records.append(StomaRecord(si, area_um2))
            continue
        plen, pwid, parea = mask_dimensions(pore_masks[pi], calibration)
        aperture = pwid / plen if plen > 0 else None
        records.append(
            StomaRecord(
                si,
                area_um2,
                pore_length_um=plen,
                pore_width_um=pwid,
                pore_area_um2=parea,
                aperture_ratio=aperture,
                open_flag=None if aperture is None else aperture >= open_thresh,
            )
        )

    ppu = calibration.px_per_unit
    fov_area_mm2 = (stomata.image_width / ppu) * (stomata.image_height / ppu) * 1e-6
    apertures = [r.aperture_ratio for r in records if r.aperture_ratio is not None]
    summary = StomataSummary(
        stomata_count=len(records),
        fov_area_mm2=fov_area_mm2,
        density_per_mm2=len(records) / fov_area_mm2,
        mean_aperture_ratio=statistics.fmean(apertures) if apertures else None,
    )
    return records, summary, warnings


def polygon_area_or_count(mask: MaskSegment) -> float:
    """Pixel-space area of a mask regardless of representation."""
    if isinstance(mask.boundary, ConvexPolygon):
        return polygon_area(mask.boundary)
    return float(np.asarray(mask.boundary).astype(bool).sum())
