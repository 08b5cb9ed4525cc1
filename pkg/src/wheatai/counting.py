"""Spike counting (close-range and tiled aerial imagery) and
spikelet-per-spike quantification.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .errors import InvalidTiling
from .geom import obb_corners, polygon_area, convex_intersection
from .infer import Detection, DetectionSet, FixtureBackend, InferenceParams, detect, postprocess

DEFAULT_TILE_SIZE = 1024
DEFAULT_TILE_OVERLAP = 128
DEFAULT_ASSIGN_TAU = 0.5


@dataclass(frozen=True)
class SpikeCountResult:
    image_ref: str
    spike_count: int
    spikes_per_m2: float | None
    detections: DetectionSet


@dataclass(frozen=True)
class TileGrid:
    tile_size: int
    overlap: int
    tiles: tuple[tuple[int, int, int, int], ...]  # (x0, y0, x1, y1)


@dataclass(frozen=True)
class SpikeletAssignment:
    per_spike_counts: dict[int, int]
    assignments: dict[int, int]  # spikelet index -> spike index
    unassigned: tuple[int, ...] = field(default_factory=tuple)


def count_spikes(image_ref: str, backend: FixtureBackend, params: InferenceParams) -> SpikeCountResult:
    """Detect, post-process and count category `spike` for one image."""
    processed = postprocess(detect(backend, image_ref, "spike"), params)
    return SpikeCountResult(
        image_ref=image_ref,
        spike_count=processed.count_category("spike"),
        spikes_per_m2=None,
        detections=processed,
    )


def _axis_origins(extent: int, tile_size: int, stride: int) -> list[int]:
    origins = [0]
    while origins[-1] + tile_size < extent:
        origins.append(origins[-1] + stride)
    return origins


def plan_tiles(width: int, height: int, tile_size: int = DEFAULT_TILE_SIZE, overlap: int = DEFAULT_TILE_OVERLAP) -> TileGrid:
    """Regular tile grid: origins at multiples of (tile_size - overlap), the
    last tile of each axis clamped to the image edge."""
    if tile_size <= 0 or overlap < 0 or overlap >= tile_size:
        raise InvalidTiling(f"need 0 <= overlap < tile_size, got tile_size={tile_size}, overlap={overlap}")
    if width <= 0 or height <= 0:
        raise InvalidTiling(f"image extent must be positive, got {width}x{height}")
    stride = tile_size - overlap
    tiles = []
    for y0 in _axis_origins(height, tile_size, stride):
        for x0 in _axis_origins(width, tile_size, stride):
            tiles.append((x0, y0, min(x0 + tile_size, width), min(y0 + tile_size, height)))
    return TileGrid(tile_size, overlap, tuple(tiles))


def tile_and_merge(
    image_ref: str, grid: TileGrid, backend: FixtureBackend, params: InferenceParams
) -> DetectionSet:
    """Run per-tile spike detection, translate to global coordinates and
    deduplicate with one global postprocess.

    Tiles may be evaluated in any order upstream; the merge concatenates in
    row-major grid order before thresholding + NMS, so results are
    deterministic.
    """
    sets = [(tile, detect(backend, image_ref, f"spike@{tile[0]}_{tile[1]}")) for tile in grid.tiles]
    merged: list[Detection] = []
    entry_dims = None
    for (x0, y0, _, _), tile_set in sets:
        entry_dims = (tile_set.image_width, tile_set.image_height)
        for det in tile_set.detections:
            merged.append(
                replace(
                    det,
                    box=replace(det.box, cx=det.box.cx + x0, cy=det.box.cy + y0),
                    source_index=len(merged),
                )
            )
    width, height = entry_dims if entry_dims else (0, 0)
    raw = DetectionSet(image_ref, width, height, tuple(merged))
    return postprocess(raw, params)


def spikes_per_area(count: int, gsd_mm_per_px: float | None, width: int, height: int) -> float | None:
    """Spikes per square meter given the ground sampling distance (mm/px)."""
    if gsd_mm_per_px is None:
        return None
    if gsd_mm_per_px <= 0:
        raise ValueError(f"gsd must be > 0, got {gsd_mm_per_px}")
    area_m2 = width * height * gsd_mm_per_px * gsd_mm_per_px / 1e6
    return count / area_m2


def associate_spikelets(
    spikes: DetectionSet, spikelets: DetectionSet, tau: float = DEFAULT_ASSIGN_TAU
) -> SpikeletAssignment:
    """Assign each spikelet to the spike covering the largest fraction of it.

    The score is intersection area over spikelet area (not IoU; spikelets
    are far smaller than spikes). A spikelet is assigned only when its best
    score reaches `tau`; score ties go to the lower spike index.
    """
    spike_polys = [obb_corners(d.box) for d in spikes.detections]
    per_spike = {i: 0 for i in range(len(spike_polys))}
    assignments: dict[int, int] = {}
    unassigned: list[int] = []
    for si, spikelet in enumerate(spikelets.detections):
        poly = obb_corners(spikelet.box)
        area = polygon_area(poly)
        best_ratio, best_spike = 0.0, None
        for pi, spike_poly in enumerate(spike_polys):
            ratio = polygon_area(convex_intersection(poly, spike_poly)) / area
            if ratio > best_ratio + 1e-12:
                best_ratio, best_spike = ratio, pi
        if best_spike is not None and best_ratio >= tau:
            per_spike[best_spike] += 1
            assignments[si] = best_spike
        else:
            unassigned.append(si)
    return SpikeletAssignment(per_spike, assignments, tuple(unassigned))
