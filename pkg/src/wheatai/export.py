"""Deterministic result rendering: annotated overlays, per-detection crops,
and per-pipeline CSV files.

Identical inputs produce identical bytes: colors derive from the sorted
category list, decimals render with up to 6 significant digits, CSV rows are
ordered by (image filename, record index), and PNG encoding carries no
timestamps.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from PIL import Image, ImageDraw

from .errors import DimensionMismatch, SchemaMismatch
from .infer import DetectionSet

# columns per pipeline, bit-exact contract
CSV_SCHEMAS: dict[str, dict[str, tuple[str, ...] | None]] = {
    "spike": {
        "records": ("image", "plot_id", "spike_count", "spikes_per_m2"),
        "summary": None,
    },
    "spike-uav": {
        "records": ("image", "plot_id", "spike_count", "spikes_per_m2"),
        "summary": None,
    },
    "spikelet": {
        "records": ("image", "plot_id", "spike_index", "spikelet_count"),
        "summary": ("image", "plot_id", "unassigned_spikelets"),
    },
    "fhb-single": {
        "records": ("image", "plot_id", "total_spikelets", "diseased_spikelets", "severity"),
        "summary": None,
    },
    "fhb-field": {
        "records": (
            "image", "plot_id", "spike_index", "view",
            "total_spikelets", "diseased_spikelets", "severity",
        ),
        "summary": (
            "image", "plot_id", "n_assessed", "n_infected",
            "incidence", "severity_infected", "severity_all", "fhb_index",
        ),
    },
    "fdk": {
        "records": (
            "image", "plot_id", "total_kernels", "damaged_kernels",
            "fdk_ratio", "area_weighted_ratio",
        ),
        "summary": None,
    },
    "kernel-morph": {
        "records": (
            "image", "plot_id", "kernel_index", "category",
            "length_mm", "width_mm", "area_mm2", "mask_source",
        ),
        "summary": None,
    },
    "stomata": {
        "records": (
            "image", "plot_id", "stoma_index", "stoma_area_um2", "pore_length_um",
            "pore_width_um", "pore_area_um2", "aperture_ratio", "open_flag",
        ),
        "summary": (
            "image", "plot_id", "stomata_count", "fov_area_mm2",
            "density_per_mm2", "mean_aperture_ratio",
        ),
    },
}

# distinct, high-contrast RGB colors assigned by sorted-category index
PALETTE: tuple[tuple[int, int, int], ...] = (
    (230, 57, 70),   # red
    (29, 161, 84),   # green
    (38, 110, 235),  # blue
    (243, 156, 18),  # orange
    (142, 68, 173),  # purple
    (23, 190, 187),  # teal
    (214, 51, 132),  # magenta
    (121, 85, 72),   # brown
)


@dataclass(frozen=True)
class OverlayStyle:
    line_width: int = 3
    label: bool = True


def category_colors(detections: DetectionSet) -> dict[str, tuple[int, int, int]]:
    cats = sorted({d.category for d in detections.detections})
    return {cat: PALETTE[i % len(PALETTE)] for i, cat in enumerate(cats)}


def plot_id_for(filename: str) -> str:
    """Plot/genotype id by filename convention: stem prefix before the first
    underscore, or the whole stem."""
    stem = Path(filename).stem
    return stem.split("_", 1)[0] if "_" in stem else stem


def render_overlay(
    image: Image.Image, detections: DetectionSet, style: OverlayStyle = OverlayStyle()
) -> Image.Image:
    """Draw each detection's corner polygon plus a 'category conf' label
    anchored at its top-most corner; output dims equal input dims."""
    if image.size != (detections.image_width, detections.image_height):
        raise DimensionMismatch(
            f"image is {image.size}, detections expect "
            f"({detections.image_width}, {detections.image_height})"
        )
    out = image.convert("RGB")
    draw = ImageDraw.Draw(out)
    colors = category_colors(detections)
    for det in detections.detections:
        color = colors[det.category]
        corners = det.box.corners()
        draw.line(corners + corners[:1], fill=color, width=style.line_width)
        if style.label:
            top = min(corners, key=lambda p: (p[1], p[0]))
            label = f"{det.category} {det.confidence:.2f}"
            draw.text((top[0] + 2, max(0.0, top[1] - 13)), label, fill=color)
    return out


def encode_png(image: Image.Image) -> bytes:
    buf = io.BytesIO()
    image.save(buf, format="PNG")
    return buf.getvalue()


def crop_window(det, padding: float, width: int, height: int) -> tuple[int, int, int, int] | None:
    xs = [x for x, _ in det.box.corners()]
    ys = [y for _, y in det.box.corners()]
    pad_x = (max(xs) - min(xs)) * padding
    pad_y = (max(ys) - min(ys)) * padding
    x0 = max(0, int(math.floor(min(xs) - pad_x)))
    y0 = max(0, int(math.floor(min(ys) - pad_y)))
    x1 = min(width, int(math.ceil(max(xs) + pad_x)))
    y1 = min(height, int(math.ceil(max(ys) + pad_y)))
    if x1 <= x0 or y1 <= y0:
        return None
    return x0, y0, x1, y1


def export_crops(
    image: Image.Image,
    detections: DetectionSet,
    out_dir: str | Path,
    padding: float = 0.1,
    stem: str | None = None,
) -> list[Path]:
    """Write one padded axis-aligned crop per detection; windows clamp to the
    image, file names follow `<image_stem>_det<index>.png`."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = stem if stem is not None else Path(detections.image_ref).stem
    paths: list[Path] = []
    for index, det in enumerate(detections.detections):
        window = crop_window(det, padding, image.width, image.height)
        if window is None:
            continue
        crop = image.crop(window)
        path = out_dir / f"{stem}_det{index}.png"
        crop.save(path, format="PNG")
        paths.append(path)
    return paths


def format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, Fraction):
        return format(float(value), ".6g")
    if isinstance(value, float):
        return format(value, ".6g")
    return str(value)


def write_results_csv(result, pipeline_id: str, path: str | Path, table: str = "records") -> int:
    """Write one CSV table of a JobResult; returns the data row count.

    Raises SchemaMismatch when a record's keys disagree with the pipeline
    schema or the pipeline has no such table.
    """
    schema = CSV_SCHEMAS.get(pipeline_id, {}).get(table)
    if schema is None:
        raise SchemaMismatch(f"pipeline {pipeline_id!r} has no {table!r} CSV table")
    data_columns = [c for c in schema if c not in ("image", "plot_id")]

    ordered = sorted(result.images, key=lambda im: im.filename)
    rows_out: list[list[str]] = []
    for image_result in ordered:
        if image_result.output is None:
            continue
        if table == "records":
            rows = image_result.output.records
        else:
            rows = (
                (image_result.output.summary_row,)
                if image_result.output.summary_row is not None
                else ()
            )
        for row in rows:
            if set(row) != set(data_columns):
                raise SchemaMismatch(
                    f"{pipeline_id} {table} row keys {sorted(row)} != schema {sorted(data_columns)}"
                )
            cells = [image_result.filename, plot_id_for(image_result.filename)]
            cells.extend(format_cell(row[c]) for c in data_columns)
            rows_out.append(cells)

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(schema)
        writer.writerows(rows_out)
    return len(rows_out)
