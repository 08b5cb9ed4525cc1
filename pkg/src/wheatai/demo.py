"""Bundled demo dataset: deterministic synthetic images plus matching
fixture predictions for every pipeline.

The dataset drives the CLI/API demo flow and the golden-file regression
suite; rebuilding with the same seed reproduces every byte.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .counting import plan_tiles
from .geom import OrientedBox
from .infer import inscribed_ellipse
from .synth import render_marker

DEFAULT_SEED = 20240917

# canonical CLI flags per pipeline for the demo dataset
DEMO_RUN_FLAGS: dict[str, list[str]] = {
    "spike": [],
    "spike-uav": ["--gsd", "1.25", "--tile", "1024", "--overlap", "128"],
    "spikelet": [],
    "fhb-single": [],
    "fhb-field": [],
    "fdk": [],
    "kernel-morph": ["--marker-mm", "20"],
    "stomata": ["--px-per-um", "2.0"],
}

MARKER_SIDE_PX = 160
MARKER_SIDE_MM = 20.0


def _det(box: OrientedBox, category: str, conf: float) -> dict:
    return {
        "cx": round(box.cx, 2),
        "cy": round(box.cy, 2),
        "w": round(box.w, 2),
        "h": round(box.h, 2),
        "angle_rad": round(box.theta, 4),
        "category": category,
        "conf": round(conf, 3),
    }


def _draw_boxes(draw: ImageDraw.ImageDraw, boxes, fill, outline=None):
    for box in boxes:
        poly = [(p.x, p.y) for p in inscribed_ellipse(box, 48).vertices]
        draw.polygon(poly, fill=fill, outline=outline)


def _scene(width: int, height: int, bg: tuple[int, int, int]) -> Image.Image:
    return Image.new("RGB", (width, height), bg)


def _save(img: Image.Image, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    img.save(path, format="PNG")


def _write_fixture(path: Path, image_name: str, width: int, height: int, models: dict):
    import json

    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(
            {"image": image_name, "width": width, "height": height, "models": models},
            indent=1,
            sort_keys=True,
        ),
        "utf-8",
    )


def _spike_boxes(rng: np.random.Generator, n: int, width: int, height: int, size=(90, 30)):
    boxes = []
    cols = max(2, int(math.sqrt(n * width / height)))
    rows = max(2, (n + cols - 1) // cols)
    ix = 0
    for r in range(rows):
        for c in range(cols):
            if ix >= n:
                break
            cx = (c + 0.5) * width / cols + float(rng.uniform(-12, 12))
            cy = (r + 0.5) * height / rows + float(rng.uniform(-10, 10))
            w = size[0] * float(rng.uniform(0.85, 1.15))
            h = size[1] * float(rng.uniform(0.85, 1.15))
            theta = float(rng.uniform(-0.6, 0.6))
            boxes.append(OrientedBox(cx, cy, w, h, theta))
            ix += 1
    return boxes


def _build_spike(root: Path, rng: np.random.Generator):
    width, height = 640, 480
    for i in range(3):
        stem = f"SD2024-{100 + i}_1"
        n = 8 + 2 * i
        boxes = _spike_boxes(rng, n, width, height)
        img = _scene(width, height, (118, 142, 92))
        _draw_boxes(ImageDraw.Draw(img), boxes, fill=(196, 178, 120))
        _save(img, root / "images" / f"{stem}.png")
        dets = [_det(b, "spike", float(rng.uniform(0.6, 0.98))) for b in boxes]
        # one low-confidence duplicate that NMS must remove
        dets.append(_det(boxes[0], "spike", 0.4))
        _write_fixture(
            root / "preds" / f"{stem}.pred.json", f"{stem}.png", width, height,
            {"spike": {"detections": dets}},
        )


def _build_spike_uav(root: Path, rng: np.random.Generator):
    width, height = 2048, 1536
    grid = plan_tiles(width, height, 1024, 128)
    for i in range(3):
        stem = f"UAV24-{7 + i}_1"
        n = 22 + 3 * i
        boxes = _spike_boxes(rng, n, width, height, size=(70, 26))
        img = _scene(width, height, (104, 128, 84))
        _draw_boxes(ImageDraw.Draw(img), boxes, fill=(188, 172, 118))
        _save(img, root / "images" / f"{stem}.png")
        models: dict = {}
        for x0, y0, x1, y1 in grid.tiles:
            tile_dets = []
            for b in boxes:
                if x0 <= b.cx < x1 and y0 <= b.cy < y1:
                    local = OrientedBox(b.cx - x0, b.cy - y0, b.w, b.h, b.theta)
                    tile_dets.append(_det(local, "spike", float(rng.uniform(0.55, 0.95))))
            models[f"spike@{x0}_{y0}"] = {"detections": tile_dets}
        _write_fixture(
            root / "preds" / f"{stem}.pred.json", f"{stem}.png", width, height, models
        )


def _build_spikelet(root: Path, rng: np.random.Generator):
    width, height = 640, 480
    for i in range(3):
        stem = f"SPKLT-{30 + i}_2"
        spikes = _spike_boxes(rng, 3, width, height, size=(200, 70))
        spikelets = []
        for s in spikes:
            k = int(rng.integers(4, 7))
            for j in range(k):
                t = (j + 0.5) / k - 0.5
                cx = s.cx + t * s.w * 0.9 * math.cos(s.theta)
                cy = s.cy + t * s.w * 0.9 * math.sin(s.theta)
                spikelets.append(
                    OrientedBox(cx, cy, 26, 16, s.theta + float(rng.uniform(-0.5, 0.5)))
                )
        # one stray spikelet far from every spike
        spikelets.append(OrientedBox(30, height - 24, 24, 14, 0.2))
        img = _scene(width, height, (126, 148, 96))
        _draw_boxes(ImageDraw.Draw(img), spikes, fill=(186, 168, 112))
        _draw_boxes(ImageDraw.Draw(img), spikelets, fill=(214, 198, 140))
        _save(img, root / "images" / f"{stem}.png")
        models = {
            "spike": {"detections": [_det(b, "spike", float(rng.uniform(0.7, 0.95))) for b in spikes]},
            "spikelet": {
                "detections": [_det(b, "spikelet", float(rng.uniform(0.5, 0.95))) for b in spikelets]
            },
        }
        _write_fixture(root / "preds" / f"{stem}.pred.json", f"{stem}.png", width, height, models)


def _build_fhb_single(root: Path, rng: np.random.Generator):
    width, height = 420, 720
    for i in range(3):
        stem = f"FHB-S{i}_3"
        n = 12 + 2 * i
        diseased = 2 + 2 * i
        boxes, cats = [], []
        for j in range(n):
            cy = 60 + j * (height - 120) / n
            cx = width / 2 + float(rng.uniform(-26, 26))
            boxes.append(OrientedBox(cx, cy, 52, 30, float(rng.uniform(-0.7, 0.7))))
            cats.append("diseased" if j < diseased else "healthy")
        img = _scene(width, height, (120, 150, 104))
        draw = ImageDraw.Draw(img)
        for b, cat in zip(boxes, cats):
            fill = (206, 172, 120) if cat == "healthy" else (232, 214, 182)
            _draw_boxes(draw, [b], fill=fill)
        _save(img, root / "images" / f"{stem}.png")
        dets = [
            _det(b, c, float(rng.uniform(0.55, 0.95))) for b, c in zip(boxes, cats)
        ]
        _write_fixture(
            root / "preds" / f"{stem}.pred.json", f"{stem}.png", width, height,
            {"fhb_spike_single": {"detections": dets}},
        )


def _build_fhb_field(root: Path, rng: np.random.Generator):
    width, height = 960, 540
    for i in range(3):
        stem = f"FHB-F{i}_4"
        spikes = _spike_boxes(rng, 5 + i, width, height, size=(150, 52))
        img = _scene(width, height, (110, 136, 90))
        _draw_boxes(ImageDraw.Draw(img), spikes, fill=(192, 176, 124))
        _save(img, root / "images" / f"{stem}.png")
        spike_dets = [_det(b, "spike", float(rng.uniform(0.6, 0.97))) for b in spikes]
        verdicts = {}
        crops = {}
        for j in range(len(spikes)):
            keep = bool(rng.uniform() > 0.3)
            view = "frontal" if rng.uniform() > 0.4 else "lateral"
            verdicts[str(j)] = {"keep": keep, "view": view}
            if not keep:
                continue
            k = int(rng.integers(6, 12))
            diseased = int(rng.integers(0, k + 1))
            crop_dets = []
            for m in range(k):
                cat = "diseased" if m < diseased else "healthy"
                box = OrientedBox(
                    20 + m * 16, 26 + float(rng.uniform(-6, 6)), 18, 12,
                    float(rng.uniform(-0.5, 0.5)),
                )
                crop_dets.append(_det(box, cat, float(rng.uniform(0.5, 0.95))))
            crops[str(j)] = {"detections": crop_dets}
        models = {
            "spike": {"detections": spike_dets},
            "spike_view": {"detections": spike_dets, "verdicts": verdicts},
            "fhb_spikelet": {"detections": spike_dets, "crops": crops},
        }
        _write_fixture(root / "preds" / f"{stem}.pred.json", f"{stem}.png", width, height, models)


def _build_fdk(root: Path, rng: np.random.Generator):
    width, height = 800, 600
    for i in range(3):
        stem = f"FDK-{50 + i}_5"
        n = 48 + 8 * i
        boxes, cats = [], []
        cols = 10
        for j in range(n):
            cx = 42 + (j % cols) * 74 + float(rng.uniform(-8, 8))
            cy = 42 + (j // cols) * 84 + float(rng.uniform(-8, 8))
            boxes.append(
                OrientedBox(cx, cy, float(rng.uniform(46, 60)), float(rng.uniform(22, 30)),
                            float(rng.uniform(-1.2, 1.2)))
            )
            cats.append("damaged" if rng.uniform() < 0.15 else "healthy")
        img = _scene(width, height, (38, 36, 40))
        draw = ImageDraw.Draw(img)
        for b, cat in zip(boxes, cats):
            fill = (201, 164, 110) if cat == "healthy" else (172, 150, 140)
            _draw_boxes(draw, [b], fill=fill)
        _save(img, root / "images" / f"{stem}.png")
        masks = {}
        for j, b in enumerate(boxes):
            if j % 3 == 0:  # a third carry explicit polygon masks
                poly = inscribed_ellipse(b, 24)
                masks[str(j)] = [[round(p.x, 2), round(p.y, 2)] for p in poly.vertices]
        dets = [_det(b, c, float(rng.uniform(0.5, 0.98))) for b, c in zip(boxes, cats)]
        _write_fixture(
            root / "preds" / f"{stem}.pred.json", f"{stem}.png", width, height,
            {"kernel": {"detections": dets, "masks": masks}},
        )


def _build_kernel_morph(root: Path, rng: np.random.Generator):
    width, height = 820, 620
    for i in range(3):
        stem = f"KM-{70 + i}_6"
        marker = render_marker(
            marker_id=10 + i, side_px=MARKER_SIDE_PX, angle_rad=float(rng.uniform(-0.3, 0.3)),
            canvas_size=(250, 250), noise_sigma=3.0,
            rng=np.random.default_rng(DEFAULT_SEED + i),
        )
        img = _scene(width, height, (238, 234, 226))
        img.paste(Image.fromarray(marker.image).convert("RGB"), (width - 260, 10))
        boxes, cats = [], []
        n = 12 + 2 * i
        for j in range(n):
            cx = 60 + (j % 6) * 86 + float(rng.uniform(-6, 6))
            cy = 120 + (j // 6) * 120 + float(rng.uniform(-8, 8))
            boxes.append(
                OrientedBox(cx, cy, float(rng.uniform(50, 64)), float(rng.uniform(24, 32)),
                            float(rng.uniform(-1.0, 1.0)))
            )
            cats.append("healthy" if rng.uniform() > 0.2 else "damaged")
        draw = ImageDraw.Draw(img)
        for b in boxes:
            _draw_boxes(draw, [b], fill=(188, 152, 96))
        _save(img, root / "images" / f"{stem}.png")
        masks = {}
        for j, b in enumerate(boxes):
            if j % 2 == 0:
                poly = inscribed_ellipse(b, 32)
                masks[str(j)] = [[round(p.x, 2), round(p.y, 2)] for p in poly.vertices]
        dets = [_det(b, c, float(rng.uniform(0.55, 0.97))) for b, c in zip(boxes, cats)]
        _write_fixture(
            root / "preds" / f"{stem}.pred.json", f"{stem}.png", width, height,
            {"kernel": {"detections": dets, "masks": masks}},
        )


def _build_stomata(root: Path, rng: np.random.Generator):
    width, height = 640, 480
    for i in range(3):
        stem = f"STM-{90 + i}_7"
        stomata, pores = [], []
        n = 12 + 3 * i
        for j in range(n):
            cx = 52 + (j % 6) * 100 + float(rng.uniform(-10, 10))
            cy = 60 + (j // 6) * 110 + float(rng.uniform(-10, 10))
            theta = float(rng.uniform(-1.0, 1.0))
            stoma = OrientedBox(cx, cy, float(rng.uniform(56, 72)), float(rng.uniform(34, 44)), theta)
            stomata.append(stoma)
            if rng.uniform() > 0.2:  # most stomata have a visible pore
                pores.append(
                    OrientedBox(cx, cy, stoma.w * float(rng.uniform(0.45, 0.6)),
                                stoma.h * float(rng.uniform(0.18, 0.5)), theta)
                )
        img = _scene(width, height, (168, 180, 150))
        draw = ImageDraw.Draw(img)
        _draw_boxes(draw, stomata, fill=(146, 158, 128))
        _draw_boxes(draw, pores, fill=(92, 104, 84))
        _save(img, root / "images" / f"{stem}.png")
        models = {
            "stoma": {"detections": [_det(b, "stoma", float(rng.uniform(0.6, 0.97))) for b in stomata]},
            "pore": {"detections": [_det(b, "pore", float(rng.uniform(0.5, 0.95))) for b in pores]},
        }
        _write_fixture(root / "preds" / f"{stem}.pred.json", f"{stem}.png", width, height, models)


_BUILDERS = {
    "spike": _build_spike,
    "spike-uav": _build_spike_uav,
    "spikelet": _build_spikelet,
    "fhb-single": _build_fhb_single,
    "fhb-field": _build_fhb_field,
    "fdk": _build_fdk,
    "kernel-morph": _build_kernel_morph,
    "stomata": _build_stomata,
}


def build_demo_dataset(root: str | Path, seed: int = DEFAULT_SEED) -> Path:
    """Write the full demo dataset under `root`, one directory per pipeline
    with `images/` and `preds/` inside."""
    root = Path(root)
    for index, (pipeline_id, builder) in enumerate(_BUILDERS.items()):
        rng = np.random.default_rng(seed + 1000 * index)
        builder(root / pipeline_id, rng)
    return root
