import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pytest

from wheatai.geom import OrientedBox


def det_record(cx, cy, w, h, angle=0.0, category="spike", conf=0.9):
    return {
        "cx": cx,
        "cy": cy,
        "w": w,
        "h": h,
        "angle_rad": angle,
        "category": category,
        "conf": conf,
    }


def write_fixture(root: Path, stem: str, width: int, height: int, models: dict, ext: str = ".jpg") -> Path:
    root.mkdir(parents=True, exist_ok=True)
    path = root / f"{stem}.pred.json"
    path.write_text(
        json.dumps(
            {"image": f"{stem}{ext}", "width": width, "height": height, "models": models}
        ),
        "utf-8",
    )
    return path


@dataclass(frozen=True)
class FakeDetection:
    box: OrientedBox
    category: str
    confidence: float


@dataclass(frozen=True)
class FakeDetectionSet:
    detections: tuple = field(default_factory=tuple)


def random_box(rng: np.random.Generator, lo=192.0, hi=320.0, smin=40.0, smax=256.0) -> OrientedBox:
    return OrientedBox(
        cx=float(rng.uniform(lo, hi)),
        cy=float(rng.uniform(lo, hi)),
        w=float(rng.uniform(smin, smax)),
        h=float(rng.uniform(smin, smax)),
        theta=float(rng.uniform(-math.pi, math.pi)),
    )


_RASTER_CACHE: dict = {}


def raster_iou(a: OrientedBox, b: OrientedBox, cells: int = 512) -> float:
    """Rasterization IoU oracle: sample a `cells` x `cells` grid covering both
    boxes and count cell centers falling inside each box. Independent of the
    polygon-clipping implementation."""
    unit = _RASTER_CACHE.get(cells)
    if unit is None:
        unit = ((np.arange(cells, dtype=np.float32) + 0.5) / cells)
        _RASTER_CACHE[cells] = unit
    pts = np.array(a.corners() + b.corners())
    lo = pts.min(axis=0) - 1.0
    hi = pts.max(axis=0) + 1.0
    span = float(max(hi[0] - lo[0], hi[1] - lo[1]))
    xs = (lo[0] + unit * span)[None, :]  # (1, N)
    ys = (lo[1] + unit * span)[:, None]  # (N, 1)

    def inside(box: OrientedBox) -> np.ndarray:
        c, s = math.cos(box.theta), math.sin(box.theta)
        dx, dy = xs - box.cx, ys - box.cy
        u = dx * c + dy * s
        v = dy * c - dx * s
        return (np.abs(u) <= box.w / 2.0) & (np.abs(v) <= box.h / 2.0)

    ia, ib = inside(a), inside(b)
    union = int(np.count_nonzero(ia | ib))
    if union == 0:
        return 0.0
    return int(np.count_nonzero(ia & ib)) / union


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240917)


def make_fdk_env(tmp_path: Path, n_images: int = 3, missing: tuple = ()):
    """Image dir + fixture dir for a small fdk batch; returns (images, preds)."""
    from PIL import Image

    images = tmp_path / "images"
    preds = tmp_path / "preds"
    images.mkdir(exist_ok=True)
    for i in range(n_images):
        stem = f"PL{i:03d}_1"
        Image.new("RGB", (400, 300), (240, 235, 228)).save(images / f"{stem}.png")
        if i in missing:
            continue
        recs = []
        for k in range(6 + i):
            cat = "damaged" if k < (i + 1) else "healthy"
            recs.append(det_record(40 + 55 * k, 150, 40, 18, 0.1 * k, cat, 0.9))
        write_fixture(preds, stem, 400, 300, {"kernel": {"detections": recs}}, ext=".png")
    preds.mkdir(exist_ok=True)
    return images, preds
