"""Synthetic imagery: fiducial marker rendering and simple demo scenes.

The marker renderer inverse-maps every output pixel into the marker cell
grid with supersampled anti-aliasing; it shares no code with the detector in
`calib` and doubles as its ground-truth oracle in tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .calib import MARKER_GRID, MarkerDictionary, _code_to_bits, default_dictionary
from .geom import Point2


@dataclass(frozen=True)
class MarkerRender:
    image: np.ndarray  # uint8 grayscale
    marker_id: int
    corners: tuple[Point2, Point2, Point2, Point2]  # canonical order, CW on screen
    side_px: float


def _cell_matrix(dictionary: MarkerDictionary, marker_id: int) -> np.ndarray:
    cells = np.zeros((MARKER_GRID, MARKER_GRID), dtype=np.uint8)
    cells[1:-1, 1:-1] = _code_to_bits(dictionary.codes[marker_id])
    return cells * 255


def render_marker(
    marker_id: int,
    side_px: float,
    angle_rad: float = 0.0,
    dictionary: MarkerDictionary | None = None,
    canvas_size: tuple[int, int] | None = None,
    center: tuple[float, float] | None = None,
    noise_sigma: float = 0.0,
    rng: np.random.Generator | None = None,
    supersample: int = 3,
) -> MarkerRender:
    """Render one marker on a white canvas, rotated in-plane by angle_rad.

    Returns the image together with the ground-truth canonical corners
    (top-left of the unrotated marker first, clockwise on screen), which is
    what a correct detector must reproduce.
    """
    if dictionary is None:
        dictionary = default_dictionary()
    if canvas_size is None:
        extent = int(math.ceil(side_px * math.sqrt(2.0))) + 24
        canvas_size = (extent, extent)
    w, h = canvas_size
    if center is None:
        center = (w / 2.0, h / 2.0)
    ccx, ccy = center
    cells = _cell_matrix(dictionary, marker_id)
    cos_t, sin_t = math.cos(angle_rad), math.sin(angle_rad)
    cell_px = side_px / MARKER_GRID

    xs = np.arange(w, dtype=np.float64) + 0.5
    ys = np.arange(h, dtype=np.float64) + 0.5
    gx, gy = np.meshgrid(xs, ys)

    acc = np.zeros((h, w), dtype=np.float64)
    offsets = (np.arange(supersample) + 0.5) / supersample - 0.5
    for oy in offsets:
        for ox in offsets:
            dx = gx + ox - ccx
            dy = gy + oy - ccy
            u = dx * cos_t + dy * sin_t
            v = -dx * sin_t + dy * cos_t
            col = np.floor((u + side_px / 2.0) / cell_px).astype(np.int64)
            row = np.floor((v + side_px / 2.0) / cell_px).astype(np.int64)
            inside = (col >= 0) & (col < MARKER_GRID) & (row >= 0) & (row < MARKER_GRID)
            val = np.where(
                inside,
                cells[row.clip(0, MARKER_GRID - 1), col.clip(0, MARKER_GRID - 1)],
                255,
            ).astype(np.float64)
            acc += val
    img = acc / (supersample * supersample)
    if noise_sigma > 0.0:
        if rng is None:
            rng = np.random.default_rng(0)
        img = img + rng.normal(0.0, noise_sigma, size=img.shape)
    img = np.clip(np.rint(img), 0, 255).astype(np.uint8)

    half = side_px / 2.0
    corners = []
    for ux, uy in ((-half, -half), (half, -half), (half, half), (-half, half)):
        corners.append(
            Point2(ccx + ux * cos_t - uy * sin_t, ccy + ux * sin_t + uy * cos_t)
        )
    return MarkerRender(img, marker_id, tuple(corners), float(side_px))


def corner_rmse(
    detected: tuple[Point2, Point2, Point2, Point2],
    truth: tuple[Point2, Point2, Point2, Point2],
) -> float:
    """Root-mean-square corner error over the 4 canonically ordered corners."""
    sq = 0.0
    for d, t in zip(detected, truth):
        sq += (d.x - t.x) ** 2 + (d.y - t.y) ** 2
    return math.sqrt(sq / 4.0)
