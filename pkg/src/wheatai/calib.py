"""Pixel-to-physical-unit scale calibration.

Two sources of scale: square binary fiducial markers of known physical side
length placed in the imaging field (kernel imaging), and user-supplied
factors derived from microscope scale bars or other references (stomata
imaging). All downstream morphometrics convert through ScaleCalibration.
"""

from __future__ import annotations

import enum
import math
import statistics
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import cv2
import numpy as np

from .errors import InconsistentScale, InvalidScale, NoFiducials
from .geom import Point2

MARKER_GRID = 6  # cells per side, including the 1-cell black border
PAYLOAD_GRID = 4  # inner payload cells per side
PATCH_SIZE = 60  # canonical unwarp patch, px (10 px per cell)
MIN_QUAD_AREA = 32 * 32  # px^2, candidate quads below this are rejected
THRESHOLD_OFFSET = 7  # intensity levels below the window mean
MIN_CELL_CONTRAST = 40.0  # reject flat quads before decoding
# contour corners sit on pixel centers just inside the dark border; push them
# outward along the corner diagonal (calibrated against the synthetic oracle)
CORNER_OUTSET = 0.5


class Unit(str, enum.Enum):
    MM = "mm"
    UM = "um"


class CalibrationMethod(str, enum.Enum):
    FIDUCIAL = "fiducial"
    SCALE_BAR = "scale_bar"
    MANUAL = "manual"


def _code_to_bits(code: int) -> np.ndarray:
    bits = np.zeros((PAYLOAD_GRID, PAYLOAD_GRID), dtype=np.uint8)
    for r in range(PAYLOAD_GRID):
        for c in range(PAYLOAD_GRID):
            bits[r, c] = (code >> (15 - (r * PAYLOAD_GRID + c))) & 1
    return bits


def _bits_to_code(bits: np.ndarray) -> int:
    code = 0
    for r in range(PAYLOAD_GRID):
        for c in range(PAYLOAD_GRID):
            code = (code << 1) | int(bits[r, c])
    return code


def rotate_code(code: int, quarter_turns: int) -> int:
    """Payload code after rotating the cell grid counter-clockwise on screen."""
    return _bits_to_code(np.rot90(_code_to_bits(code), quarter_turns % 4))


@dataclass(frozen=True)
class MarkerDictionary:
    """Fixed dictionary of square binary markers.

    Codes must be pairwise distinct under all four rotations with rotational
    Hamming distance >= 4 (including each code against its own rotations),
    which makes single-bit error correction unambiguous.
    """

    name: str
    bits_per_side: int
    codes: tuple[int, ...]

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        rots = [[rotate_code(c, k) for k in range(4)] for c in self.codes]
        for i, ci in enumerate(self.codes):
            for j, rj in enumerate(rots):
                for k, rc in enumerate(rj):
                    if i == j and k == 0:
                        continue
                    dist = bin(ci ^ rc).count("1")
                    if dist < 4:
                        raise ValueError(
                            f"dictionary {self.name}: codes {i} and {j} (rotation {k}) "
                            f"have Hamming distance {dist} < 4"
                        )

    def match(self, observed_code: int, max_hamming: int = 1) -> tuple[int, int] | None:
        """Return (marker_id, quarter_turns) for an observed payload, or None.

        quarter_turns is the counter-clockwise screen rotation of the observed
        grid relative to the canonical marker.
        """
        for k in range(4):
            candidate = rotate_code(observed_code, -k)
            for marker_id, code in enumerate(self.codes):
                if bin(candidate ^ code).count("1") <= max_hamming:
                    return marker_id, k
        return None


@lru_cache(maxsize=1)
def default_dictionary() -> MarkerDictionary:
    """The bundled 4x4, 50-id dictionary (validated on first load)."""
    text = resources.files("wheatai").joinpath("data/aruco_4x4_50.txt").read_text("utf-8")
    codes: list[int] = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        idx_s, code_s = line.split()
        if int(idx_s) != len(codes):
            raise ValueError("marker dictionary file ids must be dense and ordered")
        codes.append(int(code_s, 16))
    return MarkerDictionary(name="aruco-4x4-50", bits_per_side=4, codes=tuple(codes))


@dataclass(frozen=True)
class FiducialDetection:
    """One decoded marker: canonical corner order is top-left first after
    undoing the decoded rotation, then clockwise on screen."""

    marker_id: int
    corners: tuple[Point2, Point2, Point2, Point2]
    side_lengths_px: tuple[float, float, float, float]


@dataclass(frozen=True)
class ScaleCalibration:
    px_per_unit: float
    unit: Unit
    method: CalibrationMethod
    dispersion_cv: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.px_per_unit) and self.px_per_unit > 0):
            raise InvalidScale(f"px_per_unit must be finite and > 0, got {self.px_per_unit}")
        if self.dispersion_cv < 0:
            raise InvalidScale("dispersion_cv must be >= 0")
        if self.method == CalibrationMethod.MANUAL and self.dispersion_cv != 0:
            raise InvalidScale("manual calibration carries no dispersion")


def _order_clockwise_on_screen(quad: np.ndarray) -> np.ndarray:
    """Normalize a quad to clockwise-on-screen order (y grows downward)."""
    x, y = quad[:, 0], quad[:, 1]
    signed2 = float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))
    if signed2 < 0:
        quad = quad[::-1]
    return quad


def _sample_cell_means(patch: np.ndarray) -> np.ndarray:
    cell = PATCH_SIZE // MARKER_GRID
    means = np.empty((MARKER_GRID, MARKER_GRID), dtype=np.float64)
    for r in range(MARKER_GRID):
        for c in range(MARKER_GRID):
            block = patch[r * cell + 2 : (r + 1) * cell - 2, c * cell + 2 : (c + 1) * cell - 2]
            means[r, c] = float(block.mean())
    return means


def detect_fiducials(
    image: np.ndarray, dictionary: MarkerDictionary | None = None
) -> list[FiducialDetection]:
    """Detect and decode square fiducial markers in a grayscale image.

    Pipeline: adaptive mean threshold -> external contours -> quad
    approximation -> reject non-convex or small quads -> homography unwarp to
    a canonical patch -> 6x6 cell sampling -> all-black border check ->
    payload decode under 4 rotations with single-bit correction.

    Undetected markers are simply absent; the function never raises for
    image content.
    """
    if dictionary is None:
        dictionary = default_dictionary()
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-d grayscale raster, got shape {img.shape}")
    if img.dtype != np.uint8:
        img = np.clip(img, 0, 255).astype(np.uint8)
    h, w = img.shape
    if min(h, w) < 64:
        return []

    block = max(3, (min(h, w) // 8) | 1)
    dark = cv2.adaptiveThreshold(
        img, 255, cv2.ADAPTIVE_THRESH_MEAN_C, cv2.THRESH_BINARY_INV, block, THRESHOLD_OFFSET
    )
    contours, _ = cv2.findContours(dark, cv2.RETR_EXTERNAL, cv2.CHAIN_APPROX_SIMPLE)

    detections: list[FiducialDetection] = []
    for contour in contours:
        if cv2.contourArea(contour) < MIN_QUAD_AREA:
            continue
        peri = cv2.arcLength(contour, True)
        approx = cv2.approxPolyDP(contour, 0.03 * peri, True)
        if len(approx) != 4 or not cv2.isContourConvex(approx):
            continue
        quad = _order_clockwise_on_screen(approx.reshape(4, 2).astype(np.float64))
        centroid = quad.mean(axis=0)
        offsets = quad - centroid
        norms = np.linalg.norm(offsets, axis=1)
        if np.any(norms == 0):
            continue
        quad = quad + offsets / norms[:, None] * CORNER_OUTSET

        src = quad.astype(np.float32)
        dst = np.array(
            [(0, 0), (PATCH_SIZE, 0), (PATCH_SIZE, PATCH_SIZE), (0, PATCH_SIZE)],
            dtype=np.float32,
        )
        homography = cv2.getPerspectiveTransform(src, dst)
        patch = cv2.warpPerspective(img, homography, (PATCH_SIZE, PATCH_SIZE))
        means = _sample_cell_means(patch)
        if float(means.max() - means.min()) < MIN_CELL_CONTRAST:
            continue
        thr = (float(means.max()) + float(means.min())) / 2.0
        bits = (means > thr).astype(np.uint8)
        border = np.concatenate([bits[0, :], bits[-1, :], bits[1:-1, 0], bits[1:-1, -1]])
        if border.any():
            continue
        observed = _bits_to_code(bits[1:-1, 1:-1])
        matched = dictionary.match(observed)
        if matched is None:
            continue
        marker_id, turns = matched
        # observed grid is the canonical marker rotated `turns` quarter turns
        # CCW on screen, so detected corner i is canonical corner (i + turns)
        ordered = [quad[(m - turns) % 4] for m in range(4)]
        corners = tuple(Point2(float(p[0]), float(p[1])) for p in ordered)
        sides = tuple(
            float(np.hypot(*(ordered[(i + 1) % 4] - ordered[i]))) for i in range(4)
        )
        detections.append(FiducialDetection(marker_id, corners, sides))

    detections.sort(key=lambda d: (d.marker_id, d.corners[0].x, d.corners[0].y))
    return detections


def calibration_from_fiducials(
    detections: list[FiducialDetection], marker_side_mm: float
) -> ScaleCalibration:
    """Average px/mm over every side of every detected marker.

    Raises NoFiducials for an empty detection list and InconsistentScale when
    the per-side estimates disperse by more than 5 % (likely mixed marker
    sizes or a slanted board).
    """
    if not detections:
        raise NoFiducials("no fiducial detections to calibrate from")
    if not (math.isfinite(marker_side_mm) and marker_side_mm > 0):
        raise InvalidScale(f"marker_side_mm must be > 0, got {marker_side_mm}")
    estimates = [side / marker_side_mm for det in detections for side in det.side_lengths_px]
    mean = statistics.fmean(estimates)
    cv = statistics.pstdev(estimates) / mean if len(estimates) > 1 else 0.0
    if cv > 0.05:
        raise InconsistentScale(f"per-side scale estimates disperse by cv={cv:.4f} > 0.05")
    return ScaleCalibration(mean, Unit.MM, CalibrationMethod.FIDUCIAL, cv)


def calibration_manual(px_per_unit: float, unit: Unit | str) -> ScaleCalibration:
    """Wrap a user-supplied factor (e.g. read off a microscope scale bar)."""
    if not isinstance(px_per_unit, (int, float)) or not math.isfinite(px_per_unit) or px_per_unit <= 0:
        raise InvalidScale(f"px_per_unit must be finite and > 0, got {px_per_unit!r}")
    return ScaleCalibration(float(px_per_unit), Unit(unit), CalibrationMethod.MANUAL, 0.0)


def convert_measurement(value_px: float, kind: str, calibration: ScaleCalibration) -> float:
    """Convert a pixel measurement to physical units (length or area)."""
    if value_px < 0:
        raise ValueError(f"pixel measurement must be >= 0, got {value_px}")
    if kind == "length":
        return value_px / calibration.px_per_unit
    if kind == "area":
        return value_px / (calibration.px_per_unit * calibration.px_per_unit)
    raise ValueError(f"unknown measurement kind {kind!r}")
