"""Oriented-box geometry: corners, convex clipping, rotated IoU, OBB NMS,
minimum-area enclosing rectangles.

Conventions: image pixel coordinates (y grows downward), angles in radians,
rotation matrix [cos t, -sin t; sin t, cos t] applied in (x, y). An
OrientedBox is canonicalized at construction to theta in [-pi/2, pi/2) by
folding multiples of pi; box equality throughout this module means equality
as point sets, never field-wise equality.

The clipping/IoU hot path works on plain float tuples rather than the
dataclasses; NMS over thousands of detection sets relies on this.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import DegenerateInput

# vertices closer than this collapse during clipping (px)
_VERTEX_COLLAPSE = 1e-9
_HALF_PI = math.pi / 2.0


def _require_finite(name: str, value: float) -> float:
    v = float(value)
    if not math.isfinite(v):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return v


@dataclass(frozen=True)
class Point2:
    """A point in pixel coordinates."""

    x: float
    y: float

    def __post_init__(self):
        _require_finite("x", self.x)
        _require_finite("y", self.y)


@dataclass(frozen=True)
class ConvexPolygon:
    """Counter-clockwise convex polygon (shoelace area >= 0), possibly empty."""

    vertices: tuple[Point2, ...] = ()

    @property
    def is_empty(self) -> bool:
        return len(self.vertices) == 0

    def coords(self) -> list[tuple[float, float]]:
        return [(p.x, p.y) for p in self.vertices]

    @staticmethod
    def from_coords(pts: Iterable[tuple[float, float]]) -> "ConvexPolygon":
        return ConvexPolygon(tuple(Point2(float(x), float(y)) for x, y in pts))


EMPTY_POLYGON = ConvexPolygon(())


@dataclass(frozen=True)
class OrientedBox:
    """Rotated rectangle: center (cx, cy), size (w, h), angle theta.

    theta is folded into [-pi/2, pi/2) at construction; w and h are kept as
    given (the same point set admits a w/h-swapped representation at
    theta +- pi/2, which compares equal under point-set predicates).
    """

    cx: float
    cy: float
    w: float
    h: float
    theta: float

    def __post_init__(self):
        for name in ("cx", "cy", "w", "h", "theta"):
            _require_finite(name, getattr(self, name))
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box sides must be positive, got w={self.w}, h={self.h}")
        t = float(self.theta)
        folded = t - math.floor((t + _HALF_PI) / math.pi) * math.pi
        if folded >= _HALF_PI:  # guard against fp landing exactly on pi/2
            folded -= math.pi
        object.__setattr__(self, "theta", folded)
        object.__setattr__(self, "cx", float(self.cx))
        object.__setattr__(self, "cy", float(self.cy))
        object.__setattr__(self, "w", float(self.w))
        object.__setattr__(self, "h", float(self.h))

    @property
    def area(self) -> float:
        return self.w * self.h

    def corners(self) -> list[tuple[float, float]]:
        """Four corners, CCW, as plain tuples (fast path)."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        hw, hh = self.w / 2.0, self.h / 2.0
        out = []
        for ux, uy in ((-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)):
            out.append((self.cx + ux * c - uy * s, self.cy + ux * s + uy * c))
        return out

    def contains_point(self, x: float, y: float, slack: float = 0.0) -> bool:
        c, s = math.cos(self.theta), math.sin(self.theta)
        dx, dy = x - self.cx, y - self.cy
        u = dx * c + dy * s
        v = -dx * s + dy * c
        return abs(u) <= self.w / 2.0 + slack and abs(v) <= self.h / 2.0 + slack


def obb_corners(box: OrientedBox) -> ConvexPolygon:
    """Corner polygon of an oriented box, counter-clockwise."""
    return ConvexPolygon.from_coords(box.corners())


def _shoelace(pts: Sequence[tuple[float, float]]) -> float:
    n = len(pts)
    if n < 3:
        return 0.0
    acc = 0.0
    x0, y0 = pts[-1]
    for x1, y1 in pts:
        acc += x0 * y1 - x1 * y0
        x0, y0 = x1, y1
    return acc / 2.0


def polygon_area(p: ConvexPolygon) -> float:
    """Shoelace area in px^2; empty polygon has area 0."""
    if p.is_empty:
        return 0.0
    return abs(_shoelace(p.coords()))


def _clip_coords(
    subject: Sequence[tuple[float, float]], clip: Sequence[tuple[float, float]]
) -> list[tuple[float, float]]:
    """Sutherland-Hodgman: clip CCW `subject` against CCW convex `clip`."""
    output = list(subject)
    cx0, cy0 = clip[-1]
    for cx1, cy1 in clip:
        if not output:
            break
        ex, ey = cx1 - cx0, cy1 - cy0
        inputs = output
        output = []
        px, py = inputs[-1]
        # signed "inside" distance; tolerance scales with operand magnitude
        dprev = ex * (py - cy0) - ey * (px - cx0)
        tprev = 1e-12 * (abs(ex * (py - cy0)) + abs(ey * (px - cx0)))
        prev_in = dprev >= -tprev
        for qx, qy in inputs:
            dcur = ex * (qy - cy0) - ey * (qx - cx0)
            tcur = 1e-12 * (abs(ex * (qy - cy0)) + abs(ey * (qx - cx0)))
            cur_in = dcur >= -tcur
            if cur_in != prev_in and dprev != dcur:
                t = dprev / (dprev - dcur)
                output.append((px + t * (qx - px), py + t * (qy - py)))
            if cur_in:
                output.append((qx, qy))
            px, py, dprev, prev_in = qx, qy, dcur, cur_in
        cx0, cy0 = cx1, cy1
    return output


def _dedupe_ring(pts: list[tuple[float, float]]) -> list[tuple[float, float]]:
    if not pts:
        return pts
    out: list[tuple[float, float]] = []
    for p in pts:
        if out and abs(p[0] - out[-1][0]) <= _VERTEX_COLLAPSE and abs(p[1] - out[-1][1]) <= _VERTEX_COLLAPSE:
            continue
        out.append(p)
    while len(out) > 1 and abs(out[0][0] - out[-1][0]) <= _VERTEX_COLLAPSE and abs(out[0][1] - out[-1][1]) <= _VERTEX_COLLAPSE:
        out.pop()
    return out


def convex_intersection(a: ConvexPolygon, b: ConvexPolygon) -> ConvexPolygon:
    """Intersection of two convex polygons (possibly empty)."""
    if a.is_empty or b.is_empty:
        return EMPTY_POLYGON
    clipped = _dedupe_ring(_clip_coords(a.coords(), b.coords()))
    if len(clipped) < 3:
        return EMPTY_POLYGON
    return ConvexPolygon.from_coords(clipped)


def _intersection_area_coords(
    ca: Sequence[tuple[float, float]], cb: Sequence[tuple[float, float]]
) -> float:
    clipped = _clip_coords(ca, cb)
    if len(clipped) < 3:
        return 0.0
    return abs(_shoelace(clipped))


def rotated_iou(a: OrientedBox, b: OrientedBox) -> float:
    """Intersection-over-union of two oriented boxes, in [0, 1].

    Polygon-exact; symmetric by construction (arguments are ordered
    deterministically before clipping).
    """
    # cheap reject: bounding circles disjoint
    ra = math.hypot(a.w, a.h) / 2.0
    rb = math.hypot(b.w, b.h) / 2.0
    dx, dy = a.cx - b.cx, a.cy - b.cy
    if dx * dx + dy * dy >= (ra + rb) * (ra + rb):
        return 0.0
    ka = (a.cx, a.cy, a.w, a.h, a.theta)
    kb = (b.cx, b.cy, b.w, b.h, b.theta)
    first, second = (a, b) if ka <= kb else (b, a)
    cf, cs = first.corners(), second.corners()
    area_f = abs(_shoelace(cf))
    area_s = abs(_shoelace(cs))
    inter = _intersection_area_coords(cf, cs)
    union = area_f + area_s - inter
    if union <= 0.0:
        return 0.0
    iou = inter / union
    return min(max(iou, 0.0), 1.0)


def nms_keep_indices(
    boxes: Sequence[OrientedBox],
    categories: Sequence[str],
    confidences: Sequence[float],
    iou_thresh: float,
) -> list[int]:
    """Greedy category-wise suppression; returns kept indices in input order.

    Candidates are visited by (confidence desc, input index asc); a candidate
    is kept iff its IoU with every already-kept detection of the same
    category stays below `iou_thresh`.
    """
    if not 0.0 < iou_thresh <= 1.0:
        raise ValueError(f"iou_thresh must be in (0, 1], got {iou_thresh}")
    order = sorted(range(len(boxes)), key=lambda i: (-confidences[i], i))
    kept_by_cat: dict[str, list[int]] = {}
    kept: list[int] = []
    for i in order:
        cat = categories[i]
        suppressed = False
        for j in kept_by_cat.get(cat, ()):
            if rotated_iou(boxes[i], boxes[j]) >= iou_thresh:
                suppressed = True
                break
        if not suppressed:
            kept_by_cat.setdefault(cat, []).append(i)
            kept.append(i)
    kept.sort()
    return kept


def obb_nms(dets, iou_thresh: float):
    """Category-wise NMS over a DetectionSet-like object.

    Works structurally: `dets.detections` is a sequence of objects with
    `.box`, `.category` and `.confidence`; the result is the same container
    with the kept detections (original payloads, original order).
    """
    items = list(dets.detections)
    keep = nms_keep_indices(
        [d.box for d in items],
        [d.category for d in items],
        [d.confidence for d in items],
        iou_thresh,
    )
    return dataclasses.replace(dets, detections=tuple(items[i] for i in keep))


def convex_hull(points: Sequence[tuple[float, float]]) -> list[tuple[float, float]]:
    """Andrew's monotone chain; returns the hull CCW without repeated last point."""
    pts = sorted(set((float(x), float(y)) for x, y in points))
    if len(pts) < 3:
        return pts

    def cross(o, p, q):
        return (p[0] - o[0]) * (q[1] - o[1]) - (p[1] - o[1]) * (q[0] - o[0])

    lower: list[tuple[float, float]] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[tuple[float, float]] = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def min_area_rect(points: Sequence[Point2 | tuple[float, float]]) -> OrientedBox:
    """Minimum-area enclosing rectangle via rotating calipers.

    Examined orientations are the convex hull edges; returns a canonical
    OrientedBox with w = longer side and h = shorter side.

    Raises DegenerateInput for fewer than 3 points or collinear input.
    """
    coords = [(p.x, p.y) if isinstance(p, Point2) else (float(p[0]), float(p[1])) for p in points]
    if len(coords) < 3:
        raise DegenerateInput(f"min_area_rect needs >= 3 points, got {len(coords)}")
    hull = convex_hull(coords)
    if len(hull) < 3:
        raise DegenerateInput("min_area_rect input is collinear")

    best = None  # (area, cx, cy, along, across, ux, uy)
    n = len(hull)
    for i in range(n):
        x0, y0 = hull[i]
        x1, y1 = hull[(i + 1) % n]
        ex, ey = x1 - x0, y1 - y0
        norm = math.hypot(ex, ey)
        if norm == 0.0:
            continue
        ux, uy = ex / norm, ey / norm
        # extents of all hull points along the edge direction and its normal
        min_u = min_v = math.inf
        max_u = max_v = -math.inf
        for px, py in hull:
            u = px * ux + py * uy
            v = -px * uy + py * ux
            if u < min_u:
                min_u = u
            if u > max_u:
                max_u = u
            if v < min_v:
                min_v = v
            if v > max_v:
                max_v = v
        along = max_u - min_u
        across = max_v - min_v
        area = along * across
        if best is None or area < best[0]:
            cu = (min_u + max_u) / 2.0
            cv = (min_v + max_v) / 2.0
            cx = cu * ux - cv * uy
            cy = cu * uy + cv * ux
            best = (area, cx, cy, along, across, ux, uy)

    assert best is not None
    area, cx, cy, along, across, ux, uy = best
    if along <= 0.0 or across <= 0.0:
        raise DegenerateInput("min_area_rect input is collinear")
    if along >= across:
        w, h, theta = along, across, math.atan2(uy, ux)
    else:
        w, h, theta = across, along, math.atan2(ux, -uy)
    return OrientedBox(cx, cy, w, h, theta)


def boxes_equal_pointset(a: OrientedBox, b: OrientedBox, tol: float = 1e-6) -> bool:
    """True when the two boxes cover the same point set (symmetry-safe)."""
    if math.hypot(a.cx - b.cx, a.cy - b.cy) > tol:
        return False
    ca, cb = sorted(a.corners()), sorted(b.corners())
    if all(
        abs(pa[0] - pb[0]) <= tol and abs(pa[1] - pb[1]) <= tol
        for pa, pb in zip(ca, cb)
    ):
        return True
    # corner order can differ across representations; fall back to overlap
    return rotated_iou(a, b) >= 1.0 - 1e-9
