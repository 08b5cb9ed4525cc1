import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wheatai.errors import DegenerateInput
from wheatai.geom import (
    ConvexPolygon,
    EMPTY_POLYGON,
    OrientedBox,
    Point2,
    boxes_equal_pointset,
    convex_hull,
    convex_intersection,
    min_area_rect,
    nms_keep_indices,
    obb_corners,
    obb_nms,
    polygon_area,
    rotated_iou,
)

from conftest import FakeDetection, FakeDetectionSet, random_box, raster_iou


def box_strategy(lo=-50.0, hi=50.0, smin=0.5, smax=40.0):
    finite = st.floats(lo, hi, allow_nan=False, allow_infinity=False)
    side = st.floats(smin, smax, allow_nan=False, allow_infinity=False)
    angle = st.floats(-math.pi, math.pi, allow_nan=False, allow_infinity=False)
    return st.builds(OrientedBox, cx=finite, cy=finite, w=side, h=side, theta=angle)


class TestOrientedBox:
    def test_theta_canonical_range(self):
        for t in (-7.0, -math.pi, -math.pi / 2, 0.0, 1.2, math.pi / 2, math.pi, 9.9):
            b = OrientedBox(0, 0, 2, 1, t)
            assert -math.pi / 2 <= b.theta < math.pi / 2

    def test_quarter_turn_fold_preserves_point_set(self):
        b = OrientedBox(0, 0, 2, 1, math.pi / 2)
        assert b.theta == pytest.approx(-math.pi / 2)
        xs = sorted(round(abs(x), 9) for x, _ in b.corners())
        ys = sorted(round(abs(y), 9) for _, y in b.corners())
        assert xs == [0.5, 0.5, 0.5, 0.5]
        assert ys == [1.0, 1.0, 1.0, 1.0]

    def test_rejects_bad_sides(self):
        with pytest.raises(ValueError):
            OrientedBox(0, 0, 0.0, 1, 0)
        with pytest.raises(ValueError):
            OrientedBox(0, 0, 1, -2, 0)
        with pytest.raises(ValueError):
            OrientedBox(0, 0, math.nan, 1, 0)

    @given(box_strategy())
    @settings(max_examples=100, deadline=None)
    def test_corner_centroid_reproduces_center(self, b):
        cs = b.corners()
        cx = sum(x for x, _ in cs) / 4.0
        cy = sum(y for _, y in cs) / 4.0
        assert abs(cx - b.cx) <= 1e-9 * max(1.0, abs(b.cx))
        assert abs(cy - b.cy) <= 1e-9 * max(1.0, abs(b.cy))


class TestCorners:
    def test_axis_aligned(self):
        poly = obb_corners(OrientedBox(0, 0, 2, 1, 0))
        assert poly.coords() == [(-1.0, -0.5), (1.0, -0.5), (1.0, 0.5), (-1.0, 0.5)]

    def test_rotated_by_matrix_evaluation(self):
        # direct 2x2 rotation-matrix evaluation, independent of corners()
        t = math.pi / 4
        c, s = math.cos(t), math.sin(t)
        expected = []
        for ux, uy in ((-1, -0.5), (1, -0.5), (1, 0.5), (-1, 0.5)):
            expected.append((ux * c - uy * s, ux * s + uy * c))
        got = obb_corners(OrientedBox(0, 0, 2, 1, t)).coords()
        for (gx, gy), (ex, ey) in zip(got, expected):
            assert gx == pytest.approx(ex, abs=1e-12)
            assert gy == pytest.approx(ey, abs=1e-12)
        # the (w/2, h/2) corner lands at (0.3536, 1.0607)
        assert got[2][0] == pytest.approx(0.35355339, abs=1e-6)
        assert got[2][1] == pytest.approx(1.06066017, abs=1e-6)

    @given(box_strategy())
    @settings(max_examples=100, deadline=None)
    def test_ccw_and_area(self, b):
        poly = obb_corners(b)
        assert polygon_area(poly) == pytest.approx(b.w * b.h, rel=1e-9)


class TestPolygonArea:
    def test_unit_square(self):
        sq = ConvexPolygon.from_coords([(0, 0), (1, 0), (1, 1), (0, 1)])
        assert polygon_area(sq) == 1.0

    def test_triangle(self):
        tri = ConvexPolygon.from_coords([(0, 0), (1, 0), (0, 1)])
        assert polygon_area(tri) == 0.5

    def test_empty(self):
        assert polygon_area(EMPTY_POLYGON) == 0.0


class TestConvexIntersection:
    def test_identity(self):
        sq = ConvexPolygon.from_coords([(0, 0), (1, 0), (1, 1), (0, 1)])
        out = convex_intersection(sq, sq)
        assert polygon_area(out) == pytest.approx(1.0, abs=1e-12)

    def test_disjoint(self):
        a = ConvexPolygon.from_coords([(0, 0), (1, 0), (1, 1), (0, 1)])
        b = ConvexPolygon.from_coords([(5, 5), (6, 5), (6, 6), (5, 6)])
        assert convex_intersection(a, b).is_empty

    def test_offset_squares(self):
        a = ConvexPolygon.from_coords([(0, 0), (1, 0), (1, 1), (0, 1)])
        b = ConvexPolygon.from_coords([(0.5, 0.5), (1.5, 0.5), (1.5, 1.5), (0.5, 1.5)])
        assert polygon_area(convex_intersection(a, b)) == pytest.approx(0.25, abs=1e-12)

    @given(box_strategy(), box_strategy())
    @settings(max_examples=150, deadline=None)
    def test_area_bounded_by_operands(self, a, b):
        pa, pb = obb_corners(a), obb_corners(b)
        inter = polygon_area(convex_intersection(pa, pb))
        assert inter <= min(polygon_area(pa), polygon_area(pb)) + 1e-9


class TestRotatedIoU:
    def test_self_is_one(self):
        b = OrientedBox(3, 4, 5, 2, 0.7)
        assert rotated_iou(b, b) == 1.0

    def test_axis_aligned_offset_exact_third(self):
        a = OrientedBox(0, 0, 2, 2, 0)
        b = OrientedBox(1, 0, 2, 2, 0)
        assert rotated_iou(a, b) == 1 / 3

    def test_unit_square_rotated_45(self):
        a = OrientedBox(0, 0, 1, 1, 0)
        b = OrientedBox(0, 0, 1, 1, math.pi / 4)
        # intersection is a regular octagon of area 2*(sqrt(2)-1)
        octagon = 2 * (math.sqrt(2) - 1)
        expected = octagon / (2 - octagon)
        assert rotated_iou(a, b) == pytest.approx(expected, abs=1e-6)
        assert rotated_iou(a, b) == pytest.approx(0.70710678, abs=1e-6)

    def test_swapped_representation_is_one(self):
        a = OrientedBox(5, 5, 2, 1, 0.3)
        b = OrientedBox(5, 5, 1, 2, 0.3 + math.pi / 2)
        assert rotated_iou(a, b) == pytest.approx(1.0, abs=1e-9)

    def test_disjoint_zero(self):
        assert rotated_iou(OrientedBox(0, 0, 1, 1, 0), OrientedBox(10, 0, 1, 1, 0.4)) == 0.0

    @given(box_strategy(), box_strategy())
    @settings(max_examples=200, deadline=None)
    def test_symmetric_and_bounded(self, a, b):
        i1, i2 = rotated_iou(a, b), rotated_iou(b, a)
        assert abs(i1 - i2) <= 1e-12
        assert 0.0 <= i1 <= 1.0

    @given(box_strategy(), st.floats(-20, 20), st.floats(-20, 20), st.floats(-math.pi, math.pi))
    @settings(max_examples=100, deadline=None)
    def test_rigid_motion_invariance(self, b, tx, ty, rot):
        other = OrientedBox(b.cx + 3, b.cy + 1, max(b.w * 0.7, 0.5), max(b.h * 1.3, 0.5), b.theta + 0.4)
        base = rotated_iou(b, other)

        def moved(box):
            c, s = math.cos(rot), math.sin(rot)
            return OrientedBox(
                box.cx * c - box.cy * s + tx,
                box.cx * s + box.cy * c + ty,
                box.w,
                box.h,
                box.theta + rot,
            )

        assert abs(rotated_iou(moved(b), moved(other)) - base) <= 1e-9

    @given(box_strategy(), st.floats(0.1, 1.0), st.floats(0.1, 1.0))
    @settings(max_examples=100, deadline=None)
    def test_containment_ratio(self, b, fw, fh):
        inner = OrientedBox(b.cx, b.cy, b.w * fw, b.h * fh, b.theta)
        expected = inner.area / b.area
        assert rotated_iou(inner, b) == pytest.approx(expected, abs=1e-9)

    def test_matches_raster_oracle(self, rng):
        worst = 0.0
        for _ in range(60):
            a, b = random_box(rng), random_box(rng)
            worst = max(worst, abs(rotated_iou(a, b) - raster_iou(a, b)))
        assert worst <= 5e-3


class TestNms:
    @staticmethod
    def _dets(rows):
        return FakeDetectionSet(
            tuple(FakeDetection(OrientedBox(*r[0]), r[1], r[2]) for r in rows)
        )

    def test_duplicate_suppressed(self):
        d = self._dets(
            [
                ((0, 0, 10, 4, 0.1), "spike", 0.9),
                ((0.5, 0, 10, 4, 0.1), "spike", 0.8),
            ]
        )
        out = obb_nms(d, 0.3)
        assert len(out.detections) == 1
        assert out.detections[0].confidence == 0.9

    def test_category_wise(self):
        d = self._dets(
            [
                ((0, 0, 10, 4, 0.1), "spike", 0.9),
                ((0.5, 0, 10, 4, 0.1), "spikelet", 0.8),
            ]
        )
        assert len(obb_nms(d, 0.3).detections) == 2

    def test_empty(self):
        assert obb_nms(FakeDetectionSet(()), 0.5).detections == ()

    def test_equal_confidence_tie_break_lower_index(self):
        d = self._dets(
            [
                ((0, 0, 10, 4, 0.0), "spike", 0.7),
                ((0.2, 0, 10, 4, 0.0), "spike", 0.7),
            ]
        )
        out = obb_nms(d, 0.3)
        assert len(out.detections) == 1
        assert out.detections[0].box.cx == 0.0

    def test_invalid_threshold(self):
        with pytest.raises(ValueError):
            nms_keep_indices([], [], [], 0.0)

    @given(st.lists(box_strategy(-20, 20, 1.0, 15.0), min_size=0, max_size=10), st.floats(0.05, 1.0))
    @settings(max_examples=100, deadline=None)
    def test_idempotent_and_kept_pairs_below_threshold(self, boxes, thresh):
        dets = FakeDetectionSet(
            tuple(
                FakeDetection(b, "spike" if i % 3 else "other", round(0.2 + 0.07 * (i % 9), 3))
                for i, b in enumerate(boxes)
            )
        )
        once = obb_nms(dets, thresh)
        twice = obb_nms(once, thresh)
        assert twice == once
        kept = list(once.detections)
        for i in range(len(kept)):
            for j in range(i + 1, len(kept)):
                if kept[i].category == kept[j].category:
                    assert rotated_iou(kept[i].box, kept[j].box) < thresh


class TestMinAreaRect:
    def test_axis_aligned_rect(self):
        r = min_area_rect([(0, 0), (4, 0), (4, 2), (0, 2)])
        assert (r.w, r.h) == (4.0, 2.0)
        assert r.theta == pytest.approx(0.0, abs=1e-12)
        assert (r.cx, r.cy) == (2.0, 1.0)

    def test_rotation_equivariance(self):
        t = 0.5
        c, s = math.cos(t), math.sin(t)
        pts = [(x * c - y * s, x * s + y * c) for x, y in [(0, 0), (4, 0), (4, 2), (0, 2)]]
        r = min_area_rect(pts)
        assert r.w == pytest.approx(4.0, rel=1e-9)
        assert r.h == pytest.approx(2.0, rel=1e-9)
        assert r.area == pytest.approx(8.0, rel=1e-9)
        assert math.isclose(math.cos(2 * r.theta), math.cos(2 * t), abs_tol=1e-9)

    def test_degenerate(self):
        with pytest.raises(DegenerateInput):
            min_area_rect([(0, 0), (1, 1)])
        with pytest.raises(DegenerateInput):
            min_area_rect([(0, 0), (1, 1), (2, 2), (3, 3)])

    def test_random_points_vs_hull_edge_oracle(self, rng):
        from scipy.spatial import ConvexHull

        for _ in range(40):
            pts = rng.uniform(-1, 1, size=(200, 2))
            pts /= max(1.0, float(np.abs(pts).max()))
            r = min_area_rect([tuple(p) for p in pts])
            hull = ConvexHull(pts)
            verts = pts[hull.vertices]
            best = math.inf
            n = len(verts)
            for i in range(n):
                e = verts[(i + 1) % n] - verts[i]
                ang = math.atan2(e[1], e[0])
                ca, sa = math.cos(ang), math.sin(ang)
                # project onto the edge direction and its normal
                uv = pts @ np.array([[ca, -sa], [sa, ca]])
                ext = uv.max(axis=0) - uv.min(axis=0)
                best = min(best, float(ext[0] * ext[1]))
            assert r.area == pytest.approx(best, rel=1e-6)
            for x, y in pts:
                assert r.contains_point(float(x), float(y), slack=1e-6)

    def test_area_not_below_hull_area(self, rng):
        for _ in range(20):
            pts = [tuple(p) for p in rng.uniform(0, 100, size=(30, 2))]
            hull = convex_hull(pts)
            hull_area = polygon_area(ConvexPolygon.from_coords(hull))
            assert min_area_rect(pts).area >= hull_area - 1e-9

    @given(box_strategy(smin=1.0))
    @settings(max_examples=100, deadline=None)
    def test_roundtrip_from_corners(self, b):
        r = min_area_rect([Point2(x, y) for x, y in b.corners()])
        assert boxes_equal_pointset(r, b, tol=1e-6)
        assert r.w >= r.h
