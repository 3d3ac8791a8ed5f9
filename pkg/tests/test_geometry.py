import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from impurity_anomaly.exceptions import InvalidInputError
from impurity_anomaly.geometry import (
    BoundingRect,
    EnclosingCircle,
    Impurity,
    pairwise_rect_distances,
    rect_center,
    rect_diagonal,
    rect_distance,
    smallest_enclosing_circle,
)
from impurity_anomaly.testkit import oracle_enclosing_circle, oracle_rect_distance

coord = st.integers(min_value=-50, max_value=50)


@st.composite
def rects(draw):
    x0, x1 = sorted((draw(coord), draw(coord)))
    y0, y1 = sorted((draw(coord), draw(coord)))
    return BoundingRect(x0, y0, x1, y1)


def R(*v):
    return BoundingRect(*v)


class TestRectDistance:
    def test_intersecting_is_zero(self):
        assert rect_distance(R(0, 0, 4, 3), R(2, 1, 6, 5)) == 0.0

    def test_gap_along_one_axis(self):
        assert rect_distance(R(0, 0, 1, 1), R(3, 0, 4, 1)) == pytest.approx(2.0)

    def test_corner_to_corner(self):
        assert rect_distance(R(0, 0, 1, 1), R(3, 3, 4, 4)) == pytest.approx(math.sqrt(8))

    def test_touching_edge_and_corner_are_zero(self):
        assert rect_distance(R(0, 0, 2, 2), R(2, 0, 4, 2)) == 0.0
        assert rect_distance(R(0, 0, 2, 2), R(2, 2, 4, 4)) == 0.0

    def test_matches_oracle_on_examples(self):
        for a, b in [((0, 0, 1, 1), (3, 0, 4, 1)), ((0, 0, 1, 1), (3, 3, 4, 4)), ((5, 5, 9, 6), (0, 0, 1, 1))]:
            assert rect_distance(R(*a), R(*b)) == pytest.approx(oracle_rect_distance(a, b), abs=1e-6)

    @given(rects(), rects())
    def test_symmetric_and_non_negative(self, a, b):
        d = rect_distance(a, b)
        assert d >= 0.0
        assert d == rect_distance(b, a)

    @given(rects(), rects())
    def test_zero_iff_intersect_or_touch(self, a, b):
        overlap = a.min_x <= b.max_x and b.min_x <= a.max_x and a.min_y <= b.max_y and b.min_y <= a.max_y
        assert (rect_distance(a, b) == 0.0) == overlap

    @given(st.lists(rects(), min_size=1, max_size=8))
    def test_pairwise_matches_scalar(self, rs):
        m = pairwise_rect_distances(np.array([r.as_tuple() for r in rs], dtype=float))
        for i, a in enumerate(rs):
            for j, b in enumerate(rs):
                assert m[i, j] == rect_distance(a, b)

    def test_not_a_metric(self):
        # triangle inequality fails: a and c both touch the long bar b
        a, b, c = R(0, 0, 0, 0), R(0, 0, 10, 0), R(10, 0, 10, 0)
        assert rect_distance(a, c) > rect_distance(a, b) + rect_distance(b, c)
        # distinct rectangles at distance zero
        p, q = R(0, 0, 4, 4), R(1, 1, 2, 2)
        assert p != q and rect_distance(p, q) == 0.0


class TestRectHelpers:
    def test_center_and_diagonal(self):
        assert rect_center(R(0, 0, 3, 4)) == (1.5, 2.0)
        assert rect_diagonal(R(0, 0, 3, 4)) == 5.0
        assert rect_diagonal(R(2, 2, 2, 2)) == 0.0
        assert rect_diagonal(R(0, 0, 1, 1)) == pytest.approx(math.sqrt(2))

    def test_inverted_rect_rejected(self):
        with pytest.raises(InvalidInputError):
            R(3, 0, 1, 1)

    def test_impurity_area_bounds(self):
        with pytest.raises(InvalidInputError):
            Impurity(0, [(0, 0)], 0, R(0, 0, 0, 0))
        with pytest.raises(InvalidInputError):
            Impurity(0, [(0, 0)], 5, R(0, 0, 1, 1))
        assert Impurity(0, [(0, 0)], 4, R(0, 0, 1, 1)).area == 4


class TestEnclosingCircle:
    def test_single_point(self):
        c = smallest_enclosing_circle([(3, 4)])
        assert c.center == (3.0, 4.0) and c.radius == 0.0

    def test_two_points(self):
        c = smallest_enclosing_circle([(0, 0), (6, 8)])
        assert c.radius == pytest.approx(5.0)
        assert c.center == pytest.approx((3.0, 4.0))

    def test_empty_rejected(self):
        with pytest.raises(InvalidInputError):
            smallest_enclosing_circle([])

    def test_collinear_and_equilateral(self):
        c = smallest_enclosing_circle([(0, 0), (1, 0), (5, 0)])
        assert c.radius == pytest.approx(2.5) and c.center == pytest.approx((2.5, 0.0))
        tri = [(0, 0), (1, 0), (0.5, math.sqrt(3) / 2)]
        assert smallest_enclosing_circle(tri).radius == pytest.approx(1 / math.sqrt(3), abs=1e-12)

    def test_random_points_match_oracle(self, rng):
        for _ in range(20):
            pts = rng.uniform(-100, 100, size=(30, 2)).tolist()
            fast, slow = smallest_enclosing_circle(pts), oracle_enclosing_circle(pts)
            assert fast.radius == pytest.approx(slow.radius, abs=1e-9)

    def test_duplicates_ignored(self):
        assert smallest_enclosing_circle([(1, 1)] * 50 + [(3, 1)]).radius == pytest.approx(1.0)

    @settings(max_examples=60)
    @given(st.lists(st.tuples(coord, coord), min_size=1, max_size=25))
    def test_covers_and_is_minimal(self, pts):
        c = smallest_enclosing_circle(pts)
        assert all(c.covers(p) for p in pts)
        if c.radius > 0:
            shrunk = EnclosingCircle(c.center, c.radius - 1e-6)
            assert not all(shrunk.covers(p, eps=0.0) for p in pts)
        assert c.radius == pytest.approx(oracle_enclosing_circle(pts).radius, abs=1e-9)
