"""Impurity geometry: bounding rectangles, the rectangle gap distance and
smallest enclosing circles.

Coordinates are pixel indices. A rectangle is inclusive on both ends, so a
single pixel at (3, 4) has the rectangle (3, 4, 3, 4).
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .exceptions import InvalidInputError

Point = tuple[float, float]

# Relative slack used when testing whether a point lies inside a circle.
_COVER_EPS = 1e-9


@dataclass(frozen=True)
class BoundingRect:
    min_x: float
    min_y: float
    max_x: float
    max_y: float

    def __post_init__(self):
        if self.min_x > self.max_x or self.min_y > self.max_y:
            raise InvalidInputError(f"inverted rectangle {self.as_tuple()}")

    @property
    def width(self) -> float:
        return self.max_x - self.min_x

    @property
    def height(self) -> float:
        return self.max_y - self.min_y

    def as_tuple(self) -> tuple:
        return (self.min_x, self.min_y, self.max_x, self.max_y)

    def contains(self, x: float, y: float) -> bool:
        return self.min_x <= x <= self.max_x and self.min_y <= y <= self.max_y


@dataclass
class Impurity:
    """One labeled inclusion.

    ``pixels`` is an optional boolean crop of the component aligned with
    ``rect`` (shape ``(height + 1, width + 1)``). It is a cache used for
    shape rendering and is not part of equality, so impurities restored from
    the text store compare equal to freshly extracted ones.
    """

    id: int
    contour: list[tuple[int, int]]
    area: int
    rect: BoundingRect
    shape_image: Optional[np.ndarray] = field(default=None, compare=False, repr=False)
    pixels: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.area <= 0:
            raise InvalidInputError(f"impurity {self.id} has non-positive area {self.area}")
        cells = (self.rect.width + 1) * (self.rect.height + 1)
        if self.area > cells:
            raise InvalidInputError(
                f"impurity {self.id}: area {self.area} exceeds its rectangle ({cells} pixels)"
            )


@dataclass(frozen=True)
class EnclosingCircle:
    center: Point
    radius: float

    @property
    def area(self) -> float:
        return math.pi * self.radius * self.radius

    def covers(self, point: Sequence[float], eps: float = _COVER_EPS) -> bool:
        dist = math.hypot(point[0] - self.center[0], point[1] - self.center[1])
        return dist <= self.radius * (1.0 + eps) + eps


def rect_distance(a: BoundingRect, b: BoundingRect) -> float:
    """Shortest Euclidean distance between the boundaries of two rectangles.

    Intersecting or touching rectangles are at distance 0. When the
    projections overlap on one axis the result is the gap along the other
    axis, otherwise it is the distance between the nearest corners.
    """
    dx = max(0.0, b.min_x - a.max_x, a.min_x - b.max_x)
    dy = max(0.0, b.min_y - a.max_y, a.min_y - b.max_y)
    return math.sqrt(dx * dx + dy * dy)


def pairwise_rect_distances(rects: np.ndarray) -> np.ndarray:
    """Vectorized :func:`rect_distance` over an ``(n, 4)`` array of
    ``min_x, min_y, max_x, max_y`` rows. Returns a symmetric ``(n, n)`` matrix."""
    rects = np.asarray(rects, dtype=np.float64)
    min_x, min_y, max_x, max_y = (rects[:, j] for j in range(4))
    gap_x = np.maximum(
        np.maximum(min_x[None, :] - max_x[:, None], min_x[:, None] - max_x[None, :]), 0.0
    )
    gap_y = np.maximum(
        np.maximum(min_y[None, :] - max_y[:, None], min_y[:, None] - max_y[None, :]), 0.0
    )
    return np.sqrt(gap_x * gap_x + gap_y * gap_y)


def rect_center(r: BoundingRect) -> Point:
    return ((r.min_x + r.max_x) / 2.0, (r.min_y + r.max_y) / 2.0)


def rect_diagonal(r: BoundingRect) -> float:
    return math.hypot(r.width, r.height)


def smallest_enclosing_circle(points: Sequence[Sequence[float]]) -> EnclosingCircle:
    """Minimal circle covering every point (Welzl's algorithm, iterative form).

    The input order is shuffled with a fixed seed, which keeps the expected
    linear running time while making the result reproducible.
    """
    pts = [(float(p[0]), float(p[1])) for p in points]
    if not pts:
        raise InvalidInputError("smallest_enclosing_circle needs at least one point")
    # duplicates add nothing and blow up the inner loops on dense contours
    pts = sorted(set(pts))
    random.Random(0).shuffle(pts)

    circle: Optional[tuple[float, float, float]] = None
    for i, p in enumerate(pts):
        if circle is None or not _inside(circle, p):
            circle = _circle_with_one(pts[: i + 1], p)
    assert circle is not None
    return EnclosingCircle((circle[0], circle[1]), circle[2])


def _inside(c: tuple[float, float, float], p: Point) -> bool:
    return math.hypot(p[0] - c[0], p[1] - c[1]) <= c[2] * (1.0 + _COVER_EPS) + _COVER_EPS


def _circle_with_one(pts: list[Point], p: Point) -> tuple[float, float, float]:
    c = (p[0], p[1], 0.0)
    for i, q in enumerate(pts):
        if not _inside(c, q):
            if c[2] == 0.0:
                c = _diameter_circle(p, q)
            else:
                c = _circle_with_two(pts[: i + 1], p, q)
    return c


def _circle_with_two(pts: list[Point], p: Point, q: Point) -> tuple[float, float, float]:
    base = _diameter_circle(p, q)
    left = right = None
    for r in pts:
        if _inside(base, r):
            continue
        cross = _cross(p, q, r)
        cc = _circumcircle(p, q, r)
        if cc is None:
            continue
        side = _cross(p, q, (cc[0], cc[1]))
        if cross > 0.0 and (left is None or side > _cross(p, q, (left[0], left[1]))):
            left = cc
        elif cross < 0.0 and (right is None or side < _cross(p, q, (right[0], right[1]))):
            right = cc
    if left is None and right is None:
        return base
    if left is None:
        return right
    if right is None:
        return left
    return left if left[2] <= right[2] else right


def _cross(p: Point, q: Point, r: Point) -> float:
    return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])


def _diameter_circle(a: Point, b: Point) -> tuple[float, float, float]:
    cx = (a[0] + b[0]) / 2.0
    cy = (a[1] + b[1]) / 2.0
    return (cx, cy, max(math.hypot(cx - a[0], cy - a[1]), math.hypot(cx - b[0], cy - b[1])))


def _circumcircle(a: Point, b: Point, c: Point) -> Optional[tuple[float, float, float]]:
    # translate to the bounding-box centre for numerical stability
    ox = (min(a[0], b[0], c[0]) + max(a[0], b[0], c[0])) / 2.0
    oy = (min(a[1], b[1], c[1]) + max(a[1], b[1], c[1])) / 2.0
    ax, ay = a[0] - ox, a[1] - oy
    bx, by = b[0] - ox, b[1] - oy
    cx, cy = c[0] - ox, c[1] - oy
    d = (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by)) * 2.0
    if d == 0.0:
        return None
    x = ox + (
        (ax * ax + ay * ay) * (by - cy) + (bx * bx + by * by) * (cy - ay) + (cx * cx + cy * cy) * (ay - by)
    ) / d
    y = oy + (
        (ax * ax + ay * ay) * (cx - bx) + (bx * bx + by * by) * (ax - cx) + (cx * cx + cy * cy) * (bx - ax)
    ) / d
    r = max(math.hypot(x - a[0], y - a[1]), math.hypot(x - b[0], y - b[1]), math.hypot(x - c[0], y - c[1]))
    return (x, y, r)
