"""Synthetic scans and brute-force reference implementations.

The oracles here deliberately share no code with the modules they check:
they use plain Python loops and re-derive every formula locally.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidInputError
from .geometry import EnclosingCircle
from .ingestion import MaskImage, extract_impurities, normalize_shape_image


class GenerationError(InvalidInputError):
    pass


# -- rasterizers ------------------------------------------------------------

def _grid(size: int):
    c = (size - 1) / 2.0
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    return xs - c, ys - c


def disk(radius: float) -> np.ndarray:
    size = int(math.ceil(2 * radius)) + 3
    x, y = _grid(size)
    return _trim(x * x + y * y <= radius * radius)


def ellipse(a: float, b: float, angle: float = 0.0) -> np.ndarray:
    size = int(math.ceil(2 * max(a, b))) + 3
    x, y = _grid(size)
    ca, sa = math.cos(angle), math.sin(angle)
    u, v = x * ca + y * sa, -x * sa + y * ca
    return _trim((u / a) ** 2 + (v / b) ** 2 <= 1.0)


def bar(length: float, thickness: float, angle: float = 0.0) -> np.ndarray:
    size = int(math.ceil(math.hypot(length, thickness))) + 3
    x, y = _grid(size)
    return _trim(_bar_mask(x, y, length, thickness, angle))


def cross(length: float, thickness: float, angle: float = 0.0) -> np.ndarray:
    """Two perpendicular bars crossing at their midpoints: an 'X'."""
    size = int(math.ceil(math.hypot(length, thickness))) + 3
    x, y = _grid(size)
    m = _bar_mask(x, y, length, thickness, angle) | _bar_mask(x, y, length, thickness, angle + math.pi / 2)
    return _trim(m)


def _bar_mask(x, y, length, thickness, angle):
    ca, sa = math.cos(angle), math.sin(angle)
    u, v = x * ca + y * sa, -x * sa + y * ca
    return (np.abs(u) <= length / 2.0) & (np.abs(v) <= thickness / 2.0)


def _trim(mask: np.ndarray) -> np.ndarray:
    rows, cols = np.any(mask, axis=1), np.any(mask, axis=0)
    if not rows.any():
        return np.ones((1, 1), dtype=bool)
    r0, r1 = np.flatnonzero(rows)[[0, -1]]
    c0, c1 = np.flatnonzero(cols)[[0, -1]]
    return mask[r0:r1 + 1, c0:c1 + 1]


NORMAL_KINDS = ("disk", "ellipse")
ANOMALOUS_KINDS = ("cross", "rod")


def random_shape(kind: str, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """Random stamp of the given kind. Normal kinds have circle-difference
    scores well below 0.3, anomalous kinds well above 0.55."""
    angle = float(rng.uniform(0, math.pi))
    if kind == "disk":
        return disk(rng.uniform(4, 9) * scale)
    if kind == "ellipse":
        a = rng.uniform(5, 10) * scale
        return ellipse(a, a * rng.uniform(0.82, 0.95), angle)
    if kind == "cross":
        length = rng.uniform(16, 26) * scale
        return cross(length, max(2.0, length * rng.uniform(0.08, 0.14)), angle)
    if kind == "rod":
        length = rng.uniform(16, 28) * scale
        return bar(length, max(2.0, length * rng.uniform(0.1, 0.2)), angle)
    raise InvalidInputError(f"unknown shape kind {kind!r}")


# -- synthetic scans --------------------------------------------------------

@dataclass(frozen=True)
class SynthSpec:
    disks: int = 0
    ellipses: int = 0
    crosses: int = 0
    rods: int = 0
    far_disks: int = 0
    dense_crosses: int = 0
    width: int = 400
    height: int = 300
    seed: int = 0
    margin: int = 3
    dense_scale: float = 1.4
    dense_gap: int = 3

    def __post_init__(self):
        counts = (self.disks, self.ellipses, self.crosses, self.rods, self.far_disks, self.dense_crosses)
        if any(c < 0 for c in counts):
            raise InvalidInputError("shape counts must be non-negative")


@dataclass(frozen=True)
class ShapeTruth:
    index: int
    kind: str
    group: str  # "normal", "anomalous", "far" or "dense"
    rect: tuple[int, int, int, int]


@dataclass
class SynthScan:
    mask: MaskImage
    truths: list[ShapeTruth]
    shape_index: np.ndarray = field(repr=False)  # (h, w) stamp index, -1 off-shape

    def to_scan(self, scan_id: str, **kwargs):
        return extract_impurities(self.mask, scan_id, **kwargs)

    def impurity_truth(self, scan) -> list[ShapeTruth]:
        """Ground truth record of every extracted impurity, by impurity id."""
        out = []
        for imp in scan.impurities:
            x, y = imp.contour[0]
            out.append(self.truths[int(self.shape_index[y, x])])
        return out


class _Canvas:
    def __init__(self, spec: SynthSpec):
        self.spec = spec
        self.mask = np.zeros((spec.height, spec.width), dtype=np.uint8)
        self.index = np.full((spec.height, spec.width), -1, dtype=np.int32)
        self.truths: list[ShapeTruth] = []
        self.rects: list[tuple[int, int, int, int]] = []

    def fits(self, stamp: np.ndarray, x: int, y: int) -> bool:
        h, w = stamp.shape
        m = self.spec.margin
        if x < 0 or y < 0 or x + w > self.spec.width or y + h > self.spec.height:
            return False
        for (x0, y0, x1, y1) in self.rects:
            if x - m <= x1 and x0 <= x + w - 1 + m and y - m <= y1 and y0 <= y + h - 1 + m:
                return False
        return True

    def gap(self, stamp: np.ndarray, x: int, y: int) -> float:
        h, w = stamp.shape
        best = math.inf
        for (x0, y0, x1, y1) in self.rects:
            dx = max(0, x0 - (x + w - 1), x - x1)
            dy = max(0, y0 - (y + h - 1), y - y1)
            best = min(best, math.hypot(dx, dy))
        return best

    def put(self, stamp: np.ndarray, x: int, y: int, kind: str, group: str):
        h, w = stamp.shape
        idx = len(self.truths)
        self.mask[y:y + h, x:x + w][stamp] = 1
        self.index[y:y + h, x:x + w][stamp] = idx
        rect = (x, y, x + w - 1, y + h - 1)
        self.rects.append(rect)
        self.truths.append(ShapeTruth(idx, kind, group, rect))

    def place_random(self, stamp, kind, group, rng, attempts=400):
        h, w = stamp.shape
        for _ in range(attempts):
            x = int(rng.integers(0, max(1, self.spec.width - w + 1)))
            y = int(rng.integers(0, max(1, self.spec.height - h + 1)))
            if self.fits(stamp, x, y):
                self.put(stamp, x, y, kind, group)
                return
        raise GenerationError(
            f"cannot place a {kind} on a {self.spec.width}x{self.spec.height} canvas; enlarge it"
        )


def generate_synthetic_scan(spec: SynthSpec) -> SynthScan:
    """Render a seeded synthetic mask with per-shape ground truth.

    Placement order: the dense 'X' cluster first (packed around a random
    anchor), then the ordinary normal and anomalous shapes, then far disks
    (best of many candidate spots by gap to everything already placed).
    """
    rng = np.random.default_rng(spec.seed)
    canvas = _Canvas(spec)

    if spec.dense_crosses:
        _place_dense(canvas, spec, rng)

    plan = (["disk"] * spec.disks + ["ellipse"] * spec.ellipses
            + ["cross"] * spec.crosses + ["rod"] * spec.rods)
    for kind in plan:
        group = "normal" if kind in NORMAL_KINDS else "anomalous"
        canvas.place_random(random_shape(kind, rng), kind, group, rng)

    for _ in range(spec.far_disks):
        stamp = random_shape("disk", rng)
        best, where = -1.0, None
        h, w = stamp.shape
        for _ in range(300):
            x = int(rng.integers(0, max(1, spec.width - w + 1)))
            y = int(rng.integers(0, max(1, spec.height - h + 1)))
            if canvas.fits(stamp, x, y):
                g = canvas.gap(stamp, x, y)
                if g > best:
                    best, where = g, (x, y)
        if where is None:
            raise GenerationError("no room for a far disk")
        canvas.put(stamp, *where, "disk", "far")

    return SynthScan(MaskImage(canvas.mask), canvas.truths, canvas.index)


def _place_dense(canvas: _Canvas, spec: SynthSpec, rng: np.random.Generator):
    stamps = [random_shape("cross", rng, spec.dense_scale) for _ in range(spec.dense_crosses)]
    cell = max(max(s.shape) for s in stamps) + spec.dense_gap
    cols = int(math.ceil(math.sqrt(len(stamps))))
    rows = int(math.ceil(len(stamps) / cols))
    if cols * cell > spec.width or rows * cell > spec.height:
        raise GenerationError("dense region does not fit the canvas")
    ax = int(rng.integers(0, spec.width - cols * cell + 1))
    ay = int(rng.integers(0, spec.height - rows * cell + 1))
    for n, stamp in enumerate(stamps):
        r, c = divmod(n, cols)
        h, w = stamp.shape
        x = ax + c * cell + (cell - w) // 2
        y = ay + r * cell + (cell - h) // 2
        canvas.put(stamp, x, y, "cross", "dense")


def shape_corpus(n_normal: int, n_anomalous: int, seed: int = 0, size: int = 100):
    """Normalized shape images for autoencoder experiments.

    Returns ``(images, labels, kinds)`` where ``labels`` is 1 for anomalous
    shapes. Sample order is shuffled with the same seed.
    """
    rng = np.random.default_rng(seed)
    kinds = ([NORMAL_KINDS[i % 2] for i in range(n_normal)]
             + [ANOMALOUS_KINDS[i % 2] for i in range(n_anomalous)])
    images = []
    for kind in kinds:
        stamp = random_shape(kind, rng, scale=float(rng.uniform(0.8, 2.5)))
        mask = MaskImage(np.pad(stamp, 1).astype(np.uint8))
        scan = extract_impurities(mask, "corpus", shape_images=False)
        # rasterization can chip a thin shape into pieces; keep the largest
        imp = max(scan.impurities, key=lambda i: i.area)
        images.append(normalize_shape_image(imp, size))
    labels = np.array([0] * n_normal + [1] * n_anomalous)
    order = rng.permutation(len(kinds))
    return np.stack(images)[order], labels[order], [kinds[i] for i in order]


# -- oracles ----------------------------------------------------------------

def oracle_rect_distance(a, b, samples: int = 64) -> float:
    """Distance between two rectangle boundaries by sampling: every sample
    of one boundary (corners included) is measured against each edge segment
    of the other. Zero when either rectangle contains a sample of the other
    or two edges cross. Rectangles are ``(min_x, min_y, max_x, max_y)`` tuples."""
    pa, pb = _boundary(a, samples), _boundary(b, samples)

    def inside(p, r):
        return r[0] <= p[0] <= r[2] and r[1] <= p[1] <= r[3]

    if any(inside(p, b) for p in pa) or any(inside(p, a) for p in pb):
        return 0.0
    if any(_segments_cross(e, f) for e in _edges(a) for f in _edges(b)):
        return 0.0
    best = math.inf
    for pts, r in ((pa, b), (pb, a)):
        for p in pts:
            for s0, s1 in _edges(r):
                best = min(best, _segment_distance(p, s0, s1))
    return best


def _edges(r):
    x0, y0, x1, y1 = r
    corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    return [(corners[n], corners[(n + 1) % 4]) for n in range(4)]


def _orient(p, q, r) -> int:
    v = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
    return (v > 0) - (v < 0)


def _segments_cross(e, f) -> bool:
    (p1, p2), (q1, q2) = e, f
    o1, o2 = _orient(p1, p2, q1), _orient(p1, p2, q2)
    o3, o4 = _orient(q1, q2, p1), _orient(q1, q2, p2)
    return o1 * o2 < 0 and o3 * o4 < 0


def _segment_distance(p, s0, s1) -> float:
    dx, dy = s1[0] - s0[0], s1[1] - s0[1]
    length2 = dx * dx + dy * dy
    t = 0.0 if length2 == 0 else max(0.0, min(1.0, ((p[0] - s0[0]) * dx + (p[1] - s0[1]) * dy) / length2))
    return math.hypot(p[0] - s0[0] - t * dx, p[1] - s0[1] - t * dy)


def _boundary(r, samples):
    x0, y0, x1, y1 = r
    pts = []
    for t in range(samples + 1):
        f = t / samples
        x = x0 + (x1 - x0) * f
        y = y0 + (y1 - y0) * f
        pts += [(x, y0), (x, y1), (x0, y), (x1, y)]
    return pts


def oracle_spatial_scores(scan, k: int = 50, area_exponent: float = 4.0,
                          distance_exponent: float = 2.0) -> list[float]:
    """Naive spatial scores: materialise every weighted distance, sort each
    list in full, pick the k-th entry, then min-max normalize."""
    imps = scan.impurities
    n = len(imps)
    if n < 2:
        raise InvalidInputError(f"scan {scan.scan_id}: need at least 2 impurities")
    k = min(k, n - 1)

    def gap(a, b):
        ax0, ay0, ax1, ay1 = a.rect.as_tuple()
        bx0, by0, bx1, by1 = b.rect.as_tuple()
        dx = 0.0
        if bx0 > ax1:
            dx = bx0 - ax1
        elif ax0 > bx1:
            dx = ax0 - bx1
        dy = 0.0
        if by0 > ay1:
            dy = by0 - ay1
        elif ay0 > by1:
            dy = ay0 - by1
        return math.sqrt(float(dx) * dx + float(dy) * dy)

    matrix = [[math.pow(imps[i].area / imps[o].area, area_exponent) * gap(imps[i], imps[o])
               for o in range(n)] for i in range(n)]
    raw = []
    for i in range(n):
        row = sorted(matrix[i][o] for o in range(n) if o != i)
        raw.append(imps[i].area * math.pow(row[k - 1], distance_exponent))
    lo, hi = min(raw), max(raw)
    if hi == lo:
        return [0.0] * n
    return [(v - lo) / (hi - lo) for v in raw]


def oracle_enclosing_circle(points) -> EnclosingCircle:
    """Exhaustive smallest enclosing circle over all 2- and 3-point
    supports. O(n^4); refuses more than 40 points."""
    pts = [(float(x), float(y)) for x, y in points]
    if not 1 <= len(pts) <= 40:
        raise InvalidInputError(f"oracle_enclosing_circle handles 1..40 points, got {len(pts)}")
    if len(pts) == 1:
        return EnclosingCircle(pts[0], 0.0)

    def covers(cx, cy, r):
        return all(math.hypot(px - cx, py - cy) <= r + 1e-9 * max(1.0, r) for px, py in pts)

    best = None
    for a, b in itertools.combinations(pts, 2):
        cx, cy = (a[0] + b[0]) / 2, (a[1] + b[1]) / 2
        r = math.hypot(a[0] - cx, a[1] - cy)
        if (best is None or r < best[2]) and covers(cx, cy, r):
            best = (cx, cy, r)
    for a, b, c in itertools.combinations(pts, 3):
        d = 2 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]))
        if abs(d) < 1e-12:
            continue
        ux = ((a[0] ** 2 + a[1] ** 2) * (b[1] - c[1]) + (b[0] ** 2 + b[1] ** 2) * (c[1] - a[1])
              + (c[0] ** 2 + c[1] ** 2) * (a[1] - b[1])) / d
        uy = ((a[0] ** 2 + a[1] ** 2) * (c[0] - b[0]) + (b[0] ** 2 + b[1] ** 2) * (a[0] - c[0])
              + (c[0] ** 2 + c[1] ** 2) * (b[0] - a[0])) / d
        r = math.hypot(a[0] - ux, a[1] - uy)
        if (best is None or r < best[2]) and covers(ux, uy, r):
            best = (ux, uy, r)
    return EnclosingCircle((best[0], best[1]), best[2])
