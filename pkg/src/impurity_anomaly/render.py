"""Colormapped overlays of per-impurity scores and cluster assignments."""
from __future__ import annotations

import numpy as np
from PIL import Image

from .config import COLORMAP_BREAKPOINTS
from .exceptions import InvalidInputError
from .ingestion import impurity_pixels

UNCLUSTERED_GREY = (128, 128, 128)


def colormap(values) -> np.ndarray:
    """Piecewise-linear blue -> cyan -> yellow -> red; returns uint8 RGB rows."""
    v = np.asarray(values, dtype=np.float64)
    if v.size and (not np.all(np.isfinite(v)) or v.min() < 0.0 or v.max() > 1.0):
        raise InvalidInputError("colormap values must lie in [0, 1]")
    xs = [p for p, _ in COLORMAP_BREAKPOINTS]
    rgb = np.stack([np.interp(v, xs, [c[ch] for _, c in COLORMAP_BREAKPOINTS]) for ch in range(3)],
                   axis=-1)
    return np.rint(rgb).astype(np.uint8)


def mask_background(scan) -> np.ndarray:
    """White impurities on black, as an RGB array of the scan's size."""
    out = np.zeros((scan.height, scan.width, 3), dtype=np.uint8)
    for imp in scan.impurities:
        _paint(out, imp, (255, 255, 255))
    return out


def _paint(canvas: np.ndarray, imp, color) -> None:
    r = imp.rect
    crop = impurity_pixels(imp)
    region = canvas[r.min_y:r.max_y + 1, r.min_x:r.max_x + 1]
    region[crop] = color


def render_overlay(scan, values, background=None) -> np.ndarray:
    """Tint every impurity of ``scan`` by its value in [0, 1].

    ``background`` (an ``(h, w, 3)`` uint8 array) defaults to the mask
    itself; pixels outside impurities are left unchanged.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.shape != (len(scan),):
        raise InvalidInputError(f"scan {scan.scan_id}: {len(scan)} impurities but {v.size} values")
    canvas = _background(scan, background)
    for imp, color in zip(scan.impurities, colormap(v)):
        _paint(canvas, imp, tuple(int(c) for c in color))
    return canvas


def render_clusters(scan, clusters, background=None) -> np.ndarray:
    """Tint each cluster's members by the cluster's min-max normalized area
    measure; impurities outside every cluster are grey."""
    canvas = _background(scan, background)
    ams = np.array([c.am for c in clusters], dtype=np.float64)
    if ams.size and np.any(np.isnan(ams)):
        raise InvalidInputError("clusters need an area measure before rendering")
    lo, hi = (ams.min(), ams.max()) if ams.size else (0.0, 0.0)
    level = (ams - lo) / (hi - lo) if hi > lo else np.zeros_like(ams)
    colors = colormap(level)
    owner = {}
    for n, c in enumerate(clusters):
        for m in c.members:
            owner[m] = n
    for imp in scan.impurities:
        color = colors[owner[imp.id]] if imp.id in owner else UNCLUSTERED_GREY
        _paint(canvas, imp, tuple(int(c) for c in color))
    return canvas


def _background(scan, background) -> np.ndarray:
    if background is None:
        return mask_background(scan)
    bg = np.asarray(background)
    if bg.shape != (scan.height, scan.width, 3) or bg.dtype != np.uint8:
        raise InvalidInputError(
            f"background must be a ({scan.height}, {scan.width}, 3) uint8 array, got {bg.shape} {bg.dtype}"
        )
    return bg.copy()


def save_png(rgb: np.ndarray, path) -> None:
    # No metadata chunks, so identical arrays give identical bytes.
    Image.fromarray(np.ascontiguousarray(rgb, dtype=np.uint8)).save(path, format="PNG")
