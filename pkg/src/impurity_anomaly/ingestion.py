"""Loading tagged masks, extracting impurities and the impurity text store."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Optional

import cv2
import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from .exceptions import DecodeError, InvalidInputError, MalformedRecordError, VersionMismatchError
from .geometry import BoundingRect, Impurity

SHAPE_SIZE = 100
STORE_MAGIC = "impurities"
STORE_VERSION = 1


@dataclass
class MaskImage:
    pixels: np.ndarray  # (height, width) uint8 of 0/1

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels)
        if self.pixels.ndim != 2 or self.pixels.size == 0:
            raise InvalidInputError(f"mask must be a non-empty 2-D grid, got shape {self.pixels.shape}")
        self.pixels = (self.pixels != 0).astype(np.uint8)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass
class Scan:
    scan_id: str
    width: int
    height: int
    impurities: list[Impurity] = field(default_factory=list)

    def __post_init__(self):
        for idx, imp in enumerate(self.impurities):
            if imp.id != idx:
                raise InvalidInputError(f"scan {self.scan_id}: impurity ids must be 0..n-1, got {imp.id} at {idx}")
            r = imp.rect
            if r.min_x < 0 or r.min_y < 0 or r.max_x >= self.width or r.max_y >= self.height:
                raise InvalidInputError(
                    f"scan {self.scan_id}: impurity {imp.id} rectangle {r.as_tuple()} "
                    f"outside {self.width}x{self.height}"
                )

    def __len__(self) -> int:
        return len(self.impurities)

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    def feature_matrix(self) -> np.ndarray:
        """``(n, 5)`` array of ``min_x, min_y, max_x, max_y, area`` rows, the
        input format of the estimators."""
        if not self.impurities:
            return np.empty((0, 5))
        return np.array([[*imp.rect.as_tuple(), imp.area] for imp in self.impurities], dtype=np.float64)


def load_mask(path, binarize_threshold: int = 128, dark_on_light: bool = False,
              fill_outlines: bool = False) -> MaskImage:
    """Read a raster and binarize it.

    Color images are converted to gray by the mean of their color channels
    (alpha is ignored). Pixels at or above ``binarize_threshold`` become
    impurity pixels; with ``dark_on_light`` the intensities are inverted
    first. ``fill_outlines`` fills enclosed holes, for tags drawn as outlines.
    """
    try:
        with Image.open(path) as img:
            img.load()
            arr = np.asarray(img)
    except (UnidentifiedImageError, OSError) as exc:
        raise DecodeError(f"cannot decode image {path}: {exc}") from exc
    if arr.size == 0:
        raise InvalidInputError(f"image {path} has zero area")
    arr = arr.astype(np.float64) * (255.0 if arr.dtype == bool else 1.0)
    if arr.ndim == 3:
        arr = arr[..., :3].mean(axis=2) if arr.shape[2] >= 3 else arr[..., 0]
    if dark_on_light:
        arr = 255.0 - arr
    pixels = arr >= binarize_threshold
    if fill_outlines:
        pixels = ndimage.binary_fill_holes(pixels)
    return MaskImage(pixels.astype(np.uint8))


def _structure(connectivity: int) -> np.ndarray:
    if connectivity == 8:
        return np.ones((3, 3), dtype=bool)
    if connectivity == 4:
        return ndimage.generate_binary_structure(2, 1)
    raise InvalidInputError(f"connectivity must be 4 or 8, got {connectivity}")


def extract_impurities(mask: MaskImage, scan_id: str, connectivity: int = 8,
                       shape_images: bool = True) -> Scan:
    """Split a mask into impurities, one per connected component.

    Ids follow the raster-scan order in which components are first met.
    """
    labels, n = ndimage.label(mask.pixels, structure=_structure(connectivity))
    impurities = []
    for idx, sl in enumerate(ndimage.find_objects(labels)):
        crop = labels[sl] == idx + 1
        y0, x0 = sl[0].start, sl[1].start
        rect = BoundingRect(x0, y0, sl[1].stop - 1, sl[0].stop - 1)
        imp = Impurity(
            id=idx,
            contour=_outer_contour(crop, x0, y0),
            area=int(crop.sum()),
            rect=rect,
            pixels=crop,
        )
        if shape_images:
            imp.shape_image = normalize_shape_image(imp)
        impurities.append(imp)
    return Scan(scan_id, mask.width, mask.height, impurities)


def _outer_contour(crop: np.ndarray, x0: int, y0: int) -> list[tuple[int, int]]:
    padded = np.pad(crop.astype(np.uint8), 1)
    contours, _ = cv2.findContours(padded, cv2.RETR_EXTERNAL, cv2.CHAIN_APPROX_NONE)
    outer = max(contours, key=len).reshape(-1, 2)
    return [(int(x) - 1 + x0, int(y) - 1 + y0) for x, y in outer]


def impurity_pixels(imp: Impurity) -> np.ndarray:
    """Boolean crop of the impurity aligned with its rectangle; rebuilt from
    the contour (holes filled) when the extraction cache is absent."""
    if imp.pixels is not None:
        return imp.pixels
    r = imp.rect
    h, w = int(r.height) + 1, int(r.width) + 1
    canvas = np.zeros((h, w), dtype=np.uint8)
    pts = np.array([(x - r.min_x, y - r.min_y) for x, y in imp.contour], dtype=np.int32)
    cv2.drawContours(canvas, [pts.reshape(-1, 1, 2)], -1, 1, thickness=cv2.FILLED)
    return canvas.astype(bool)


def normalize_shape_image(imp: Impurity, size: int = SHAPE_SIZE) -> np.ndarray:
    """Render the impurity 1-on-0 into a ``size x size`` image.

    The longer rectangle side is scaled to ``size`` with the aspect ratio
    kept (nearest-neighbour sampling) and the result is centred.
    """
    crop = impurity_pixels(imp)
    h, w = crop.shape
    scale = size / max(h, w)
    nh = min(size, max(1, int(round(h * scale))))
    nw = min(size, max(1, int(round(w * scale))))
    rows = np.minimum(((np.arange(nh) + 0.5) / scale).astype(int), h - 1)
    cols = np.minimum(((np.arange(nw) + 0.5) / scale).astype(int), w - 1)
    out = np.zeros((size, size), dtype=np.uint8)
    top, left = (size - nh) // 2, (size - nw) // 2
    out[top:top + nh, left:left + nw] = crop[np.ix_(rows, cols)]
    return out


def persist_impurities(scan: Scan, path) -> None:
    """Write the scan to the line-oriented impurity store.

    Header: ``impurities <version> <scan_id> <width> <height> <count>``; one
    record per impurity: ``id area min_x min_y max_x max_y x,y;x,y;...``.
    Fields are tab separated.
    """
    if any(ch in scan.scan_id for ch in "\t\r\n") or not scan.scan_id:
        raise InvalidInputError(f"scan id {scan.scan_id!r} cannot be stored")
    lines = [f"{STORE_MAGIC}\t{STORE_VERSION}\t{scan.scan_id}\t{scan.width}\t{scan.height}\t{len(scan)}"]
    for imp in scan.impurities:
        rect = [_as_int(v) for v in imp.rect.as_tuple()]
        contour = ";".join(f"{_as_int(x)},{_as_int(y)}" for x, y in imp.contour)
        lines.append("\t".join(str(v) for v in (imp.id, imp.area, *rect)) + "\t" + contour)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _as_int(v) -> int:
    if int(v) != v:
        raise InvalidInputError(f"store fields must be integral, got {v}")
    return int(v)


def load_impurities(path) -> Scan:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if not text.endswith("\n"):
        raise MalformedRecordError(f"{path}: truncated (missing final newline)")
    lines = text.split("\n")[:-1]
    if not lines:
        raise MalformedRecordError(f"{path}: empty file")
    header = lines[0].split("\t")
    if len(header) != 6 or header[0] != STORE_MAGIC:
        raise MalformedRecordError(f"{path}: bad header {lines[0]!r}")
    try:
        version = int(header[1])
        width, height, count = int(header[3]), int(header[4]), int(header[5])
    except ValueError as exc:
        raise MalformedRecordError(f"{path}: bad header {lines[0]!r}") from exc
    if version != STORE_VERSION:
        raise VersionMismatchError(f"{path}: store version {version}, expected {STORE_VERSION}")
    if len(lines) - 1 != count:
        raise MalformedRecordError(f"{path}: header announces {count} records, found {len(lines) - 1}")
    impurities = []
    for lineno, line in enumerate(lines[1:], start=2):
        impurities.append(_parse_record(line, f"{path}:{lineno}"))
    return Scan(header[2], width, height, impurities)


def _parse_record(line: str, where: str) -> Impurity:
    fields = line.split("\t")
    if len(fields) != 7:
        raise MalformedRecordError(f"{where}: expected 7 fields, got {len(fields)}")
    try:
        imp_id, area, x0, y0, x1, y1 = (int(v) for v in fields[:6])
        contour = []
        if fields[6]:
            for pair in fields[6].split(";"):
                x, y = pair.split(",")
                contour.append((int(x), int(y)))
        return Impurity(imp_id, contour, area, BoundingRect(x0, y0, x1, y1))
    except ValueError as exc:
        raise MalformedRecordError(f"{where}: {exc}") from exc


def scan_from_path(path, scan_id: Optional[str] = None, **load_kwargs) -> Scan:
    """Convenience: ``load_mask`` followed by ``extract_impurities`` with the
    file stem as default scan id."""
    connectivity = load_kwargs.pop("connectivity", 8)
    mask = load_mask(path, **load_kwargs)
    sid = scan_id or os.path.splitext(os.path.basename(path))[0]
    return extract_impurities(mask, sid, connectivity=connectivity)
