"""Per-impurity score channels, min-max normalization and the score file."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import InvalidInputError, MalformedRecordError

CHANNELS = ("spatial", "shape", "combined")


def min_max_normalize(values) -> np.ndarray:
    """Map values onto [0, 1]; a constant vector maps to all zeros."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return v.copy()
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


@dataclass
class ScoreSet:
    """Scores of one scan, indexed by impurity id. Unpopulated channels are None."""

    scan_id: str
    spatial: Optional[np.ndarray] = None
    shape: Optional[np.ndarray] = None
    combined: Optional[np.ndarray] = None
    raw: dict = field(default_factory=dict)

    def channel(self, name: str) -> np.ndarray:
        if name not in CHANNELS:
            raise InvalidInputError(f"unknown score channel {name!r}")
        values = getattr(self, name)
        if values is None:
            raise InvalidInputError(f"scan {self.scan_id}: channel {name!r} not populated")
        return values

    def merged(self, other: "ScoreSet") -> "ScoreSet":
        if other.scan_id != self.scan_id:
            raise InvalidInputError(f"cannot merge scores of {self.scan_id} and {other.scan_id}")
        out = ScoreSet(self.scan_id, self.spatial, self.shape, self.combined, {**self.raw, **other.raw})
        for name in CHANNELS:
            if getattr(other, name) is not None:
                setattr(out, name, getattr(other, name))
        return out


def combined_scores(spatial: ScoreSet, shape: ScoreSet) -> ScoreSet:
    """Per-impurity product of the spatial and shape channels, min-max normalized."""
    if spatial.scan_id != shape.scan_id:
        raise InvalidInputError(f"scan mismatch: {spatial.scan_id} vs {shape.scan_id}")
    a, b = spatial.channel("spatial"), shape.channel("shape")
    if a.shape != b.shape:
        raise InvalidInputError(
            f"scan {spatial.scan_id}: {a.size} spatial scores but {b.size} shape scores"
        )
    product = a * b
    merged = spatial.merged(shape)
    merged.combined = min_max_normalize(product)
    merged.raw["combined"] = product
    return merged


def write_scores(score_sets, path, channels=CHANNELS) -> None:
    rows = ["scan_id\timpurity_id\tchannel\tvalue"]
    for ss in score_sets:
        for name in channels:
            values = getattr(ss, name)
            if values is None:
                continue
            rows.extend(f"{ss.scan_id}\t{i}\t{name}\t{v:.6f}" for i, v in enumerate(values))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(rows) + "\n")


def read_scores(path) -> dict[str, ScoreSet]:
    """Inverse of :func:`write_scores` (values carry 6 decimals)."""
    collected: dict[str, dict[str, dict[int, float]]] = {}
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "scan_id\timpurity_id\tchannel\tvalue":
        raise MalformedRecordError(f"{path}: missing score header")
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split("\t")
        if len(parts) != 4 or parts[2] not in CHANNELS:
            raise MalformedRecordError(f"{path}:{lineno}: bad score record {line!r}")
        try:
            idx, value = int(parts[1]), float(parts[3])
        except ValueError as exc:
            raise MalformedRecordError(f"{path}:{lineno}: {exc}") from exc
        collected.setdefault(parts[0], {}).setdefault(parts[2], {})[idx] = value
    out = {}
    for scan_id, chans in collected.items():
        ss = ScoreSet(scan_id)
        for name, values in chans.items():
            if sorted(values) != list(range(len(values))):
                raise MalformedRecordError(f"{path}: {scan_id}/{name} ids are not dense")
            setattr(ss, name, np.array([values[i] for i in range(len(values))]))
        out[scan_id] = ss
    return out
