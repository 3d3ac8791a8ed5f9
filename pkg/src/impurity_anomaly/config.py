"""Pipeline configuration: every tunable constant plus paths, loadable from
YAML or JSON with unknown keys rejected."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

import yaml

from .area import CONVERGENCE_MODES, PriceParams
from .exceptions import InvalidInputError
from .shape import PostprocessParams, ShapeTrainConfig
from .spatial import SpatialParams

NORMALIZATION_MODES = ("scan", "dataset")

# Colormap breakpoints (position, RGB): blue -> cyan -> yellow -> red.
COLORMAP_BREAKPOINTS = (
    (0.0, (0, 0, 255)),
    (1.0 / 3.0, (0, 255, 255)),
    (2.0 / 3.0, (255, 255, 0)),
    (1.0, (255, 0, 0)),
)


@dataclass(frozen=True)
class IngestConfig:
    binarize_threshold: int = 128
    dark_on_light: bool = False
    fill_outlines: bool = False
    connectivity: int = 8

    def __post_init__(self):
        if not 0 <= self.binarize_threshold <= 255:
            raise InvalidInputError("ingest.binarize_threshold must lie in 0..255")
        if self.connectivity not in (4, 8):
            raise InvalidInputError("ingest.connectivity must be 4 or 8")


@dataclass(frozen=True)
class ClusterConfig:
    k: int = 10
    convergence: str = "literal"
    max_passes: int = 10_000
    area_normalization: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise InvalidInputError("cluster.k must be positive")
        if self.convergence not in CONVERGENCE_MODES:
            raise InvalidInputError(f"cluster.convergence must be one of {CONVERGENCE_MODES}")
        if self.max_passes < 1:
            raise InvalidInputError("cluster.max_passes must be positive")


# Sections whose fields come from the scoring modules. ``rng_seed`` of the
# training config is driven by the top-level ``seed`` instead.
_SECTIONS = {
    "ingest": IngestConfig,
    "spatial": SpatialParams,
    "shape": ShapeTrainConfig,
    "postprocess": PostprocessParams,
    "price": PriceParams,
    "cluster": ClusterConfig,
}
_HIDDEN = {"shape": {"rng_seed"}}


@dataclass(frozen=True)
class PipelineConfig:
    scan_dir: Optional[str] = None
    out_dir: str = "out"
    model_path: Optional[str] = None
    train_model: bool = True
    seed: int = 0
    spatial_normalization: str = "scan"
    intensity_scale: float = 255.0
    n_jobs: int = 1
    ingest: IngestConfig = field(default_factory=IngestConfig)
    spatial: SpatialParams = field(default_factory=SpatialParams)
    shape: ShapeTrainConfig = field(default_factory=ShapeTrainConfig)
    postprocess: PostprocessParams = field(default_factory=PostprocessParams)
    price: PriceParams = field(default_factory=PriceParams)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)

    def __post_init__(self):
        if self.spatial_normalization not in NORMALIZATION_MODES:
            raise InvalidInputError(f"spatial_normalization must be one of {NORMALIZATION_MODES}")
        if self.n_jobs < 1:
            raise InvalidInputError("n_jobs must be positive")
        if self.intensity_scale <= 0:
            raise InvalidInputError("intensity_scale must be positive")

    @property
    def train_config(self) -> ShapeTrainConfig:
        return replace(self.shape, rng_seed=self.seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        for section, hidden in _HIDDEN.items():
            for key in hidden:
                d[section].pop(key, None)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        if not isinstance(data, dict):
            raise InvalidInputError("configuration must be a mapping")
        top = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - top)
        if unknown:
            raise InvalidInputError(f"unknown configuration keys: {', '.join(unknown)}")
        kwargs: dict[str, Any] = {}
        for key, value in data.items():
            if key in _SECTIONS:
                kwargs[key] = _section(key, value)
            else:
                kwargs[key] = value
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise InvalidInputError(f"bad configuration: {exc}") from exc

    def with_overrides(self, overrides: dict) -> "PipelineConfig":
        """Apply dotted overrides such as ``{"price.c1": 2.0, "seed": 3}``."""
        data = self.to_dict()
        for dotted, value in overrides.items():
            parts = dotted.split(".")
            if len(parts) == 1:
                data[parts[0]] = value
            elif len(parts) == 2 and parts[0] in _SECTIONS:
                data[parts[0]][parts[1]] = value
            else:
                raise InvalidInputError(f"unknown configuration key {dotted!r}")
        return PipelineConfig.from_dict(data)


def _section(name: str, value) -> Any:
    cls = _SECTIONS[name]
    if not isinstance(value, dict):
        raise InvalidInputError(f"configuration section {name!r} must be a mapping")
    allowed = {f.name for f in fields(cls)} - _HIDDEN.get(name, set())
    unknown = sorted(set(value) - allowed)
    if unknown:
        raise InvalidInputError(f"unknown keys in {name!r}: {', '.join(unknown)}")
    try:
        return cls(**value)
    except TypeError as exc:
        raise InvalidInputError(f"bad {name!r} section: {exc}") from exc


def load_config(path) -> PipelineConfig:
    """Read a ``.json`` or YAML configuration file."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise InvalidInputError(f"cannot parse configuration {path}: {exc}") from exc
    return PipelineConfig.from_dict(data or {})


def dump_config(cfg: PipelineConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True), encoding="utf-8")
