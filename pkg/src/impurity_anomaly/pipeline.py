"""End-to-end orchestration: masks -> impurities -> scores -> clusters ->
global ranking, reports and overlays.

Every stage is a plain function so the command-line subcommands can run
them one at a time. Errors leave as :class:`PipelineError` tagged with the
stage that raised them.
"""
from __future__ import annotations

import contextlib
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .area import ClusteringError, area_measure, market_clustering
from .config import PipelineConfig, dump_config
from .exceptions import ImpurityAnomalyError, TrainingError
from .ingestion import (
    extract_impurities,
    load_mask,
    normalize_shape_image,
    persist_impurities,
)
from .render import render_clusters, render_overlay, save_png
from .reports import rank_report, write_circle_scores
from .scores import ScoreSet, combined_scores, min_max_normalize, write_scores
from .shape import ShapeModel, circle_diff_scores, select_training_sets, shape_scores, train_shape_model
from .spatial import spatial_scores

log = logging.getLogger(__name__)

MASK_SUFFIXES = (".png", ".bmp", ".tif", ".tiff", ".pgm", ".ppm")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRAINING = 0, 1, 2, 3


class PipelineError(ImpurityAnomalyError):
    """A stage failed. ``str(err)`` reads ``"<stage>: <reason>"``."""

    def __init__(self, stage: str, message: str, exit_code: int = EXIT_DATA):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
        self.exit_code = exit_code


@contextlib.contextmanager
def stage(name: str):
    try:
        yield
    except PipelineError:
        raise
    except TrainingError as exc:
        raise PipelineError(name, str(exc), EXIT_TRAINING) from exc
    except (ImpurityAnomalyError, OSError, ValueError) as exc:
        raise PipelineError(name, str(exc) or type(exc).__name__) from exc


def _map(fn, items, n_jobs: int):
    """Ordered map, threaded across scans when ``n_jobs > 1``."""
    items = list(items)
    if n_jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# -- stages ------------------------------------------------------------------

def discover_scans(scan_dir) -> list[Path]:
    d = Path(scan_dir)
    if not d.is_dir():
        raise PipelineError("extract", f"scan directory {d} does not exist")
    paths = sorted(p for p in d.iterdir() if p.suffix.lower() in MASK_SUFFIXES)
    if not paths:
        raise PipelineError("extract", f"no mask images in {d}")
    stems = [p.stem for p in paths]
    if len(set(stems)) != len(stems):
        raise PipelineError("extract", "scan ids (file stems) are not unique")
    return paths


def extract_stage(paths, cfg: PipelineConfig) -> list:
    ing = cfg.ingest

    def one(path):
        mask = load_mask(path, ing.binarize_threshold, ing.dark_on_light, ing.fill_outlines)
        return extract_impurities(mask, Path(path).stem, connectivity=ing.connectivity)

    with stage("extract"):
        return _map(one, paths, cfg.n_jobs)


def spatial_stage(scans, cfg: PipelineConfig) -> dict[str, ScoreSet]:
    """Spatial scores, min-max normalized per scan or over the whole set."""
    with stage("spatial"):
        if cfg.spatial_normalization == "scan":
            sets = _map(lambda s: spatial_scores(s, cfg.spatial), scans, cfg.n_jobs)
            return {s.scan_id: ss for s, ss in zip(scans, sets)}
        raws = _map(lambda s: spatial_scores(s, cfg.spatial).raw["spatial"], scans, cfg.n_jobs)
        normalized = min_max_normalize(np.concatenate(raws))
        out, start = {}, 0
        for s, raw in zip(scans, raws):
            out[s.scan_id] = ScoreSet(s.scan_id, spatial=normalized[start:start + raw.size],
                                      raw={"spatial": raw})
            start += raw.size
        return out


def circle_stage(scans, cfg: PipelineConfig) -> dict[str, np.ndarray]:
    with stage("circle"):
        values = _map(circle_diff_scores, scans, cfg.n_jobs)
        return {s.scan_id: v for s, v in zip(scans, values)}


def _ensure_shape_images(scan) -> None:
    for imp in scan.impurities:
        if imp.shape_image is None:
            imp.shape_image = normalize_shape_image(imp)


def training_sets(scans, circle: dict, cfg: PipelineConfig):
    """Normal and anomalous shape images pooled over all scans."""
    with stage("train"):
        values = np.concatenate([circle[s.scan_id] for s in scans]) if scans else np.empty(0)
        normal_idx, anomalous_idx = select_training_sets(values, cfg.train_config)
        for s in scans:
            _ensure_shape_images(s)
        images = [imp.shape_image for s in scans for imp in s.impurities]
        normal = np.stack([images[i] for i in normal_idx])
        anomalous = np.stack([images[i] for i in anomalous_idx]) if anomalous_idx.size else None
        return normal, anomalous


def train_stage(scans, circle: dict, cfg: PipelineConfig, out_path) -> ShapeModel:
    normal, anomalous = training_sets(scans, circle, cfg)
    with stage("train"):
        log.info("training on %d normal and %d anomalous shapes", len(normal),
                 0 if anomalous is None else len(anomalous))
        model = train_shape_model(normal, anomalous, cfg.train_config)
        model.save(out_path)
        return model


def load_model_stage(path) -> ShapeModel:
    if not path or not os.path.exists(path):
        raise PipelineError("shape", "model unavailable" + (f" ({path})" if path else ""))
    with stage("shape"):
        return ShapeModel.load(path)


def shape_stage(scans, model: ShapeModel, cfg: PipelineConfig) -> dict[str, ScoreSet]:
    with stage("shape"):
        out = {}
        for s in scans:
            _ensure_shape_images(s)
            out[s.scan_id] = shape_scores(s, model, cfg.postprocess, cfg.intensity_scale)
        return out


def combine_stage(spatial: dict, shape: dict) -> dict[str, ScoreSet]:
    with stage("combine"):
        missing = sorted(set(spatial) ^ set(shape))
        if missing:
            raise PipelineError("combine", f"scans scored on one channel only: {', '.join(missing)}")
        return {sid: combined_scores(spatial[sid], shape[sid]) for sid in spatial}


def cluster_stage(scans, combined: dict, cfg: PipelineConfig) -> list:
    """``(scan_id, index, cluster)`` entries with area measures; per scan the
    index orders clusters by decreasing area measure."""
    cc = cfg.cluster

    def one(scan):
        scores = combined[scan.scan_id].channel("combined")
        clusters = market_clustering(scan, scores, cc.k, cfg.price, convergence=cc.convergence,
                                     max_passes=cc.max_passes)
        areas = None
        if cc.area_normalization:
            areas = scan.feature_matrix()[:, 4] / float(scan.width * scan.height)
        for c in clusters:
            c.am = area_measure(c, scores, scan, areas)
        clusters.sort(key=lambda c: (-c.am, c.key))
        return [(scan.scan_id, n, c) for n, c in enumerate(clusters)]

    with stage("cluster"):
        try:
            per_scan = _map(one, scans, cfg.n_jobs)
        except ClusteringError as exc:
            raise PipelineError("cluster", str(exc)) from exc
    return [e for entries in per_scan for e in entries]


def render_stage(scans, scores: dict, entries, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    by_scan: dict[str, list] = {}
    for sid, _, c in entries:
        by_scan.setdefault(sid, []).append(c)
    with stage("render"):
        for s in scans:
            ss = scores.get(s.scan_id)
            for name in ("spatial", "shape", "combined"):
                if ss is not None and getattr(ss, name) is not None:
                    path = out_dir / f"{s.scan_id}_{name}.png"
                    save_png(render_overlay(s, getattr(ss, name)), path)
                    written.append(path)
            if s.scan_id in by_scan:
                path = out_dir / f"{s.scan_id}_clusters.png"
                save_png(render_clusters(s, by_scan[s.scan_id]), path)
                written.append(path)
    return written


# -- full run ----------------------------------------------------------------

@dataclass
class PipelineResult:
    scans: list
    scores: dict
    circle: dict
    ranked: list
    model_path: Optional[str]
    outputs: dict = field(default_factory=dict)


def run_pipeline(cfg: PipelineConfig, scans=None) -> PipelineResult:
    """Run every stage and write all artifacts under ``cfg.out_dir``.

    ``scans`` may be given directly (already extracted); otherwise masks are
    read from ``cfg.scan_dir``.
    """
    out = Path(cfg.out_dir)
    with stage("setup"):
        (out / "impurities").mkdir(parents=True, exist_ok=True)
        dump_config(cfg, out / "config.yaml")

    if scans is None:
        if not cfg.scan_dir:
            raise PipelineError("extract", "no scan directory configured")
        scans = extract_stage(discover_scans(cfg.scan_dir), cfg)
    if not scans:
        raise PipelineError("extract", "no scans to process")
    with stage("extract"):
        for s in scans:
            persist_impurities(s, out / "impurities" / f"{s.scan_id}.tsv")

    spatial = spatial_stage(scans, cfg)
    circle = circle_stage(scans, cfg)
    with stage("circle"):
        write_circle_scores(circle, out / "circle_diff.tsv")

    if cfg.train_model:
        model_path = cfg.model_path or str(out / "shape_model.pt")
        model = train_stage(scans, circle, cfg, model_path)
    else:
        model_path = cfg.model_path
        model = load_model_stage(model_path)

    shape = shape_stage(scans, model, cfg)
    combined = combine_stage(spatial, shape)
    with stage("combine"):
        write_scores([combined[s.scan_id] for s in scans], out / "scores.tsv")

    entries = cluster_stage(scans, combined, cfg)
    if not entries:
        raise PipelineError("rank", "no clusters were formed")
    with stage("rank"):
        ranked = rank_report(entries, out / "clusters.tsv", out / "deciles.tsv")
    overlays = render_stage(scans, combined, entries, out / "overlays")

    return PipelineResult(
        scans=scans, scores=combined, circle=circle, ranked=ranked, model_path=model_path,
        outputs={
            "config": out / "config.yaml",
            "scores": out / "scores.tsv",
            "circle": out / "circle_diff.tsv",
            "clusters": out / "clusters.tsv",
            "deciles": out / "deciles.tsv",
            "overlays": overlays,
        },
    )
