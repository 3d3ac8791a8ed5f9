"""Command-line front end. One subcommand per stage; ``run`` does them all.

Intermediate files live under ``--out-dir``::

    impurities/<scan>.tsv   spatial.tsv   shape.tsv   scores.tsv
    circle_diff.tsv         shape_model.pt
    clusters_unranked.tsv   clusters.tsv  deciles.tsv  overlays/

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 training failure.
"""
from __future__ import annotations

import logging
import sys
from pathlib import Path

import click
import numpy as np
import yaml

from . import __version__
from .config import PipelineConfig, load_config
from .exceptions import ImpurityAnomalyError, InvalidInputError
from .ingestion import extract_impurities, load_impurities, load_mask, normalize_shape_image, persist_impurities
from .pipeline import (
    EXIT_DATA,
    EXIT_OK,
    EXIT_TRAINING,
    EXIT_USAGE,
    PipelineError,
    circle_stage,
    cluster_stage,
    combine_stage,
    discover_scans,
    extract_stage,
    load_model_stage,
    render_stage,
    run_pipeline,
    shape_stage,
    spatial_stage,
    stage,
    train_stage,
)
from .reports import read_cluster_report, rank_report, write_circle_scores, write_cluster_report
from .scores import read_scores, write_scores
from .shape import train_shape_model

log = logging.getLogger("impurity_anomaly")


def _parse_sets(values) -> dict:
    out = {}
    for item in values:
        if "=" not in item:
            raise click.BadParameter(f"expected KEY=VALUE, got {item!r}", param_hint="--set")
        key, raw = item.split("=", 1)
        out[key.strip()] = yaml.safe_load(raw)
    return out


def _options(fn):
    opts = [
        click.option("--config", "config_path", type=click.Path(dir_okay=False),
                     help="YAML or JSON configuration file."),
        click.option("--scan-dir", type=click.Path(file_okay=False), help="Directory of mask images."),
        click.option("--out-dir", type=click.Path(file_okay=False), help="Output directory."),
        click.option("--model-path", type=click.Path(dir_okay=False), help="Shape model file."),
        click.option("--seed", type=int, help="Training seed."),
        click.option("--k-spatial", type=int, help="Neighbour rank for spatial scoring."),
        click.option("--k-clusters", type=int, help="Initial clusters per scan."),
        click.option("--set", "sets", multiple=True, metavar="KEY=VALUE",
                     help="Override any config key, e.g. price.c1=2.0 (repeatable)."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _build_config(config_path, scan_dir, out_dir, model_path, seed, k_spatial, k_clusters, sets):
    try:
        cfg = load_config(config_path) if config_path else PipelineConfig()
        overrides = _parse_sets(sets)
        for key, value in (("scan_dir", scan_dir), ("out_dir", out_dir), ("model_path", model_path),
                           ("seed", seed), ("spatial.k", k_spatial), ("cluster.k", k_clusters)):
            if value is not None:
                overrides[key] = value
        return cfg.with_overrides(overrides) if overrides else cfg
    except (InvalidInputError, OSError) as exc:
        raise click.UsageError(str(exc)) from exc


def _out(cfg) -> Path:
    p = Path(cfg.out_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _stored_scans(cfg) -> list:
    d = Path(cfg.out_dir) / "impurities"
    files = sorted(d.glob("*.tsv")) if d.is_dir() else []
    if not files:
        raise PipelineError("load", f"no impurity files in {d}; run 'extract' first")
    with stage("load"):
        return [load_impurities(f) for f in files]


def _scores(path: Path, what: str) -> dict:
    if not path.exists():
        raise PipelineError("load", f"{path} not found; run '{what}' first")
    with stage("load"):
        return read_scores(path)


def _model_path(cfg) -> str:
    return cfg.model_path or str(Path(cfg.out_dir) / "shape_model.pt")


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="impurity-anomaly")
@click.option("-v", "--verbose", count=True, help="More logging (repeatable).")
def cli(verbose):
    """Score, cluster and rank anomalous impurities in tagged scan masks."""
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2), format="%(levelname)s %(message)s")


@cli.command()
@_options
def extract(**kw):
    """Extract impurities from every mask in --scan-dir."""
    cfg = _build_config(**kw)
    if not cfg.scan_dir:
        raise click.UsageError("extract needs --scan-dir")
    scans = extract_stage(discover_scans(cfg.scan_dir), cfg)
    d = _out(cfg) / "impurities"
    d.mkdir(exist_ok=True)
    with stage("extract"):
        for s in scans:
            persist_impurities(s, d / f"{s.scan_id}.tsv")
    click.echo(f"extracted {sum(len(s) for s in scans)} impurities from {len(scans)} scans")


@cli.command("score-spatial")
@_options
def score_spatial(**kw):
    """Weighted k-th nearest neighbour scores -> spatial.tsv."""
    cfg = _build_config(**kw)
    spatial = spatial_stage(_stored_scans(cfg), cfg)
    with stage("spatial"):
        write_scores(spatial.values(), _out(cfg) / "spatial.tsv", channels=("spatial",))


def _manifest_images(path: Path):
    normal, anomalous = [], []
    with stage("train"):
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or parts[1] not in ("normal", "anomalous"):
                raise InvalidInputError(f"{path}:{lineno}: expected '<image path>\\t<normal|anomalous>'")
            img_path = Path(parts[0])
            if not img_path.is_absolute():
                img_path = path.parent / img_path
            scan = extract_impurities(load_mask(img_path), img_path.stem, shape_images=False)
            if not scan.impurities:
                raise InvalidInputError(f"{img_path}: no impurity in training image")
            imp = max(scan.impurities, key=lambda i: (i.area, -i.id))
            (normal if parts[1] == "normal" else anomalous).append(normalize_shape_image(imp))
    if not normal:
        raise PipelineError("train", f"{path}: manifest lists no normal images", EXIT_TRAINING)
    return np.stack(normal), (np.stack(anomalous) if anomalous else None)


@cli.command("train-shape")
@_options
@click.option("--manifest", type=click.Path(exists=True, dir_okay=False),
              help="Tab-separated '<image path>\\t<normal|anomalous>' list. "
                   "Without it, training sets come from circle-difference scores.")
def train_shape(manifest, **kw):
    """Train the shape autoencoder."""
    cfg = _build_config(**kw)
    target = _model_path(cfg)
    _out(cfg)
    if manifest:
        normal, anomalous = _manifest_images(Path(manifest))
        with stage("train"):
            model = train_shape_model(normal, anomalous, cfg.train_config)
            model.save(target)
    else:
        scans = _stored_scans(cfg)
        circle = circle_stage(scans, cfg)
        with stage("circle"):
            write_circle_scores(circle, Path(cfg.out_dir) / "circle_diff.tsv")
        model = train_stage(scans, circle, cfg, target)
    click.echo(f"model written to {target} (final loss {model.history[-1]:.5f})")


@cli.command("score-shape")
@_options
def score_shape(**kw):
    """Autoencoder reconstruction scores -> shape.tsv."""
    cfg = _build_config(**kw)
    scans = _stored_scans(cfg)
    shape = shape_stage(scans, load_model_stage(_model_path(cfg)), cfg)
    with stage("shape"):
        write_scores(shape.values(), _out(cfg) / "shape.tsv", channels=("shape",))


@cli.command("score-combined")
@_options
def score_combined(**kw):
    """Product of spatial and shape scores -> scores.tsv."""
    cfg = _build_config(**kw)
    out = _out(cfg)
    combined = combine_stage(_scores(out / "spatial.tsv", "score-spatial"),
                             _scores(out / "shape.tsv", "score-shape"))
    with stage("combine"):
        write_scores([combined[k] for k in sorted(combined)], out / "scores.tsv")


@cli.command()
@_options
def cluster(**kw):
    """Market clustering per scan -> clusters_unranked.tsv."""
    cfg = _build_config(**kw)
    out = _out(cfg)
    entries = cluster_stage(_stored_scans(cfg), _scores(out / "scores.tsv", "score-combined"), cfg)
    with stage("cluster"):
        write_cluster_report(entries, out / "clusters_unranked.tsv")


@cli.command()
@_options
def rank(**kw):
    """Global ranking and deciles -> clusters.tsv, deciles.tsv."""
    cfg = _build_config(**kw)
    out = _out(cfg)
    src = out / "clusters_unranked.tsv"
    if not src.exists():
        raise PipelineError("rank", f"{src} not found; run 'cluster' first")
    with stage("rank"):
        ranked = rank_report(read_cluster_report(src), out / "clusters.tsv", out / "deciles.tsv")
    click.echo(f"ranked {len(ranked)} clusters")


@cli.command()
@_options
def render(**kw):
    """Colormapped overlays of every score channel and of the clusters."""
    cfg = _build_config(**kw)
    out = _out(cfg)
    scores = _scores(out / "scores.tsv", "score-combined")
    report = out / "clusters.tsv"
    with stage("render"):
        entries = read_cluster_report(report) if report.exists() else []
    written = render_stage(_stored_scans(cfg), scores, entries, out / "overlays")
    click.echo(f"wrote {len(written)} overlays")


@cli.command()
@_options
@click.option("--no-train", is_flag=True, help="Load --model-path instead of training.")
def run(no_train, **kw):
    """Full pipeline: extract, score, train, cluster, rank and render."""
    cfg = _build_config(**kw)
    if no_train:
        cfg = cfg.with_overrides({"train_model": False})
    result = run_pipeline(cfg)
    top = result.ranked[-1]
    click.echo(f"{len(result.ranked)} clusters from {len(result.scans)} scans; most anomalous: "
               f"{top.scan_id} cluster {top.index} (am {top.am:.6g})")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="impurity-anomaly", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_USAGE
    except click.UsageError as exc:
        exc.show()
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except PipelineError as exc:
        click.echo(f"error: {exc}", err=True)
        return exc.exit_code
    except ImpurityAnomalyError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
