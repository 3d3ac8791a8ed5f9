"""Plain-text reports: cluster records, decile summary and circle-difference
scores. Floats are written with ``repr`` so files round-trip exactly."""
from __future__ import annotations

from .area import Cluster, RankedCluster, rank_clusters
from .exceptions import MalformedRecordError

CLUSTER_HEADER = "scan_id\tcluster_index\tcores\tmembers\twallet\tam\trank\tdecile"
DECILE_HEADER = "decile\tclusters\tmin_am\tmax_am"
CIRCLE_HEADER = "scan_id\timpurity_id\tcircle_diff"


def _ids(values) -> str:
    return ",".join(str(int(v)) for v in values)


def _write(path, lines) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_cluster_report(rows, path) -> None:
    """``rows`` holds RankedCluster objects, or ``(scan_id, index, cluster)``
    triples for a report that has not been ranked yet (rank shown as ``-``).

    Ranked rows are written most anomalous first.
    """
    lines = [CLUSTER_HEADER]
    rows = list(rows)
    if rows and isinstance(rows[0], RankedCluster):
        rows = sorted(rows, key=lambda r: -r.global_rank)
    for row in rows:
        if isinstance(row, RankedCluster):
            sid, idx, c, rank, dec = row.scan_id, row.index, row.cluster, str(row.global_rank), str(row.decile)
        else:
            (sid, idx, c), rank, dec = row, "-", "-"
        am = "-" if c.am is None else repr(float(c.am))
        lines.append("\t".join([sid, str(idx), _ids(c.cores), _ids(c.members),
                                repr(float(c.wallet)), am, rank, dec]))
    _write(path, lines)


def read_cluster_report(path) -> list[tuple[str, int, Cluster]]:
    """Entries of a cluster report as ``(scan_id, index, cluster)`` triples,
    in file order. Rank columns are ignored."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CLUSTER_HEADER:
        raise MalformedRecordError(f"{path}: missing cluster report header")
    out = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split("\t")
        if len(parts) != 8:
            raise MalformedRecordError(f"{path}:{lineno}: expected 8 fields, got {len(parts)}")
        try:
            cores = [int(v) for v in parts[2].split(",") if v]
            members = [int(v) for v in parts[3].split(",") if v]
            am = None if parts[5] == "-" else float(parts[5])
            out.append((parts[0], int(parts[1]), Cluster(cores, members, float(parts[4]), am)))
        except ValueError as exc:
            raise MalformedRecordError(f"{path}:{lineno}: {exc}") from exc
    return out


def decile_summary(ranked: list[RankedCluster]) -> list[tuple[int, int, float, float]]:
    """``(decile, count, min_am, max_am)`` for every non-empty decile."""
    by: dict[int, list[float]] = {}
    for r in ranked:
        by.setdefault(r.decile, []).append(r.am)
    return [(d, len(v), min(v), max(v)) for d, v in sorted(by.items())]


def write_decile_summary(ranked: list[RankedCluster], path) -> None:
    lines = [DECILE_HEADER]
    lines.extend(f"{d}\t{n}\t{lo!r}\t{hi!r}" for d, n, lo, hi in decile_summary(ranked))
    _write(path, lines)


def write_circle_scores(per_scan, path) -> None:
    """``per_scan`` maps scan id to its circle-difference vector."""
    lines = [CIRCLE_HEADER]
    for sid, values in per_scan.items():
        lines.extend(f"{sid}\t{i}\t{float(v):.6f}" for i, v in enumerate(values))
    _write(path, lines)


def rank_report(entries, report_path, summary_path) -> list[RankedCluster]:
    ranked = rank_clusters(entries)
    write_cluster_report(ranked, report_path)
    write_decile_summary(ranked, summary_path)
    return ranked
