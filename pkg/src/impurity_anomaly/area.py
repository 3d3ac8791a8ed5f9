"""Area anomaly: auction-style market clustering of scored impurities, the
cluster area measure and cross-scan ranking."""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin

from ._validation import check_features, check_unit_scores
from .exceptions import ImpurityAnomalyError, InvalidInputError
from .geometry import pairwise_rect_distances, rect_distance

DISTANCE_NORMALIZERS = ("image_diagonal", "none")
CONVERGENCE_MODES = ("literal", "strict")


class ClusteringError(ImpurityAnomalyError):
    """Market clustering did not converge within its pass budget."""


@dataclass(frozen=True)
class PriceParams:
    c1: float = 1.7
    c2_1: float = 0.95
    c2_2: float = 0.95
    c2_3: float = 0.95
    c2_4: float = 0.95
    c3_1: float = 0.5
    c3_2: float = 0.5
    c4: float = 1.6
    c5_1: float = 0.05
    c5_2: float = 0.05
    c6: float = 2.5
    c7: float = 8.0
    distance_normalizer: str = "image_diagonal"
    wallet_scale: float = 1.0

    def __post_init__(self):
        values = [getattr(self, n) for n in self.__dataclass_fields__ if n != "distance_normalizer"]
        if not all(math.isfinite(v) for v in values):
            raise InvalidInputError("price parameters must be finite")
        for name in ("c2_1", "c2_2", "c2_3", "c2_4"):
            if not 0 < getattr(self, name) <= 1:
                raise InvalidInputError(f"{name} must lie in (0, 1]")
        if self.distance_normalizer not in DISTANCE_NORMALIZERS:
            raise InvalidInputError(f"distance_normalizer must be one of {DISTANCE_NORMALIZERS}")
        if self.wallet_scale < 0:
            raise InvalidInputError("wallet_scale must be non-negative")

    def normalizer(self, image_diagonal: Optional[float]) -> float:
        if self.distance_normalizer == "none":
            return 1.0
        if not image_diagonal or image_diagonal <= 0:
            raise InvalidInputError("image_diagonal normalization needs a positive image diagonal")
        return float(image_diagonal)


@dataclass
class Cluster:
    cores: list[int]
    members: list[int]
    wallet: float
    am: Optional[float] = None

    @property
    def key(self) -> int:
        return min(self.cores)


# -- price -------------------------------------------------------------------

def price_terms(s_i: float, s_o: float, distance: float, o_is_core: bool,
                params: PriceParams = PriceParams()) -> float:
    """Price of buying ``o`` from inside a cluster holding ``i``.

    ``distance`` is the already-normalized rectangle distance. Cheap when
    the two impurities are close and anomalous; buying another cluster's
    core gets an extra discount times a penalty on score difference.
    """
    d = math.exp(math.sqrt(distance)) ** params.c1
    s = (1.0 - (s_i * params.c2_1) ** params.c3_1 * (s_o * params.c2_2) ** params.c3_2) ** params.c4
    price = d * s
    if o_is_core:
        dis = (1.0 - (s_i * params.c2_3) ** params.c5_1 * (s_o * params.c2_4) ** params.c5_2) ** params.c6
        pen = (2.0 - abs(s_i - s_o)) ** params.c7
        price = price * dis * pen
    return price


def price(i: int, o: int, scan, scores, clusters, params: PriceParams = PriceParams()) -> float:
    if i == o:
        raise InvalidInputError("price needs two distinct impurities")
    s = np.asarray(scores, dtype=np.float64)
    dist = rect_distance(scan.impurities[i].rect, scan.impurities[o].rect)
    dist /= params.normalizer(scan.diagonal)
    is_core = any(o in c.cores for c in clusters)
    return price_terms(float(s[i]), float(s[o]), dist, is_core, params)


def price_matrices(rects: np.ndarray, scores: np.ndarray, params: PriceParams,
                   normalizer: float, n_jobs: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """``(plain, core)`` matrices: entry ``[i, o]`` is the price of ``o``
    when it is an ordinary impurity, respectively another cluster's core.

    Rows are computed in chunks; ``n_jobs`` only changes the scheduling,
    never the values.
    """
    n = len(scores)
    dist = pairwise_rect_distances(rects) / normalizer
    si = scores[:, None]
    so = scores[None, :]

    def rows(lo, hi):
        d = np.exp(np.sqrt(dist[lo:hi])) ** params.c1
        a = si[lo:hi]
        s = (1.0 - (a * params.c2_1) ** params.c3_1 * (so * params.c2_2) ** params.c3_2) ** params.c4
        plain = d * s
        dis = (1.0 - (a * params.c2_3) ** params.c5_1 * (so * params.c2_4) ** params.c5_2) ** params.c6
        pen = (2.0 - np.abs(a - so)) ** params.c7
        return plain, plain * dis * pen

    chunk = max(1, math.ceil(n / max(1, n_jobs)))
    bounds = [(lo, min(n, lo + chunk)) for lo in range(0, n, chunk)]
    if n_jobs > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(lambda b: rows(*b), bounds))
    else:
        parts = [rows(*b) for b in bounds]
    if not parts:
        return np.empty((0, 0)), np.empty((0, 0))
    return np.vstack([p[0] for p in parts]), np.vstack([p[1] for p in parts])


# -- clustering --------------------------------------------------------------

def init_clusters(k: int, scores, wallet_scale: float = 1.0) -> list[Cluster]:
    """One singleton cluster per each of the ``k`` highest scores (ties go
    to the lower id); the wallet is ``wallet_scale * score``."""
    s = np.asarray(scores, dtype=np.float64)
    if k <= 0:
        raise InvalidInputError(f"number of clusters must be positive, got {k}")
    if s.size == 0:
        raise InvalidInputError("no scores to cluster")
    if k > s.size:
        warnings.warn(f"k={k} exceeds {s.size} impurities; using k={s.size}", stacklevel=2)
        k = s.size
    order = sorted(range(s.size), key=lambda i: (-s[i], i))[:k]
    return [Cluster([i], [i], wallet_scale * float(s[i])) for i in order]


@dataclass
class _State:
    clusters: list[Cluster]
    owner: dict = field(default_factory=dict)   # impurity -> cluster
    core_of: dict = field(default_factory=dict)  # core impurity -> cluster
    ledger: dict = field(default_factory=dict)   # impurity -> highest bid


def market_clustering(scan, scores, k: int = 10, params: PriceParams = PriceParams(), *,
                      convergence: str = "literal", max_passes: int = 10_000,
                      trace: Optional[list] = None, n_jobs: int = 1) -> list[Cluster]:
    """Grow anomalous areas by letting clusters buy neighbouring impurities.

    Clusters start as singletons on the ``k`` most anomalous impurities. On
    each pass they act in order of decreasing wallet (ties: lowest core id).
    A cluster looks at its cheapest (inside, outside) couple, skipping
    impurities on which an equal or richer bid was already placed. Reaching
    another cluster's core merges the two (wallets summed) and restarts the
    pass; otherwise the impurity is bought if the wallet covers the price.

    ``convergence="literal"`` stops after a pass without merges;
    ``"strict"`` also requires a pass without purchases. ``trace``, when
    given, receives one dict per decision.
    """
    if convergence not in CONVERGENCE_MODES:
        raise InvalidInputError(f"convergence must be one of {CONVERGENCE_MODES}")
    s = check_unit_scores(scores, len(scan), "combined scores")
    X = scan.feature_matrix()
    return _cluster(X[:, :4], s, k, params, params.normalizer(scan.diagonal),
                    convergence, max_passes, trace, n_jobs)


def _cluster(rects, s, k, params, normalizer, convergence, max_passes, trace, n_jobs):
    plain, core = price_matrices(rects, s, params, normalizer, n_jobs)
    state = _State(init_clusters(k, s, params.wallet_scale))
    for c in state.clusters:
        state.owner[c.cores[0]] = c
        state.core_of[c.cores[0]] = c
    n = len(s)

    for pass_no in range(1, max_passes + 1):
        state.clusters.sort(key=lambda c: (-c.wallet, c.key))
        merged = purchased = False
        for c in state.clusters:
            outcome = _turn(c, state, plain, core, n, pass_no, trace)
            if outcome == "merge":
                merged = True
                break
            purchased |= outcome == "purchase"
        if merged:
            continue
        if convergence == "literal" or not purchased:
            break
    else:
        raise ClusteringError(f"market clustering did not converge within {max_passes} passes")
    for c in state.clusters:
        assert c.wallet >= 0.0
    return state.clusters


def _turn(c: Cluster, state: _State, plain, core, n, pass_no, trace) -> str:
    actor = list(c.cores)  # traced as the cluster was when its turn began
    inside = np.zeros(n, dtype=bool)
    inside[c.members] = True
    rows = np.flatnonzero(inside)
    cols = np.flatnonzero(~inside)
    if cols.size == 0:
        _log(trace, pass_no, actor, "exhausted")
        return "idle"
    is_core = np.array([o in state.core_of for o in cols.tolist()], dtype=bool)
    prices = np.where(is_core[None, :], core[np.ix_(rows, cols)], plain[np.ix_(rows, cols)])
    ii = np.repeat(rows, cols.size)
    oo = np.tile(cols, rows.size)
    flat = prices.ravel()
    for idx in np.lexsort((oo, ii, flat)):
        i, o, p = int(ii[idx]), int(oo[idx]), float(flat[idx])
        bid = state.ledger.get(o)
        if bid is not None and c.wallet <= bid:
            _log(trace, pass_no, actor, "outbid", i=i, o=o, price=p, bid=bid)
            continue
        if o in state.core_of:
            other = state.core_of[o]
            before = c.wallet
            state.ledger[o] = c.wallet
            c.wallet += other.wallet
            c.cores = c.cores + other.cores
            c.members = c.members + other.members
            state.clusters[:] = [x for x in state.clusters if x is not other]
            for m in other.members:
                state.owner[m] = c
            for m in other.cores:
                state.core_of[m] = c
            _log(trace, pass_no, actor, "merge", i=i, o=o, price=p, wallet_before=before,
                 wallet_after=c.wallet, absorbed=list(other.cores))
            return "merge"
        if c.wallet >= p:
            before = c.wallet
            state.ledger[o] = c.wallet
            c.wallet -= p
            c.members.append(o)
            previous = state.owner.get(o)
            if previous is not None:
                previous.members.remove(o)
            state.owner[o] = c
            _log(trace, pass_no, actor, "purchase", i=i, o=o, price=p, wallet_before=before,
                 wallet_after=c.wallet, seller=None if previous is None else list(previous.cores))
            return "purchase"
        _log(trace, pass_no, actor, "cannot_afford", i=i, o=o, price=p, wallet_before=c.wallet)
        return "idle"
    _log(trace, pass_no, actor, "all_outbid")
    return "idle"


def _log(trace, pass_no, actor, event, **kw):
    if trace is not None:
        trace.append({"pass": pass_no, "cluster": actor, "event": event, **kw})


# -- area measure and ranking ------------------------------------------------

def cluster_diameter(c: Cluster, scan) -> float:
    """Largest distance between member rectangle centres, and at least the
    largest member rectangle diagonal (so singletons have a positive size)."""
    if not c.members:
        raise InvalidInputError("cluster has no members")
    X = scan.feature_matrix()[c.members]
    return _diameter(X)


def _diameter(X: np.ndarray) -> float:
    centers = np.column_stack(((X[:, 0] + X[:, 2]) / 2.0, (X[:, 1] + X[:, 3]) / 2.0))
    diagonals = np.hypot(X[:, 2] - X[:, 0], X[:, 3] - X[:, 1])
    diff = centers[:, None, :] - centers[None, :, :]
    spread = float(np.sqrt((diff ** 2).sum(axis=2)).max())
    return max(spread, float(diagonals.max()))


def area_measure(c: Cluster, scores, scan, areas=None) -> float:
    """``sum(score * area**2) * diameter * member count`` over the cluster.

    ``areas`` overrides the pixel areas (used for per-scan area scaling).
    """
    s = np.asarray(scores, dtype=np.float64)
    a = scan.feature_matrix()[:, 4] if areas is None else np.asarray(areas, dtype=np.float64)
    m = c.members
    return float(np.sum(s[m] * a[m] ** 2)) * cluster_diameter(c, scan) * len(m)


@dataclass
class RankedCluster:
    scan_id: str
    index: int
    cluster: Cluster
    am: float
    global_rank: int
    decile: int


def decile(rank: int, total: int) -> int:
    """Decile of an ascending rank; 1 holds the most anomalous tenth.

    ``floor(10 * (total - rank) / total) + 1``: agrees with
    ``ceil(10 * (total - rank + 1) / total)`` away from exact decile
    boundaries and keeps the top rank in decile 1 for any total.
    """
    if not 1 <= rank <= total:
        raise InvalidInputError(f"rank {rank} outside 1..{total}")
    return (10 * (total - rank)) // total + 1


def rank_clusters(entries) -> list[RankedCluster]:
    """Rank ``(scan_id, cluster_index, cluster)`` triples globally by ``am``
    ascending, so rank N is the most anomalous. Ties go by scan id, then by
    lowest core id."""
    entries = list(entries)
    if not entries:
        raise InvalidInputError("no clusters to rank")
    for _, _, c in entries:
        if c.am is None:
            raise InvalidInputError("clusters must carry an area measure before ranking")
    ordered = sorted(entries, key=lambda e: (e[2].am, e[0], e[2].key))
    total = len(ordered)
    return [RankedCluster(sid, idx, c, c.am, r, decile(r, total))
            for r, (sid, idx, c) in enumerate(ordered, start=1)]


class MarketClustering(ClusterMixin, BaseEstimator):
    """Estimator wrapper around :func:`market_clustering`.

    ``fit(X, scores)`` takes the ``(n, 5)`` impurity feature matrix and the
    combined anomaly scores. Unclustered impurities get label ``-1``.

    Attributes
    ----------
    clusters_ : list of Cluster, ordered by decreasing area measure
    labels_ : ndarray of shape (n,)
    area_scores_ : ndarray of the clusters' area measures
    trace_ : list of decision dicts
    """

    def __init__(self, n_clusters=10, price_params=None, convergence="literal",
                 max_passes=10_000, image_diagonal=None, n_jobs=1):
        self.n_clusters = n_clusters
        self.price_params = price_params
        self.convergence = convergence
        self.max_passes = max_passes
        self.image_diagonal = image_diagonal
        self.n_jobs = n_jobs

    def fit(self, X, scores=None, y=None):
        X = check_features(X)
        if scores is None:
            raise InvalidInputError("MarketClustering.fit needs the combined scores")
        s = check_unit_scores(scores, X.shape[0], "combined scores")
        params = self.price_params or PriceParams()
        if self.convergence not in CONVERGENCE_MODES:
            raise InvalidInputError(f"convergence must be one of {CONVERGENCE_MODES}")
        diag = self.image_diagonal
        if diag is None and params.distance_normalizer == "image_diagonal":
            diag = math.hypot(X[:, 2].max() + 1, X[:, 3].max() + 1)
        self.trace_ = []
        clusters = _cluster(X[:, :4], s, self.n_clusters, params, params.normalizer(diag),
                            self.convergence, self.max_passes, self.trace_, self.n_jobs)
        for c in clusters:
            m = c.members
            c.am = float(np.sum(s[m] * X[m, 4] ** 2)) * _diameter(X[m]) * len(m)
        clusters.sort(key=lambda c: (-c.am, c.key))
        self.clusters_ = clusters
        self.area_scores_ = np.array([c.am for c in clusters])
        self.labels_ = np.full(X.shape[0], -1, dtype=int)
        for label, c in enumerate(clusters):
            self.labels_[c.members] = label
        return self

    def fit_predict(self, X, scores=None, y=None):
        return self.fit(X, scores).labels_
