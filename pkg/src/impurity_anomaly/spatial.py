"""Weighted k-th nearest neighbour spatial anomaly scores.

An impurity is spatially anomalous when it is both far from and large
relative to its neighbours. The weighted distance from ``i`` to ``o`` is
``(area_i / area_o) ** area_exponent * rect_distance(i, o)``; the raw score
of ``i`` is ``area_i * l_k ** distance_exponent`` where ``l_k`` is the k-th
smallest weighted distance from ``i``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_features
from .exceptions import InvalidInputError
from .geometry import Impurity, pairwise_rect_distances, rect_distance
from .scores import ScoreSet, min_max_normalize

# libm pow, elementwise: numpy's vectorized pow rounds differently on some
# inputs and scores must not depend on the SIMD path taken.
_pow = np.frompyfunc(math.pow, 2, 1)


@dataclass(frozen=True)
class SpatialParams:
    k: int = 50
    area_exponent: float = 4.0
    distance_exponent: float = 2.0

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise InvalidInputError(f"k must be a positive integer, got {self.k}")
        if not (math.isfinite(self.area_exponent) and math.isfinite(self.distance_exponent)):
            raise InvalidInputError("spatial exponents must be finite")


def weighted_dist(i: Impurity, o: Impurity, area_exponent: float = 4.0) -> float:
    if o.area <= 0:
        raise InvalidInputError(f"impurity {o.id} has zero area")
    return math.pow(i.area / o.area, area_exponent) * rect_distance(i.rect, o.rect)


def weighted_distance_matrix(X: np.ndarray, area_exponent: float) -> np.ndarray:
    """Row ``i`` holds the weighted distances from impurity ``i``; the
    diagonal is ``inf`` so an impurity is never its own neighbour."""
    dist = pairwise_rect_distances(X[:, :4])
    areas = X[:, 4]
    ratio = areas[:, None] / areas[None, :]
    weighted = _pow(ratio, float(area_exponent)).astype(np.float64) * dist
    np.fill_diagonal(weighted, np.inf)
    return weighted


def effective_k(k: int, n: int) -> int:
    if n < 2:
        raise InvalidInputError(f"spatial scoring needs at least 2 impurities, got {n}")
    if k > n - 1:
        warnings.warn(f"k={k} exceeds n-1={n - 1}; using k={n - 1}", stacklevel=3)
        return n - 1
    return k


def kth_neighbours(weighted: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Value and id of each row's k-th smallest entry (1-indexed). Ties are
    broken by neighbour id through a stable sort."""
    order = np.argsort(weighted, axis=1, kind="stable")
    idx = order[:, k - 1]
    return weighted[np.arange(len(weighted)), idx], idx


def raw_spatial_scores(X: np.ndarray, params: SpatialParams) -> tuple[np.ndarray, np.ndarray]:
    """Un-normalized scores and the k-th neighbour ids for a feature matrix."""
    k = effective_k(params.k, X.shape[0])
    weighted = weighted_distance_matrix(X, params.area_exponent)
    lk, idx = kth_neighbours(weighted, k)
    raw = X[:, 4] * _pow(lk, float(params.distance_exponent)).astype(np.float64)
    return raw, idx


def spatial_scores(scan, params: SpatialParams = SpatialParams()) -> ScoreSet:
    if len(scan) < 2:
        raise InvalidInputError(
            f"scan {scan.scan_id}: spatial scoring needs at least 2 impurities, got {len(scan)}"
        )
    raw, _ = raw_spatial_scores(scan.feature_matrix(), params)
    return ScoreSet(scan.scan_id, spatial=min_max_normalize(raw), raw={"spatial": raw})


class WeightedKthNN(BaseEstimator):
    """Estimator form of the spatial scorer.

    Scoring is transductive: ``fit`` scores the impurities it is given, so
    results are read from ``scores_`` (or returned by ``fit_transform``).

    Parameters
    ----------
    k : int, default=50
        Neighbour rank; clamped to ``n - 1`` on small inputs.
    area_exponent : float, default=4.0
        Exponent of the area ratio in the weighted distance.
    distance_exponent : float, default=2.0
        Exponent applied to the k-th weighted distance.
    normalize : bool, default=True
        Min-max normalize ``scores_``. ``raw_scores_`` is always kept.

    Attributes
    ----------
    raw_scores_ : ndarray of shape (n,)
    scores_ : ndarray of shape (n,)
    kth_neighbor_ : ndarray of shape (n,)
        Index of the neighbour that realised each k-th distance.
    k_ : int
        The rank actually used after clamping.
    """

    def __init__(self, k=50, area_exponent=4.0, distance_exponent=2.0, normalize=True):
        self.k = k
        self.area_exponent = area_exponent
        self.distance_exponent = distance_exponent
        self.normalize = normalize

    def fit(self, X, y=None):
        X = check_features(X, min_samples=2)
        params = SpatialParams(self.k, self.area_exponent, self.distance_exponent)
        self.raw_scores_, self.kth_neighbor_ = raw_spatial_scores(X, params)
        self.k_ = min(self.k, X.shape[0] - 1)
        self.scores_ = min_max_normalize(self.raw_scores_) if self.normalize else self.raw_scores_.copy()
        return self

    def fit_transform(self, X, y=None):
        """Scores as a column, shape ``(n, 1)``."""
        return self.fit(X).scores_[:, None]

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self)
        return np.array(["spatial_score"], dtype=object)
