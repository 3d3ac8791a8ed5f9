"""Anomaly scoring for labeled impurities in metallographic scans."""
from .exceptions import (
    DecodeError,
    ImpurityAnomalyError,
    InvalidInputError,
    MalformedRecordError,
    TrainingError,
    VersionMismatchError,
)
from .geometry import (
    BoundingRect,
    EnclosingCircle,
    Impurity,
    rect_center,
    rect_diagonal,
    rect_distance,
    smallest_enclosing_circle,
)
from .ingestion import (
    MaskImage,
    Scan,
    extract_impurities,
    load_impurities,
    load_mask,
    normalize_shape_image,
    persist_impurities,
)
from .scores import ScoreSet, combined_scores, min_max_normalize
from .spatial import SpatialParams, WeightedKthNN, spatial_scores, weighted_dist
from .shape import (
    PostprocessParams,
    ShapeAnomalyDetector,
    ShapeModel,
    ShapeTrainConfig,
    circle_diff_score,
    postprocess,
    reconstruct,
    select_training_sets,
    shape_scores,
    train_shape_model,
)
from .area import (
    Cluster,
    ClusteringError,
    MarketClustering,
    PriceParams,
    RankedCluster,
    area_measure,
    cluster_diameter,
    init_clusters,
    market_clustering,
    price,
    rank_clusters,
)
from .config import PipelineConfig, load_config
from .pipeline import PipelineError, run_pipeline
from .render import colormap, render_clusters, render_overlay

__version__ = "0.1.0"
