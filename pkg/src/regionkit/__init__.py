"""Spatially constrained regionalization: algorithms, metrics and a benchmark harness."""

from .agglomerative import MergeTree, agglomerate, constrained_agglomerative, cut
from .datagen import LevelSpec, feature_field_moran, generate_level, generate_planted
from .local_search import azp, kmeans_baseline, maxp
from .metrics import MetricsReport, bin_national, calinski_harabasz, evaluate, normalized_sse, silhouette
from .objective import between_variability, distance, linkage_distance, minmax_normalize, within_variability
from .spatial import (
    ContiguityGraph,
    Partition,
    SpatialUnit,
    bridge_gaps,
    build_queen_contiguity,
    build_rook_contiguity,
    is_region_connected,
)
from .tree import build_mst, prune_tree, redcap, skater

__version__ = "0.1.0"
