"""Shape-aware neighborhood weights, entropy classification, and normal
filtering for oriented point sets."""

__version__ = "0.1.0"

from .denoise import (
    FilterConfig,
    NoiseSpec,
    add_normal_noise,
    denoise_report,
    filter_normals,
    mse,
    reestimate_normals,
)
from .features import (
    classify,
    covariance,
    degeneracy_threshold,
    eigenvalues_sym3,
    entropy_error,
    features_LPS,
    is_degenerate,
)
from .geometry import GeometryError, PointCloud, TriangleMesh, compute_vertex_normals, dedup_points
from .io import ParseError, load_cloud, load_mesh, save_cloud, save_mesh
from .knn import NeighborIndex, NeighborList, build, mean_knn_distance
from .optimizer import (
    ParameterGrid,
    PointOptimum,
    default_grid,
    evaluate_point,
    fixed_pair_errors,
    optimize_cloud,
    optimize_point,
)
from .stats import (
    LocalABRow,
    SummaryStats,
    ab_histogram,
    k_histogram,
    k_sd_distribution,
    local_ab_classification,
    summary_report,
    summary_stats,
)
from .synthetic import cube_mesh, generate_synthetic
from .weights import SigmoidParams, WeightMap, neighborhood_weights, normal_angle, sigmoid_cos

__all__ = [
    "FilterConfig",
    "GeometryError",
    "LocalABRow",
    "NeighborIndex",
    "NeighborList",
    "NoiseSpec",
    "ParameterGrid",
    "ParseError",
    "PointCloud",
    "PointOptimum",
    "SigmoidParams",
    "SummaryStats",
    "TriangleMesh",
    "WeightMap",
    "ab_histogram",
    "add_normal_noise",
    "build",
    "classify",
    "compute_vertex_normals",
    "covariance",
    "cube_mesh",
    "dedup_points",
    "default_grid",
    "degeneracy_threshold",
    "denoise_report",
    "eigenvalues_sym3",
    "entropy_error",
    "evaluate_point",
    "features_LPS",
    "filter_normals",
    "fixed_pair_errors",
    "generate_synthetic",
    "is_degenerate",
    "k_histogram",
    "k_sd_distribution",
    "load_cloud",
    "load_mesh",
    "local_ab_classification",
    "mean_knn_distance",
    "mse",
    "neighborhood_weights",
    "normal_angle",
    "optimize_cloud",
    "optimize_point",
    "reestimate_normals",
    "save_cloud",
    "save_mesh",
    "sigmoid_cos",
    "summary_report",
    "summary_stats",
]
