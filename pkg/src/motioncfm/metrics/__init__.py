from .distances import (
    diversity,
    frechet_distance,
    gaussian_frechet,
    mm_dist,
    mmodality,
    r_precision,
)
from .embedders import (
    ContrastiveEmbedder,
    TemporalStatsEmbedder,
    make_embedder,
    temporal_stats,
)
from .evaluate import MetricReport, MetricSummary, evaluate_motions
from .fidj import (
    FidjResult,
    MethodPoint,
    OutlierRule,
    mad_outliers,
    mahalanobis,
    mahalanobis_fidj,
    mahalanobis_outliers,
    robust_zscores,
    write_fidj_csv,
)
from .jitter import (
    JitterOrder,
    dataset_jitter,
    jitter,
    jitter_positions,
    jitter_scale,
    motion_range,
)

__all__ = [
    "ContrastiveEmbedder", "FidjResult", "JitterOrder", "MethodPoint", "MetricReport",
    "MetricSummary", "OutlierRule", "TemporalStatsEmbedder", "dataset_jitter", "diversity",
    "evaluate_motions", "frechet_distance", "gaussian_frechet", "jitter", "jitter_positions",
    "jitter_scale", "mad_outliers", "mahalanobis", "mahalanobis_fidj", "mahalanobis_outliers",
    "make_embedder", "mm_dist", "mmodality", "motion_range", "r_precision", "robust_zscores", "temporal_stats",
    "write_fidj_csv",
]
