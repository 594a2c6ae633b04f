"""Point cloud semantic segmentation through rendered views.

Point clouds are splatted into multi-modal 2D images (color, colorized
depth, normals) with per-pixel visibility resolved by mean-shift depth
clustering; a pluggable scorer rates every pixel per class, and the
scores are fused back onto the points across many views.
"""

from .camera import (
    CameraIntrinsics,
    CameraPose,
    OrbitSpec,
    ViewFilterConfig,
    plan_orbit_views,
    project_points,
    view_filter_verdict,
)
from .cloud import (
    CLASS_NAMES,
    N_CLASSES,
    PointCloud,
    read_labels_file,
    read_points_file,
    write_predictions_file,
)
from .config import PipelineConfig, parse_config, read_config_file
from .errors import (
    ConfigError,
    DataError,
    DimensionMismatchError,
    ExternalScorerError,
    ParseError,
    ScoreMapFormatError,
    ScorerExitError,
    ScorerTimeoutError,
    SplatsegError,
)
from .formats import BACKGROUND_LABEL, N_SCORE_CHANNELS
from .fusion import (
    ConfusionMatrix,
    Fallback,
    PointScores,
    accumulate_view,
    assign_labels,
    evaluate_labels,
    fuse_views,
    metrics_report,
    segment_cloud,
)
from .modalities import depth_to_jet, normals_from_depth
from .pipeline import (
    ProjectiveSegmenter,
    eval_stage,
    fuse_stage,
    render_stage,
    run_pipeline,
    score_stage,
)
from .scoring import ExternalScorer, NearestCentroidScorer, stack_features
from .splat import (
    RenderedView,
    SplatRenderer,
    cluster_scores,
    composite_pixel,
    gather_contributions,
    meanshift_depths,
)

__version__ = "0.1.0"

__all__ = [
    "BACKGROUND_LABEL",
    "CLASS_NAMES",
    "CameraIntrinsics",
    "CameraPose",
    "ConfigError",
    "ConfusionMatrix",
    "DataError",
    "DimensionMismatchError",
    "ExternalScorer",
    "ExternalScorerError",
    "Fallback",
    "N_CLASSES",
    "N_SCORE_CHANNELS",
    "NearestCentroidScorer",
    "OrbitSpec",
    "ParseError",
    "PipelineConfig",
    "PointCloud",
    "PointScores",
    "ProjectiveSegmenter",
    "RenderedView",
    "ScoreMapFormatError",
    "ScorerExitError",
    "ScorerTimeoutError",
    "SplatRenderer",
    "SplatsegError",
    "ViewFilterConfig",
    "accumulate_view",
    "assign_labels",
    "cluster_scores",
    "composite_pixel",
    "depth_to_jet",
    "eval_stage",
    "evaluate_labels",
    "fuse_stage",
    "fuse_views",
    "gather_contributions",
    "meanshift_depths",
    "metrics_report",
    "normals_from_depth",
    "parse_config",
    "plan_orbit_views",
    "project_points",
    "read_config_file",
    "read_labels_file",
    "read_points_file",
    "render_stage",
    "run_pipeline",
    "score_stage",
    "segment_cloud",
    "stack_features",
    "view_filter_verdict",
    "write_predictions_file",
]
