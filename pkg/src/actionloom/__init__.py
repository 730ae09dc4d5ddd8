"""actionloom: storyline-based review and correction of temporal action
localization results.

The package turns detected action instances into an interactive review
structure: frames of paired actions are aligned along a heaviest monotone
chain, corrections spread to unannotated frames through a truncated
quadratic objective, actions are organized into a divisive medoid
hierarchy, and each cluster renders as a storyline whose line proximity
encodes frame alignment.
"""

from .alignment import (
    AlignmentConstraints,
    AlignmentDag,
    AlignmentResult,
    KParams,
    PairwiseAligner,
    adaptive_k,
    align_neighborhood,
    align_pair,
    build_dag,
    heaviest_path,
)
from .bundle import (
    BACKGROUND,
    Action,
    CategoryMeta,
    DatasetBundle,
    GroundTruthSegment,
    VideoMeta,
    cosine_similarity,
    cosine_similarity_matrix,
    load_bundle,
    save_bundle,
)
from .clustering import (
    ActionHierarchy,
    ClusterNode,
    DivisiveHierarchy,
    KMedoids,
    RepresentativeSelector,
    RepresentativeSet,
    action_similarity,
    build_hierarchy,
    k_medoids,
    pairwise_action_distances,
    select_representatives,
    silhouette_width,
)
from .errors import (
    ActionLoomError,
    BundleError,
    ConflictingConstraintError,
    EmptyCandidatesError,
    FrameOutsideActionError,
    InfeasibleConstraintsError,
    KTooLargeError,
    SingleClusterError,
    UnknownActionError,
    UnknownClusterError,
)
from .evaluation import (
    average_precision,
    frame_accuracy,
    make_synthetic_bundle,
    map_at_iou,
    run_experiment,
    sample_annotations,
)
from .layout import (
    LayoutConfig,
    StorylineLayout,
    StorylineLayouter,
    compute_layout,
    layout_to_json,
)
from .propagation import (
    AnnotationPropagator,
    LabelMatrix,
    PropagationConfig,
    extract_segments,
    grid_search_config,
    propagate,
    propagate_over_actions,
    recommend_boundary,
)
from .session import Session, replay
from .svg import render_svg

__version__ = "0.1.0"

__all__ = [
    "ActionHierarchy",
    "Action",
    "ActionLoomError",
    "AlignmentConstraints",
    "AlignmentDag",
    "AlignmentResult",
    "AnnotationPropagator",
    "BACKGROUND",
    "BundleError",
    "CategoryMeta",
    "ClusterNode",
    "ConflictingConstraintError",
    "DatasetBundle",
    "DivisiveHierarchy",
    "EmptyCandidatesError",
    "FrameOutsideActionError",
    "GroundTruthSegment",
    "InfeasibleConstraintsError",
    "KMedoids",
    "KParams",
    "KTooLargeError",
    "LabelMatrix",
    "LayoutConfig",
    "PairwiseAligner",
    "PropagationConfig",
    "RepresentativeSelector",
    "RepresentativeSet",
    "Session",
    "SingleClusterError",
    "StorylineLayout",
    "StorylineLayouter",
    "UnknownActionError",
    "UnknownClusterError",
    "VideoMeta",
    "action_similarity",
    "adaptive_k",
    "align_neighborhood",
    "align_pair",
    "average_precision",
    "build_dag",
    "build_hierarchy",
    "compute_layout",
    "cosine_similarity",
    "cosine_similarity_matrix",
    "extract_segments",
    "frame_accuracy",
    "grid_search_config",
    "heaviest_path",
    "k_medoids",
    "layout_to_json",
    "load_bundle",
    "make_synthetic_bundle",
    "map_at_iou",
    "pairwise_action_distances",
    "propagate",
    "propagate_over_actions",
    "recommend_boundary",
    "render_svg",
    "replay",
    "run_experiment",
    "sample_annotations",
    "save_bundle",
    "select_representatives",
    "silhouette_width",
]
