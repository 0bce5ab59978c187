"""Hierarchical latent tree forests for implicit-feedback catalogues.

Learns a multi-level category hierarchy from binary co-consumption data,
then uses it for browsing exports, category-aware re-ranking of base
recommenders, and per-item recommendation explanations.
"""

from .car import (
    AllocationPlan,
    Explanation,
    RerankedList,
    allocate,
    category_counts,
    explain,
    rerank,
    rerank_all,
    write_explanations,
)
from .data import (
    BinaryMatrix,
    Event,
    InteractionLog,
    Vocabulary,
    filter_min_activity,
    load_events,
    project_items,
    read_vocab,
    temporal_split,
    to_binary_matrix,
    write_vocab,
)
from .errors import ConfigError, DataError
from .evaluation import (
    MetricRow,
    aggregate_diversity,
    dispersion,
    evaluate_lists,
    level_sweep,
    precision_at,
    recall_at,
    read_report,
    run_experiment,
    write_report,
)
from .forest import (
    FlatForest,
    LearnerConfig,
    extend_with_item,
    grow_category,
    learn_flat_forest,
    two_latent_variant,
)
from .hierarchy import (
    HierarchicalModel,
    children_of,
    export_hierarchy,
    hard_assignments,
    items_under,
    learn_hierarchy,
    link_top_level,
    load_model,
    node_id,
    parse_node_id,
    read_timing_log,
    representatives,
    save_model,
    write_timing_log,
)
from .recommenders import (
    ItemKNNRecommender,
    PopularityRecommender,
    RankedList,
    Recommender,
    UserKNNRecommender,
    WRMFRecommender,
    read_ranked_lists,
    write_ranked_lists,
)
from .similarity import (
    CandidateTracker,
    SparseSimilarity,
    closest_in_set,
    cosine_item_pairs,
    most_similar_to_set,
)
from .trees import (
    Category,
    TreeModel,
    bic,
    canonical_orientation,
    latent_posteriors,
    learn_lcm,
    log_likelihood,
    model_mi_item_latent,
    mutual_information,
    posterior_row,
    run_em,
)

__version__ = "0.1.0"

__all__ = [
    "AllocationPlan",
    "BinaryMatrix",
    "CandidateTracker",
    "Category",
    "ConfigError",
    "DataError",
    "Event",
    "Explanation",
    "FlatForest",
    "HierarchicalModel",
    "InteractionLog",
    "ItemKNNRecommender",
    "LearnerConfig",
    "MetricRow",
    "PopularityRecommender",
    "RankedList",
    "Recommender",
    "RerankedList",
    "SparseSimilarity",
    "TreeModel",
    "UserKNNRecommender",
    "Vocabulary",
    "WRMFRecommender",
    "aggregate_diversity",
    "allocate",
    "bic",
    "canonical_orientation",
    "category_counts",
    "children_of",
    "closest_in_set",
    "cosine_item_pairs",
    "dispersion",
    "evaluate_lists",
    "explain",
    "export_hierarchy",
    "extend_with_item",
    "filter_min_activity",
    "grow_category",
    "hard_assignments",
    "items_under",
    "latent_posteriors",
    "learn_flat_forest",
    "learn_hierarchy",
    "learn_lcm",
    "level_sweep",
    "link_top_level",
    "load_events",
    "load_model",
    "log_likelihood",
    "model_mi_item_latent",
    "most_similar_to_set",
    "mutual_information",
    "node_id",
    "parse_node_id",
    "posterior_row",
    "precision_at",
    "project_items",
    "read_ranked_lists",
    "read_report",
    "read_timing_log",
    "recall_at",
    "representatives",
    "rerank",
    "rerank_all",
    "run_em",
    "run_experiment",
    "save_model",
    "temporal_split",
    "to_binary_matrix",
    "two_latent_variant",
    "write_explanations",
    "write_ranked_lists",
    "write_report",
    "write_timing_log",
    "write_vocab",
]
