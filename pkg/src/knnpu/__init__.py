"""Two-step positive-unlabelled learning with Jaccard-KNN reliable negatives."""

__version__ = "0.1.0"

from .dataset import (
    DatasetStats,
    Format,
    PUDataset,
    PULabel,
    SparseBinaryMatrix,
    compute_stats,
    load_dataset,
    partition_pu,
    write_dataset,
)
from .metrics import MetricsTriple, auc_roc, f1_positive, g_mean
from .pipeline import PROTOCOL_GRID, PROTOCOL_SEEDS, CVConfig, MetricsReport, compare_methods, nested_cv, stratified_folds
from .ranking import CandidateRanking, RankConfig, rank_candidates
from .rn_select import RNParams, RNResult, knn_feature_filter, reliable_negatives
from .similarity import FeatureSubset, SimilarityMatrix, jaccard, pairwise_matrix
