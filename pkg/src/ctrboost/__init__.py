"""CTR constant baselines vs gradient boosted trees for engagement prediction.

Library + CLI covering delimited-log ingestion, PRAUC/RCE metrics, per-class
CTR constants, 59-feature extraction with precomputed entity profiles, a
histogram GBDT trained with RCE early stopping, and a synthetic-data
experiment harness with rank-sum leaderboard scoring.
"""

from ctrboost.ingest import (
    EngagementClass,
    FormatConfig,
    InteractionRecord,
    LabelVector,
    ParseReport,
    labels_of,
    parse_dataset,
    parse_file,
    serialize_record,
)
from ctrboost.metrics import MetricReport, cross_entropy, metric_report, prauc, rce
from ctrboost.ctr import CtrTable, compute_ctr, predict_constant, tune_constants
from ctrboost.features import (
    FEATURE_NAMES,
    FEATURE_VERSION,
    ProfileTables,
    VocabularyConfig,
    build_profiles,
    engagement_ratio,
    extract_features,
    extract_matrix,
    word_search,
)
from ctrboost.gbdt import GbdtModel, TrainParams, logistic_grad_hess, predict, train
from ctrboost.synth import GenConfig, generate
from ctrboost.harness import (
    chunk_eval,
    dataset_stats,
    leaderboard,
    run_comparison,
)

__version__ = "0.1.0"
