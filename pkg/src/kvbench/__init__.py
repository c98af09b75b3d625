"""Keystroke-dynamics verification benchmark.

Synthetic keystroke corpora, timing features, enrollment/verification
comparison protocols, baseline verifiers, and biometric metrics
(EER, FNMR@FMR, AUC, DET), wired together by a reproducible CLI.
"""

__version__ = "0.1.0"

from .corpus import (
    Corpus,
    CorpusKind,
    EvaluationKey,
    Gender,
    GeneratorProfile,
    KeystrokeEvent,
    Session,
    SubjectRecord,
    corpus_stats,
    generate_synthetic_corpus,
    parse_corpus,
    parse_key,
    serialize_corpus,
    serialize_key,
    subjects_from_key,
)
from .errors import KvbenchError, ParseError, ValidationError
from .features import (
    EventFeatures,
    FeatureSequence,
    SequenceNormalizer,
    StatVector,
    apply_normalizer,
    extract_features,
    fit_normalizer,
    fix_length,
    session_stats,
)
from .metrics import (
    CurveData,
    MetricsReport,
    OperatingPoint,
    ScoreSet,
    aggregate,
    build_report,
    compute_auc,
    compute_eer,
    det_curve,
    error_rates_at_threshold,
    fnmr_at_fmr,
    mean_per_subject_eer,
)
from .protocol import (
    Comparison,
    ComparisonLabel,
    ComparisonList,
    DemographicBinning,
    RoleAssignment,
    assign_roles,
    generate_comparison_list,
    parse_comparison_list,
    select_impostors,
    serialize_comparison_list,
    validate_comparison_list,
)
from .verifier import (
    EmbeddingModel,
    StatDistanceScorer,
    TrainConfig,
    TripletEmbedder,
    embed,
    embedding_score,
    read_score_file,
    run_comparisons,
    stat_distance_score,
    train_embedding,
    triplet_loss,
    write_score_file,
)
