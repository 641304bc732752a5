"""Visual place recognition: traverse matching, sequence filters, and evaluation."""

from vpr.features import (
    FeatureSet,
    FormatError,
    load_feature_set,
    load_feature_set_csv,
    pixel_descriptor,
    preprocess_image,
    save_feature_set,
    save_feature_set_csv,
)
from vpr.matching import (
    ConfusionMatrix,
    MatchHypothesis,
    best_matches,
    build_confusion_matrix,
    euclidean_distance,
    load_confusion_matrix,
    sad_distance,
    sad_offset_distance,
    save_confusion_matrix,
)
from vpr.filters import (
    FilterParams,
    FinalMatch,
    LinearFit,
    fit_sequence,
    read_final_matches,
    sequential_filter,
    spatial_continuity,
    write_final_matches,
)
from vpr.evaluation import (
    EvalReport,
    GroundTruth,
    PRPoint,
    f1_score,
    haversine_m,
    judge_match,
    precision_recall,
    render_confusion_matrix,
    sweep_phi,
)
from vpr.harness import (
    BenchReport,
    SynthConfig,
    bench_matching,
    generate_synthetic,
    oracle_pipeline,
    run_pipeline,
)

__version__ = "0.1.0"
