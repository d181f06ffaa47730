"""Next-term grade prediction from term-stamped student-course records.

Core model: latent-factor reconstruction plus a learned non-negative
course-to-course influence matrix with exponential time decay, fitted by
an alternating scheme with low-rank and sparsity penalties. Baselines
(biased MF, MF0, NMF), evaluation metrics, a synthetic-data generator,
and influence-graph export round out the toolkit. See the ``gradecast``
CLI for the end-to-end pipeline.
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .baselines import (
    BaselineModel,
    TrainConfig,
    load_baseline,
    predict_baseline,
    predict_records,
    save_baseline,
    train_baseline,
)
from .errors import DivergenceError, GradecastError, ParseError
from .influence import (
    InfluenceEdge,
    export_dot,
    export_graph,
    export_json,
    parse_edges_json,
    top_influences,
)
from .matrix import SparseGradeMatrix, cumulative_matrix, term_matrix
from .metrics import (
    MetricsReport,
    PredictionBatch,
    PredictionRow,
    batch_from_csv,
    batch_to_csv,
    format_table,
    mae,
    report,
    rmse,
    tick_accuracy,
)
from .prox import shrink_singular_values, soft_threshold
from .records import (
    GradeRecord,
    RecordSet,
    parse_records,
    serialize_records,
    split_by_term,
)
from .scale import LetterScale
from .solver import (
    AdmmSolver,
    AdmmState,
    HistoryView,
    MFTCIHyper,
    MFTCIModel,
    build_history_view,
    export_trace,
    fit,
    influence_delta,
    load_model,
    predict_grade,
    predict_pairs,
    predict_term,
    residual_target,
    save_model,
)
from .synthetic import GroundTruth, SyntheticConfig, generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "AdmmSolver",
    "AdmmState",
    "BaselineModel",
    "DivergenceError",
    "GradecastError",
    "GradeRecord",
    "GroundTruth",
    "HistoryView",
    "InfluenceEdge",
    "KERNEL_BACKEND",
    "LetterScale",
    "MFTCIHyper",
    "MFTCIModel",
    "MetricsReport",
    "ParseError",
    "PredictionBatch",
    "PredictionRow",
    "RecordSet",
    "SparseGradeMatrix",
    "SyntheticConfig",
    "TrainConfig",
    "batch_from_csv",
    "batch_to_csv",
    "build_history_view",
    "cumulative_matrix",
    "export_dot",
    "export_graph",
    "export_json",
    "export_trace",
    "fit",
    "format_table",
    "generate_synthetic",
    "influence_delta",
    "load_baseline",
    "load_model",
    "mae",
    "parse_edges_json",
    "parse_records",
    "predict_baseline",
    "predict_grade",
    "predict_pairs",
    "predict_records",
    "predict_term",
    "report",
    "residual_target",
    "rmse",
    "save_baseline",
    "save_model",
    "serialize_records",
    "shrink_singular_values",
    "soft_threshold",
    "split_by_term",
    "term_matrix",
    "tick_accuracy",
    "top_influences",
    "train_baseline",
]
