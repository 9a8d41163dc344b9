"""Facial action coefficient toolkit.

Calibration and splitting of ARKit capture data, semantic supervision
generation, a strict structured-output codec, offline predictor stubs, a
contrastively trained retrieval evaluator, and the full evaluation metric
stack, all tied together by the ``faceact`` CLI.
"""

__version__ = "0.1.0"

from .actions import (
    ACTION_COUNT,
    ACTIONS,
    BLENDSHAPE_COUNT,
    DOMINANT_13,
    HEAD_MOTION_ACTIONS,
    HEAD_MOTION_COUNT,
    symmetry_pairs,
)
from .codec import (
    ParsedTarget,
    TargetSequence,
    encode_target,
    parse_prediction,
    target_schema,
    validate_coefficients,
)
from .dataset import (
    DatasetSplit,
    EmotionVector,
    RecordingSession,
    normalize_emotion,
    split_by_subject,
    subsample,
)
from .errors import (
    ConfigError,
    FaceactError,
    ParseError,
    ServiceError,
    StructuralError,
    TrainingError,
    ValidationError,
)
from .frames import (
    ActionValueSet,
    CoefficientFrame,
    NeutralCalibrator,
    calibrate,
    dominant13,
)
from .metrics import (
    cross_comparison,
    error_summary,
    mmd,
    mse,
    paired_ttest,
    pearson,
    per_coefficient_report,
    r_precision,
    r_precision_batched,
    spearman,
)
from .predictor import (
    INFERENCE_PROMPT,
    PredictionRecord,
    predict,
    stub_neutral,
    stub_noisy_oracle,
)
from .retrieval import (
    ContrastiveRetrievalEvaluator,
    TrainConfig,
    ZScoreScaler,
    infonce_loss,
    train_encoders,
    zscore_apply,
    zscore_fit,
)
from .teacher import (
    STAGE1_PROMPT,
    SemanticDescription,
    TeacherCache,
    build_stage1_prompt,
    generate_description,
    rule_based_description,
)
