"""Pydantic schemas for RSVQA-Aug data validation."""

# Corpus schemas
from .corpus import (
    Split,
    QuestionType,
    Pivot,
    QuestionFilter,
    ImageRecord,
    QuestionRecord,
    VQACorpus,
    AnswerVocabulary,
    ParaphraseGroup,
    DedupPolicy,
    DropReport,
    check_integrity
)

# Configuration schemas
from .config import (
    TrainMode,
    NegativeScheme,
    Precision,
    TranslatorBackend,
    ModelDims,
    TrainConfig,
    MTConfig,
    SynthConfig
)

# Metric schemas
from .metrics import (
    Prediction,
    PredictionSet,
    TypeAccuracy,
    MetricsReport
)

__all__ = [
    # Enums
    "Split",
    "QuestionType",
    "Pivot",
    "QuestionFilter",
    "TrainMode",
    "NegativeScheme",
    "Precision",
    "TranslatorBackend",
    # Corpus models
    "ImageRecord",
    "QuestionRecord",
    "VQACorpus",
    "AnswerVocabulary",
    "ParaphraseGroup",
    "DedupPolicy",
    "DropReport",
    "check_integrity",
    # Configuration models
    "ModelDims",
    "TrainConfig",
    "MTConfig",
    "SynthConfig",
    # Metric models
    "Prediction",
    "PredictionSet",
    "TypeAccuracy",
    "MetricsReport"
]
