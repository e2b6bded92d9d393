"""Pipeline stages: corpus handling, augmentation, translation, model, training, evaluation."""

from .dataset import (
    load_corpus,
    save_corpus,
    parse_corpus,
    build_answer_vocab,
    paraphrase_groups,
    filter_questions,
    corpus_summary,
    make_batches,
    BatchSampler,
    ImageStore,
    SampleBatch
)
from .augmentation import (
    normalize_question,
    is_duplicate,
    back_translate,
    augment_corpus,
    augment_corpus_async,
    drop_reports,
    write_drop_report
)
from .mt_clients import (
    Translator,
    MockTranslator,
    HttpTranslator,
    CachedTranslator,
    TranslationCache,
    mock_translate,
    http_translate,
    cached_translate,
    build_translator
)
from .model import (
    TextVocab,
    RSVQAModel,
    Checkpoint,
    build_text_vocab,
    build_model,
    tokenize,
    encode_image,
    encode_question,
    fuse,
    classify,
    forward
)
from .training import (
    TripletFeatures,
    TripletLoss,
    TotalLoss,
    LossBreakdown,
    TrainHistory,
    build_triplet,
    triplet_loss,
    total_loss,
    train,
    load_config,
    dump_config
)
from .evaluation import (
    score,
    evaluate_model,
    run_setting_matrix,
    run_pivot_breakdown,
    save_report,
    load_report,
    render_table,
    plot_report
)
from .synthbench import (
    SynthResult,
    generate,
    rule_paraphrase,
    recount
)

__all__ = [
    # Corpus
    "load_corpus",
    "save_corpus",
    "parse_corpus",
    "build_answer_vocab",
    "paraphrase_groups",
    "filter_questions",
    "corpus_summary",
    "make_batches",
    "BatchSampler",
    "ImageStore",
    "SampleBatch",
    # Augmentation
    "normalize_question",
    "is_duplicate",
    "back_translate",
    "augment_corpus",
    "augment_corpus_async",
    "drop_reports",
    "write_drop_report",
    # Translators
    "Translator",
    "MockTranslator",
    "HttpTranslator",
    "CachedTranslator",
    "TranslationCache",
    "mock_translate",
    "http_translate",
    "cached_translate",
    "build_translator",
    # Model
    "TextVocab",
    "RSVQAModel",
    "Checkpoint",
    "build_text_vocab",
    "build_model",
    "tokenize",
    "encode_image",
    "encode_question",
    "fuse",
    "classify",
    "forward",
    # Training
    "TripletFeatures",
    "TripletLoss",
    "TotalLoss",
    "LossBreakdown",
    "TrainHistory",
    "build_triplet",
    "triplet_loss",
    "total_loss",
    "train",
    "load_config",
    "dump_config",
    # Evaluation
    "score",
    "evaluate_model",
    "run_setting_matrix",
    "run_pivot_breakdown",
    "save_report",
    "load_report",
    "render_table",
    "plot_report",
    # Synthetic benchmark
    "SynthResult",
    "generate",
    "rule_paraphrase",
    "recount"
]
