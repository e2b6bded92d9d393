"""Accuracy metrics, the train/test setting matrix and report rendering."""

import json
import logging
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd
import torch
from pydantic import ValidationError

from ..schema.corpus import (
    AnswerVocabulary,
    Pivot,
    QuestionFilter,
    QuestionRecord,
    QuestionType,
    Split,
    VQACorpus,
)
from ..schema.metrics import MetricsReport, Prediction, PredictionSet, TypeAccuracy
from ..util import ConfigError, CorpusFormatError, write_json
from .dataset import ImageStore, filter_questions
from .model import Checkpoint, RSVQAModel, TextVocab, images_to_tensor, questions_to_tensor

logger = logging.getLogger(__name__)

TYPE_ORDER = (
    QuestionType.PRESENCE,
    QuestionType.COUNT,
    QuestionType.COMPARISON,
    QuestionType.RURAL_URBAN,
)
TYPE_LABELS = {
    QuestionType.PRESENCE: "Presence",
    QuestionType.COUNT: "Count",
    QuestionType.COMPARISON: "Comparison",
    QuestionType.RURAL_URBAN: "Rural/Urban",
}
TABLE_ROWS = [TYPE_LABELS[t] for t in TYPE_ORDER] + ["AA", "OA"]

ORIGINAL = "original"
AUGMENTED = "augmented"
SETTINGS = ((ORIGINAL, ORIGINAL), (ORIGINAL, AUGMENTED), (AUGMENTED, AUGMENTED))


def setting_label(trained_on: str, tested_on: str) -> str:
    return f"{trained_on}->{tested_on}"


def score(preds: PredictionSet, setting: str = "") -> MetricsReport:
    """
    Per-type accuracy, AA (unweighted mean over present types) and OA.

    Raises:
        ValueError: If the prediction set is empty
    """
    if not len(preds):
        raise ValueError("Cannot score an empty prediction set")

    counts: Dict[QuestionType, List[int]] = {}
    for p in preds.predictions:
        entry = counts.setdefault(p.type, [0, 0])
        entry[0] += int(p.correct)
        entry[1] += 1

    per_type = {
        t.value: TypeAccuracy(correct=counts[t][0], total=counts[t][1], accuracy=counts[t][0] / counts[t][1])
        for t in TYPE_ORDER
        if t in counts
    }
    accuracies = [acc.accuracy for acc in per_type.values()]
    correct = sum(acc.correct for acc in per_type.values())
    total = sum(acc.total for acc in per_type.values())
    return MetricsReport(
        setting=setting,
        per_type=per_type,
        AA=sum(accuracies) / len(accuracies),
        OA=correct / total,
    )


@torch.no_grad()
def predict_questions(
    model: RSVQAModel,
    vocab: TextVocab,
    answers: AnswerVocabulary,
    max_len: int,
    questions: Sequence[QuestionRecord],
    images: ImageStore,
    batch_size: int = 256,
) -> PredictionSet:
    """Argmax predictions of a model; gold answers outside the pool are always wrong."""
    was_training = model.training
    model.eval()
    dtype = next(model.parameters()).dtype
    pool = answers.answers
    predictions: List[Prediction] = []
    try:
        for start in range(0, len(questions), batch_size):
            chunk = questions[start : start + batch_size]
            image_batch = images_to_tensor([images.get(q.img_id) for q in chunk], dtype=dtype)
            tokens, lengths = questions_to_tensor([q.text for q in chunk], vocab, max_len)
            logits, _ = model(image_batch, tokens, lengths)
            for question, index in zip(chunk, logits.argmax(dim=1).tolist()):
                predictions.append(
                    Prediction(
                        question_id=question.id,
                        predicted=pool[index],
                        gold=question.answer,
                        type=question.type,
                    )
                )
    finally:
        model.train(was_training)

    out_of_pool = sum(1 for q in questions if q.answer not in answers)
    if out_of_pool:
        logger.warning(f"{out_of_pool} gold answers are not in the answer pool and count as wrong")
    return PredictionSet(predictions=tuple(predictions), out_of_pool=out_of_pool)


def evaluate_model(
    checkpoint: Checkpoint,
    corpus: VQACorpus,
    split: Union[Split, str] = Split.TEST,
    question_filter: Union[QuestionFilter, str] = QuestionFilter.ALL,
    pivot: Optional[Union[Pivot, str]] = None,
    images: Optional[ImageStore] = None,
    batch_size: int = 256,
) -> PredictionSet:
    """
    Run a frozen checkpoint over one split of a corpus.

    Args:
        checkpoint: Trained model and vocabularies
        corpus: Corpus to evaluate on
        split: Split to evaluate
        question_filter: originals_only, paraphrases_only or all
        pivot: Restrict to questions of one provenance
        images: Image source (defaults to files relative to the working directory)
        batch_size: Questions per forward pass

    Returns:
        Predictions ordered by question id

    Raises:
        ModelShapeError: If the corpus images do not fit the checkpoint dimensions
    """
    questions = filter_questions(corpus, split, question_filter, pivot)
    model = checkpoint.build_model()
    images = images if images is not None else ImageStore(corpus)
    logger.info(
        f"Evaluating {len(questions)} questions (split={Split(split).value}, "
        f"filter={QuestionFilter(question_filter).value}"
        + (f", pivot={Pivot(pivot).value}" if pivot is not None else "")
        + ")"
    )
    return predict_questions(
        model,
        checkpoint.text_vocab,
        checkpoint.answers,
        checkpoint.max_question_len,
        questions,
        images,
        batch_size=batch_size,
    )


def _require_labels(mapping: Mapping[str, object], kind: str) -> None:
    missing = [label for label in (ORIGINAL, AUGMENTED) if label not in mapping]
    if missing:
        raise ConfigError(f"Setting matrix is missing {kind} for: {', '.join(missing)}")


def run_setting_matrix(
    checkpoints: Mapping[str, Checkpoint],
    corpora: Mapping[str, VQACorpus],
    split: Union[Split, str] = Split.TEST,
    images: Optional[Mapping[str, ImageStore]] = None,
) -> List[MetricsReport]:
    """
    Score original->original, original->augmented and augmented->augmented.

    Keys of both mappings are ``original`` and ``augmented``; test sets are
    scored with filter=all.
    """
    _require_labels(checkpoints, "checkpoints")
    _require_labels(corpora, "corpora")

    reports = []
    for trained_on, tested_on in SETTINGS:
        label = setting_label(trained_on, tested_on)
        store = images.get(tested_on) if images is not None else None
        preds = evaluate_model(
            checkpoints[trained_on],
            corpora[tested_on],
            split=split,
            question_filter=QuestionFilter.ALL,
            images=store,
        )
        report = score(preds, setting=label)
        logger.info(f"{label}: AA={report.AA:.4f} OA={report.OA:.4f}")
        reports.append(report)
    return reports


def run_pivot_breakdown(
    checkpoint: Checkpoint,
    corpus: VQACorpus,
    trained_on: str = ORIGINAL,
    split: Union[Split, str] = Split.TEST,
    images: Optional[ImageStore] = None,
) -> List[MetricsReport]:
    """One report for the original questions and one per pivot found among the split's paraphrases."""
    images = images if images is not None else ImageStore(corpus)
    reports = [
        score(
            evaluate_model(checkpoint, corpus, split, QuestionFilter.ORIGINALS_ONLY, images=images),
            setting=setting_label(trained_on, ORIGINAL),
        )
    ]
    present = {q.pivot for q in filter_questions(corpus, split, QuestionFilter.PARAPHRASES_ONLY)}
    for pivot in (Pivot.ZH, Pivot.DE, Pivot.FR):
        if pivot not in present:
            continue
        preds = evaluate_model(
            checkpoint, corpus, split, QuestionFilter.PARAPHRASES_ONLY, pivot=pivot, images=images
        )
        reports.append(score(preds, setting=setting_label(trained_on, pivot.value)))
    return reports


# ---------------------------------------------------------------------------
# Report files
# ---------------------------------------------------------------------------

def save_report(report: MetricsReport, path: Union[str, Path]) -> Path:
    return write_json(report.model_dump(mode="json"), path)


def load_report(path: Union[str, Path]) -> MetricsReport:
    """
    Raises:
        CorpusFormatError: If the file is missing or is not a valid report
    """
    path = Path(path)
    if not path.exists():
        raise CorpusFormatError(f"Report file not found: {path}")
    try:
        return MetricsReport.model_validate(json.loads(path.read_text(encoding="utf-8")))
    except (json.JSONDecodeError, ValidationError) as e:
        raise CorpusFormatError(f"Invalid report {path}: {e}")


def render_table(reports: Sequence[MetricsReport], decimals: Optional[int] = 4) -> pd.DataFrame:
    """
    Table with rows Presence, Count, Comparison, Rural/Urban, AA, OA and one column per setting.

    Values are rounded only here, for display; missing types are NaN.

    Raises:
        ConfigError: If two reports carry the same setting label
    """
    columns: Dict[str, List[float]] = {}
    for i, report in enumerate(reports):
        label = report.setting or f"report {i + 1}"
        if label in columns:
            raise ConfigError(f"Duplicate setting label in report table: {label}")
        values = [
            report.per_type[t.value].accuracy if t.value in report.per_type else np.nan
            for t in TYPE_ORDER
        ]
        columns[label] = values + [report.AA, report.OA]

    df = pd.DataFrame(columns, index=TABLE_ROWS)
    df.index.name = "Metric"
    if decimals is not None:
        df = df.round(decimals)
    return df.reset_index()


def plot_report(report: MetricsReport, path: Union[str, Path]) -> Path:
    """Bar chart of per-type accuracy plus AA and OA for one setting."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import seaborn as sns

    table = render_table([report], decimals=None)
    data = pd.DataFrame({"metric": table["Metric"], "accuracy": table.iloc[:, 1]}).dropna()

    fig, ax = plt.subplots(figsize=(6, 3.6), constrained_layout=True)
    sns.barplot(data=data, x="metric", y="accuracy", color="steelblue", ax=ax)
    for patch, value in zip(ax.patches, data["accuracy"]):
        ax.annotate(f"{value:.4f}", (patch.get_x() + patch.get_width() / 2, patch.get_height()),
                    ha="center", va="bottom", fontsize=8)
    ax.set_ylim(0.0, 1.05)
    ax.set_xlabel("")
    ax.set_ylabel("Accuracy")
    ax.set_title(report.setting or "accuracy")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    logger.info(f"Saved accuracy chart {path}")
    return path
