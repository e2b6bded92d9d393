"""Pydantic schemas for RSVQA corpora, answer pools and augmentation records."""

from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..util import CorpusIntegrityError


class Split(str, Enum):
    """Dataset splits."""
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


class QuestionType(str, Enum):
    """Question types of the low-resolution RSVQA corpus."""
    PRESENCE = "presence"
    COUNT = "count"
    COMPARISON = "comparison"
    RURAL_URBAN = "rural_urban"


class Pivot(str, Enum):
    """Back-translation provenance of a question."""
    NONE = "none"
    ZH = "zh"
    DE = "de"
    FR = "fr"


class QuestionFilter(str, Enum):
    """Which questions of a split an operation sees."""
    ORIGINALS_ONLY = "originals_only"
    PARAPHRASES_ONLY = "paraphrases_only"
    ALL = "all"


class ImageRecord(BaseModel):
    """Schema for one image of the corpus."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    id: int = Field(description="Image identifier, unique within the corpus")
    file: str = Field(
        min_length=1,
        description="Image path relative to the corpus file",
    )
    split: Split = Field(description="Dataset split the image belongs to")


class QuestionRecord(BaseModel):
    """Schema for one question/answer pair."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    id: int = Field(description="Question identifier, unique within the corpus")
    img_id: int = Field(description="Identifier of the image the question is about")
    type: QuestionType = Field(description="Question type")
    text: str = Field(min_length=1, description="Question text")
    answer: str = Field(description="Gold answer string")
    origin_id: Optional[int] = Field(
        default=None,
        description="Original question this paraphrase was derived from (null for originals)",
    )
    pivot: Pivot = Field(
        default=Pivot.NONE,
        description="Pivot language of the back-translation ('none' for originals)",
    )

    @field_validator("text")
    @classmethod
    def _check_text(cls, text: str) -> str:
        if not text.strip():
            raise ValueError("question text is blank")
        return text

    @property
    def is_original(self) -> bool:
        return self.pivot == Pivot.NONE


class VQACorpus(BaseModel):
    """Schema for a complete corpus document; integrity is checked on construction."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    metadata: Dict[str, str] = Field(
        default_factory=dict,
        description="Source name, pivot languages used, generation seed, drop counts",
    )
    images: Tuple[ImageRecord, ...] = Field(description="Images of the corpus")
    questions: Tuple[QuestionRecord, ...] = Field(description="Questions of the corpus")

    @model_validator(mode="after")
    def _check_integrity(self) -> "VQACorpus":
        check_integrity(self)
        return self

    def image_index(self) -> Dict[int, ImageRecord]:
        return {image.id: image for image in self.images}

    def question_index(self) -> Dict[int, QuestionRecord]:
        return {question.id: question for question in self.questions}

    def image_splits(self) -> Dict[int, Split]:
        return {image.id: image.split for image in self.images}

    def originals(self) -> List[QuestionRecord]:
        return [q for q in self.questions if q.is_original]


def check_integrity(corpus: VQACorpus) -> None:
    """
    Check referential integrity of a corpus.

    Raises:
        CorpusIntegrityError: naming the first offending id
    """
    images: Dict[int, ImageRecord] = {}
    for image in corpus.images:
        if image.id in images:
            raise CorpusIntegrityError(f"Duplicate image id {image.id}")
        images[image.id] = image

    questions: Dict[int, QuestionRecord] = {}
    for question in corpus.questions:
        if question.id in questions:
            raise CorpusIntegrityError(f"Duplicate question id {question.id}")
        questions[question.id] = question
        if question.img_id not in images:
            raise CorpusIntegrityError(
                f"Question {question.id} references unknown image id {question.img_id}"
            )
        if question.is_original != (question.origin_id is None):
            raise CorpusIntegrityError(
                f"Question {question.id}: pivot '{question.pivot.value}' "
                f"inconsistent with origin_id {question.origin_id}"
            )

    seen_variants = set()
    for question in corpus.questions:
        if question.origin_id is None:
            continue
        origin = questions.get(question.origin_id)
        if origin is None:
            raise CorpusIntegrityError(
                f"Question {question.id} references unknown origin id {question.origin_id}"
            )
        if not origin.is_original:
            raise CorpusIntegrityError(
                f"Question {question.id}: origin {origin.id} is itself a paraphrase"
            )
        if (origin.img_id, origin.type, origin.answer) != (
            question.img_id,
            question.type,
            question.answer,
        ):
            raise CorpusIntegrityError(
                f"Question {question.id} disagrees with origin {origin.id} "
                "on img_id, type or answer"
            )
        variant = (question.origin_id, question.pivot, question.text)
        if variant in seen_variants:
            raise CorpusIntegrityError(
                f"Question {question.id} duplicates a paraphrase of origin "
                f"{question.origin_id} (same pivot and text)"
            )
        seen_variants.add(variant)


class AnswerVocabulary(BaseModel):
    """Schema for the answer pool the classifier predicts from."""

    model_config = ConfigDict(frozen=True)

    answers: Tuple[str, ...] = Field(description="Distinct answers in index order")

    @model_validator(mode="after")
    def _check_distinct(self) -> "AnswerVocabulary":
        if len(set(self.answers)) != len(self.answers):
            raise ValueError("Answer vocabulary contains duplicates")
        return self

    @property
    def index(self) -> Dict[str, int]:
        return {answer: i for i, answer in enumerate(self.answers)}

    def __len__(self) -> int:
        return len(self.answers)

    def __contains__(self, answer: object) -> bool:
        return answer in self.index


class ParaphraseGroup(BaseModel):
    """An original question together with its back-translated variants."""

    model_config = ConfigDict(frozen=True)

    original: QuestionRecord
    paraphrases: Tuple[QuestionRecord, ...] = ()

    @property
    def members(self) -> Tuple[QuestionRecord, ...]:
        return (self.original,) + self.paraphrases

    def __len__(self) -> int:
        return 1 + len(self.paraphrases)


class DedupPolicy(BaseModel):
    """Schema for paraphrase deduplication rules."""

    normalize: bool = Field(
        default=True,
        description="Lowercase, collapse whitespace and strip terminal punctuation before comparing",
    )
    drop_equal_to_original: bool = Field(
        default=True,
        description="Drop round trips equal to the original question",
    )
    drop_equal_across_pivots: bool = Field(
        default=True,
        description="Drop round trips equal to a paraphrase kept from an earlier pivot",
    )


class DropReport(BaseModel):
    """Schema for the per-pivot augmentation drop report."""

    pivot: str
    dropped: int = 0
    reasons: Dict[str, int] = Field(
        default_factory=lambda: {"equal_original": 0, "equal_sibling": 0}
    )
