"""Pydantic schemas for predictions and accuracy reports."""

from typing import Dict, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .corpus import QuestionType


class Prediction(BaseModel):
    """One scored question."""

    model_config = ConfigDict(frozen=True)

    question_id: int
    predicted: str
    gold: str
    type: QuestionType

    @property
    def correct(self) -> bool:
        return self.predicted == self.gold


class PredictionSet(BaseModel):
    """Schema for the predictions of one evaluation run."""

    model_config = ConfigDict(frozen=True)

    predictions: Tuple[Prediction, ...] = Field(description="Predictions ordered by question id")
    out_of_pool: int = Field(
        default=0,
        ge=0,
        description="Gold answers missing from the answer pool (always wrong)",
    )

    @model_validator(mode="after")
    def _check_distinct(self) -> "PredictionSet":
        ids = [p.question_id for p in self.predictions]
        if len(set(ids)) != len(ids):
            raise ValueError("Prediction set contains duplicate question ids")
        return self

    def __len__(self) -> int:
        return len(self.predictions)


class TypeAccuracy(BaseModel):
    """Accuracy of one question type."""

    correct: int = Field(ge=0)
    total: int = Field(ge=1)
    accuracy: float = Field(ge=0, le=1)


class MetricsReport(BaseModel):
    """Schema for a per-setting accuracy report."""

    setting: str = Field(default="", description="Setting label, e.g. 'original->augmented'")
    per_type: Dict[str, TypeAccuracy] = Field(description="Accuracy per question type")
    AA: float = Field(ge=0, le=1, description="Unweighted mean of per-type accuracies")
    OA: float = Field(ge=0, le=1, description="Fraction of all questions answered correctly")

    @property
    def total(self) -> int:
        return sum(t.total for t in self.per_type.values())

    @property
    def correct(self) -> int:
        return sum(t.correct for t in self.per_type.values())
