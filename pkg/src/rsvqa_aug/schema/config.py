"""Pydantic schemas for model, training, translation and synthetic-benchmark configuration."""

import os
from enum import Enum
from typing import Dict, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator


class TrainMode(str, Enum):
    """Training objectives."""
    BASELINE = "baseline"
    CONTRASTIVE = "contrastive"


class NegativeScheme(str, Enum):
    """How the triplet negative is taken from the batch."""
    REVERSE = "reverse"
    CYCLIC_SHIFT = "cyclic_shift"


class Precision(str, Enum):
    """Floating point precision of model parameters."""
    FLOAT32 = "float32"
    FLOAT64 = "float64"


class TranslatorBackend(str, Enum):
    """Available translation backends."""
    MOCK = "mock"
    HTTP = "http"


class ModelDims(BaseModel):
    """Schema for the classifier dimensions."""

    model_config = ConfigDict(extra="forbid")

    image_size: int = Field(default=32, ge=4, description="Input image height and width")
    channels: int = Field(default=3, ge=1, description="Input image channels")
    conv1: int = Field(default=16, ge=1, description="Channels of the first conv layer")
    conv2: int = Field(default=32, ge=1, description="Channels of the second conv layer")
    d_v: int = Field(default=64, ge=1, description="Visual feature size (third conv layer)")
    embed_dim: int = Field(default=32, ge=1, description="Token embedding size")
    d_t: int = Field(default=64, ge=1, description="Question feature size (recurrent state)")
    d_f: int = Field(default=64, ge=1, description="Fused feature size")


class TrainConfig(BaseModel):
    """Schema for training hyper-parameters."""

    model_config = ConfigDict(extra="forbid")

    learning_rate: float = Field(default=1e-5, gt=0, description="Adam learning rate")
    batch_size: int = Field(default=280, ge=1, description="Original questions per batch")
    epochs: int = Field(default=150, ge=1, description="Number of training epochs")
    margin: float = Field(default=1.0, ge=0, description="Triplet loss margin m")
    mode: TrainMode = Field(default=TrainMode.CONTRASTIVE, description="Training objective")
    seed: int = Field(default=42, description="Seed for initialisation, shuffling and paraphrase draws")
    negative_scheme: NegativeScheme = Field(
        default=NegativeScheme.REVERSE,
        description="Negative construction for the triplet loss",
    )
    max_question_len: int = Field(default=16, ge=1, description="Token budget per question")
    precision: Precision = Field(default=Precision.FLOAT32, description="Parameter precision")
    dims: ModelDims = Field(default_factory=ModelDims, description="Model dimensions")

    @classmethod
    def full(cls, **overrides) -> "TrainConfig":
        """Full-scale profile for the real corpus."""
        values = dict(learning_rate=1e-5, batch_size=280, epochs=150, margin=1.0)
        values.update(overrides)
        return cls(**values)

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        """
        CPU-scale profile used with the synthetic benchmark.

        Batch 32, 30 epochs and a learning rate of 1e-3 instead of the
        1e-5 default.
        """
        values = dict(learning_rate=1e-3, batch_size=32, epochs=30, margin=1.0)
        values.update(overrides)
        return cls(**values)


class MTConfig(BaseModel):
    """Schema for machine-translation clients."""

    endpoint: str = Field(
        default="http://127.0.0.1:5000",
        description="Base URL of the translation service (MT_ENDPOINT overrides)",
    )
    pivot_endpoints: Dict[str, str] = Field(
        default_factory=dict,
        description="Per-pivot endpoint overrides, e.g. {'zh': 'http://...'}",
    )
    timeout: float = Field(default=10.0, gt=0, description="Request timeout in seconds")
    retries: int = Field(default=3, ge=1, description="Attempts per request")
    backoff: float = Field(default=0.5, ge=0, description="Initial retry delay in seconds, doubled per attempt")
    token: Optional[str] = Field(default=None, description="Bearer token passed through (MT_TOKEN)")
    concurrency: int = Field(default=4, ge=1, description="Concurrent translation requests")

    @classmethod
    def from_env(cls, **values) -> "MTConfig":
        """Build a config, letting MT_ENDPOINT and MT_TOKEN override the given values."""
        endpoint = os.environ.get("MT_ENDPOINT")
        if endpoint:
            values["endpoint"] = endpoint
        token = os.environ.get("MT_TOKEN")
        if token and not values.get("token"):
            values["token"] = token
        values = {k: v for k, v in values.items() if v is not None}
        return cls(**values)

    def endpoint_for(self, pivot: str) -> str:
        return self.pivot_endpoints.get(pivot, self.endpoint)


class SynthConfig(BaseModel):
    """Schema for the synthetic shape benchmark."""

    n_images: int = Field(default=200, ge=10, description="Number of images to render")
    image_size: int = Field(default=32, ge=16, description="Image height and width")
    seed: int = Field(default=42, description="Generator seed")
    shapes: Tuple[str, ...] = Field(default=("circle", "square"), description="Shape kinds")
    colors: Tuple[str, ...] = Field(default=("red", "blue"), description="Shape colors")
    max_per_class: int = Field(default=4, ge=1, le=4, description="Maximum shapes per color class")
    shape_size: int = Field(default=5, ge=3, description="Shape bounding box side in pixels")
    placement_retries: int = Field(default=200, ge=1, description="Placement attempts per shape")
    urban_threshold: int = Field(
        default=8,
        ge=1,
        description="Images with at least this many shapes answer 'urban'",
    )
    split_fractions: Tuple[float, float, float] = Field(
        default=(0.7, 0.1, 0.2),
        description="Train/val/test fractions of images",
    )

    @model_validator(mode="after")
    def _check_fractions(self) -> "SynthConfig":
        if abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise ValueError("split_fractions must sum to 1")
        for shape in self.shapes:
            if shape not in ("circle", "square"):
                raise ValueError(f"Unsupported shape: {shape}")
        return self
