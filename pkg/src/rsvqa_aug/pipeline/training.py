"""Triplet contrastive loss, combined objective and the seeded training loop."""

import copy
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import pandas as pd
import torch
import torch.nn as nn
import torch.nn.functional as F
from pydantic import BaseModel, ValidationError
from tqdm import tqdm

from ..schema.config import ModelDims, NegativeScheme, TrainConfig, TrainMode
from ..schema.corpus import QuestionFilter, Split, VQACorpus
from ..util import ConfigError, CorpusError, ModelShapeError, TrainingError
from .dataset import BatchSampler, ImageStore, build_answer_vocab, filter_questions
from .model import (
    Checkpoint,
    RSVQAModel,
    TextVocab,
    build_model,
    build_text_vocab,
    images_to_tensor,
    questions_to_tensor,
    torch_dtype,
)

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

@dataclass
class TripletFeatures:
    """Anchor F1 (original question), positive F2 (paraphrase), negative F3, margin m."""

    f1: torch.Tensor
    f2: torch.Tensor
    f3: torch.Tensor
    margin: float = 1.0


def build_triplet(
    f1: torch.Tensor,
    f2: torch.Tensor,
    scheme: Union[NegativeScheme, str] = NegativeScheme.REVERSE,
    margin: float = 1.0,
) -> TripletFeatures:
    """
    Take the negative from the anchor batch itself.

    ``reverse`` pairs row i with row B-1-i; ``cyclic_shift`` with row (i+1) mod B.
    """
    if f1.shape != f2.shape or f1.dim() != 2 or f1.shape[0] < 1:
        raise ModelShapeError(
            f"Triplet features must share a (B, D) shape with B >= 1, "
            f"got {tuple(f1.shape)} and {tuple(f2.shape)}"
        )
    if margin < 0:
        raise ValueError(f"Margin must be >= 0, got {margin}")
    scheme = NegativeScheme(scheme)
    if scheme == NegativeScheme.REVERSE:
        f3 = torch.flip(f1, dims=[0])
    else:
        f3 = torch.roll(f1, shifts=-1, dims=0)
    return TripletFeatures(f1=f1, f2=f2, f3=f3, margin=margin)


def pairwise_l2(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """Row-wise Euclidean distance with a zero subgradient at x == y."""
    squared = ((x - y) ** 2).sum(dim=1)
    tiny = torch.finfo(squared.dtype).tiny
    return torch.where(squared > 0, squared.clamp_min(tiny).sqrt(), torch.zeros_like(squared))


def triplet_loss(t: TripletFeatures) -> torch.Tensor:
    """Mean over rows of max(d(F1, F2) - d(F1, F3) + m, 0)."""
    positive = pairwise_l2(t.f1, t.f2)
    negative = pairwise_l2(t.f1, t.f3)
    return F.relu(positive - negative + t.margin).mean()


class TripletLoss(nn.Module):
    """Triplet margin loss over fused features with batch-derived negatives."""

    def __init__(
        self,
        margin: float = 1.0,
        scheme: Union[NegativeScheme, str] = NegativeScheme.REVERSE,
    ):
        super().__init__()
        self.margin = margin
        self.scheme = NegativeScheme(scheme)

    def forward(self, anchor: torch.Tensor, positive: torch.Tensor) -> torch.Tensor:
        return triplet_loss(build_triplet(anchor, positive, self.scheme, self.margin))

    @classmethod
    def from_config(cls, config: TrainConfig) -> "TripletLoss":
        return cls(margin=config.margin, scheme=config.negative_scheme)


@dataclass
class LossBreakdown:
    """Total objective and its addends."""

    total: torch.Tensor
    ce_a: torch.Tensor
    ce_p: torch.Tensor
    triplet: torch.Tensor


def _cross_entropy(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    if logits.dim() != 2 or labels.shape != logits.shape[:1]:
        raise ModelShapeError(
            f"Logits {tuple(logits.shape)} and labels {tuple(labels.shape)} do not match"
        )
    if bool((labels < 0).any()) or bool((labels >= logits.shape[1]).any()):
        raise ValueError(f"Labels must lie in [0, {logits.shape[1]}), got {labels.tolist()}")
    return F.cross_entropy(logits, labels)


def total_loss(
    logits_a: torch.Tensor,
    logits_p: torch.Tensor,
    labels: torch.Tensor,
    t: TripletFeatures,
) -> LossBreakdown:
    """CE(original) + CE(paraphrase) + triplet, each CE averaged over the batch."""
    ce_a = _cross_entropy(logits_a, labels)
    ce_p = _cross_entropy(logits_p, labels)
    triplet = triplet_loss(t)
    return LossBreakdown(total=ce_a + ce_p + triplet, ce_a=ce_a, ce_p=ce_p, triplet=triplet)


class TotalLoss(nn.Module):
    """Module form of :func:`total_loss` taking fused features directly."""

    def __init__(
        self,
        margin: float = 1.0,
        scheme: Union[NegativeScheme, str] = NegativeScheme.REVERSE,
    ):
        super().__init__()
        self.margin = margin
        self.scheme = NegativeScheme(scheme)

    def forward(
        self,
        logits_a: torch.Tensor,
        logits_p: torch.Tensor,
        labels: torch.Tensor,
        fused_a: torch.Tensor,
        fused_p: torch.Tensor,
    ) -> LossBreakdown:
        t = build_triplet(fused_a, fused_p, self.scheme, self.margin)
        return total_loss(logits_a, logits_p, labels, t)

    @classmethod
    def from_config(cls, config: TrainConfig) -> "TotalLoss":
        return cls(margin=config.margin, scheme=config.negative_scheme)


# ---------------------------------------------------------------------------
# Config files
# ---------------------------------------------------------------------------

REQUIRED_KEYS = (
    "learning_rate",
    "batch_size",
    "epochs",
    "margin",
    "mode",
    "seed",
    "negative_scheme",
    "max_question_len",
)
OPTIONAL_KEYS = ("precision",)


def parse_config(text: str, source: str = "<config>") -> TrainConfig:
    """
    Parse a flat ``key=value`` config; ``dims.<name>`` keys set model dimensions.

    Raises:
        ConfigError: On malformed lines, unknown, duplicate or missing keys and invalid values
    """
    values: Dict[str, str] = {}
    dims: Dict[str, str] = {}
    unknown: List[str] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {stripped!r}")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key.startswith("dims."):
            name = key[len("dims."):]
            if name not in ModelDims.model_fields:
                unknown.append(key)
            elif name in dims:
                raise ConfigError(f"{source}:{lineno}: duplicate key {key}")
            else:
                dims[name] = value
        elif key in REQUIRED_KEYS or key in OPTIONAL_KEYS:
            if key in values:
                raise ConfigError(f"{source}:{lineno}: duplicate key {key}")
            values[key] = value
        else:
            unknown.append(key)

    if unknown:
        raise ConfigError(f"Unknown config keys in {source}: {', '.join(unknown)}")
    missing = [key for key in REQUIRED_KEYS if key not in values]
    if missing:
        raise ConfigError(f"Missing config keys in {source}: {', '.join(missing)}")

    try:
        return TrainConfig(**values, dims=ModelDims(**dims))
    except ValidationError as e:
        raise ConfigError(f"Invalid config values in {source}: {e}")


def load_config(path: Union[str, Path]) -> TrainConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"), source=str(path))


def format_config(config: TrainConfig) -> str:
    """Inverse of :func:`parse_config`."""
    data = config.model_dump(mode="json")
    lines = [f"{key}={data[key]!r}" if isinstance(data[key], float) else f"{key}={data[key]}"
             for key in REQUIRED_KEYS + OPTIONAL_KEYS]
    lines += [f"dims.{name}={value}" for name, value in data["dims"].items()]
    return "\n".join(lines) + "\n"


def dump_config(config: TrainConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_config(config), encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

class EpochRecord(BaseModel):
    """Losses of one epoch (sample-weighted batch means) and validation OA."""

    epoch: int
    total: float
    ce_a: float
    ce_p: float
    triplet: float
    val_oa: float


class TrainHistory(BaseModel):
    """Per-epoch training records."""

    records: List[EpochRecord] = []

    def __len__(self) -> int:
        return len(self.records)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [r.model_dump() for r in self.records],
            columns=["epoch", "total", "ce_a", "ce_p", "triplet", "val_oa"],
        )

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, lineterminator="\n")
        return path


def _validation_questions(corpus: VQACorpus):
    questions = filter_questions(corpus, Split.VAL, QuestionFilter.ALL)
    if questions:
        return Split.VAL, questions
    return Split.TRAIN, filter_questions(corpus, Split.TRAIN, QuestionFilter.ORIGINALS_ONLY)


def _batch_step(
    model: RSVQAModel,
    batch,
    vocab: TextVocab,
    config: TrainConfig,
    dtype: torch.dtype,
    criterion: TotalLoss,
) -> LossBreakdown:
    images = images_to_tensor(batch.images, dtype=dtype)
    labels = torch.tensor(batch.labels, dtype=torch.long)
    tokens_a, lengths_a = questions_to_tensor(batch.question_texts, vocab, config.max_question_len)

    f_v = model.image_encoder(images)
    logits_a, f1 = model(images, tokens_a, lengths_a, f_v=f_v)
    if config.mode == TrainMode.BASELINE:
        ce_a = _cross_entropy(logits_a, labels)
        zero = ce_a.new_zeros(())
        return LossBreakdown(total=ce_a, ce_a=ce_a, ce_p=zero, triplet=zero)

    tokens_p, lengths_p = questions_to_tensor(batch.paraphrase_texts, vocab, config.max_question_len)
    logits_p, f2 = model(images, tokens_p, lengths_p, f_v=f_v)
    return criterion(logits_a, logits_p, labels, f1, f2)


def train(
    corpus: VQACorpus,
    config: TrainConfig,
    images: Optional[ImageStore] = None,
    verbose: bool = False,
) -> Tuple[Checkpoint, TrainHistory]:
    """
    Train a classifier on the corpus' training split.

    ``baseline`` minimizes CE on original questions only; ``contrastive``
    minimizes CE(original) + CE(paraphrase) + triplet. The checkpoint with
    the best validation OA is returned (earliest epoch on ties).

    Raises:
        TrainingError: If the training split is empty or a loss becomes non-finite
    """
    images = images if images is not None else ImageStore(corpus)
    originals_only = config.mode == TrainMode.BASELINE
    try:
        answers = build_answer_vocab(corpus)
        vocab = build_text_vocab(corpus, originals_only=originals_only)
        sampler = BatchSampler(
            corpus, Split.TRAIN, config.batch_size, seed=config.seed, answers=answers, images=images
        )
    except CorpusError as e:
        raise TrainingError(f"Cannot train: {e}")

    from .evaluation import predict_questions, score

    dtype = torch_dtype(config.precision)
    torch.manual_seed(config.seed)
    model = build_model(config.dims, len(vocab), len(answers), seed=config.seed, precision=config.precision)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    criterion = TotalLoss.from_config(config)
    val_split, val_questions = _validation_questions(corpus)

    logger.info(
        f"Training {config.mode.value} model: {len(sampler.groups)} training questions, "
        f"{len(answers)} answers, {len(vocab)} tokens, {config.epochs} epochs, "
        f"batch {config.batch_size}, validation on {val_split.value}"
    )

    history = TrainHistory()
    best_state: Optional[Dict[str, torch.Tensor]] = None
    best_oa = -1.0
    best_epoch = 0

    for epoch in tqdm(range(1, config.epochs + 1), desc="epochs", disable=not verbose):
        model.train()
        sums = {"total": 0.0, "ce_a": 0.0, "ce_p": 0.0, "triplet": 0.0}
        seen = 0
        for batch_index, batch in enumerate(sampler.epoch()):
            losses = _batch_step(model, batch, vocab, config, dtype, criterion)
            if not torch.isfinite(losses.total):
                raise TrainingError(
                    f"Non-finite loss at epoch {epoch}, batch {batch_index} "
                    f"(ce_a={losses.ce_a.item()}, ce_p={losses.ce_p.item()}, "
                    f"triplet={losses.triplet.item()})"
                )
            optimizer.zero_grad()
            losses.total.backward()
            optimizer.step()

            size = len(batch)
            seen += size
            for name in sums:
                sums[name] += getattr(losses, name).item() * size

        model.eval()
        predictions = predict_questions(
            model, vocab, answers, config.max_question_len, val_questions, images
        )
        val_oa = score(predictions).OA if len(predictions) else 0.0
        record = EpochRecord(epoch=epoch, val_oa=val_oa, **{k: v / seen for k, v in sums.items()})
        history.records.append(record)
        logger.info(
            f"epoch {epoch}/{config.epochs} total={record.total:.4f} ce_a={record.ce_a:.4f} "
            f"ce_p={record.ce_p:.4f} triplet={record.triplet:.4f} val_oa={val_oa:.4f}"
        )

        if val_oa > best_oa:
            best_oa = val_oa
            best_epoch = epoch
            best_state = copy.deepcopy(model.state_dict())

    if best_state is not None:
        model.load_state_dict(best_state)
    checkpoint = Checkpoint.from_model(
        model,
        vocab,
        answers,
        config.max_question_len,
        precision=config.precision,
        train_config=config.model_dump(mode="json"),
        info={"best_epoch": best_epoch, "val_oa": best_oa, "val_split": val_split.value},
    )
    return checkpoint, history


def is_finite_history(history: TrainHistory) -> bool:
    return all(
        math.isfinite(v)
        for r in history.records
        for v in (r.total, r.ce_a, r.ce_p, r.triplet, r.val_oa)
    )
