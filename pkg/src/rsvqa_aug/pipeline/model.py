"""Multimodal classifier: CNN image encoder, GRU question encoder, multiplicative fusion."""

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn as nn
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..schema.config import ModelDims, Precision
from ..schema.corpus import AnswerVocabulary, Split, VQACorpus
from ..util import CorpusError, ModelShapeError

logger = logging.getLogger(__name__)

PAD = "<pad>"
UNK = "<unk>"
PAD_INDEX = 0
UNK_INDEX = 1
CHECKPOINT_FORMAT = "rsvqa-aug-checkpoint/1"

_TOKEN = re.compile(r"\w+|[^\w\s]")


class TextVocab(BaseModel):
    """Token vocabulary with reserved <pad>=0 and <unk>=1."""

    model_config = ConfigDict(frozen=True)

    tokens: Tuple[str, ...] = Field(description="Tokens in index order, reserved tokens first")

    @model_validator(mode="after")
    def _check_reserved(self) -> "TextVocab":
        if self.tokens[:2] != (PAD, UNK):
            raise ValueError(f"Vocabulary must start with {PAD!r}, {UNK!r}")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("Vocabulary contains duplicate tokens")
        return self

    @classmethod
    def from_tokens(cls, tokens: Sequence[str]) -> "TextVocab":
        ordered = [t for t in dict.fromkeys(tokens) if t not in (PAD, UNK)]
        return cls(tokens=(PAD, UNK, *ordered))

    @property
    def index(self) -> Dict[str, int]:
        return {token: i for i, token in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)


def split_tokens(text: str) -> List[str]:
    """Lowercase and split on whitespace, keeping punctuation as separate tokens."""
    return _TOKEN.findall(text.lower())


def build_text_vocab(corpus: VQACorpus, originals_only: bool = False) -> TextVocab:
    """Vocabulary of the training-split question texts, paraphrases included unless ``originals_only``."""
    splits = corpus.image_splits()
    tokens = set()
    for question in corpus.questions:
        if splits[question.img_id] != Split.TRAIN:
            continue
        if originals_only and not question.is_original:
            continue
        tokens.update(split_tokens(question.text))
    if not tokens:
        raise CorpusError("Cannot build text vocabulary: training split is empty")
    return TextVocab.from_tokens(sorted(tokens))


def tokenize(text: str, vocab: TextVocab, max_len: int) -> Tuple[List[int], int]:
    """
    Map text to token indices padded/truncated to ``max_len``.

    Returns:
        (indices, true length) where the length is capped at ``max_len``
    """
    index = vocab.index
    ids = [index.get(token, UNK_INDEX) for token in split_tokens(text)][:max_len]
    length = len(ids)
    return ids + [PAD_INDEX] * (max_len - length), length


# ---------------------------------------------------------------------------
# Network
# ---------------------------------------------------------------------------

class ImageEncoder(nn.Module):
    """Three conv layers with pooling, globally averaged into F_v."""

    def __init__(self, dims: ModelDims):
        super().__init__()
        self.dims = dims
        self.layers = nn.Sequential(
            nn.Conv2d(dims.channels, dims.conv1, kernel_size=3, padding=1),
            nn.ReLU(),
            nn.AvgPool2d(2),
            nn.Conv2d(dims.conv1, dims.conv2, kernel_size=3, padding=1),
            nn.ReLU(),
            nn.AvgPool2d(2),
            nn.Conv2d(dims.conv2, dims.d_v, kernel_size=3, padding=1),
            nn.ReLU(),
        )

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        expected = (self.dims.channels, self.dims.image_size, self.dims.image_size)
        if images.dim() != 4 or tuple(images.shape[1:]) != expected:
            raise ModelShapeError(
                f"Expected images of shape (B, {', '.join(map(str, expected))}), "
                f"got {tuple(images.shape)}"
            )
        return self.layers(images).mean(dim=(2, 3))


class QuestionEncoder(nn.Module):
    """Token embeddings consumed by a GRU cell; padding steps leave the state untouched."""

    def __init__(self, vocab_size: int, dims: ModelDims):
        super().__init__()
        self.embedding = nn.Embedding(vocab_size, dims.embed_dim)
        self.cell = nn.GRUCell(dims.embed_dim, dims.d_t)
        self.d_t = dims.d_t

    def forward(self, tokens: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        if tokens.dim() != 2:
            raise ModelShapeError(f"Expected token indices of shape (B, L), got {tuple(tokens.shape)}")
        if bool((lengths < 1).any()) or bool((lengths > tokens.shape[1]).any()):
            raise ModelShapeError(
                f"Question lengths must lie in [1, {tokens.shape[1]}], got {lengths.tolist()}"
            )
        embedded = self.embedding(tokens)
        h = embedded.new_zeros(tokens.shape[0], self.d_t)
        for t in range(int(lengths.max())):
            h_next = self.cell(embedded[:, t], h)
            active = (lengths > t).unsqueeze(1)
            h = torch.where(active, h_next, h)
        return h


class FusionModule(nn.Module):
    """fused = tanh(W_v F_v) * tanh(W_t F_t)."""

    def __init__(self, dims: ModelDims):
        super().__init__()
        self.visual = nn.Linear(dims.d_v, dims.d_f)
        self.textual = nn.Linear(dims.d_t, dims.d_f)

    def forward(self, f_v: torch.Tensor, f_t: torch.Tensor) -> torch.Tensor:
        if f_v.shape[-1] != self.visual.in_features or f_t.shape[-1] != self.textual.in_features:
            raise ModelShapeError(
                f"Fusion expects feature sizes ({self.visual.in_features}, "
                f"{self.textual.in_features}), got ({f_v.shape[-1]}, {f_t.shape[-1]})"
            )
        if f_v.shape[:-1] != f_t.shape[:-1]:
            raise ModelShapeError(
                f"Visual and textual batch shapes differ: {tuple(f_v.shape)} vs {tuple(f_t.shape)}"
            )
        return torch.tanh(self.visual(f_v)) * torch.tanh(self.textual(f_t))


class RSVQAModel(nn.Module):
    """Image + question classifier over a fixed answer pool."""

    def __init__(self, dims: ModelDims, vocab_size: int, num_answers: int):
        super().__init__()
        self.dims = dims
        self.image_encoder = ImageEncoder(dims)
        self.question_encoder = QuestionEncoder(vocab_size, dims)
        self.fusion = FusionModule(dims)
        self.classifier = nn.Linear(dims.d_f, num_answers)

    def forward(
        self,
        images: torch.Tensor,
        tokens: torch.Tensor,
        lengths: torch.Tensor,
        f_v: Optional[torch.Tensor] = None,
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        """Return (logits, fused features); ``f_v`` reuses already encoded images."""
        if f_v is None:
            f_v = self.image_encoder(images)
        fused = self.fusion(f_v, self.question_encoder(tokens, lengths))
        return self.classifier(fused), fused


def init_parameters(model: nn.Module, seed: int) -> nn.Module:
    """Seeded uniform initialisation scaled by fan-in."""
    generator = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for module in model.modules():
            if isinstance(module, (nn.Linear, nn.Conv2d)):
                bound = 1.0 / np.sqrt(module.weight[0].numel())
                module.weight.uniform_(-bound, bound, generator=generator)
                if module.bias is not None:
                    module.bias.uniform_(-bound, bound, generator=generator)
            elif isinstance(module, nn.GRUCell):
                bound = 1.0 / np.sqrt(module.hidden_size)
                for param in module.parameters():
                    param.uniform_(-bound, bound, generator=generator)
            elif isinstance(module, nn.Embedding):
                module.weight.uniform_(-1.0, 1.0, generator=generator)
    return model


def build_model(
    dims: ModelDims,
    vocab_size: int,
    num_answers: int,
    seed: int = 0,
    precision: Union[Precision, str] = Precision.FLOAT32,
) -> RSVQAModel:
    model = RSVQAModel(dims, vocab_size, num_answers)
    init_parameters(model, seed)
    return model.to(torch_dtype(precision))


def torch_dtype(precision: Union[Precision, str]) -> torch.dtype:
    return torch.float64 if Precision(precision) == Precision.FLOAT64 else torch.float32


def _model_dtype(model: nn.Module) -> torch.dtype:
    return next(model.parameters()).dtype


# ---------------------------------------------------------------------------
# Functional entry points
# ---------------------------------------------------------------------------

def images_to_tensor(images: Sequence[np.ndarray], dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """Stack H x W x C arrays into an (B, C, H, W) tensor."""
    arrays = [np.asarray(image) for image in images]
    for array in arrays:
        if array.ndim != 3:
            raise ModelShapeError(f"Expected an H x W x C image, got shape {array.shape}")
    shapes = {array.shape for array in arrays}
    if len(shapes) != 1:
        raise ModelShapeError(f"Images in a batch differ in shape: {sorted(shapes)}")
    stacked = np.stack(arrays).transpose(0, 3, 1, 2)
    return torch.as_tensor(np.ascontiguousarray(stacked), dtype=dtype)


def questions_to_tensor(
    texts: Sequence[str], vocab: TextVocab, max_len: int
) -> Tuple[torch.Tensor, torch.Tensor]:
    encoded = [tokenize(text, vocab, max_len) for text in texts]
    tokens = torch.tensor([ids for ids, _ in encoded], dtype=torch.long)
    lengths = torch.tensor([length for _, length in encoded], dtype=torch.long)
    return tokens, lengths


def encode_image(image: Union[np.ndarray, torch.Tensor], model: RSVQAModel) -> torch.Tensor:
    """F_v of one H x W x C image (or a (B, C, H, W) tensor batch)."""
    if isinstance(image, torch.Tensor) and image.dim() == 4:
        return model.image_encoder(image)
    batch = images_to_tensor([np.asarray(image)], dtype=_model_dtype(model))
    return model.image_encoder(batch)[0]


def encode_question(
    tokens: Union[Sequence[int], torch.Tensor],
    length: Union[int, torch.Tensor],
    model: RSVQAModel,
) -> torch.Tensor:
    """Final GRU state after the first ``length`` tokens."""
    tokens = torch.as_tensor(tokens, dtype=torch.long)
    if tokens.dim() == 1:
        lengths = torch.tensor([int(length)], dtype=torch.long)
        return model.question_encoder(tokens.unsqueeze(0), lengths)[0]
    return model.question_encoder(tokens, torch.as_tensor(length, dtype=torch.long))


def fuse(f_v: torch.Tensor, f_t: torch.Tensor, model: RSVQAModel) -> torch.Tensor:
    return model.fusion(f_v, f_t)


def classify(fused: torch.Tensor, model: RSVQAModel) -> torch.Tensor:
    return model.classifier(fused)


def forward(
    images: Sequence[np.ndarray],
    question_texts: Sequence[str],
    model: RSVQAModel,
    vocab: TextVocab,
    max_len: int,
) -> Tuple[torch.Tensor, torch.Tensor]:
    """encode_image -> encode_question -> fuse -> classify over a batch."""
    if len(images) != len(question_texts):
        raise ModelShapeError(
            f"Batch has {len(images)} images but {len(question_texts)} questions"
        )
    image_batch = images_to_tensor(images, dtype=_model_dtype(model))
    tokens, lengths = questions_to_tensor(question_texts, vocab, max_len)
    return model(image_batch, tokens, lengths)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

@dataclass
class Checkpoint:
    """Everything needed to rebuild a trained model for inference."""

    dims: ModelDims
    max_question_len: int
    text_vocab: TextVocab
    answers: AnswerVocabulary
    state_dict: Dict[str, torch.Tensor]
    precision: Precision = Precision.FLOAT32
    train_config: Dict[str, Any] = field(default_factory=dict)
    info: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_model(
        cls,
        model: RSVQAModel,
        text_vocab: TextVocab,
        answers: AnswerVocabulary,
        max_question_len: int,
        precision: Union[Precision, str] = Precision.FLOAT32,
        train_config: Optional[Dict[str, Any]] = None,
        info: Optional[Dict[str, Any]] = None,
    ) -> "Checkpoint":
        state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        return cls(
            dims=model.dims,
            max_question_len=max_question_len,
            text_vocab=text_vocab,
            answers=answers,
            state_dict=state,
            precision=Precision(precision),
            train_config=dict(train_config or {}),
            info=dict(info or {}),
        )

    def build_model(self) -> RSVQAModel:
        model = RSVQAModel(self.dims, len(self.text_vocab), len(self.answers))
        model = model.to(torch_dtype(self.precision))
        try:
            model.load_state_dict(self.state_dict)
        except RuntimeError as e:
            raise ModelShapeError(f"Checkpoint parameters do not match its dimensions: {e}")
        model.eval()
        return model

    def describe(self) -> List[Tuple[str, Tuple[int, ...]]]:
        """Parameter keys with their shapes, in state_dict order."""
        return [(key, tuple(tensor.shape)) for key, tensor in self.state_dict.items()]

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save(
            {
                "format": CHECKPOINT_FORMAT,
                "dims": self.dims.model_dump(),
                "max_question_len": self.max_question_len,
                "text_vocab": list(self.text_vocab.tokens),
                "answers": list(self.answers.answers),
                "precision": self.precision.value,
                "train_config": self.train_config,
                "info": self.info,
                "state_dict": self.state_dict,
            },
            path,
        )
        logger.info(f"Saved checkpoint {path}")
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Checkpoint":
        path = Path(path)
        if not path.exists():
            raise CorpusError(f"Checkpoint file not found: {path}")
        try:
            raw = torch.load(path, map_location="cpu", weights_only=True)
        except Exception as e:
            raise ModelShapeError(f"Cannot read checkpoint {path}: {e}")
        if not isinstance(raw, dict) or raw.get("format") != CHECKPOINT_FORMAT:
            raise ModelShapeError(f"{path} is not an rsvqa-aug checkpoint")
        return cls(
            dims=ModelDims(**raw["dims"]),
            max_question_len=int(raw["max_question_len"]),
            text_vocab=TextVocab(tokens=tuple(raw["text_vocab"])),
            answers=AnswerVocabulary(answers=tuple(raw["answers"])),
            state_dict=dict(raw["state_dict"]),
            precision=Precision(raw.get("precision", Precision.FLOAT32.value)),
            train_config=dict(raw.get("train_config", {})),
            info=dict(raw.get("info", {})),
        )
