"""Corpus loading, answer pools, paraphrase groups and seeded batch assembly."""

import json
import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from PIL import Image
from pydantic import ValidationError

from ..schema.corpus import (
    AnswerVocabulary,
    ParaphraseGroup,
    Pivot,
    QuestionFilter,
    QuestionRecord,
    Split,
    VQACorpus,
)
from ..util import CorpusError, CorpusFormatError, CorpusIntegrityError, write_json

logger = logging.getLogger(__name__)


def load_corpus(path: Union[str, Path]) -> VQACorpus:
    """
    Load and validate a corpus JSON document.

    Args:
        path: Corpus file

    Returns:
        Validated corpus

    Raises:
        CorpusFormatError: If the file is missing, is not JSON or violates the schema
        CorpusIntegrityError: If records reference each other inconsistently
    """
    path = Path(path)
    if not path.exists():
        raise CorpusFormatError(f"Corpus file not found: {path}")

    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorpusFormatError(f"Corpus file {path} is not valid JSON: {e}")

    return parse_corpus(raw, source=str(path))


def parse_corpus(raw: object, source: str = "<memory>") -> VQACorpus:
    """Validate an already-decoded corpus document."""
    try:
        corpus = VQACorpus.model_validate(raw)
    except ValidationError as e:
        for error in e.errors():
            original = error.get("ctx", {}).get("error")
            if isinstance(original, CorpusIntegrityError):
                raise original
        raise CorpusFormatError(f"Corpus {source} violates the schema: {e}")

    logger.debug(
        f"Loaded corpus {source}: {len(corpus.images)} images, "
        f"{len(corpus.questions)} questions"
    )
    return corpus


def corpus_to_dict(corpus: VQACorpus) -> Dict:
    """Plain JSON structure with a fixed key order."""
    return {
        "metadata": dict(sorted(corpus.metadata.items())),
        "images": [image.model_dump(mode="json") for image in corpus.images],
        "questions": [question.model_dump(mode="json") for question in corpus.questions],
    }


def save_corpus(corpus: VQACorpus, path: Union[str, Path]) -> Path:
    """Write a corpus as deterministic UTF-8 JSON."""
    path = write_json(corpus_to_dict(corpus), path)
    logger.info(f"Wrote corpus {path} ({len(corpus.questions)} questions)")
    return path


def build_answer_vocab(corpus: VQACorpus) -> AnswerVocabulary:
    """
    Build the answer pool from the training split.

    Raises:
        CorpusError: If the training split has no questions
    """
    splits = corpus.image_splits()
    answers = {q.answer for q in corpus.questions if splits[q.img_id] == Split.TRAIN}
    if not answers:
        raise CorpusError("Cannot build answer vocabulary: training split is empty")
    return AnswerVocabulary(answers=tuple(sorted(answers)))


def paraphrase_groups(corpus: VQACorpus) -> List[ParaphraseGroup]:
    """Group every original question with its paraphrases, ordered by id."""
    members: Dict[int, List[QuestionRecord]] = {}
    for question in corpus.questions:
        if question.origin_id is not None:
            members.setdefault(question.origin_id, []).append(question)

    groups = []
    for original in sorted(corpus.originals(), key=lambda q: q.id):
        paraphrases = sorted(members.get(original.id, []), key=lambda q: q.id)
        groups.append(ParaphraseGroup(original=original, paraphrases=tuple(paraphrases)))
    return groups


def filter_questions(
    corpus: VQACorpus,
    split: Union[Split, str],
    question_filter: Union[QuestionFilter, str] = QuestionFilter.ALL,
    pivot: Optional[Union[Pivot, str]] = None,
) -> List[QuestionRecord]:
    """Questions of one split, ordered by id, restricted by provenance."""
    split = Split(split)
    question_filter = QuestionFilter(question_filter)
    pivot = Pivot(pivot) if pivot is not None else None
    splits = corpus.image_splits()

    selected = []
    for question in corpus.questions:
        if splits[question.img_id] != split:
            continue
        if question_filter == QuestionFilter.ORIGINALS_ONLY and not question.is_original:
            continue
        if question_filter == QuestionFilter.PARAPHRASES_ONLY and question.is_original:
            continue
        if pivot is not None and question.pivot != pivot:
            continue
        selected.append(question)
    return sorted(selected, key=lambda q: q.id)


def corpus_summary(corpus: VQACorpus) -> Dict[str, object]:
    """Counts per split, type and pivot plus the number of distinct answers."""
    splits = corpus.image_splits()
    df = pd.DataFrame(
        [
            {
                "split": splits[q.img_id].value,
                "type": q.type.value,
                "pivot": q.pivot.value,
                "answer": q.answer,
                "original": q.is_original,
            }
            for q in corpus.questions
        ],
        columns=["split", "type", "pivot", "answer", "original"],
    )
    return {
        "images": len(corpus.images),
        "questions": len(corpus.questions),
        "originals": int(df["original"].sum()) if len(df) else 0,
        "distinct_answers": int(df["answer"].nunique()) if len(df) else 0,
        "by_split": {k: int(v) for k, v in sorted(df["split"].value_counts().items())},
        "by_type": {k: int(v) for k, v in sorted(df["type"].value_counts().items())},
        "by_pivot": {k: int(v) for k, v in sorted(df["pivot"].value_counts().items())},
    }


class ImageStore:
    """Loads corpus images as float arrays in [0, 1] (H x W x C), cached per image id."""

    def __init__(
        self,
        corpus: VQACorpus,
        root: Optional[Union[str, Path]] = None,
        arrays: Optional[Dict[int, np.ndarray]] = None,
    ):
        self.root = Path(root) if root is not None else Path(".")
        self._files = {image.id: image.file for image in corpus.images}
        self._cache: Dict[int, np.ndarray] = dict(arrays or {})
        self._lock = threading.Lock()

    @classmethod
    def for_corpus_file(cls, corpus: VQACorpus, corpus_path: Union[str, Path]) -> "ImageStore":
        return cls(corpus, root=Path(corpus_path).parent)

    def get(self, img_id: int) -> np.ndarray:
        with self._lock:
            cached = self._cache.get(img_id)
        if cached is not None:
            return cached

        if img_id not in self._files:
            raise CorpusIntegrityError(f"Unknown image id {img_id}")
        path = self.root / self._files[img_id]
        try:
            with Image.open(path) as img:
                array = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
        except (OSError, ValueError) as e:
            raise CorpusFormatError(f"Cannot read image {img_id} at {path}: {e}")
        if array.ndim != 3 or array.shape[0] == 0 or array.shape[1] == 0:
            raise CorpusFormatError(f"Image {img_id} at {path} has invalid shape {array.shape}")

        with self._lock:
            self._cache[img_id] = array
        return array


@dataclass
class SampleBatch:
    """
    One training/evaluation batch.

    ``labels`` holds answer-pool indices; answers outside the pool are -1.
    """

    images: List[np.ndarray]
    question_texts: List[str]
    paraphrase_texts: List[str]
    labels: List[int]
    ids: List[int]
    types: List[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        sizes = {
            len(self.images),
            len(self.question_texts),
            len(self.paraphrase_texts),
            len(self.labels),
            len(self.ids),
        }
        if len(sizes) != 1 or not self.ids:
            raise ValueError(f"Batch fields must have equal non-zero length, got {sorted(sizes)}")

    def __len__(self) -> int:
        return len(self.ids)


class BatchSampler:
    """
    Seeded epoch iterator over the original questions of one split.

    Every call to :meth:`epoch` reshuffles the originals and draws a fresh
    paraphrase per sample from the sampler's own generator.
    """

    def __init__(
        self,
        corpus: VQACorpus,
        split: Union[Split, str],
        batch_size: int,
        seed: int = 0,
        answers: Optional[AnswerVocabulary] = None,
        images: Optional[ImageStore] = None,
        rng: Optional[np.random.Generator] = None,
    ):
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        self.split = Split(split)
        self.batch_size = batch_size
        self.answers = answers if answers is not None else build_answer_vocab(corpus)
        self.images = images if images is not None else ImageStore(corpus)
        self.rng = rng if rng is not None else np.random.default_rng(seed)

        splits = corpus.image_splits()
        self.groups = [
            group
            for group in paraphrase_groups(corpus)
            if splits[group.original.img_id] == self.split
        ]
        if not self.groups:
            raise CorpusError(f"Split '{self.split.value}' has no original questions")

    def __len__(self) -> int:
        return -(-len(self.groups) // self.batch_size)

    def _paraphrase_text(self, group: ParaphraseGroup) -> str:
        if not group.paraphrases:
            return group.original.text
        return group.paraphrases[int(self.rng.integers(len(group.paraphrases)))].text

    def epoch(self) -> List[SampleBatch]:
        order = self.rng.permutation(len(self.groups))
        index = self.answers.index
        batches = []
        for start in range(0, len(order), self.batch_size):
            chunk = [self.groups[i] for i in order[start : start + self.batch_size]]
            batches.append(
                SampleBatch(
                    images=[self.images.get(g.original.img_id) for g in chunk],
                    question_texts=[g.original.text for g in chunk],
                    paraphrase_texts=[self._paraphrase_text(g) for g in chunk],
                    labels=[index.get(g.original.answer, -1) for g in chunk],
                    ids=[g.original.id for g in chunk],
                    types=[g.original.type.value for g in chunk],
                )
            )
        return batches


def make_batches(
    corpus: VQACorpus,
    split: Union[Split, str],
    batch_size: int,
    seed: int = 0,
    rng: Optional[np.random.Generator] = None,
    answers: Optional[AnswerVocabulary] = None,
    images: Optional[ImageStore] = None,
) -> Sequence[SampleBatch]:
    """
    Assemble one epoch of batches over the split's original questions.

    The order is a seeded shuffle and each sample's paraphrase text is drawn
    uniformly from its group (the original text for singleton groups). The
    last batch may be short.
    """
    sampler = BatchSampler(
        corpus,
        split,
        batch_size,
        seed=seed,
        answers=answers,
        images=images,
        rng=rng,
    )
    return sampler.epoch()
