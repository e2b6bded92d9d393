"""Back-translation augmentation with normalization, deduplication and provenance tagging."""

import asyncio
import logging
import re
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

from ..schema.corpus import (
    DedupPolicy,
    DropReport,
    ParaphraseGroup,
    Pivot,
    QuestionRecord,
    Split,
    VQACorpus,
)
from ..util import CorpusIntegrityError, TranslationError, write_json
from .dataset import paraphrase_groups, parse_corpus, corpus_to_dict
from .mt_clients import SOURCE_LANGUAGE, Translator

logger = logging.getLogger(__name__)

_WHITESPACE = re.compile(r"\s+")
_TERMINAL_PUNCT = " ?.!;:,"


def normalize_question(text: str) -> str:
    """Lowercase, collapse whitespace and strip terminal punctuation."""
    text = _WHITESPACE.sub(" ", text.lower()).strip()
    return text.rstrip(_TERMINAL_PUNCT).strip()


def is_duplicate(
    candidate: str,
    original: str,
    siblings: Iterable[str],
    policy: Optional[DedupPolicy] = None,
) -> bool:
    """True when the policy drops ``candidate`` as equal to the original or a sibling."""
    return _duplicate_reason(candidate, original, siblings, policy or DedupPolicy()) is not None


def _duplicate_reason(
    candidate: str,
    original: str,
    siblings: Iterable[str],
    policy: DedupPolicy,
) -> Optional[str]:
    norm = normalize_question if policy.normalize else (lambda s: s)
    key = norm(candidate)
    if policy.drop_equal_to_original and key == norm(original):
        return "equal_original"
    if policy.drop_equal_across_pivots and key in {norm(s) for s in siblings}:
        return "equal_sibling"
    return None


def back_translate(text: str, pivot: Union[Pivot, str], translator: Translator) -> str:
    """
    Translate English text into ``pivot`` and back into English.

    Raises:
        ValueError: If the text is empty
        TranslationError: If the translator fails or returns an empty string
    """
    pivot = pivot.value if isinstance(pivot, Pivot) else str(pivot)
    if not text.strip():
        raise ValueError("Cannot back-translate empty text")
    if pivot == Pivot.NONE.value:
        raise ValueError("Pivot 'none' is not a language")

    try:
        forward = translator.translate(text, SOURCE_LANGUAGE, pivot)
        result = translator.translate(forward, pivot, SOURCE_LANGUAGE)
    except TranslationError as e:
        raise e.with_context(pivot=pivot, text=text) from e
    except OSError as e:
        raise TranslationError(f"Translator I/O failure: {e}", pivot=pivot, text=text) from e

    if not result.strip():
        raise TranslationError("Translator returned an empty round trip", pivot=pivot, text=text)
    return result


async def _translate_pivot(
    texts: Sequence[str],
    pivot: str,
    translator: Translator,
    concurrency: int,
) -> Dict[str, str]:
    """Back-translate distinct texts through one pivot with bounded fan-out."""
    semaphore = asyncio.Semaphore(concurrency)

    async def one(text: str) -> str:
        async with semaphore:
            return await asyncio.to_thread(back_translate, text, pivot, translator)

    results = await asyncio.gather(*(one(t) for t in texts), return_exceptions=True)
    for result in results:
        if isinstance(result, BaseException):
            raise result
    return dict(zip(texts, results))  # type: ignore[arg-type]


def _metadata_key(name: str, pivot: str) -> str:
    return f"augmentation.{name}.{pivot}"


async def augment_corpus_async(
    corpus: VQACorpus,
    pivots: Sequence[Union[Pivot, str]],
    translator: Translator,
    policy: Optional[DedupPolicy] = None,
    id_base: Optional[int] = None,
    concurrency: int = 4,
    splits: Optional[Iterable[Union[Split, str]]] = None,
) -> VQACorpus:
    """
    Add one back-translated paraphrase per original question and pivot.

    Every pivot's translations finish before any record is emitted; a
    translator failure aborts the whole call. New ids are allocated from
    ``id_base`` in (original id, pivot) order.

    Args:
        corpus: Input corpus, left untouched
        pivots: Pivot language codes in processing order
        translator: Backend used for both directions
        policy: Deduplication rules (defaults: all on)
        id_base: First fresh question id (default: max existing id + 1)
        concurrency: Concurrent translation requests
        splits: Restrict augmentation to originals of these splits

    Returns:
        A new corpus holding all input records plus the kept paraphrases

    Raises:
        TranslationError: If any translation fails
        CorpusIntegrityError: If ``id_base`` collides with existing ids
    """
    policy = policy or DedupPolicy()
    pivot_codes = [Pivot(p).value for p in pivots]
    if not pivot_codes:
        return corpus
    if Pivot.NONE.value in pivot_codes:
        raise ValueError("Pivot 'none' cannot be used for back-translation")
    if len(set(pivot_codes)) != len(pivot_codes):
        raise ValueError(f"Duplicate pivots in {pivot_codes}")

    max_id = max((q.id for q in corpus.questions), default=-1)
    next_id = max_id + 1 if id_base is None else id_base
    if next_id <= max_id:
        raise CorpusIntegrityError(
            f"id_base {next_id} collides with existing question ids (max {max_id})"
        )

    image_splits = corpus.image_splits()
    wanted = {Split(s) for s in splits} if splits is not None else set(Split)
    groups: List[ParaphraseGroup] = [
        g for g in paraphrase_groups(corpus) if image_splits[g.original.img_id] in wanted
    ]
    distinct_texts = sorted({g.original.text for g in groups})

    translations: Dict[str, Dict[str, str]] = {}
    for pivot in pivot_codes:
        logger.info(f"Back-translating {len(distinct_texts)} distinct questions via {pivot}")
        translations[pivot] = await _translate_pivot(
            distinct_texts, pivot, translator, max(concurrency, 1)
        )

    reports = {pivot: DropReport(pivot=pivot) for pivot in pivot_codes}
    new_questions: List[QuestionRecord] = []
    for group in groups:
        original = group.original
        siblings = [p.text for p in group.paraphrases]
        existing = {(p.pivot.value, p.text) for p in group.paraphrases}
        for pivot in pivot_codes:
            candidate = translations[pivot][original.text]
            reason = _duplicate_reason(candidate, original.text, siblings, policy)
            if reason is None and (pivot, candidate) in existing:
                reason = "equal_sibling"
            if reason is not None:
                reports[pivot].dropped += 1
                reports[pivot].reasons[reason] += 1
                continue
            new_questions.append(
                QuestionRecord(
                    id=next_id,
                    img_id=original.img_id,
                    type=original.type,
                    text=candidate,
                    answer=original.answer,
                    origin_id=original.id,
                    pivot=Pivot(pivot),
                )
            )
            next_id += 1
            siblings.append(candidate)
            existing.add((pivot, candidate))

    metadata = dict(corpus.metadata)
    previous = [p for p in metadata.get("augmentation.pivots", "").split(",") if p]
    metadata["augmentation.pivots"] = ",".join(previous + [p for p in pivot_codes if p not in previous])
    for pivot, report in reports.items():
        metadata[_metadata_key("dropped", pivot)] = str(report.dropped)
        for reason, count in report.reasons.items():
            metadata[_metadata_key(reason, pivot)] = str(count)
        logger.info(
            f"Pivot {pivot}: kept {len(groups) - report.dropped}, dropped {report.dropped} "
            f"({report.reasons['equal_original']} equal to original, "
            f"{report.reasons['equal_sibling']} equal to sibling)"
        )

    augmented = corpus_to_dict(corpus)
    augmented["metadata"] = metadata
    augmented["questions"].extend(q.model_dump(mode="json") for q in new_questions)
    return parse_corpus(augmented, source="augmented corpus")


def augment_corpus(
    corpus: VQACorpus,
    pivots: Sequence[Union[Pivot, str]],
    translator: Translator,
    policy: Optional[DedupPolicy] = None,
    id_base: Optional[int] = None,
    concurrency: int = 4,
    splits: Optional[Iterable[Union[Split, str]]] = None,
) -> VQACorpus:
    """Synchronous wrapper around :func:`augment_corpus_async`."""
    return asyncio.run(
        augment_corpus_async(
            corpus,
            pivots,
            translator,
            policy=policy,
            id_base=id_base,
            concurrency=concurrency,
            splits=splits,
        )
    )


def drop_reports(corpus: VQACorpus) -> List[DropReport]:
    """Per-pivot drop reports recorded in an augmented corpus' metadata."""
    pivots = [p for p in corpus.metadata.get("augmentation.pivots", "").split(",") if p]
    reports = []
    for pivot in pivots:
        reports.append(
            DropReport(
                pivot=pivot,
                dropped=int(corpus.metadata.get(_metadata_key("dropped", pivot), 0)),
                reasons={
                    reason: int(corpus.metadata.get(_metadata_key(reason, pivot), 0))
                    for reason in ("equal_original", "equal_sibling")
                },
            )
        )
    return reports


def write_drop_report(reports: Sequence[DropReport], path: Union[str, Path]) -> Path:
    """Write the sidecar drop report, one entry per pivot."""
    return write_json([r.model_dump() for r in reports], path)


def expected_question_count(originals: int, drops: Dict[str, int]) -> int:
    """Question count after augmentation: originals plus kept paraphrases per pivot."""
    return originals + sum(originals - dropped for dropped in drops.values())

