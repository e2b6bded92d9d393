#!/usr/bin/env python3
"""Tests for back-translation augmentation and deduplication."""

import json
import threading

import pytest

from rsvqa_aug.pipeline.augmentation import (
    augment_corpus,
    augment_corpus_async,
    back_translate,
    drop_reports,
    expected_question_count,
    is_duplicate,
    normalize_question,
    write_drop_report,
)
from rsvqa_aug.pipeline.dataset import save_corpus
from rsvqa_aug.pipeline.mt_clients import MockTranslator
from rsvqa_aug.schema.corpus import DedupPolicy, Pivot
from rsvqa_aug.util import CorpusIntegrityError, TranslationError


class CountingTranslator:
    """Mock translator that counts calls per direction."""

    def __init__(self, inner=None):
        self.inner = inner or MockTranslator()
        self.calls = []
        self._lock = threading.Lock()

    def translate(self, text, src, dst):
        with self._lock:
            self.calls.append((text, src, dst))
        return self.inner.translate(text, src, dst)


class FailingTranslator:
    """Mock translator that fails for one pivot."""

    def __init__(self, failing_pivot):
        self.failing_pivot = failing_pivot

    def translate(self, text, src, dst):
        if self.failing_pivot in (src, dst):
            raise TranslationError("service unavailable", endpoint="http://stub")
        return MockTranslator().translate(text, src, dst)


@pytest.fixture
def hundred_originals(make_corpus):
    """90 counting questions plus 10 rural/urban questions whose zh round trip is unchanged."""
    questions = []
    for i in range(100):
        if i < 90:
            questions.append({"id": i, "img_id": i % 2, "type": "count",
                              "text": "how many buildings are there?", "answer": str(i % 5)})
        else:
            questions.append({"id": i, "img_id": i % 2, "type": "rural_urban",
                              "text": "is it a rural or an urban area?", "answer": "urban"})
    return make_corpus(questions)


def test_normalize_and_is_duplicate():
    """Test normalization and duplicate rules."""
    print("\n=== Testing is_duplicate ===")

    # Test 1: normalization identity
    assert normalize_question("  How   many roads ? ") == "how many roads"
    assert is_duplicate("How many roads?", "how many roads ?", [])

    # Test 2: one word differs
    assert not is_duplicate("how many streets?", "how many roads?", [])

    # Test 3: equal to a sibling from an earlier pivot
    assert is_duplicate("is there a road or not?", "is there a road?", ["Is there a road or not"])
    policy = DedupPolicy(drop_equal_across_pivots=False)
    assert not is_duplicate("is there a road or not?", "is there a road?", ["is there a road or not?"], policy)

    # Test 4: normalization off compares verbatim
    policy = DedupPolicy(normalize=False)
    assert not is_duplicate("How many roads?", "how many roads ?", [], policy)
    assert is_duplicate("how many roads ?", "how many roads ?", [], policy)
    print("✓ Duplicate rules applied")


def test_back_translate():
    """Test single round trips through the mock translator."""
    print("\n=== Testing back_translate ===")
    translator = MockTranslator()

    # Test 1: zh template rewrite
    assert back_translate("how many water areas are there?", Pivot.ZH, translator) == "what is the number of water areas?"

    # Test 2: unchanged round trip
    assert back_translate("is it a rural or an urban area?", "zh", translator) == "is it a rural or an urban area?"

    # Test 3: comparison rephrased through de
    result = back_translate("Are there more buildings than roads?", "de", translator)
    assert result == "are there more buildings in comparison to roads?"

    # Test 4: errors carry pivot and text context
    with pytest.raises(TranslationError) as excinfo:
        back_translate("is there a road?", "fr", FailingTranslator("fr"))
    assert excinfo.value.pivot == "fr"
    assert excinfo.value.text == "is there a road?"
    assert "http://stub" in str(excinfo.value)
    with pytest.raises(ValueError):
        back_translate("   ", "zh", translator)
    print("✓ Round trips:", result)


def test_augment_counts(hundred_originals):
    """Test the 390/400 augmentation arithmetic."""
    print("\n=== Testing augment_corpus counts ===")

    # Test 1: 10 zh round trips equal their originals
    augmented = augment_corpus(hundred_originals, ["zh", "de", "fr"], MockTranslator())
    assert len(augmented.questions) == 390
    reports = {r.pivot: r.dropped for r in drop_reports(augmented)}
    assert reports == {"zh": 10, "de": 0, "fr": 0}
    assert augmented.metadata["augmentation.pivots"] == "zh,de,fr"
    assert augmented.metadata["augmentation.equal_original.zh"] == "10"
    print("✓ 390 questions, drops:", reports)

    # Test 2: dedup disabled keeps everything
    policy = DedupPolicy(normalize=False, drop_equal_to_original=False, drop_equal_across_pivots=False)
    augmented = augment_corpus(hundred_originals, ["zh", "de", "fr"], MockTranslator(), policy=policy)
    assert len(augmented.questions) == 400

    # Test 3: counting identity of the full-scale corpus
    assert expected_question_count(77232, {"zh": 77232 - 66909, "de": 77232 - 66909, "fr": 77232 - 66908}) == 277958
    assert expected_question_count(100, {"zh": 10, "de": 0, "fr": 0}) == 390


def test_augment_invariants(hundred_originals, tmp_path):
    """Test provenance, id allocation and purity."""
    print("\n=== Testing augment_corpus invariants ===")
    augmented = augment_corpus(hundred_originals, ["zh", "de", "fr"], MockTranslator(), id_base=1000)

    # Test 1: inputs are kept unchanged and first in order
    assert augmented.questions[:100] == hundred_originals.questions

    # Test 2: fresh ids from id_base in (original id, pivot) order
    new = augmented.questions[100:]
    assert [q.id for q in new] == list(range(1000, 1290))
    assert [(q.origin_id, q.pivot.value) for q in new[:3]] == [(0, "zh"), (0, "de"), (0, "fr")]
    origins = augmented.question_index()
    for q in new:
        origin = origins[q.origin_id]
        assert (q.img_id, q.type, q.answer) == (origin.img_id, origin.type, origin.answer)
        assert normalize_question(q.text) != normalize_question(origin.text)

    # Test 3: answer multiset over originals unchanged
    assert sorted(q.answer for q in augmented.originals()) == sorted(q.answer for q in hundred_originals.questions)

    # Test 4: byte-identical output across runs
    again = augment_corpus(hundred_originals, ["zh", "de", "fr"], MockTranslator(), id_base=1000)
    a = save_corpus(augmented, tmp_path / "a.json")
    b = save_corpus(again, tmp_path / "b.json")
    assert a.read_bytes() == b.read_bytes()

    # Test 5: colliding id_base
    with pytest.raises(CorpusIntegrityError):
        augment_corpus(hundred_originals, ["zh"], MockTranslator(), id_base=50)
    print("✓ Invariants hold")


def test_augment_edge_cases(hundred_originals, tiny_corpus):
    """Test empty pivots, failures and cross-pivot duplicates."""

    # Test 1: no pivots returns the input
    assert augment_corpus(hundred_originals, [], MockTranslator()) == hundred_originals

    # Test 2: a failing pivot emits nothing
    with pytest.raises(TranslationError):
        augment_corpus(hundred_originals, ["zh", "fr"], FailingTranslator("fr"))

    # Test 3: zh round trip of question 0 equals its existing zh paraphrase -> dropped as sibling
    augmented = augment_corpus(tiny_corpus, ["zh"], MockTranslator())
    report = drop_reports(augmented)[0]
    assert report.reasons["equal_sibling"] == 1
    assert len(augmented.questions) == len(tiny_corpus.questions) + 3 - report.dropped

    # Test 4: distinct texts are translated once per pivot
    translator = CountingTranslator()
    augment_corpus(hundred_originals, ["de"], translator)
    assert len(translator.calls) == 4


async def test_augment_corpus_async(hundred_originals):
    """Test the async entry point with bounded concurrency."""
    print("\n=== Testing augment_corpus_async ===")
    translator = CountingTranslator()
    augmented = await augment_corpus_async(hundred_originals, [Pivot.FR], translator, concurrency=2)
    assert len(augmented.questions) == 200
    texts = {q.text for q in augmented.questions if q.pivot == Pivot.FR}
    assert texts == {"what quantity of buildings are there?", "is this area rural or urban?"}
    print("✓ fr paraphrases:", sorted(texts))


def test_write_drop_report(hundred_originals, tmp_path):
    augmented = augment_corpus(hundred_originals, ["zh", "de"], MockTranslator())
    path = write_drop_report(drop_reports(augmented), tmp_path / "drops.json")
    data = json.loads(path.read_text(encoding="utf-8"))
    assert data == [
        {"pivot": "zh", "dropped": 10, "reasons": {"equal_original": 10, "equal_sibling": 0}},
        {"pivot": "de", "dropped": 0, "reasons": {"equal_original": 0, "equal_sibling": 0}},
    ]
