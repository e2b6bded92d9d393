#!/usr/bin/env python3
"""Tests for corpus loading, answer pools, paraphrase groups and batch assembly."""

import json
from collections import Counter

import numpy as np
import pytest
from PIL import Image
from scipy.stats import chisquare

from conftest import blank_arrays, corpus_dict
from rsvqa_aug.pipeline.dataset import (
    BatchSampler,
    ImageStore,
    build_answer_vocab,
    corpus_summary,
    filter_questions,
    load_corpus,
    make_batches,
    paraphrase_groups,
    parse_corpus,
    save_corpus,
)
from rsvqa_aug.schema.corpus import AnswerVocabulary, QuestionFilter, Split
from rsvqa_aug.util import CorpusError, CorpusFormatError, CorpusIntegrityError


def _originals(n, img_id=0, answer="yes", start=0):
    return [
        {"id": start + i, "img_id": img_id, "type": "presence", "text": f"is there a road {i}?", "answer": answer}
        for i in range(n)
    ]


def test_load_corpus(tmp_path):
    """Test loading and saving corpus files."""
    print("\n=== Testing load_corpus ===")

    # Test 1: 2 images, 3 originals round trip field for field
    doc = corpus_dict(
        [
            {"id": 0, "img_id": 0, "type": "presence", "text": "is there a road?", "answer": "yes"},
            {"id": 1, "img_id": 0, "type": "count", "text": "how many roads are there?", "answer": "2"},
            {"id": 2, "img_id": 1, "type": "comparison", "text": "are there more roads than buildings?", "answer": "no"},
        ],
        metadata={"source": "fixture"},
    )
    path = tmp_path / "corpus.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    corpus = load_corpus(path)
    assert len(corpus.images) == 2
    assert len(corpus.questions) == 3
    print("✓ Fixture loaded")

    # Test 2: save and reload is equal, and saving twice is byte-identical
    first = save_corpus(corpus, tmp_path / "a.json")
    second = save_corpus(load_corpus(first), tmp_path / "b.json")
    assert load_corpus(first) == corpus
    assert first.read_bytes() == second.read_bytes()
    print("✓ Round trip preserved")

    # Test 3: missing file and invalid JSON
    with pytest.raises(CorpusFormatError):
        load_corpus(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    with pytest.raises(CorpusFormatError):
        load_corpus(bad)
    print("✓ Parse errors reported")


def test_corpus_validation():
    """Test schema and referential integrity checks."""
    print("\n=== Testing corpus validation ===")

    # Test 1: unknown image id is named in the error
    doc = corpus_dict([{"id": 0, "img_id": 99, "type": "presence", "text": "is there a road?", "answer": "yes"}])
    with pytest.raises(CorpusIntegrityError, match="99"):
        parse_corpus(doc)

    # Test 2: unknown type and pivot literals
    doc = corpus_dict([{"id": 0, "img_id": 0, "type": "presense", "text": "is there a road?", "answer": "yes"}])
    with pytest.raises(CorpusFormatError):
        parse_corpus(doc)
    doc = corpus_dict(
        [
            {"id": 0, "img_id": 0, "type": "presence", "text": "is there a road?", "answer": "yes"},
            {"id": 1, "img_id": 0, "type": "presence", "text": "x?", "answer": "yes", "origin_id": 0, "pivot": "es"},
        ]
    )
    with pytest.raises(CorpusFormatError):
        parse_corpus(doc)

    # Test 2b: whitespace-only text has no tokens and is rejected on load
    doc = corpus_dict([{"id": 0, "img_id": 0, "type": "presence", "text": " \t ", "answer": "yes"}])
    with pytest.raises(CorpusFormatError, match="blank"):
        parse_corpus(doc)

    # Test 3: duplicate question id
    doc = corpus_dict(_originals(2) + [{"id": 1, "img_id": 0, "type": "count", "text": "how many?", "answer": "1"}])
    with pytest.raises(CorpusIntegrityError, match="1"):
        parse_corpus(doc)

    # Test 4: paraphrase must agree with its origin
    doc = corpus_dict(
        _originals(1)
        + [{"id": 5, "img_id": 0, "type": "presence", "text": "a road?", "answer": "no", "origin_id": 0, "pivot": "de"}]
    )
    with pytest.raises(CorpusIntegrityError, match="5"):
        parse_corpus(doc)

    # Test 5: pivot none with an origin id
    doc = corpus_dict(
        _originals(1)
        + [{"id": 5, "img_id": 0, "type": "presence", "text": "a road?", "answer": "yes", "origin_id": 0}]
    )
    with pytest.raises(CorpusIntegrityError):
        parse_corpus(doc)

    # Test 6: paraphrase of a paraphrase
    doc = corpus_dict(
        _originals(1)
        + [
            {"id": 5, "img_id": 0, "type": "presence", "text": "a road?", "answer": "yes", "origin_id": 0, "pivot": "de"},
            {"id": 6, "img_id": 0, "type": "presence", "text": "road?", "answer": "yes", "origin_id": 5, "pivot": "fr"},
        ]
    )
    with pytest.raises(CorpusIntegrityError, match="6"):
        parse_corpus(doc)
    print("✓ Integrity violations rejected")


def test_build_answer_vocab(make_corpus):
    """Test answer pool construction."""
    print("\n=== Testing build_answer_vocab ===")

    # Test 1: dedup and sort
    corpus = make_corpus(
        [
            {"id": 0, "img_id": 0, "type": "presence", "text": "a?", "answer": "yes"},
            {"id": 1, "img_id": 0, "type": "presence", "text": "b?", "answer": "no"},
            {"id": 2, "img_id": 0, "type": "presence", "text": "c?", "answer": "yes"},
            {"id": 3, "img_id": 1, "type": "presence", "text": "d?", "answer": "maybe"},
        ]
    )
    vocab = build_answer_vocab(corpus)
    assert vocab.answers == ("no", "yes")
    assert vocab.index == {"no": 0, "yes": 1}
    print("✓ Vocabulary:", vocab.answers)

    # Test 2: test-split answers stay out of the pool
    assert "maybe" not in vocab

    # Test 3: empty training split
    test_only = make_corpus(_originals(2, img_id=1))
    with pytest.raises(CorpusError):
        build_answer_vocab(test_only)


def test_paraphrase_groups(make_corpus, tiny_corpus):
    """Test grouping originals with paraphrases."""
    print("\n=== Testing paraphrase_groups ===")

    # Test 1: one original with zh/de/fr paraphrases forms a group of 4
    corpus = make_corpus(
        _originals(1)
        + [
            {"id": 10 + k, "img_id": 0, "type": "presence", "text": f"variant {pivot}?", "answer": "yes",
             "origin_id": 0, "pivot": pivot}
            for k, pivot in enumerate(["zh", "de", "fr"])
        ]
    )
    groups = paraphrase_groups(corpus)
    assert len(groups) == 1
    assert len(groups[0]) == 4
    assert all(m.img_id == 0 and m.answer == "yes" for m in groups[0].members)

    # Test 2: singleton groups for originals without paraphrases
    groups = {g.original.id: g for g in paraphrase_groups(tiny_corpus)}
    assert len(groups) == 3
    assert len(groups[1]) == 1
    assert [p.id for p in groups[0].paraphrases] == [3]

    # Test 3: 100 originals and 250 paraphrases -> 100 groups, 350 members
    questions = _originals(100)
    next_id = 100
    for origin in range(100):
        for pivot in ["zh", "de", "fr"][: 3 if origin < 50 else 2]:
            questions.append({"id": next_id, "img_id": 0, "type": "presence", "text": f"p{next_id}?",
                              "answer": "yes", "origin_id": origin, "pivot": pivot})
            next_id += 1
    corpus = make_corpus(questions)
    groups = paraphrase_groups(corpus)
    assert len(groups) == 100
    assert sum(len(g) for g in groups) == 350
    print("✓ Groups counted")


def test_filter_questions(tiny_corpus):
    """Test provenance filters partition a split."""
    print("\n=== Testing filter_questions ===")

    originals = filter_questions(tiny_corpus, Split.TRAIN, QuestionFilter.ORIGINALS_ONLY)
    paraphrases = filter_questions(tiny_corpus, Split.TRAIN, QuestionFilter.PARAPHRASES_ONLY)
    everything = filter_questions(tiny_corpus, Split.TRAIN, QuestionFilter.ALL)
    assert len(originals) + len(paraphrases) == len(everything) == 3
    assert [q.id for q in filter_questions(tiny_corpus, "train", "all", pivot="zh")] == [3]
    assert [q.id for q in filter_questions(tiny_corpus, Split.TEST)] == [2]


def test_corpus_summary(tiny_corpus):
    summary = corpus_summary(tiny_corpus)
    assert summary["images"] == 2
    assert summary["questions"] == 4
    assert summary["originals"] == 3
    assert summary["by_pivot"] == {"none": 3, "zh": 1}
    assert summary["by_split"] == {"test": 1, "train": 3}


def test_make_batches(make_corpus):
    """Test seeded batch assembly."""
    print("\n=== Testing make_batches ===")
    corpus = make_corpus(_originals(5))
    images = ImageStore(corpus, arrays=blank_arrays(2))

    # Test 1: 5 originals, B=2 -> sizes [2, 2, 1], identical across calls
    first = make_batches(corpus, Split.TRAIN, 2, seed=7, images=images)
    second = make_batches(corpus, Split.TRAIN, 2, seed=7, images=images)
    assert [len(b) for b in first] == [2, 2, 1]
    assert [b.ids for b in first] == [b.ids for b in second]
    assert [b.paraphrase_texts for b in first] == [b.paraphrase_texts for b in second]
    print("✓ Deterministic batches:", [b.ids for b in first])

    # Test 2: every original exactly once per epoch
    ids = [i for b in first for i in b.ids]
    assert sorted(ids) == [0, 1, 2, 3, 4]

    # Test 3: singleton groups fall back to the original text
    for batch in first:
        assert batch.paraphrase_texts == batch.question_texts

    # Test 4: answers outside a supplied pool are labelled -1
    pool = AnswerVocabulary(answers=("no",))
    batch = make_batches(corpus, Split.TRAIN, 5, seed=0, answers=pool, images=images)[0]
    assert batch.labels == [-1] * 5

    # Test 5: empty split and invalid batch size
    with pytest.raises(CorpusError):
        make_batches(corpus, Split.VAL, 2, images=images)
    with pytest.raises(ValueError):
        make_batches(corpus, Split.TRAIN, 0, images=images)


def test_paraphrase_draws_are_uniform(make_corpus):
    """Test that paraphrase draws are uniform over a group."""
    print("\n=== Testing paraphrase draw frequencies ===")
    questions = _originals(1) + [
        {"id": 10 + k, "img_id": 0, "type": "presence", "text": f"variant {k}?", "answer": "yes",
         "origin_id": 0, "pivot": pivot}
        for k, pivot in enumerate(["zh", "de", "fr"])
    ]
    corpus = make_corpus(questions)
    sampler = BatchSampler(corpus, Split.TRAIN, 1, seed=123, images=ImageStore(corpus, arrays=blank_arrays(2)))

    draws = Counter(sampler.epoch()[0].paraphrase_texts[0] for _ in range(3000))
    assert set(draws) == {"variant 0?", "variant 1?", "variant 2?"}
    for text, count in draws.items():
        assert 0.30 <= count / 3000 <= 0.37, (text, count)
    statistic, _ = chisquare(list(draws.values()))
    assert statistic < 20
    print("✓ Draw counts:", dict(draws))


def test_image_store(tmp_path, make_corpus):
    """Test image loading from PNG files."""
    corpus = make_corpus(_originals(1))
    (tmp_path / "images").mkdir()
    pixels = np.zeros((8, 6, 3), dtype=np.uint8)
    pixels[0, 0] = [255, 0, 0]
    Image.fromarray(pixels, "RGB").save(tmp_path / "images" / "0.png")

    store = ImageStore(corpus, root=tmp_path)
    array = store.get(0)
    assert array.shape == (8, 6, 3)
    assert array.dtype == np.float32
    assert array[0, 0, 0] == 1.0 and array.max() == 1.0 and array.min() == 0.0
    assert store.get(0) is array

    with pytest.raises(CorpusFormatError):
        store.get(1)
    with pytest.raises(CorpusIntegrityError):
        store.get(42)
