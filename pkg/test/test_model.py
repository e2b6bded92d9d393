#!/usr/bin/env python3
"""Tests for tokenization, the encoders, fusion, classification and checkpoints."""

import numpy as np
import pytest
import torch

from conftest import finite_difference_error
from rsvqa_aug.pipeline.model import (
    PAD_INDEX,
    UNK_INDEX,
    Checkpoint,
    TextVocab,
    build_model,
    build_text_vocab,
    classify,
    encode_image,
    encode_question,
    forward,
    fuse,
    images_to_tensor,
    questions_to_tensor,
    split_tokens,
    tokenize,
)
from rsvqa_aug.schema.config import ModelDims
from rsvqa_aug.schema.corpus import AnswerVocabulary
from rsvqa_aug.util import CorpusError, ModelShapeError

SMALL_DIMS = ModelDims(image_size=8, conv1=3, conv2=4, d_v=5, embed_dim=4, d_t=5, d_f=6)
VOCAB = TextVocab.from_tokens(["how", "many", "roads", "?", "is", "there", "a", "road"])


def _small_model(seed=0, precision="float64", num_answers=3):
    return build_model(SMALL_DIMS, len(VOCAB), num_answers, seed=seed, precision=precision)


def _images(n, size=8, seed=0):
    rng = np.random.default_rng(seed)
    return [rng.random((size, size, 3)) for _ in range(n)]


def test_tokenize():
    """Test tokenization with padding, unknowns and truncation."""
    print("\n=== Testing tokenize ===")

    # Test 1: reserved indices and golden ids
    assert VOCAB.tokens[:2] == ("<pad>", "<unk>")
    ids, length = tokenize("How many roads?", VOCAB, 6)
    assert ids == [2, 3, 4, 5, PAD_INDEX, PAD_INDEX]
    assert length == 4
    print("✓ Tokens:", ids)

    # Test 2: out-of-vocabulary tokens map to <unk>
    ids, _ = tokenize("how many rivers?", VOCAB, 4)
    assert ids == [2, 3, UNK_INDEX, 5]

    # Test 3: truncation caps the length
    ids, length = tokenize("how many roads how many roads?", VOCAB, 3)
    assert ids == [2, 3, 4]
    assert length == 3

    # Test 4: punctuation is split off
    assert split_tokens("Is there a road?") == ["is", "there", "a", "road", "?"]

    with pytest.raises(ValueError):
        TextVocab(tokens=("a", "<pad>", "<unk>"))


def test_build_text_vocab(tiny_corpus):
    vocab = build_text_vocab(tiny_corpus)
    assert "or" in vocab.index and "not" in vocab.index
    assert "rural" not in vocab.index
    baseline = build_text_vocab(tiny_corpus, originals_only=True)
    assert "not" not in baseline.index
    assert len(baseline) < len(vocab)


def test_encode_image():
    """Test the image encoder."""
    print("\n=== Testing encode_image ===")
    model = _small_model()
    image = _images(1)[0]

    # Test 1: shape and determinism
    f_v = encode_image(image, model)
    assert f_v.shape == (SMALL_DIMS.d_v,)
    assert torch.equal(f_v, encode_image(image.copy(), model))

    # Test 2: one-pixel change changes the features
    changed = image.copy()
    changed[3, 3, 0] += 0.5
    assert not torch.equal(f_v, encode_image(changed, model))

    # Test 3: zero image with zero conv biases gives zero features
    with torch.no_grad():
        for layer in model.image_encoder.layers:
            if isinstance(layer, torch.nn.Conv2d):
                layer.bias.zero_()
    assert torch.count_nonzero(encode_image(np.zeros((8, 8, 3)), model)) == 0

    # Test 4: wrong shapes
    with pytest.raises(ModelShapeError):
        encode_image(np.zeros((16, 16, 3)), model)
    with pytest.raises(ModelShapeError):
        images_to_tensor([np.zeros((8, 8))])
    print("✓ Image features:", tuple(f_v.shape))


def test_encode_question():
    """Test the recurrent question encoder."""
    print("\n=== Testing encode_question ===")
    model = _small_model()

    # Test 1: padding beyond the true length is ignored
    short, length = tokenize("how many roads?", VOCAB, 8)
    long, _ = tokenize("how many roads?", VOCAB, 16)
    assert torch.equal(encode_question(short, length, model), encode_question(long, length, model))

    # Test 2: one token equals a single cell step from the zero state
    encoder = model.question_encoder
    token = torch.tensor([2])
    expected = encoder.cell(encoder.embedding(token), torch.zeros(1, SMALL_DIMS.d_t, dtype=torch.float64))[0]
    assert torch.allclose(encode_question([2, 0, 0], 1, model), expected, atol=1e-12)

    # Test 3: order matters
    forward_order = encode_question([2, 3, 4], 3, model)
    backward_order = encode_question([4, 3, 2], 3, model)
    assert not torch.allclose(forward_order, backward_order)

    # Test 4: batched lengths match individual encodings
    tokens, lengths = questions_to_tensor(["how many roads?", "is there a road?"], VOCAB, 8)
    batch = encode_question(tokens, lengths, model)
    for row in range(2):
        single = encode_question(tokens[row], int(lengths[row]), model)
        assert torch.allclose(batch[row], single, atol=1e-12)

    # Test 5: zero length is rejected
    with pytest.raises(ModelShapeError):
        encode_question([0, 0, 0], 0, model)
    print("✓ Question features:", tuple(batch.shape))


def test_fuse():
    """Test multiplicative fusion."""
    print("\n=== Testing fuse ===")

    # Test 1: scalar hand case tanh(0.5)^2
    dims = ModelDims(image_size=8, d_v=1, d_t=1, d_f=1)
    model = build_model(dims, len(VOCAB), 2, precision="float64")
    with torch.no_grad():
        for linear in (model.fusion.visual, model.fusion.textual):
            linear.weight.fill_(1.0)
            linear.bias.zero_()
    value = fuse(torch.tensor([0.5], dtype=torch.float64), torch.tensor([0.5], dtype=torch.float64), model)
    assert abs(value.item() - 0.2135) < 1e-4
    print(f"✓ tanh(0.5)^2 = {value.item():.6f}")

    # Test 2: zero textual projection annihilates the output
    model = _small_model()
    with torch.no_grad():
        model.fusion.textual.weight.zero_()
        model.fusion.textual.bias.zero_()
    f_v = torch.randn(4, SMALL_DIMS.d_v, dtype=torch.float64)
    f_t = torch.randn(4, SMALL_DIMS.d_t, dtype=torch.float64)
    assert torch.count_nonzero(fuse(f_v, f_t, model)) == 0

    # Test 3: swapping batch rows swaps outputs
    model = _small_model()
    fused = fuse(f_v, f_t, model)
    swapped = fuse(f_v[[1, 0, 2, 3]], f_t[[1, 0, 2, 3]], model)
    assert torch.allclose(swapped, fused[[1, 0, 2, 3]], atol=1e-12)

    with pytest.raises(ModelShapeError):
        fuse(f_v, f_t[:, :2], model)
    with pytest.raises(ModelShapeError):
        fuse(f_v, f_t[:3], model)


def test_classify():
    model = _small_model(num_answers=4)
    with torch.no_grad():
        model.classifier.weight.zero_()
        model.classifier.bias.copy_(torch.tensor([0.1, 0.9, -0.3, 0.2], dtype=torch.float64))
    logits = classify(torch.randn(3, SMALL_DIMS.d_f, dtype=torch.float64), model)
    assert logits.shape == (3, 4)
    assert (logits.argmax(dim=1) == 1).all()
    assert torch.equal((logits + 7.0).argmax(dim=1), logits.argmax(dim=1))


def test_forward():
    """Test the full forward pass over a batch."""
    print("\n=== Testing forward ===")
    model = _small_model()
    images = _images(3)
    texts = ["how many roads?", "is there a road?", "how many roads?"]

    # Test 1: batch of one equals the composed functions
    logits, fused = forward(images[:1], texts[:1], model, VOCAB, 8)
    ids, length = tokenize(texts[0], VOCAB, 8)
    composed = classify(fuse(encode_image(images[0], model), encode_question(ids, length, model), model), model)
    assert torch.allclose(logits[0], composed, atol=1e-12)

    # Test 2: duplicating a sample duplicates its logits
    logits, _ = forward([images[0], images[0]], [texts[0], texts[0]], model, VOCAB, 8)
    assert torch.allclose(logits[0], logits[1], atol=1e-12)

    # Test 3: permuting the batch permutes the rows
    logits, _ = forward(images, texts, model, VOCAB, 8)
    order = [2, 0, 1]
    permuted, _ = forward([images[i] for i in order], [texts[i] for i in order], model, VOCAB, 8)
    assert torch.allclose(permuted, logits[order], atol=1e-12)

    # Test 4: identical seeds build identical models
    again, _ = forward(images, texts, _small_model(), VOCAB, 8)
    assert torch.equal(again, logits)
    other, _ = forward(images, texts, _small_model(seed=1), VOCAB, 8)
    assert not torch.allclose(other, logits)

    with pytest.raises(ModelShapeError):
        forward(images, texts[:2], model, VOCAB, 8)
    print("✓ Logits:", tuple(logits.shape))


def test_model_gradients():
    """Check analytic gradients against central differences in float64."""
    print("\n=== Testing model gradients ===")
    torch.manual_seed(0)
    model = _small_model()
    images = images_to_tensor(_images(4), dtype=torch.float64)
    tokens, lengths = questions_to_tensor(
        ["how many roads?", "is there a road?", "how many?", "road"], VOCAB, 6
    )
    weights = torch.randn(4, 3, dtype=torch.float64)

    # Test 1: image encoder parameters
    image_params = list(model.image_encoder.parameters())
    visual_weights = torch.randn(4, SMALL_DIMS.d_v, dtype=torch.float64)
    error = finite_difference_error(lambda: (model.image_encoder(images) * visual_weights).sum(), image_params)
    assert error < 1e-4, error

    # Test 2: question encoder parameters
    question_params = list(model.question_encoder.parameters())
    text_weights = torch.randn(4, SMALL_DIMS.d_t, dtype=torch.float64)
    error = finite_difference_error(
        lambda: (model.question_encoder(tokens, lengths) * text_weights).sum(), question_params, seed=1
    )
    assert error < 1e-4, error

    # Test 3: fusion and classifier through the full network
    params = list(model.fusion.parameters()) + list(model.classifier.parameters())
    error = finite_difference_error(lambda: (model(images, tokens, lengths)[0] * weights).sum(), params, seed=2)
    assert error < 1e-4, error
    print("✓ Gradients agree")


def test_checkpoint_round_trip(tmp_path):
    """Test saving, loading and describing checkpoints."""
    print("\n=== Testing Checkpoint ===")
    model = _small_model(precision="float32")
    answers = AnswerVocabulary(answers=("no", "yes", "3"))
    checkpoint = Checkpoint.from_model(model, VOCAB, answers, max_question_len=8, info={"best_epoch": 2})

    # Test 1: save and load rebuild the same network
    path = checkpoint.save(tmp_path / "model.pt")
    loaded = Checkpoint.load(path)
    assert loaded.dims == SMALL_DIMS
    assert loaded.text_vocab == VOCAB
    assert loaded.answers == answers
    assert loaded.info == {"best_epoch": 2}
    images, texts = _images(2), ["how many roads?", "is there a road?"]
    expected, _ = forward(images, texts, model, VOCAB, 8)
    actual, _ = forward(images, texts, loaded.build_model(), VOCAB, 8)
    assert torch.equal(expected, actual)
    print("✓ Reloaded checkpoint reproduces logits")

    # Test 2: describe lists parameters with shapes
    described = dict(loaded.describe())
    assert described["classifier.weight"] == (3, SMALL_DIMS.d_f)
    assert described["question_encoder.embedding.weight"] == (len(VOCAB), SMALL_DIMS.embed_dim)

    # Test 3: mismatched dimensions and foreign files
    broken = Checkpoint.from_model(model, VOCAB, AnswerVocabulary(answers=("no", "yes")), max_question_len=8)
    with pytest.raises(ModelShapeError):
        broken.build_model()
    foreign = tmp_path / "foreign.pt"
    torch.save({"weights": torch.zeros(2)}, foreign)
    with pytest.raises(ModelShapeError):
        Checkpoint.load(foreign)
    garbage = tmp_path / "garbage.pt"
    garbage.write_bytes(b"not a checkpoint")
    with pytest.raises(ModelShapeError):
        Checkpoint.load(garbage)
    with pytest.raises(CorpusError):
        Checkpoint.load(tmp_path / "missing.pt")
