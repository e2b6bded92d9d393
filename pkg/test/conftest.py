"""Shared fixtures for the RSVQA-Aug tests."""

import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pytest

# Add the src directory to Python path for imports
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from rsvqa_aug.pipeline.dataset import ImageStore, parse_corpus
from rsvqa_aug.pipeline.synthbench import generate
from rsvqa_aug.schema.config import SynthConfig


def corpus_dict(
    questions: Sequence[Dict],
    splits: Sequence[str] = ("train", "test"),
    metadata: Optional[Dict[str, str]] = None,
) -> Dict:
    """Corpus document with one image per split entry; questions default to originals."""
    images = [{"id": i, "file": f"images/{i}.png", "split": split} for i, split in enumerate(splits)]
    filled = []
    for q in questions:
        entry = {"origin_id": None, "pivot": "none", **q}
        filled.append(entry)
    return {"metadata": dict(metadata or {}), "images": images, "questions": filled}


def blank_arrays(n_images: int, size: int = 32, seed: int = 0) -> Dict[int, np.ndarray]:
    rng = np.random.default_rng(seed)
    return {i: rng.random((size, size, 3), dtype=np.float32) for i in range(n_images)}


@pytest.fixture
def make_corpus():
    """Factory building a validated corpus from question dicts."""

    def _make(questions: List[Dict], splits: Sequence[str] = ("train", "test"), metadata=None):
        return parse_corpus(corpus_dict(questions, splits, metadata))

    return _make


@pytest.fixture
def tiny_corpus(make_corpus):
    """2 images, 3 originals and one zh paraphrase."""
    return make_corpus(
        [
            {"id": 0, "img_id": 0, "type": "presence", "text": "is there a road?", "answer": "yes"},
            {"id": 1, "img_id": 0, "type": "count", "text": "how many buildings are there?", "answer": "3"},
            {"id": 2, "img_id": 1, "type": "rural_urban", "text": "is it a rural or an urban area?", "answer": "rural"},
            {
                "id": 3,
                "img_id": 0,
                "type": "presence",
                "text": "is there a road or not?",
                "answer": "yes",
                "origin_id": 0,
                "pivot": "zh",
            },
        ]
    )


@pytest.fixture
def tiny_images(tiny_corpus):
    return ImageStore(tiny_corpus, arrays=blank_arrays(len(tiny_corpus.images)))


@pytest.fixture(scope="session")
def small_synth():
    """Small synthetic benchmark kept in memory."""
    return generate(SynthConfig(n_images=30, seed=7))


def finite_difference_error(loss_fn, tensors, n_coords=200, eps=1e-5, seed=0, floor=1e-3):
    """
    Worst relative error between autograd and central differences.

    ``loss_fn`` returns a scalar computed from ``tensors`` (which require grad);
    ``n_coords`` coordinates are drawn in proportion to tensor size.
    """
    import torch

    rng = np.random.default_rng(seed)
    analytic = torch.autograd.grad(loss_fn(), tensors, allow_unused=True)
    sizes = np.array([t.numel() for t in tensors], dtype=float)
    worst = 0.0
    for _ in range(n_coords):
        k = int(rng.choice(len(tensors), p=sizes / sizes.sum()))
        i = int(rng.integers(tensors[k].numel()))
        flat = tensors[k].data.view(-1)
        original = flat[i].item()
        with torch.no_grad():
            flat[i] = original + eps
            plus = loss_fn().item()
            flat[i] = original - eps
            minus = loss_fn().item()
            flat[i] = original
        numeric = (plus - minus) / (2 * eps)
        grad = analytic[k]
        value = 0.0 if grad is None else grad.reshape(-1)[i].item()
        worst = max(worst, abs(numeric - value) / max(abs(numeric), abs(value), floor))
    return worst
