"""RSVQA-Aug - back-translation augmentation and contrastive training for remote sensing VQA."""

__version__ = "0.1.0"
__author__ = "RSVQA-Aug Team"

from .pipeline import augment_corpus, load_corpus, train

__all__ = ["augment_corpus", "load_corpus", "train"]
