"""Utility functions shared by the RSVQA-Aug pipeline."""

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

import pandas as pd

# Setup logging
logger = logging.getLogger(__name__)

VERBOSE_ENV = "RSVQA_AUG_VERBOSE"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# CLI exit codes
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3


class RsvqaAugError(Exception):
    """Base class for all RSVQA-Aug errors."""

    exit_code: int = EXIT_RUNTIME


class CorpusError(RsvqaAugError, ValueError):
    """Corpus file could not be used."""

    exit_code = EXIT_DATA


class CorpusFormatError(CorpusError):
    """Corpus JSON does not parse or violates the schema."""


class CorpusIntegrityError(CorpusError):
    """Corpus records reference each other inconsistently."""


class ConfigError(RsvqaAugError, ValueError):
    """Configuration file or values are invalid."""

    exit_code = EXIT_USAGE


class ModelShapeError(RsvqaAugError, ValueError):
    """Tensor or checkpoint dimensions do not match the model config."""

    exit_code = EXIT_DATA


class TrainingError(RsvqaAugError, RuntimeError):
    """Training could not start or diverged."""

    exit_code = EXIT_RUNTIME


class TranslationError(RsvqaAugError, RuntimeError):
    """A machine-translation backend failed."""

    exit_code = EXIT_RUNTIME

    def __init__(
        self,
        message: str,
        *,
        pivot: Optional[str] = None,
        text: Optional[str] = None,
        endpoint: Optional[str] = None,
    ):
        self.base_message = message
        self.pivot = pivot
        self.text = text
        self.endpoint = endpoint
        context = []
        if endpoint:
            context.append(f"endpoint={endpoint}")
        if pivot:
            context.append(f"pivot={pivot}")
        if text:
            context.append(f"text={text!r}")
        if context:
            message = f"{message} ({', '.join(context)})"
        super().__init__(message)

    def with_context(self, *, pivot: str, text: str) -> "TranslationError":
        """Return a copy of this error annotated with pivot and text."""
        return TranslationError(
            self.base_message,
            pivot=pivot,
            text=text,
            endpoint=self.endpoint,
        )


def setup_logging(verbose: bool = False) -> None:
    """Configure root logging once; verbose or RSVQA_AUG_VERBOSE selects DEBUG."""
    verbose = verbose or os.environ.get(VERBOSE_ENV) == "1"
    level = logging.DEBUG if verbose else logging.INFO
    root = logging.getLogger()
    if not root.handlers:
        logging.basicConfig(level=level, format=LOG_FORMAT)
    root.setLevel(level)


def write_json(data: Any, path: Union[str, Path]) -> Path:
    """
    Write JSON deterministically (UTF-8, indent 2, trailing newline).

    Args:
        data: JSON-serializable object
        path: Destination file

    Returns:
        The written path

    Raises:
        IOError: If the file cannot be written
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(data, f, indent=2, ensure_ascii=False)
            f.write("\n")
    except OSError as e:
        logger.error(f"Failed to write {path}: {e}")
        raise IOError(f"Could not write file {path}: {e}")
    return path


def save_table(
    df: pd.DataFrame,
    path: Union[str, Path],
    format: str = "csv",
    index: bool = False,
) -> Path:
    """
    Save a result table.

    Args:
        df: DataFrame to save
        path: Destination file
        format: File format ('csv', 'markdown', 'json')
        index: Whether to write the index column

    Returns:
        The written path

    Raises:
        ValueError: If format is not supported
    """
    if format not in ["csv", "markdown", "json"]:
        raise ValueError(f"Unsupported format: {format}. Use 'csv', 'markdown', or 'json'")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    if format == "csv":
        df.to_csv(path, index=index, lineterminator="\n")
    elif format == "markdown":
        path.write_text(df.to_markdown(index=index) + "\n", encoding="utf-8")
    elif format == "json":
        df.to_json(path, orient="records", indent=2)

    logger.info(f"Saved table: {path} ({format})")
    return path


def format_data_size(size_bytes: float) -> str:
    """Format data size in human-readable format."""
    for unit in ["B", "KB", "MB", "GB"]:
        if size_bytes < 1024.0:
            return f"{size_bytes:.1f} {unit}"
        size_bytes /= 1024.0
    return f"{size_bytes:.1f} TB"


def describe_file(path: Union[str, Path]) -> Dict[str, Any]:
    """Return name and size information for a written artifact."""
    path = Path(path)
    size = path.stat().st_size if path.exists() else 0
    return {
        "filename": path.name,
        "size_bytes": size,
        "size": format_data_size(size),
        "format": path.suffix[1:],
    }
