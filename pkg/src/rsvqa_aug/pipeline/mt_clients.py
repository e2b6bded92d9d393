"""Translator backends: HTTP client, persistent cache and a deterministic rule-based mock."""

import json
import logging
import re
import threading
import time
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Protocol, Tuple, Union

import requests

from ..schema.config import MTConfig, TranslatorBackend
from ..util import TranslationError

logger = logging.getLogger(__name__)

SOURCE_LANGUAGE = "en"
PIVOT_LANGUAGES = ("zh", "de", "fr")
SUPPORTED_LANGUAGES = (SOURCE_LANGUAGE,) + PIVOT_LANGUAGES
MOCK_RULES_DIR = Path(__file__).resolve().parent.parent / "data" / "mock_rules"

# Words the mock tables must carry through unchanged: answers and land-cover nouns.
PROTECTED_TOKENS = frozenset(
    [str(d) for d in range(10)]
    + [
        "yes", "no", "rural", "urban",
        "building", "buildings", "road", "roads", "water", "farmland",
        "forest", "grass", "residential", "commercial", "industrial",
        "circle", "circles", "square", "squares", "red", "blue",
    ]
)


class Translator(Protocol):
    """Anything that translates text between two language codes."""

    def translate(self, text: str, src: str, dst: str) -> str: ...


def _pivot_of(src: str, dst: str) -> str:
    return dst if src == SOURCE_LANGUAGE else src


def _check_pair(src: str, dst: str) -> None:
    if src == dst:
        raise ValueError(f"Source and target language are both '{src}'")
    for code in (src, dst):
        if code not in SUPPORTED_LANGUAGES:
            raise ValueError(
                f"Unsupported language code '{code}'. Use one of {', '.join(SUPPORTED_LANGUAGES)}"
            )


# ---------------------------------------------------------------------------
# Mock backend
# ---------------------------------------------------------------------------

def _tag(pivot: str) -> str:
    return f"⟦{pivot}⟧ "


@lru_cache(maxsize=None)
def load_mock_rules(pivot: str) -> Tuple[Tuple[re.Pattern, str], ...]:
    """Ordered substitution table of one pivot, compiled case-insensitively."""
    try:
        raw = (MOCK_RULES_DIR / f"{pivot}.json").read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ValueError(f"No mock rule table for pivot '{pivot}'")
    table = json.loads(raw)
    return tuple((re.compile(pattern, re.IGNORECASE), repl) for pattern, repl in table["rules"])


def mock_rule_sources(pivot: str) -> List[Tuple[str, str]]:
    """Uncompiled (pattern, replacement) pairs of a pivot table."""
    return [(pattern.pattern, repl) for pattern, repl in load_mock_rules(pivot)]


def mock_translate(text: str, src: str, dst: str) -> str:
    """
    Deterministic stand-in for a translation service.

    en -> pivot prefixes a pivot tag; pivot -> en strips it and applies the
    pivot's ordered substitution table, each rule replacing its first match.

    Raises:
        TranslationError: If the language pair is not supported
    """
    pivot = _pivot_of(src, dst)
    if (src, dst) not in {(SOURCE_LANGUAGE, pivot), (pivot, SOURCE_LANGUAGE)} or pivot not in PIVOT_LANGUAGES:
        raise TranslationError(f"Unsupported language pair {src}->{dst} for mock translator")

    if src == SOURCE_LANGUAGE:
        return _tag(pivot) + text

    tag = _tag(pivot)
    if text.startswith(tag):
        text = text[len(tag):]
    for pattern, repl in load_mock_rules(pivot):
        text = pattern.sub(repl, text, count=1)
    return text


class MockTranslator:
    """Translator wrapper around :func:`mock_translate`."""

    def translate(self, text: str, src: str, dst: str) -> str:
        return mock_translate(text, src, dst)


# ---------------------------------------------------------------------------
# HTTP backend
# ---------------------------------------------------------------------------

def http_translate(
    text: str,
    src: str,
    dst: str,
    endpoint: str,
    timeout: float = 10.0,
    retries: int = 3,
    backoff: float = 0.5,
    token: Optional[str] = None,
) -> str:
    """
    POST one translation request to ``{endpoint}/translate``.

    Transient failures (connection errors, timeouts, 429 and 5xx responses)
    are retried with exponential backoff; ``retries`` counts attempts.

    Raises:
        TranslationError: After the last failed attempt, on other non-2xx
            statuses, or when the body is not ``{"translatedText": str}``
    """
    _check_pair(src, dst)
    url = endpoint.rstrip("/") + "/translate"
    payload = {"q": text, "source": src, "target": dst, "format": "text"}
    headers = {"Accept": "application/json", "Content-Type": "application/json"}
    if token:
        headers["Authorization"] = f"Bearer {token}"

    last_error = "no attempt made"
    for attempt in range(1, max(retries, 1) + 1):
        try:
            response = requests.post(url, json=payload, headers=headers, timeout=timeout)
        except (requests.ConnectionError, requests.Timeout) as e:
            last_error = f"{type(e).__name__}: {e}"
        else:
            status = response.status_code
            if status == 429 or status >= 500:
                last_error = f"HTTP {status}"
            elif not 200 <= status < 300:
                raise TranslationError(f"Translation request rejected with HTTP {status}", endpoint=endpoint)
            else:
                try:
                    body = response.json()
                    result = body["translatedText"]
                except (ValueError, KeyError, TypeError):
                    raise TranslationError("Malformed response body", endpoint=endpoint)
                if not isinstance(result, str):
                    raise TranslationError("Malformed response body", endpoint=endpoint)
                return result

        logger.debug(f"Translation attempt {attempt}/{retries} to {url} failed: {last_error}")
        if attempt < retries and backoff > 0:
            time.sleep(backoff * 2 ** (attempt - 1))

    raise TranslationError(
        f"Translation failed after {retries} attempts: {last_error}",
        endpoint=endpoint,
    )


class HttpTranslator:
    """HTTP translation client; pivots can be routed to their own endpoints."""

    def __init__(self, config: MTConfig):
        self.config = config

    def translate(self, text: str, src: str, dst: str) -> str:
        return http_translate(
            text,
            src,
            dst,
            endpoint=self.config.endpoint_for(_pivot_of(src, dst)),
            timeout=self.config.timeout,
            retries=self.config.retries,
            backoff=self.config.backoff,
            token=self.config.token,
        )


# ---------------------------------------------------------------------------
# Cache
# ---------------------------------------------------------------------------

CacheKey = Tuple[str, str, str]


class TranslationCache:
    """
    Persistent translation cache stored as JSON lines.

    Keys are exact (src, dst, text) triples; later lines win over earlier
    ones. Writes are serialized and appended; reads never take the lock.
    """

    def __init__(self, path: Optional[Union[str, Path]] = None):
        self.path = Path(path) if path is not None else None
        self._entries: Dict[CacheKey, str] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        assert self.path is not None
        try:
            lines = self.path.read_text(encoding="utf-8").splitlines()
        except OSError as e:
            logger.warning(f"Could not read translation cache {self.path}: {e}")
            return
        skipped = 0
        for line in lines:
            if not line.strip():
                continue
            try:
                entry = json.loads(line)
                self._entries[(entry["src"], entry["dst"], entry["text"])] = entry["result"]
            except (ValueError, KeyError, TypeError):
                skipped += 1
        if skipped:
            logger.warning(f"Skipped {skipped} malformed lines in translation cache {self.path}")
        logger.debug(f"Loaded {len(self._entries)} cached translations from {self.path}")

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, text: str, src: str, dst: str) -> Optional[str]:
        return self._entries.get((src, dst, text))

    def put(self, text: str, src: str, dst: str, result: str) -> None:
        """
        Store one translation.

        Raises:
            OSError: If the cache file cannot be appended to
        """
        with self._lock:
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                line = json.dumps(
                    {"src": src, "dst": dst, "text": text, "result": result},
                    ensure_ascii=False,
                )
                with open(self.path, "a", encoding="utf-8") as f:
                    f.write(line + "\n")
            self._entries[(src, dst, text)] = result


def cached_translate(
    cache: TranslationCache,
    inner: Translator,
    text: str,
    src: str,
    dst: str,
) -> str:
    """Serve from cache, otherwise delegate and store; cache write failures only warn."""
    hit = cache.get(text, src, dst)
    if hit is not None:
        return hit

    result = inner.translate(text, src, dst)
    try:
        cache.put(text, src, dst, result)
    except OSError as e:
        logger.warning(f"Translation cache write failed ({cache.path}): {e}; continuing uncached")
    return result


class CachedTranslator:
    """Translator that consults a :class:`TranslationCache` before its inner backend."""

    def __init__(self, inner: Translator, cache: TranslationCache):
        self.inner = inner
        self.cache = cache

    def translate(self, text: str, src: str, dst: str) -> str:
        return cached_translate(self.cache, self.inner, text, src, dst)


def build_translator(
    backend: Union[TranslatorBackend, str],
    config: Optional[MTConfig] = None,
    cache_path: Optional[Union[str, Path]] = None,
) -> Translator:
    """Create a translator for the requested backend, optionally behind a cache."""
    backend = TranslatorBackend(backend)
    translator: Translator
    if backend == TranslatorBackend.MOCK:
        translator = MockTranslator()
    else:
        translator = HttpTranslator(config or MTConfig.from_env())

    if cache_path is not None:
        translator = CachedTranslator(translator, TranslationCache(cache_path))
    return translator
