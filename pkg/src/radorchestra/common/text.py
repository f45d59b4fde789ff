"""
Text utilities shared by every module

Sentence segmentation, tokenization, digests and canonical JSON. All
functions here are deterministic and platform independent.
"""

import hashlib
import json
import re
from functools import lru_cache
from importlib import resources
from typing import Any, FrozenSet, List

# Tokens ending in "." that never end a sentence
ABBREVIATIONS = frozenset(
    {
        "dr.",
        "mr.",
        "mrs.",
        "ms.",
        "vs.",
        "e.g.",
        "i.e.",
        "cf.",
        "fig.",
        "al.",
        "approx.",
        "resp.",
        "st.",
    }
)

DEFAULT_STOPWORDS = "stopwords-en-v1"

_BOUNDARY = re.compile(r"[.!?]+(?=\s|$)")
_TOKEN = re.compile(r"[^\W_]+")
_LAST_WORD = re.compile(r"\S+$")


def segment_sentences(text: str) -> List[str]:
    """Split text into sentences at '.', '!' or '?' followed by whitespace or end

    Abbreviations from ABBREVIATIONS never close a sentence. Returns no
    empty sentences; the remainder after the last boundary is kept.
    """
    sentences: List[str] = []
    start = 0
    for match in _BOUNDARY.finditer(text):
        end = match.end()
        word_match = _LAST_WORD.search(text, start, end)
        word = word_match.group().lstrip("([\"'").lower() if word_match else ""
        if word in ABBREVIATIONS:
            continue
        sentence = text[start:end].strip()
        if sentence:
            sentences.append(sentence)
        start = end
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def join_sentences(sentences: List[str]) -> str:
    return " ".join(sentences)


def tokenize(text: str) -> List[str]:
    """Lowercase and split on non-alphanumerics, dropping empties"""
    return _TOKEN.findall(text.lower())


def digest(content: bytes) -> str:
    """SHA-256 hex digest"""
    return hashlib.sha256(content).hexdigest()


def digest_text(text: str) -> str:
    return digest(text.encode("utf-8"))


def canonical_json(value: Any) -> str:
    """Stable JSON encoding: sorted keys, no whitespace, UTF-8 preserved"""
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def digest_json(value: Any) -> str:
    return digest_text(canonical_json(value))


@lru_cache(maxsize=8)
def load_stopwords(resource_id: str = DEFAULT_STOPWORDS) -> FrozenSet[str]:
    """Load a versioned stopword list shipped in radorchestra/resources"""
    path = resources.files("radorchestra") / "resources" / f"{resource_id}.txt"
    words = set()
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.add(line.lower())
    return frozenset(words)


def content_tokens(text: str, stopwords: FrozenSet[str]) -> List[str]:
    return [token for token in tokenize(text) if token not in stopwords]
