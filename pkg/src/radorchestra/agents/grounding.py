"""
Sentence-level grounding validator

A candidate sentence's support score is the best clipped unigram precision
of its content tokens (lowercased, stopwords removed) against any single
source sentence. Sentences scoring below the threshold are flagged, never
removed.
"""

import logging
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, FrozenSet, List, Optional, Sequence, Tuple

from ..common.errors import ConfigError, EmptyInput
from ..common.text import DEFAULT_STOPWORDS, content_tokens, load_stopwords, tokenize
from ..common.types import ReportText

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.6


class Verdict(str, Enum):
    SUPPORTED = "supported"
    FLAGGED = "flagged"


@dataclass(frozen=True)
class GroundingEntry:
    sentence: str
    best_support_score: float
    supporting_source_id: Optional[str]
    verdict: Verdict

    def to_dict(self) -> Dict[str, Any]:
        return {
            "sentence": self.sentence,
            "best_support_score": self.best_support_score,
            "supporting_source_id": self.supporting_source_id,
            "verdict": self.verdict.value,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GroundingEntry":
        return cls(
            sentence=data["sentence"],
            best_support_score=float(data["best_support_score"]),
            supporting_source_id=data.get("supporting_source_id"),
            verdict=Verdict(data["verdict"]),
        )


@dataclass(frozen=True)
class GroundingReport:
    entries: Tuple[GroundingEntry, ...]
    threshold: float

    @property
    def flagged(self) -> List[GroundingEntry]:
        return [e for e in self.entries if e.verdict is Verdict.FLAGGED]

    @property
    def flagged_count(self) -> int:
        return len(self.flagged)

    @property
    def flagged_rate(self) -> float:
        return self.flagged_count / len(self.entries) if self.entries else 0.0

    @property
    def all_supported(self) -> bool:
        return self.flagged_count == 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "threshold": self.threshold,
            "entries": [e.to_dict() for e in self.entries],
            "flagged_count": self.flagged_count,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GroundingReport":
        return cls(
            entries=tuple(GroundingEntry.from_dict(e) for e in data["entries"]),
            threshold=float(data["threshold"]),
        )


def resolve_stopwords(resource_id: str = DEFAULT_STOPWORDS) -> FrozenSet[str]:
    try:
        return load_stopwords(resource_id)
    except (FileNotFoundError, OSError) as e:
        raise ConfigError(f"unknown stopword resource {resource_id!r}") from e


def _sentence_tokens(sentence: str, stopwords: FrozenSet[str]) -> List[str]:
    tokens = content_tokens(sentence, stopwords)
    # a sentence made only of function words is compared on all its tokens
    return tokens if tokens else tokenize(sentence)


def support_score(candidate: Sequence[str], source: Sequence[str]) -> float:
    """Clipped unigram precision of candidate tokens against one source"""
    if not candidate:
        return 1.0
    available = Counter(source)
    overlap = sum(min(count, available[token]) for token, count in Counter(candidate).items())
    return overlap / len(candidate)


def validate_grounding(
    candidate: ReportText,
    sources: Sequence[ReportText],
    threshold: float = DEFAULT_THRESHOLD,
    stopwords: str = DEFAULT_STOPWORDS,
    source_ids: Optional[Sequence[str]] = None,
) -> GroundingReport:
    """Score every candidate sentence against every source sentence"""
    if not sources:
        raise EmptyInput("grounding sources")
    if source_ids is None:
        source_ids = [f"source-{i}" for i in range(len(sources))]
    if len(source_ids) != len(sources):
        raise ValueError("source_ids must match sources")

    words = resolve_stopwords(stopwords)
    source_sentences = [
        (source_id, _sentence_tokens(sentence, words))
        for source_id, source in zip(source_ids, sources)
        for sentence in source.sentences
    ]

    entries = []
    for sentence in candidate.sentences:
        tokens = _sentence_tokens(sentence, words)
        best = 0.0 if tokens else 1.0
        best_id: Optional[str] = None
        for source_id, source_tokens in source_sentences:
            score = support_score(tokens, source_tokens)
            if score > best or (best_id is None and score == best and score > 0.0):
                best, best_id = score, source_id
        verdict = Verdict.SUPPORTED if best >= threshold else Verdict.FLAGGED
        entries.append(GroundingEntry(sentence, best, best_id, verdict))

    report = GroundingReport(entries=tuple(entries), threshold=threshold)
    if report.flagged_count:
        logger.info(f"Grounding: {report.flagged_count}/{len(entries)} sentences flagged at threshold {threshold}")
    return report
