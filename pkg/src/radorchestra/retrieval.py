"""
Retrieval agent: exact cosine top-k over prior report embeddings

The index is an immutable, exhaustively scanned matrix of unit-normalized
report embeddings. Scores are rounded to SCORE_DECIMALS before ranking so
ties resolve by ascending report_id regardless of summation order.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Collection, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .common.errors import (
    CorruptIndex,
    DataError,
    DimensionMismatch,
    DuplicateId,
    EmptyCorpus,
    IoError,
    SchemaViolation,
    ZeroVector,
)
from .common.jsonl import iter_jsonl, write_jsonl
from .common.text import digest_json
from .common.types import EmbeddingVector, ReportText

logger = logging.getLogger(__name__)

SCORE_DECIMALS = 12
INDEX_FORMAT = "radorchestra-index"
INDEX_VERSION = 1


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """dot(a, b) / (|a| |b|), clamped to [-1, 1]"""
    if a.dims != b.dims:
        raise DimensionMismatch(a.dims, b.dims, "cosine_similarity")
    va = a.as_array()
    vb = b.as_array()
    norm_a = float(np.linalg.norm(va))
    norm_b = float(np.linalg.norm(vb))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroVector("in cosine_similarity")
    return float(np.clip(np.dot(va, vb) / (norm_a * norm_b), -1.0, 1.0))


@dataclass(frozen=True)
class IndexEntry:
    report_id: str
    embedding: EmbeddingVector
    report: ReportText

    def to_dict(self) -> Dict[str, Any]:
        return {
            "report_id": self.report_id,
            "embedding": list(self.embedding.values),
            "report_text": self.report.text,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "IndexEntry":
        return cls(
            report_id=str(data["report_id"]),
            embedding=EmbeddingVector.of(data["embedding"]),
            report=ReportText(data["report_text"]),
        )


@dataclass(frozen=True)
class RankedReport:
    report_id: str
    score: float


@dataclass(frozen=True)
class RetrievalResult:
    ranked: Tuple[RankedReport, ...]
    k_requested: int
    k_effective: int

    @property
    def report_ids(self) -> List[str]:
        return [r.report_id for r in self.ranked]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "ranked": [{"report_id": r.report_id, "score": r.score} for r in self.ranked],
            "k_requested": self.k_requested,
            "k_effective": self.k_effective,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RetrievalResult":
        return cls(
            ranked=tuple(RankedReport(r["report_id"], float(r["score"])) for r in data["ranked"]),
            k_requested=int(data["k_requested"]),
            k_effective=int(data["k_effective"]),
        )


def _corpus_digest(entries: Sequence[IndexEntry]) -> str:
    return digest_json([e.to_dict() for e in entries])


class RetrievalIndex:
    """Immutable exact index; safe for concurrent queries"""

    def __init__(self, dims: int, entries: Sequence[IndexEntry], built_from: str) -> None:
        self.dims = dims
        self.entries: Tuple[IndexEntry, ...] = tuple(entries)
        self.built_from = built_from
        self._by_id = {e.report_id: e for e in self.entries}

        matrix = np.array([e.embedding.values for e in self.entries], dtype=np.float64).reshape(len(self.entries), dims)
        norms = np.linalg.norm(matrix, axis=1, keepdims=True)
        unit = matrix / norms
        unit.setflags(write=False)
        self._unit = unit

        # rank of each entry's id in ascending order, the secondary sort key
        order = sorted(range(len(self.entries)), key=lambda i: self.entries[i].report_id)
        id_rank = np.empty(len(self.entries), dtype=np.int64)
        id_rank[order] = np.arange(len(self.entries))
        id_rank.setflags(write=False)
        self._id_rank = id_rank

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, report_id: str) -> bool:
        return report_id in self._by_id

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RetrievalIndex):
            return NotImplemented
        return self.dims == other.dims and self.built_from == other.built_from and self.entries == other.entries

    def __hash__(self) -> int:
        return hash(self.built_from)

    def __repr__(self) -> str:
        return f"RetrievalIndex(dims={self.dims}, size={len(self)}, built_from={self.built_from[:12]})"

    def get(self, report_id: str) -> IndexEntry:
        return self._by_id[report_id]

    def reports(self, result: RetrievalResult) -> List[ReportText]:
        return [self._by_id[report_id].report for report_id in result.report_ids]

    def scores(self, query: EmbeddingVector) -> np.ndarray:
        if query.dims != self.dims:
            raise DimensionMismatch(self.dims, query.dims, "query")
        q = query.as_array()
        norm = float(np.linalg.norm(q))
        if norm == 0.0:
            raise ZeroVector("query")
        # identical rows must score bit-identically
        raw = np.einsum("ij,j->i", self._unit, q / norm)
        return np.round(np.clip(raw, -1.0, 1.0), SCORE_DECIMALS)

    def ranking(self, scores: np.ndarray) -> np.ndarray:
        """Entry positions by descending score, then ascending report_id"""
        return np.lexsort((self._id_rank, -scores))


def build_index(
    entries: Iterable[Union[IndexEntry, Tuple[str, EmbeddingVector, Union[ReportText, str]]]],
) -> RetrievalIndex:
    """Build an immutable index, rejecting empty, ragged, duplicate or zero input"""
    normalized: List[IndexEntry] = []
    for item in entries:
        if isinstance(item, IndexEntry):
            entry = item
        else:
            report_id, embedding, report = item
            entry = IndexEntry(
                report_id=report_id,
                embedding=embedding,
                report=report if isinstance(report, ReportText) else ReportText(report),
            )
        normalized.append(entry)

    if not normalized:
        raise EmptyCorpus("cannot build an index from zero entries")

    dims = normalized[0].embedding.dims
    seen = set()
    for entry in normalized:
        if entry.embedding.dims != dims:
            raise DimensionMismatch(dims, entry.embedding.dims, f"entry {entry.report_id}")
        if entry.report_id in seen:
            raise DuplicateId(entry.report_id, "in index entries")
        seen.add(entry.report_id)
        if entry.embedding.norm() == 0.0:
            raise ZeroVector(f"for entry {entry.report_id}")

    index = RetrievalIndex(dims, normalized, _corpus_digest(normalized))
    logger.info(f"Built retrieval index: {len(index)} entries, dims={dims}")
    return index


def query_top_k(
    index: RetrievalIndex,
    query: EmbeddingVector,
    k: int,
    exclude: Collection[str] = (),
) -> RetrievalResult:
    """Exhaustive top-k by cosine score, ties broken by ascending report_id

    Entries whose report_id is in exclude are never returned.
    """
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    if len(index) == 0:
        raise EmptyCorpus("cannot query an empty index")
    scores = index.scores(query)
    order = index.ranking(scores)
    if exclude:
        keep = np.fromiter((index.entries[i].report_id not in exclude for i in order), dtype=bool, count=len(order))
        order = order[keep]
        if order.size == 0:
            raise EmptyCorpus("every index entry is excluded from this query")
    k_effective = min(k, len(order))
    ranked = tuple(
        RankedReport(index.entries[i].report_id, float(scores[i])) for i in order[:k_effective]
    )
    return RetrievalResult(ranked=ranked, k_requested=k, k_effective=k_effective)


def persist_index(index: RetrievalIndex, path: Union[str, Path]) -> None:
    """Header record (dims, count, corpus digest) then one record per entry"""
    header = {
        "format": INDEX_FORMAT,
        "version": INDEX_VERSION,
        "dims": index.dims,
        "count": len(index),
        "corpus_digest": index.built_from,
    }
    write_jsonl(path, [header, *(e.to_dict() for e in index.entries)])
    logger.info(f"Persisted index ({len(index)} entries) to {path}")


def load_index(path: Union[str, Path]) -> RetrievalIndex:
    path = Path(path)
    if not path.exists():
        raise IoError(path, FileNotFoundError("no such file"))

    header: Optional[Dict[str, Any]] = None
    entries: List[IndexEntry] = []
    for line_no, record, error in iter_jsonl(path):
        if error is not None:
            raise CorruptIndex(path, f"line {line_no}: {error}")
        assert record is not None
        if header is None:
            if record.get("format") != INDEX_FORMAT:
                raise CorruptIndex(path, "missing index header")
            header = record
            continue
        try:
            entries.append(IndexEntry.from_dict(record))
        except (KeyError, TypeError, ValueError, DataError) as e:
            raise CorruptIndex(path, f"line {line_no}: {e}") from e

    if header is None:
        raise CorruptIndex(path, "empty file")
    if len(entries) != header.get("count"):
        raise CorruptIndex(path, f"expected {header.get('count')} entries, found {len(entries)}")
    if not entries:
        raise CorruptIndex(path, "index has no entries")
    if _corpus_digest(entries) != header.get("corpus_digest"):
        raise CorruptIndex(path, "corpus digest mismatch")
    try:
        return build_index(entries)
    except DataError as e:
        raise CorruptIndex(path, str(e)) from e


def read_embedding_manifest(path: Union[str, Path]) -> List[IndexEntry]:
    """JSONL of {report_id, embedding: [...], report_text}"""
    entries = []
    for line_no, record, error in iter_jsonl(path):
        if error is not None:
            raise SchemaViolation(line_no, error, path)
        assert record is not None
        try:
            entries.append(IndexEntry.from_dict(record))
        except KeyError as e:
            raise SchemaViolation(line_no, f"missing field {e}", path) from e
        except (TypeError, ValueError) as e:
            raise SchemaViolation(line_no, str(e), path) from e
    return entries
