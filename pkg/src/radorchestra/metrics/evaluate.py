"""
Corpus evaluation of pipeline traces against reference reports
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

from ..backends.base import Backend
from ..common.errors import DataError, MissingReference, SchemaViolation
from ..common.jsonl import iter_jsonl
from ..common.types import EmbeddingVector, PipelineTrace, Stage
from ..orchestrator import latest_by_study, mode_of
from .bertscore import bertscore_greedy
from .lexical import STEMMER_ID, TokenSequence, bleu, corpus_bleu, meteor, rouge_l, rouge_n

logger = logging.getLogger(__name__)

METRIC_KEYS = ("bleu", "rouge1_f", "rouge2_f", "rougeL_f", "meteor", "bertscore_f1")

METRIC_CONVENTIONS = {
    "tokenizer": "lowercase, split on non-alphanumerics",
    "bleu": "BLEU-4, uniform weights; sentence scores smooth zero precisions to 1e-9; corpus score pools clipped counts",
    "meteor": f"exact then stem alignment ({STEMMER_ID}), leftmost match, no synonyms",
    "bertscore": "greedy max-cosine over per-token embeddings from the embedding backend; no IDF, no rescaling; clamped to [0, 1]",
}

GROUNDED_STAGES = (Stage.REFINER, Stage.SYNTHESIS)


@dataclass
class GroundingStats:
    """Flagged-sentence rates of the grounded stages"""

    per_study: Dict[str, Dict[str, float]] = field(default_factory=dict)
    flagged: Dict[str, int] = field(default_factory=dict)
    sentences: Dict[str, int] = field(default_factory=dict)
    alarm_rate: float = 0.25

    def rate(self, stage: str) -> float:
        total = self.sentences.get(stage, 0)
        return self.flagged.get(stage, 0) / total if total else 0.0

    @property
    def alarms(self) -> List[str]:
        return [stage for stage in sorted(self.sentences) if self.rate(stage) > self.alarm_rate]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "alarm_rate": self.alarm_rate,
            "corpus": {
                stage: {"flagged": self.flagged.get(stage, 0), "sentences": self.sentences[stage], "rate": self.rate(stage)}
                for stage in sorted(self.sentences)
            },
            "per_study": {sid: dict(rates) for sid, rates in sorted(self.per_study.items())},
            "alarms": self.alarms,
        }


@dataclass
class MetricReport:
    model: str
    per_study: Dict[str, Dict[str, float]]
    corpus: Dict[str, float]
    grounding: Optional[GroundingStats] = None
    mode: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "model": self.model,
            "mode": self.mode,
            "studies": len(self.per_study),
            "corpus": dict(self.corpus),
            "per_study": {sid: dict(scores) for sid, scores in sorted(self.per_study.items())},
            "grounding": self.grounding.to_dict() if self.grounding else None,
            "conventions": METRIC_CONVENTIONS,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MetricReport":
        try:
            return cls(
                model=data["model"],
                per_study={sid: dict(v) for sid, v in data["per_study"].items()},
                corpus=dict(data["corpus"]),
                mode=data.get("mode"),
            )
        except (KeyError, TypeError, AttributeError) as e:
            raise DataError(f"not a metrics report: {e}") from e


def load_references(path: Union[str, Path]) -> Dict[str, str]:
    """Reference texts from a references JSONL or a manifest

    Accepts {study_id, reference_report} or manifest {study_id, report_text}
    records; records without text are skipped.
    """
    references: Dict[str, str] = {}
    for line_no, record, error in iter_jsonl(path):
        if error is not None:
            raise SchemaViolation(line_no, error, path)
        assert record is not None
        study_id = record.get("study_id")
        if not isinstance(study_id, str) or not study_id:
            raise SchemaViolation(line_no, "study_id must be a non-empty string", path)
        text = record.get("reference_report", record.get("report_text"))
        if isinstance(text, str) and text.strip():
            references[study_id] = text
    return references


def _clamp(value: float) -> float:
    return min(1.0, max(0.0, value))


def _embed_vocabulary(tokens: Sequence[str], backend: Backend, workers: int) -> Dict[str, EmbeddingVector]:
    vocabulary = sorted(set(tokens))
    logger.info(f"Embedding {len(vocabulary)} distinct tokens for BERTScore with {backend.backend_id}")
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        vectors = list(pool.map(backend.embed, vocabulary))
    return dict(zip(vocabulary, vectors))


def _grounding_stats(traces: Sequence[PipelineTrace], alarm_rate: float) -> Optional[GroundingStats]:
    stats = GroundingStats(alarm_rate=alarm_rate)
    for trace in traces:
        for stage in GROUNDED_STAGES:
            artifact = trace.artifact(stage)
            if artifact is None or "grounding" not in artifact.content:
                continue
            grounding = artifact.content["grounding"]
            entries = grounding.get("entries", [])
            flagged = sum(1 for e in entries if e.get("verdict") == "flagged")
            stats.flagged[stage.value] = stats.flagged.get(stage.value, 0) + flagged
            stats.sentences[stage.value] = stats.sentences.get(stage.value, 0) + len(entries)
            stats.per_study.setdefault(trace.study_id, {})[stage.value] = flagged / len(entries) if entries else 0.0
    if not stats.sentences:
        return None
    for stage in stats.alarms:
        logger.warning(
            f"Grounding alarm: {stage} flagged {stats.rate(stage):.1%} of sentences (alarm at {alarm_rate:.1%})"
        )
    return stats


def evaluate_corpus(
    traces: Sequence[PipelineTrace],
    references: Mapping[str, str],
    embedding_backend: Optional[Backend] = None,
    model: str = "model",
    alarm_rate: float = 0.25,
    workers: int = 4,
) -> MetricReport:
    """Score every trace's final report against its reference

    BERTScore is computed only when an embedding backend is given.
    """
    latest = latest_by_study(traces)
    if not latest:
        raise DataError("no traces to evaluate")
    ordered = [latest[sid] for sid in sorted(latest)]
    for trace in ordered:
        if not references.get(trace.study_id, "").strip():
            raise MissingReference(trace.study_id)

    hyps = {t.study_id: TokenSequence.of(t.final_report.text) for t in ordered}
    refs = {t.study_id: TokenSequence.of(references[t.study_id]) for t in ordered}

    token_vectors: Dict[str, EmbeddingVector] = {}
    if embedding_backend is not None:
        all_tokens = [tok for sid in hyps for tok in (*hyps[sid].tokens, *refs[sid].tokens)]
        token_vectors = _embed_vocabulary(all_tokens, embedding_backend, workers)

    def score(study_id: str) -> Dict[str, float]:
        hyp, ref = hyps[study_id], refs[study_id]
        values = {
            "bleu": bleu(hyp, ref),
            "rouge1_f": rouge_n(hyp, ref, 1)[2],
            "rouge2_f": rouge_n(hyp, ref, 2)[2],
            "rougeL_f": rouge_l(hyp, ref)[2],
            "meteor": meteor(hyp, ref),
        }
        if token_vectors:
            _, _, f1 = bertscore_greedy(
                [token_vectors[t] for t in hyp.tokens], [token_vectors[t] for t in ref.tokens]
            )
            values["bertscore_f1"] = _clamp(f1)
        return {key: _clamp(value) for key, value in values.items()}

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        scored = list(pool.map(score, sorted(hyps)))
    per_study = dict(zip(sorted(hyps), scored))

    keys = [k for k in METRIC_KEYS if k in scored[0]]
    corpus = {key: sum(s[key] for s in scored) / len(scored) for key in keys}
    corpus["bleu"] = corpus_bleu((hyps[sid], refs[sid]) for sid in sorted(hyps))
    corpus["bleu_sentence_mean"] = sum(s["bleu"] for s in scored) / len(scored)

    mode = mode_of(ordered)
    report = MetricReport(
        model=model,
        per_study=per_study,
        corpus=corpus,
        grounding=_grounding_stats(ordered, alarm_rate),
        mode=mode.value if mode else None,
    )
    logger.info(
        f"Evaluated {len(per_study)} studies for {model}: "
        + ", ".join(f"{k}={corpus[k]:.4f}" for k in keys)
    )
    return report
