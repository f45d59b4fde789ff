"""
The four generative agent roles

Each role renders its prompt from the prompt library, makes one backend
call and validates the completion. Roles are stateless and safe to run
concurrently.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple, Union

from ..backends.base import Backend, BackendResponse, ChatRequest, ImagePayload, VisionRequest
from ..common.config import DEFAULT_MAX_TOKENS
from ..common.errors import DataError, EmptyCompletion, EmptyInput
from ..common.log_utils import truncate_value
from ..common.text import DEFAULT_STOPWORDS
from ..common.types import ReportText
from .grounding import DEFAULT_THRESHOLD, GroundingReport, validate_grounding
from .prompts import PromptLibrary, prompt_library

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PromptExchange:
    """One backend call as recorded in the trace"""

    system_prompt: str
    user_prompt: str
    usage: Optional[Tuple[int, int]] = None
    attempts: int = 1

    @classmethod
    def of(cls, request: ChatRequest, response: BackendResponse) -> "PromptExchange":
        return cls(request.system_prompt, request.user_prompt, response.usage, response.attempts)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "system_prompt": self.system_prompt,
            "user_prompt": self.user_prompt,
            "usage": list(self.usage) if self.usage else None,
            "attempts": self.attempts,
        }


@dataclass(frozen=True)
class DraftReport:
    report: ReportText
    source_report_ids: Tuple[str, ...]
    exchange: Optional[PromptExchange] = field(default=None, compare=False)

    def to_content(self) -> Dict[str, Any]:
        return {
            "text": self.report.text,
            "source_report_ids": list(self.source_report_ids),
            **(self.exchange.to_dict() if self.exchange else {}),
        }


@dataclass(frozen=True)
class KeyFindings:
    summary: ReportText
    grounding: GroundingReport
    exchange: Optional[PromptExchange] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if "\n\n" in self.summary.text.strip():
            raise DataError("key findings must be a single paragraph")

    def to_content(self) -> Dict[str, Any]:
        return {
            "text": self.summary.text,
            "grounding": self.grounding.to_dict(),
            **(self.exchange.to_dict() if self.exchange else {}),
        }


@dataclass(frozen=True)
class VisualCaption:
    caption: ReportText
    image_digest: str = ""
    exchange: Optional[PromptExchange] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if not self.caption:
            raise DataError("caption must be non-empty")

    def to_content(self) -> Dict[str, Any]:
        return {
            "text": self.caption.text,
            "image_digest": self.image_digest,
            **(self.exchange.to_dict() if self.exchange else {}),
        }


@dataclass(frozen=True)
class SynthesizedReport:
    report: ReportText
    grounding: GroundingReport
    exchange: Optional[PromptExchange] = field(default=None, compare=False)

    def to_content(self) -> Dict[str, Any]:
        return {
            "text": self.report.text,
            "grounding": self.grounding.to_dict(),
            **(self.exchange.to_dict() if self.exchange else {}),
        }


def _complete(backend: Backend, request: ChatRequest, role: str) -> Tuple[str, PromptExchange]:
    logger.debug(f"{role} prompt: {truncate_value(request.user_prompt, 300)}")
    if isinstance(request, VisionRequest):
        response = backend.caption(request)
    else:
        response = backend.chat(request)
    text = response.text.strip()
    if not text:
        raise EmptyCompletion(f"{role} agent received an empty completion", attempts=response.attempts, backend_id=backend.backend_id)
    logger.debug(f"{role} completion ({response.latency_ms} ms): {truncate_value(text, 300)}")
    return text, PromptExchange.of(request, response)


def run_draft(
    retrieved: Sequence[ReportText],
    backend: Backend,
    report_ids: Optional[Sequence[str]] = None,
    max_tokens: int = DEFAULT_MAX_TOKENS["draft"],
    temperature: float = 0.0,
    prompts: Optional[PromptLibrary] = None,
) -> DraftReport:
    """Compose a preliminary report from the retrieved reports"""
    if not retrieved:
        raise EmptyInput("retrieved reports")
    ids = tuple(report_ids) if report_ids is not None else tuple(f"retrieved-{i + 1}" for i in range(len(retrieved)))
    system, user = (prompts or prompt_library()).render("draft", retrieved_reports=[r.text for r in retrieved])
    request = ChatRequest(system, user, temperature=temperature, max_tokens=max_tokens, backend_id=backend.backend_id)
    text, exchange = _complete(backend, request, "draft")
    return DraftReport(report=ReportText(text), source_report_ids=ids, exchange=exchange)


def run_refiner(
    draft: DraftReport,
    retrieved: Sequence[ReportText],
    backend: Backend,
    threshold: float = DEFAULT_THRESHOLD,
    stopwords: str = DEFAULT_STOPWORDS,
    max_tokens: int = DEFAULT_MAX_TOKENS["refiner"],
    temperature: float = 0.0,
    prompts: Optional[PromptLibrary] = None,
) -> KeyFindings:
    """Condense the draft into key findings and check each sentence's support"""
    if not draft.report:
        raise EmptyInput("draft report")
    system, user = (prompts or prompt_library()).render(
        "refiner", draft=draft.report.text, retrieved_reports=[r.text for r in retrieved]
    )
    request = ChatRequest(system, user, temperature=temperature, max_tokens=max_tokens, backend_id=backend.backend_id)
    text, exchange = _complete(backend, request, "refiner")

    summary = ReportText(" ".join(text.split()))
    sources = [draft.report, *retrieved]
    if len(draft.source_report_ids) == len(retrieved):
        retrieved_ids = list(draft.source_report_ids)
    else:
        retrieved_ids = [f"retrieved-{i + 1}" for i in range(len(retrieved))]
    source_ids = ["draft", *retrieved_ids]
    grounding = validate_grounding(summary, sources, threshold, stopwords, source_ids)
    return KeyFindings(summary=summary, grounding=grounding, exchange=exchange)


def run_vision(
    image: Union[ImagePayload, bytes],
    backend: Backend,
    max_tokens: int = DEFAULT_MAX_TOKENS["vision"],
    temperature: float = 0.0,
    prompts: Optional[PromptLibrary] = None,
) -> VisualCaption:
    """Caption the image; no retrieved or generated text enters this prompt"""
    payload = image if isinstance(image, ImagePayload) else ImagePayload.from_bytes(image)
    system, user = (prompts or prompt_library()).render("vision")
    request = VisionRequest(
        system, user, temperature=temperature, max_tokens=max_tokens, backend_id=backend.backend_id, image=payload
    )
    text, exchange = _complete(backend, request, "vision")
    return VisualCaption(caption=ReportText(text), image_digest=payload.digest, exchange=exchange)


def run_synthesis(
    draft: DraftReport,
    findings: Optional[KeyFindings],
    caption: Optional[VisualCaption],
    backend: Backend,
    threshold: float = DEFAULT_THRESHOLD,
    stopwords: str = DEFAULT_STOPWORDS,
    max_tokens: int = DEFAULT_MAX_TOKENS["synthesis"],
    temperature: float = 0.0,
    prompts: Optional[PromptLibrary] = None,
) -> SynthesizedReport:
    """Integrate draft, key findings and caption into the final report

    findings or caption is None only in the ablation modes that skip the
    refiner or the vision agent.
    """
    if draft is None or not draft.report:
        raise EmptyInput("draft report")
    system, user = (prompts or prompt_library()).render(
        "synthesis",
        draft=draft.report.text,
        findings=findings.summary.text if findings else None,
        caption=caption.caption.text if caption else None,
    )
    request = ChatRequest(system, user, temperature=temperature, max_tokens=max_tokens, backend_id=backend.backend_id)
    text, exchange = _complete(backend, request, "synthesis")

    report = ReportText(text)
    sources = [draft.report]
    source_ids = ["draft"]
    if findings is not None:
        sources.append(findings.summary)
        source_ids.append("refiner")
    if caption is not None:
        sources.append(caption.caption)
        source_ids.append("vision")
    grounding = validate_grounding(report, sources, threshold, stopwords, source_ids)
    return SynthesizedReport(report=report, grounding=grounding, exchange=exchange)
