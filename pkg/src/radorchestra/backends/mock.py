"""
Deterministic mock backend

Every response is a pure function of (seed, request digest) and is built
from the fixed phrase bank. No network I/O happens here.

chat: bank sentences occurring in the user prompt, most frequent first
      (ties ordered by seed and request digest), at most max_tokens // 64 of them; a
      seeded selection from the bank when the prompt quotes none.
caption: one sentence per chest region chosen by (seed, image digest).
embed: unit vector drawn from a generator seeded by (seed, payload digest).
judge (purpose "judge"): a canonical answer block with scores in [5, 9].
"""

import logging
from typing import List, Optional, Tuple

import numpy as np

from ..common.text import digest, digest_text, join_sentences, tokenize
from ..common.types import EmbeddingVector
from .base import Backend, BackendResponse, ChatRequest, EmbedPayload, ImagePayload, VisionRequest
from .phrase_bank import CAPTION_ORDER, CAPTION_REGIONS, bank_sentences, report_sentences

logger = logging.getLogger(__name__)

DEFAULT_SEED = 7
DEFAULT_DIMS = 64
TOKENS_PER_SENTENCE = 64
JUDGE_PURPOSE = "judge"
JUDGE_AXIS_LABELS = ("Findings", "Consistency", "Diagnosis", "Style", "Conciseness")


class MockBackend(Backend):
    def __init__(
        self,
        backend_id: str = "mock",
        seed: int = DEFAULT_SEED,
        dims: int = DEFAULT_DIMS,
        concurrency: int = 4,
    ) -> None:
        super().__init__(backend_id, concurrency=concurrency, dims=dims)
        self.seed = seed
        self._bank = bank_sentences()
        self._report_bank = report_sentences()

    def _rng(self, request_digest: str) -> np.random.Generator:
        key = digest_text(f"{self.seed}:{request_digest}")
        return np.random.default_rng(int(key[:16], 16))

    def _chat(self, request: ChatRequest) -> BackendResponse:
        if request.purpose == JUDGE_PURPOSE:
            text = self._judge_block(request)
        else:
            limit = max(1, request.max_tokens // TOKENS_PER_SENTENCE)
            chosen = self._quoted(request.user_prompt, limit, request.digest)
            if not chosen:
                rng = self._rng(request.digest)
                picks = rng.choice(len(self._report_bank), size=min(limit, len(self._report_bank)), replace=False)
                chosen = [self._report_bank[i] for i in picks]
            text = join_sentences(chosen)
        return self._response(request, text)

    def _quoted(self, prompt: str, limit: int, request_digest: str) -> List[str]:
        found: List[Tuple[int, str, str]] = []
        for sentence in self._bank:
            count = prompt.count(sentence)
            if count:
                found.append((-count, digest_text(f"{self.seed}:{request_digest}:{sentence}"), sentence))
        found.sort()
        return [sentence for _, _, sentence in found[:limit]]

    def _caption(self, request: VisionRequest) -> BackendResponse:
        assert request.image is not None
        rng = self._rng(request.image.digest)
        sentences = [CAPTION_REGIONS[region][int(rng.integers(len(CAPTION_REGIONS[region])))] for region in CAPTION_ORDER]
        return self._response(request, join_sentences(sentences))

    def _judge_block(self, request: ChatRequest) -> str:
        rng = self._rng(request.digest)
        scores = rng.integers(5, 10, size=len(JUDGE_AXIS_LABELS))
        lines = [f"{label}: {int(score)}" for label, score in zip(JUDGE_AXIS_LABELS, scores)]
        lines.append("Rationale: Deterministic mock judgement.")
        return "\n".join(lines)

    def _embed(self, payload: EmbedPayload) -> Tuple[EmbeddingVector, int]:
        if isinstance(payload, ImagePayload):
            payload_digest = payload.digest
        elif isinstance(payload, bytes):
            payload_digest = digest(payload)
        else:
            payload_digest = digest_text(payload)
        rng = self._rng(payload_digest)
        assert self.dims is not None
        vector = rng.standard_normal(self.dims)
        vector /= np.linalg.norm(vector)
        return EmbeddingVector.of(vector.tolist()), 1

    def _response(self, request: ChatRequest, text: str) -> BackendResponse:
        usage = (len(tokenize(request.system_prompt + " " + request.user_prompt)), len(tokenize(text)))
        return BackendResponse(text=text, latency_ms=0, usage=usage, attempts=1)


def mock_backend(seed: int = DEFAULT_SEED, dims: Optional[int] = None, backend_id: str = "mock") -> MockBackend:
    """A hermetic backend whose outputs depend only on seed and request"""
    return MockBackend(backend_id=backend_id, seed=seed, dims=dims or DEFAULT_DIMS)
