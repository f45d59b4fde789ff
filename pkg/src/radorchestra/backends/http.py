"""
HTTP backend for OpenAI-compatible chat-completion servers

Chat and vision requests are POSTed as a messages array; images travel as
base64 data-URL content parts. Timeouts, 429 and 5xx responses are retried
with exponential backoff and jitter until max_attempts or the deadline is
reached. Authentication and other 4xx failures are raised immediately.
"""

import logging
import math
import os
import time
from typing import Any, Callable, Dict, List, Optional, Tuple

import httpx
from tenacity import (
    RetryCallState,
    Retrying,
    retry_if_exception,
    stop_after_attempt,
    stop_before_delay,
    wait_exponential_jitter,
)

from ..common.config import BackendSpec
from ..common.errors import (
    AuthFailure,
    BackendHTTPError,
    BackendTimeout,
    ConfigError,
    MalformedResponse,
    NonFiniteVector,
    RateLimited,
)
from ..common.log_utils import truncate_value
from ..common.types import EmbeddingVector
from .base import Backend, BackendResponse, ChatRequest, EmbedPayload, ImagePayload, VisionRequest

logger = logging.getLogger(__name__)

BACKOFF_INITIAL_S = 0.5
BACKOFF_MAX_S = 20.0
BACKOFF_JITTER_S = 0.5
MIN_REQUEST_TIMEOUT_S = 0.05


def _is_retryable(error: BaseException) -> bool:
    return bool(getattr(error, "retryable", False))


class HttpBackend(Backend):
    """Client for one configured backend_id"""

    def __init__(
        self,
        spec: BackendSpec,
        client: Optional[httpx.Client] = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        super().__init__(spec.backend_id, concurrency=spec.concurrency, dims=spec.dims)
        self.spec = spec
        self._sleep = sleep
        self._headers = {"Content-Type": "application/json"}
        if spec.api_key_env:
            api_key = os.environ.get(spec.api_key_env)
            if not api_key:
                raise ConfigError(
                    f"backend {spec.backend_id}: environment variable {spec.api_key_env} is not set"
                )
            self._headers["Authorization"] = f"Bearer {api_key}"
        self._client = client or httpx.Client(base_url=spec.base_url.rstrip("/"), timeout=spec.timeout_s)
        self._owns_client = client is None

    def _chat(self, request: ChatRequest) -> BackendResponse:
        messages = [
            {"role": "system", "content": request.system_prompt},
            {"role": "user", "content": request.user_prompt},
        ]
        return self._complete(messages, request)

    def _caption(self, request: VisionRequest) -> BackendResponse:
        assert request.image is not None
        messages = [
            {"role": "system", "content": request.system_prompt},
            {
                "role": "user",
                "content": [
                    {"type": "text", "text": request.user_prompt},
                    {"type": "image_url", "image_url": {"url": request.image.data_url()}},
                ],
            },
        ]
        return self._complete(messages, request)

    def _complete(self, messages: List[Dict[str, Any]], request: ChatRequest) -> BackendResponse:
        payload = {
            "model": self.spec.model_name,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "stream": False,
        }
        data, attempts = self._post(self.spec.chat_path, payload)
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as e:
            raise MalformedResponse(
                f"no choices[0].message.content in response: {truncate_value(data)}",
                attempts=attempts,
                backend_id=self.backend_id,
            ) from e
        if not isinstance(content, str):
            raise MalformedResponse("completion content is not text", attempts=attempts, backend_id=self.backend_id)

        usage = None
        raw_usage = data.get("usage")
        if isinstance(raw_usage, dict) and "prompt_tokens" in raw_usage and "completion_tokens" in raw_usage:
            usage = (int(raw_usage["prompt_tokens"]), int(raw_usage["completion_tokens"]))
        return BackendResponse(text=content, latency_ms=0, usage=usage, attempts=attempts)

    def _embed(self, payload: EmbedPayload) -> Tuple[EmbeddingVector, int]:
        if isinstance(payload, ImagePayload):
            embed_input: Any = payload.data_url()
        elif isinstance(payload, bytes):
            embed_input = ImagePayload.from_bytes(payload).data_url()
        else:
            embed_input = payload
        data, attempts = self._post(self.spec.embeddings_path, {"model": self.spec.model_name, "input": embed_input})
        try:
            values = data["data"][0]["embedding"]
            floats = [float(v) for v in values]
        except (KeyError, IndexError, TypeError, ValueError) as e:
            raise MalformedResponse(
                "no data[0].embedding in response", attempts=attempts, backend_id=self.backend_id
            ) from e
        if not floats:
            raise MalformedResponse("empty embedding", attempts=attempts, backend_id=self.backend_id)
        if not all(math.isfinite(v) for v in floats):
            raise NonFiniteVector(f"from backend {self.backend_id}")
        return EmbeddingVector.of(floats), attempts

    def _post(self, path: str, payload: Dict[str, Any]) -> Tuple[Dict[str, Any], int]:
        """POST with retries; returns (decoded body, attempts used)

        No retry is started whose backoff would end past deadline_s, and
        each request's timeout is cut to the time left before it.
        """
        retrying = Retrying(
            stop=stop_after_attempt(self.spec.max_attempts) | stop_before_delay(self.spec.deadline_s),
            wait=wait_exponential_jitter(initial=BACKOFF_INITIAL_S, max=BACKOFF_MAX_S, jitter=BACKOFF_JITTER_S),
            retry=retry_if_exception(_is_retryable),
            sleep=self._sleep,
            before_sleep=self._log_retry,
            reraise=True,
        )
        data: Dict[str, Any] = {}
        attempts = 0
        started = time.monotonic()
        for attempt in retrying:
            with attempt:
                attempts = attempt.retry_state.attempt_number
                remaining = self.spec.deadline_s - (time.monotonic() - started)
                request_timeout = max(MIN_REQUEST_TIMEOUT_S, min(self.spec.timeout_s, remaining))
                data = self._send(path, payload, attempts, request_timeout)
        return data, attempts

    def _send(self, path: str, payload: Dict[str, Any], attempt: int, request_timeout: float) -> Dict[str, Any]:
        try:
            response = self._client.post(path, json=payload, headers=self._headers, timeout=request_timeout)
        except httpx.TimeoutException as e:
            raise BackendTimeout(f"request to {path} timed out: {e}", attempts=attempt, backend_id=self.backend_id) from e
        except httpx.TransportError as e:
            raise BackendTimeout(f"backend unreachable: {e}", attempts=attempt, backend_id=self.backend_id) from e

        status = response.status_code
        if status == 429:
            raise RateLimited("rate limited (429)", attempts=attempt, backend_id=self.backend_id)
        if status in (401, 403):
            raise AuthFailure(f"authentication failed ({status})", attempts=attempt, backend_id=self.backend_id)
        if status >= 400:
            raise BackendHTTPError(
                status,
                f"HTTP {status}: {truncate_value(response.text, 300)}",
                attempts=attempt,
                backend_id=self.backend_id,
            )
        try:
            data = response.json()
        except ValueError as e:
            raise MalformedResponse("response body is not JSON", attempts=attempt, backend_id=self.backend_id) from e
        if not isinstance(data, dict):
            raise MalformedResponse("response body is not a JSON object", attempts=attempt, backend_id=self.backend_id)
        return data

    def _log_retry(self, state: RetryCallState) -> None:
        error = state.outcome.exception() if state.outcome else None
        wait = state.next_action.sleep if state.next_action else 0.0
        logger.warning(
            f"[{self.backend_id}] attempt {state.attempt_number} failed ({type(error).__name__}: {error}); "
            f"retrying in {wait:.2f}s"
        )

    def close(self) -> None:
        if self._owns_client:
            self._client.close()
