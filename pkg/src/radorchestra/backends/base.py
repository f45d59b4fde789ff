"""
Backend base types

Request/response types for the three model capabilities (chat completion,
vision captioning, embedding) and the abstract Backend every client
implements. Public methods validate, bound concurrency and time the call;
subclasses implement the _chat/_caption/_embed hooks.
"""

import base64
import io
import logging
import threading
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Tuple, Union

from PIL import Image, UnidentifiedImageError

from ..common.errors import DataError, DimensionMismatch, InvalidImage
from ..common.text import digest, digest_json
from ..common.types import EmbeddingVector

logger = logging.getLogger(__name__)

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
JPEG_SIGNATURE = b"\xff\xd8\xff"


class MediaType(str, Enum):
    PNG = "png"
    JPEG = "jpeg"

    @property
    def mime(self) -> str:
        return f"image/{self.value}"


@dataclass(frozen=True)
class ImagePayload:
    """Raw image bytes with their media type; bytes are passed through untouched"""

    data: bytes
    media_type: MediaType

    def __post_init__(self) -> None:
        if not self.data:
            raise InvalidImage("zero-byte image")

    @classmethod
    def from_bytes(cls, data: bytes) -> "ImagePayload":
        """Detect the media type from magic bytes and verify the image decodes"""
        if not data:
            raise InvalidImage("zero-byte image")
        if data.startswith(PNG_SIGNATURE):
            media_type = MediaType.PNG
        elif data.startswith(JPEG_SIGNATURE):
            media_type = MediaType.JPEG
        else:
            raise InvalidImage("unsupported media type (expected PNG or JPEG)")
        try:
            with Image.open(io.BytesIO(data)) as image:
                image.verify()
        except (UnidentifiedImageError, OSError, SyntaxError) as e:
            raise InvalidImage(f"corrupted {media_type.value} data: {e}") from e
        return cls(data=data, media_type=media_type)

    @property
    def digest(self) -> str:
        return digest(self.data)

    def data_url(self) -> str:
        encoded = base64.b64encode(self.data).decode("ascii")
        return f"data:{self.media_type.mime};base64,{encoded}"


@dataclass(frozen=True)
class ChatRequest:
    system_prompt: str
    user_prompt: str
    temperature: float = 0.0
    max_tokens: int = 512
    backend_id: str = "mock"
    purpose: str = "chat"

    def __post_init__(self) -> None:
        if not self.system_prompt.strip() or not self.user_prompt.strip():
            raise DataError("chat prompts must be non-empty")
        if self.temperature < 0:
            raise DataError(f"temperature must be >= 0, got {self.temperature}")
        if self.max_tokens < 1:
            raise DataError(f"max_tokens must be positive, got {self.max_tokens}")

    @property
    def digest(self) -> str:
        return digest_json(
            {
                "system": self.system_prompt,
                "user": self.user_prompt,
                "temperature": self.temperature,
                "max_tokens": self.max_tokens,
                "purpose": self.purpose,
            }
        )


@dataclass(frozen=True)
class VisionRequest(ChatRequest):
    image: Optional[ImagePayload] = None

    def __post_init__(self) -> None:
        super().__post_init__()
        if self.image is None:
            raise InvalidImage("vision request without image payload")

    @property
    def digest(self) -> str:
        assert self.image is not None
        return digest_json({"chat": super().digest, "image": self.image.digest})


@dataclass(frozen=True)
class BackendResponse:
    text: str
    latency_ms: int
    usage: Optional[Tuple[int, int]] = None
    attempts: int = 1
    backend_id: str = ""


EmbedPayload = Union[str, bytes, ImagePayload]


class Backend(ABC):
    """A model backend; safe for concurrent use up to `concurrency` requests"""

    def __init__(self, backend_id: str, concurrency: int = 4, dims: Optional[int] = None) -> None:
        self.backend_id = backend_id
        self.dims = dims
        self._slots = threading.BoundedSemaphore(max(1, concurrency))

    @abstractmethod
    def _chat(self, request: ChatRequest) -> BackendResponse:
        """Run one chat completion"""

    @abstractmethod
    def _caption(self, request: VisionRequest) -> BackendResponse:
        """Run one vision completion"""

    @abstractmethod
    def _embed(self, payload: EmbedPayload) -> Tuple[EmbeddingVector, int]:
        """Embed text or an image; returns (vector, attempts)"""

    def chat(self, request: ChatRequest) -> BackendResponse:
        logger.debug(f"[{self.backend_id}] chat purpose={request.purpose} digest={request.digest[:12]}")
        with self._slots:
            start = time.perf_counter()
            response = self._chat(request)
        return replace(response, latency_ms=_elapsed_ms(start), backend_id=self.backend_id)

    def caption(self, request: VisionRequest) -> BackendResponse:
        logger.debug(f"[{self.backend_id}] caption digest={request.digest[:12]}")
        with self._slots:
            start = time.perf_counter()
            response = self._caption(request)
        return replace(response, latency_ms=_elapsed_ms(start), backend_id=self.backend_id)

    def embed(self, payload: EmbedPayload) -> EmbeddingVector:
        if isinstance(payload, (str, bytes)) and len(payload) == 0:
            raise DataError("cannot embed an empty payload")
        with self._slots:
            vector, _ = self._embed(payload)
        if self.dims is not None and vector.dims != self.dims:
            raise DimensionMismatch(self.dims, vector.dims, f"embedding from {self.backend_id}")
        return vector

    def close(self) -> None:
        """Release network resources, if any"""

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.backend_id!r})"


def _elapsed_ms(start: float) -> int:
    return max(0, int((time.perf_counter() - start) * 1000))
