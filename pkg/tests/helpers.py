"""Test helpers: image bytes and a scripted fake chat-completion server"""

import io
from typing import Callable, Dict, List, Optional

import httpx
import numpy as np
from PIL import Image

BASE_URL = "http://backend.test/v1"

Step = Callable[[httpx.Request], httpx.Response]


def png_bytes(seed: int = 0, size: int = 8) -> bytes:
    """A small valid grayscale PNG"""
    rng = np.random.default_rng(seed)
    pixels = rng.integers(0, 256, (size, size), dtype=np.uint8)
    buffer = io.BytesIO()
    Image.fromarray(pixels).save(buffer, format="PNG")
    return buffer.getvalue()


def jpeg_bytes(seed: int = 0, size: int = 8) -> bytes:
    rng = np.random.default_rng(seed)
    pixels = rng.integers(0, 256, (size, size), dtype=np.uint8)
    buffer = io.BytesIO()
    Image.fromarray(pixels).save(buffer, format="JPEG")
    return buffer.getvalue()


class ScriptedServer:
    """httpx.MockTransport handler replaying a script; the last step repeats"""

    def __init__(self, script: List[Step]) -> None:
        self.script = list(script)
        self.requests: List[httpx.Request] = []

    def __call__(self, request: httpx.Request) -> httpx.Response:
        self.requests.append(request)
        step = self.script[min(len(self.requests), len(self.script)) - 1]
        return step(request)

    def client(self) -> httpx.Client:
        return httpx.Client(transport=httpx.MockTransport(self), base_url=BASE_URL)


def reply(status: int, body: Optional[Dict] = None, text: Optional[str] = None) -> Step:
    def respond(request: httpx.Request) -> httpx.Response:
        if text is not None:
            return httpx.Response(status, text=text)
        return httpx.Response(status, json=body if body is not None else {})

    return respond


def chat_body(content: str) -> Dict:
    return {
        "choices": [{"message": {"role": "assistant", "content": content}}],
        "usage": {"prompt_tokens": 12, "completion_tokens": 5},
    }


def embedding_body(values: List[float]) -> Dict:
    return {"data": [{"embedding": values, "index": 0}]}


def timeout(request: httpx.Request) -> httpx.Response:
    raise httpx.ReadTimeout("timed out", request=request)
