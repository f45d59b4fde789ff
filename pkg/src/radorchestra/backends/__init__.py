"""
Model backends: chat completion, vision captioning and embedding clients
"""

from .base import Backend, BackendResponse, ChatRequest, ImagePayload, MediaType, VisionRequest
from .http import HttpBackend
from .mock import MockBackend, mock_backend
from .registry import BackendRegistry, create_backend

__all__ = [
    "Backend",
    "BackendRegistry",
    "BackendResponse",
    "ChatRequest",
    "HttpBackend",
    "ImagePayload",
    "MediaType",
    "MockBackend",
    "VisionRequest",
    "create_backend",
    "mock_backend",
]
