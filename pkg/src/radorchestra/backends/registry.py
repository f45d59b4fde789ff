"""
Backend registry: resolves configured backend ids to live clients
"""

import logging
import threading
from typing import Dict, Optional

from ..common.config import BackendSpec, RunConfig
from ..common.errors import ConfigError
from .base import Backend
from .http import HttpBackend
from .mock import MockBackend

logger = logging.getLogger(__name__)


def create_backend(spec: BackendSpec) -> Backend:
    spec.validate()
    if spec.kind == "mock":
        return MockBackend(
            backend_id=spec.backend_id,
            seed=spec.seed,
            dims=spec.dims or 64,
            concurrency=spec.concurrency,
        )
    return HttpBackend(spec)


class BackendRegistry:
    """Lazily constructed, shared clients keyed by backend_id

    Clients are created on first use and reused, so each backend's
    concurrency limit applies across all studies of a run.
    """

    def __init__(self, specs: Dict[str, BackendSpec], bindings: Optional[Dict[str, str]] = None) -> None:
        self._specs = dict(specs)
        self._bindings = dict(bindings or {})
        self._clients: Dict[str, Backend] = {}
        self._lock = threading.Lock()

    @classmethod
    def from_config(cls, config: RunConfig) -> "BackendRegistry":
        return cls(config.backends, config.bindings)

    def register(self, backend: Backend) -> None:
        """Install a ready-made client, replacing any configured one"""
        with self._lock:
            self._clients[backend.backend_id] = backend
            self._specs.setdefault(backend.backend_id, BackendSpec(backend_id=backend.backend_id, kind="mock"))

    def get(self, backend_id: str) -> Backend:
        with self._lock:
            client = self._clients.get(backend_id)
            if client is not None:
                return client
            spec = self._specs.get(backend_id)
            if spec is None:
                raise ConfigError(f"backend {backend_id!r} is not registered")
            client = create_backend(spec)
            logger.debug(f"Created backend client {client!r}")
            self._clients[backend_id] = client
            return client

    def for_role(self, role: str) -> Backend:
        backend_id = self._bindings.get(role)
        if backend_id is None:
            raise ConfigError(f"no backend bound to role {role!r}")
        return self.get(backend_id)

    def close(self) -> None:
        with self._lock:
            for client in self._clients.values():
                client.close()
            self._clients.clear()

    def __enter__(self) -> "BackendRegistry":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()
