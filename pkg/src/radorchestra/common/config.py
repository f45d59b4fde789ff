"""
Run configuration

A single TOML file with flat keys and nested sections, plus command line
overrides (flags win). Secrets are referenced by environment variable
name only; a literal api_key in the file is rejected.

    [run]
    k = 5
    mode = "full"              # full | vision_only | no_refiner | no_vision
    concurrency = 4
    parallel_branches = true
    output_dir = "out"
    resume = false
    query_embeddings = "fixture/embeddings.jsonl"   # optional

    [grounding]
    threshold = 0.6
    stopwords = "stopwords-en-v1"
    alarm_rate = 0.25

    [agents]                   # role -> backend id
    draft = "gpt4o"
    refiner = "gpt4o"
    synthesis = "gpt4o"
    vision = "llava-med"
    embedding = "mock"
    judge = "judge"

    [tokens]
    draft = 512
    refiner = 256
    vision = 256
    synthesis = 512
    judge = 512

    [backends.gpt4o]
    kind = "http"
    base_url = "https://api.openai.com/v1"
    model_name = "gpt-4o"
    api_key_env = "OPENAI_API_KEY"
    timeout_s = 60
    max_attempts = 4
    deadline_s = 180
"""

import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from .errors import ConfigError
from .text import DEFAULT_STOPWORDS, digest, digest_json
from .types import Mode, Stage

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

PROMPT_SET_VERSION = "v1"

ROLES: Tuple[str, ...] = ("draft", "refiner", "vision", "synthesis", "embedding", "judge")

DEFAULT_MAX_TOKENS: Dict[str, int] = {
    "draft": 512,
    "refiner": 256,
    "vision": 256,
    "synthesis": 512,
    "judge": 512,
}

MOCK_BACKEND_ID = "mock"


@dataclass(frozen=True)
class BackendSpec:
    """Connection settings for one model backend"""

    backend_id: str
    kind: str = "http"
    base_url: str = ""
    model_name: str = ""
    api_key_env: Optional[str] = None
    timeout_s: float = 60.0
    max_attempts: int = 4
    deadline_s: float = 180.0
    dims: Optional[int] = None
    seed: int = 7
    temperature: float = 0.0
    concurrency: int = 4
    chat_path: str = "/chat/completions"
    embeddings_path: str = "/embeddings"

    def validate(self) -> None:
        if self.kind not in ("http", "mock"):
            raise ConfigError(f"backend {self.backend_id}: unknown kind {self.kind!r}")
        if self.kind == "http" and not self.base_url:
            raise ConfigError(f"backend {self.backend_id}: base_url is required")
        if self.max_attempts < 1:
            raise ConfigError(f"backend {self.backend_id}: max_attempts must be >= 1")
        if self.timeout_s <= 0 or self.deadline_s <= 0:
            raise ConfigError(f"backend {self.backend_id}: timeouts must be positive")
        if self.temperature < 0:
            raise ConfigError(f"backend {self.backend_id}: temperature must be >= 0")
        if self.concurrency < 1:
            raise ConfigError(f"backend {self.backend_id}: concurrency must be >= 1")

    def to_dict(self) -> Dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, backend_id: str, data: Dict[str, Any]) -> "BackendSpec":
        if "api_key" in data:
            raise ConfigError(
                f"backend {backend_id}: secrets must come from the environment; use api_key_env"
            )
        known = {f.name for f in fields(cls)} - {"backend_id"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"backend {backend_id}: unknown keys {sorted(unknown)}")
        spec = cls(backend_id=backend_id, **data)
        spec.validate()
        return spec


def default_backends() -> Dict[str, BackendSpec]:
    return {MOCK_BACKEND_ID: BackendSpec(backend_id=MOCK_BACKEND_ID, kind="mock", seed=7, dims=64)}


@dataclass(frozen=True)
class RunConfig:
    """Resolved configuration of one pipeline run"""

    k: int = 5
    mode: Mode = Mode.FULL
    bindings: Dict[str, str] = field(default_factory=lambda: {role: MOCK_BACKEND_ID for role in ROLES})
    backends: Dict[str, BackendSpec] = field(default_factory=default_backends)
    grounding_threshold: float = 0.6
    stopwords: str = DEFAULT_STOPWORDS
    alarm_rate: float = 0.25
    max_tokens: Dict[str, int] = field(default_factory=lambda: dict(DEFAULT_MAX_TOKENS))
    concurrency: int = 4
    parallel_branches: bool = True
    output_dir: Path = Path("out")
    resume: bool = False
    query_embeddings: Optional[Path] = None

    def __post_init__(self) -> None:
        if not isinstance(self.mode, Mode):
            object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "output_dir", Path(self.output_dir))
        if self.query_embeddings is not None:
            object.__setattr__(self, "query_embeddings", Path(self.query_embeddings))

    def required_roles(self) -> Tuple[str, ...]:
        stages = self.mode.stages
        roles = [s.value for s in (Stage.DRAFT, Stage.REFINER, Stage.VISION, Stage.SYNTHESIS) if s in stages]
        if Stage.RETRIEVAL in stages:
            roles.append("embedding")
        return tuple(roles)

    def validate(self) -> None:
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if not 0.0 <= self.grounding_threshold <= 1.0:
            raise ConfigError(f"grounding threshold must be in [0, 1], got {self.grounding_threshold}")
        if self.concurrency < 1:
            raise ConfigError(f"concurrency must be >= 1, got {self.concurrency}")
        for role in self.required_roles():
            self.backend_for(role)
        for role, limit in self.max_tokens.items():
            if limit < 1:
                raise ConfigError(f"max_tokens for {role} must be positive")

    def backend_for(self, role: str) -> BackendSpec:
        backend_id = self.bindings.get(role)
        if backend_id is None:
            raise ConfigError(f"no backend bound to role {role!r}")
        spec = self.backends.get(backend_id)
        if spec is None:
            raise ConfigError(f"role {role!r} is bound to unregistered backend {backend_id!r}")
        return spec

    def tokens_for(self, role: str) -> int:
        return self.max_tokens.get(role, DEFAULT_MAX_TOKENS.get(role, 512))

    def with_overrides(self, **overrides: Any) -> "RunConfig":
        """Apply command line overrides; None means "not given" """
        values = {key: value for key, value in overrides.items() if value is not None}
        if "mode" in values:
            values["mode"] = Mode(values["mode"])
        return replace(self, **values)

    def semantic_dict(self) -> Dict[str, Any]:
        """Fields that change pipeline output; the basis of config_digest"""
        used = {self.bindings[role] for role in self.required_roles() if role in self.bindings}
        query_digest = None
        if self.query_embeddings is not None and self.query_embeddings.exists():
            query_digest = digest(self.query_embeddings.read_bytes())
        return {
            "k": self.k,
            "mode": self.mode.value,
            "bindings": {role: self.bindings[role] for role in self.required_roles()},
            "backends": {
                backend_id: _semantic_backend(self.backends[backend_id])
                for backend_id in sorted(used)
                if backend_id in self.backends
            },
            "grounding": {"threshold": self.grounding_threshold, "stopwords": self.stopwords},
            "max_tokens": {role: self.tokens_for(role) for role in self.required_roles() if role != "embedding"},
            "prompt_set": PROMPT_SET_VERSION,
            "query_embeddings": query_digest,
        }

    @property
    def digest(self) -> str:
        return digest_json(self.semantic_dict())

    def to_dict(self) -> Dict[str, Any]:
        """Full resolved configuration; holds env var names, never secret values"""
        return {
            "run": {
                "k": self.k,
                "mode": self.mode.value,
                "concurrency": self.concurrency,
                "parallel_branches": self.parallel_branches,
                "output_dir": str(self.output_dir),
                "resume": self.resume,
                "query_embeddings": str(self.query_embeddings) if self.query_embeddings else None,
            },
            "grounding": {
                "threshold": self.grounding_threshold,
                "stopwords": self.stopwords,
                "alarm_rate": self.alarm_rate,
            },
            "agents": dict(self.bindings),
            "tokens": dict(self.max_tokens),
            "backends": {
                backend_id: {k: v for k, v in spec.to_dict().items() if k != "backend_id"}
                for backend_id, spec in sorted(self.backends.items())
            },
            "config_digest": self.digest,
        }


def _semantic_backend(spec: BackendSpec) -> Dict[str, Any]:
    if spec.kind == "mock":
        return {"kind": "mock", "seed": spec.seed, "dims": spec.dims}
    return {
        "kind": spec.kind,
        "base_url": spec.base_url,
        "model_name": spec.model_name,
        "temperature": spec.temperature,
        "dims": spec.dims,
    }


def config_from_dict(data: Dict[str, Any]) -> RunConfig:
    """Build a RunConfig from parsed TOML"""
    known_sections = {"run", "grounding", "agents", "tokens", "backends"}
    unknown = set(data) - known_sections
    if unknown:
        raise ConfigError(f"unknown configuration sections {sorted(unknown)}")

    run = dict(data.get("run", {}))
    grounding = dict(data.get("grounding", {}))

    backends = default_backends()
    for backend_id, spec in data.get("backends", {}).items():
        if not isinstance(spec, dict):
            raise ConfigError(f"[backends.{backend_id}] must be a table")
        backends[backend_id] = BackendSpec.from_dict(backend_id, spec)

    bindings = {role: MOCK_BACKEND_ID for role in ROLES}
    for role, backend_id in data.get("agents", {}).items():
        if role not in ROLES:
            raise ConfigError(f"[agents] unknown role {role!r}; expected one of {list(ROLES)}")
        bindings[role] = str(backend_id)

    max_tokens = dict(DEFAULT_MAX_TOKENS)
    for role, limit in data.get("tokens", {}).items():
        max_tokens[role] = int(limit)

    try:
        config = RunConfig(
            k=int(run.pop("k", 5)),
            mode=Mode(run.pop("mode", Mode.FULL.value)),
            concurrency=int(run.pop("concurrency", 4)),
            parallel_branches=bool(run.pop("parallel_branches", True)),
            output_dir=Path(run.pop("output_dir", "out")),
            resume=bool(run.pop("resume", False)),
            query_embeddings=run.pop("query_embeddings", None),
            grounding_threshold=float(grounding.pop("threshold", 0.6)),
            stopwords=str(grounding.pop("stopwords", DEFAULT_STOPWORDS)),
            alarm_rate=float(grounding.pop("alarm_rate", 0.25)),
            bindings=bindings,
            backends=backends,
            max_tokens=max_tokens,
        )
    except ValueError as e:
        raise ConfigError(f"invalid configuration value: {e}") from e
    leftovers = set(run) | set(grounding)
    if leftovers:
        raise ConfigError(f"unknown configuration keys {sorted(leftovers)}")
    return config


def load_config(path: Optional[Path] = None) -> RunConfig:
    """Load a TOML configuration file; no path means built-in mock defaults"""
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        with path.open("rb") as f:
            data = tomllib.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read configuration {path}: {e}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"invalid TOML in {path}: {e}") from e
    config = config_from_dict(data)
    # relative data paths are relative to the configuration file
    if config.query_embeddings is not None and not config.query_embeddings.is_absolute():
        config = replace(config, query_embeddings=path.parent / config.query_embeddings)
    return config
