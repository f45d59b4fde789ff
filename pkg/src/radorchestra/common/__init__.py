"""
radorchestra common library

Shared domain types, text utilities, configuration, persistence helpers and
logging used by every pipeline module.
"""

from .config import BackendSpec, RunConfig, load_config
from .errors import RadOrchestraError
from .log_utils import LogContext, setup_logger, truncate_value
from .text import canonical_json, digest, segment_sentences, tokenize
from .types import (
    EmbeddingVector,
    Mode,
    PipelineTrace,
    ReportText,
    Split,
    Stage,
    StageArtifact,
    Study,
)

__all__ = [
    "BackendSpec",
    "EmbeddingVector",
    "LogContext",
    "Mode",
    "PipelineTrace",
    "RadOrchestraError",
    "ReportText",
    "RunConfig",
    "Split",
    "Stage",
    "StageArtifact",
    "Study",
    "canonical_json",
    "digest",
    "load_config",
    "segment_sentences",
    "setup_logger",
    "tokenize",
    "truncate_value",
]
