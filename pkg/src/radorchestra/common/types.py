"""
Shared domain types for radorchestra

All types are frozen dataclasses with to_dict/from_dict for the canonical
snake_case JSON encoding. Instances are immutable and safe to share across
threads.
"""

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DataError, DimensionMismatch, NonFiniteVector
from .text import canonical_json, digest_json, segment_sentences


class Split(str, Enum):
    TRAIN = "train"
    TEST = "test"


class Stage(str, Enum):
    RETRIEVAL = "retrieval"
    DRAFT = "draft"
    REFINER = "refiner"
    VISION = "vision"
    SYNTHESIS = "synthesis"


# Canonical order of artifacts within a trace
STAGE_ORDER: Tuple[Stage, ...] = (
    Stage.RETRIEVAL,
    Stage.DRAFT,
    Stage.REFINER,
    Stage.VISION,
    Stage.SYNTHESIS,
)


class Mode(str, Enum):
    FULL = "full"
    VISION_ONLY = "vision_only"
    NO_REFINER = "no_refiner"
    NO_VISION = "no_vision"

    @property
    def stages(self) -> FrozenSet[Stage]:
        return _MODE_STAGES[self]

    @property
    def needs_index(self) -> bool:
        return Stage.RETRIEVAL in self.stages


_MODE_STAGES = {
    Mode.FULL: frozenset(STAGE_ORDER),
    Mode.VISION_ONLY: frozenset({Stage.VISION}),
    Mode.NO_REFINER: frozenset({Stage.RETRIEVAL, Stage.DRAFT, Stage.VISION, Stage.SYNTHESIS}),
    Mode.NO_VISION: frozenset({Stage.RETRIEVAL, Stage.DRAFT, Stage.REFINER, Stage.SYNTHESIS}),
}


@dataclass(frozen=True)
class Study:
    """One case: image reference, optional reference report, split tag"""

    study_id: str
    image_ref: str
    reference_report: Optional[str]
    split: Split

    def __post_init__(self) -> None:
        if not self.study_id:
            raise DataError("study_id must be non-empty")
        if not isinstance(self.split, Split):
            object.__setattr__(self, "split", Split(self.split))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "study_id": self.study_id,
            "image_ref": self.image_ref,
            "reference_report": self.reference_report,
            "split": self.split.value,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Study":
        return cls(
            study_id=data["study_id"],
            image_ref=data["image_ref"],
            reference_report=data.get("reference_report"),
            split=Split(data["split"]),
        )


@dataclass(frozen=True)
class EmbeddingVector:
    """Fixed-dimension vector of finite floats"""

    dims: int
    values: Tuple[float, ...]

    def __post_init__(self) -> None:
        values = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", values)
        if self.dims <= 0:
            raise DataError(f"dims must be positive, got {self.dims}")
        if len(values) != self.dims:
            raise DimensionMismatch(self.dims, len(values), "vector length")
        if not all(math.isfinite(v) for v in values):
            raise NonFiniteVector()

    @classmethod
    def of(cls, values: Sequence[float]) -> "EmbeddingVector":
        return cls(dims=len(values), values=tuple(values))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)

    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))

    def scaled(self, factor: float) -> "EmbeddingVector":
        return EmbeddingVector(self.dims, tuple(v * factor for v in self.values))

    def to_dict(self) -> Dict[str, Any]:
        return {"dims": self.dims, "values": list(self.values)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EmbeddingVector":
        return cls(dims=int(data["dims"]), values=tuple(data["values"]))


@dataclass(frozen=True)
class ReportText:
    """Plain report text with its deterministic sentence segmentation"""

    text: str
    sentences: Tuple[str, ...] = field(init=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "sentences", tuple(segment_sentences(self.text)))

    def __bool__(self) -> bool:
        return bool(self.text.strip())

    def __str__(self) -> str:
        return self.text

    def to_dict(self) -> Dict[str, Any]:
        return {"text": self.text, "sentences": list(self.sentences)}

    @classmethod
    def from_dict(cls, data: Any) -> "ReportText":
        if isinstance(data, str):
            return cls(data)
        return cls(data["text"])


@dataclass(frozen=True)
class StageArtifact:
    """One agent's structured output plus provenance

    The payload is held as canonical JSON so the artifact stays immutable;
    `content` returns a fresh decoded copy.
    """

    stage: Stage
    payload: str
    input_digests: Tuple[str, ...]
    backend_id: str
    elapsed_ms: int

    def __post_init__(self) -> None:
        if not isinstance(self.stage, Stage):
            object.__setattr__(self, "stage", Stage(self.stage))
        object.__setattr__(self, "input_digests", tuple(self.input_digests))
        if self.elapsed_ms < 0:
            raise DataError(f"elapsed_ms must be >= 0, got {self.elapsed_ms}")

    @classmethod
    def create(
        cls,
        stage: Stage,
        content: Dict[str, Any],
        input_digests: Sequence[str] = (),
        backend_id: str = "none",
        elapsed_ms: int = 0,
    ) -> "StageArtifact":
        return cls(
            stage=stage,
            payload=canonical_json(content),
            input_digests=tuple(input_digests),
            backend_id=backend_id,
            elapsed_ms=max(0, int(elapsed_ms)),
        )

    @property
    def content(self) -> Dict[str, Any]:
        return json.loads(self.payload)

    @property
    def digest(self) -> str:
        """Digest over everything except timing"""
        return digest_json(
            {
                "stage": self.stage.value,
                "content": self.content,
                "input_digests": list(self.input_digests),
                "backend_id": self.backend_id,
            }
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "stage": self.stage.value,
            "content": self.content,
            "input_digests": list(self.input_digests),
            "backend_id": self.backend_id,
            "elapsed_ms": self.elapsed_ms,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "StageArtifact":
        return cls.create(
            stage=Stage(data["stage"]),
            content=data["content"],
            input_digests=data.get("input_digests", []),
            backend_id=data.get("backend_id", "none"),
            elapsed_ms=int(data.get("elapsed_ms", 0)),
        )


@dataclass(frozen=True)
class PipelineTrace:
    """Ordered stage artifacts plus the final report; unit of persistence"""

    study_id: str
    mode: Mode
    artifacts: Tuple[StageArtifact, ...]
    final_report: ReportText
    config_digest: str

    def __post_init__(self) -> None:
        if not isinstance(self.mode, Mode):
            object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "artifacts", tuple(self.artifacts))

    def artifact(self, stage: Stage) -> Optional[StageArtifact]:
        for artifact in self.artifacts:
            if artifact.stage == stage:
                return artifact
        return None

    @property
    def stages(self) -> List[Stage]:
        return [a.stage for a in self.artifacts]

    def validate(self) -> None:
        """Check stage set, DAG ordering and final-report provenance"""
        stages = self.stages
        if len(stages) != len(set(stages)) or set(stages) != set(self.mode.stages):
            raise DataError(
                f"trace {self.study_id}: stages {[s.value for s in stages]} do not match mode {self.mode.value}"
            )
        seen: Dict[str, Stage] = {}
        for artifact in self.artifacts:
            for parent in artifact.input_digests:
                if parent not in seen:
                    raise DataError(
                        f"trace {self.study_id}: {artifact.stage.value} consumes unknown or later artifact {parent[:12]}"
                    )
            seen[artifact.digest] = artifact.stage

        synthesis = self.artifact(Stage.SYNTHESIS)
        if synthesis is not None:
            consumed = {seen[d] for d in synthesis.input_digests}
            required = self.mode.stages & {Stage.DRAFT, Stage.REFINER, Stage.VISION}
            if not required <= consumed:
                raise DataError(f"trace {self.study_id}: synthesis does not consume {sorted(s.value for s in required - consumed)}")
            expected = synthesis.content.get("text", "")
        else:
            vision = self.artifact(Stage.VISION)
            expected = vision.content.get("text", "") if vision else ""
        if self.final_report.text != expected:
            raise DataError(f"trace {self.study_id}: final_report does not match the producing stage")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "study_id": self.study_id,
            "mode": self.mode.value,
            "config_digest": self.config_digest,
            "artifacts": [a.to_dict() for a in self.artifacts],
            "final_report": self.final_report.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PipelineTrace":
        return cls(
            study_id=data["study_id"],
            mode=Mode(data["mode"]),
            artifacts=tuple(StageArtifact.from_dict(a) for a in data["artifacts"]),
            final_report=ReportText.from_dict(data["final_report"]),
            config_digest=data["config_digest"],
        )

    def without_timing(self) -> Dict[str, Any]:
        """Serialized form with elapsed_ms zeroed, for reproducibility checks"""
        data = self.to_dict()
        for artifact in data["artifacts"]:
            artifact["elapsed_ms"] = 0
        return data
