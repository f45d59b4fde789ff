"""
LLM-as-a-judge evaluation on a five-axis rubric

One judge call per (model, study) rates the generated report against the
reference on findings, consistency, diagnosis, style and conciseness, each
an integer from 1 to 10. The judge answers with a labeled block:

    Findings: 7
    Consistency: 8
    Diagnosis: 9
    Style: 8
    Conciseness: 7
    Rationale: ...
"""

import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from .agents.prompts import PromptLibrary, prompt_library
from .backends.base import Backend, ChatRequest
from .backends.mock import JUDGE_PURPOSE
from .common.config import DEFAULT_MAX_TOKENS
from .common.errors import (
    BackendError,
    DataError,
    EmptyInput,
    JudgeError,
    MissingAxis,
    MissingReference,
    NoJudgements,
    OutOfRange,
    Unparseable,
)
from .common.types import PipelineTrace, ReportText
from .orchestrator import latest_by_study

logger = logging.getLogger(__name__)

AXES: Tuple[str, ...] = ("findings", "consistency", "diagnosis", "style", "conciseness")
AXIS_LABELS: Dict[str, str] = {axis: axis.capitalize() for axis in AXES}
SCORE_MIN = 1
SCORE_MAX = 10

_LINE = re.compile(
    r"^[\s>*#_\-]*(findings|consistency|diagnosis|style|conciseness|rationale)[\s*_]*[:=]\s*(.*)$",
    re.IGNORECASE,
)
_NUMBER = re.compile(r"^[\s*_]*([+-]?\d+(?:\.\d+)?)(?:\s*/\s*10)?")


@dataclass(frozen=True)
class JudgeScores:
    findings: int
    consistency: int
    diagnosis: int
    style: int
    conciseness: int
    rationale: str = ""

    def __post_init__(self) -> None:
        for axis in AXES:
            value = getattr(self, axis)
            if isinstance(value, bool) or not isinstance(value, int) or not SCORE_MIN <= value <= SCORE_MAX:
                raise OutOfRange(axis, value)
        object.__setattr__(self, "rationale", " ".join(self.rationale.split()))

    @property
    def values(self) -> Tuple[int, ...]:
        return tuple(getattr(self, axis) for axis in AXES)

    def to_dict(self) -> Dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "JudgeScores":
        return cls(**{axis: data[axis] for axis in AXES}, rationale=data.get("rationale", ""))


def build_judge_prompt(
    generated: ReportText,
    reference: ReportText,
    max_tokens: int = DEFAULT_MAX_TOKENS["judge"],
    backend_id: str = "judge",
    prompts: Optional[PromptLibrary] = None,
) -> ChatRequest:
    """Reference-anchored rubric prompt; pure in its inputs"""
    if not generated:
        raise EmptyInput("generated report")
    if not reference:
        raise EmptyInput("reference report")
    system, user = (prompts or prompt_library()).render(
        "judge", candidate=generated.text.strip(), reference=reference.text.strip()
    )
    return ChatRequest(system, user, temperature=0.0, max_tokens=max_tokens, backend_id=backend_id, purpose=JUDGE_PURPOSE)


def render_answer_block(scores: JudgeScores) -> str:
    lines = [f"{AXIS_LABELS[axis]}: {getattr(scores, axis)}" for axis in AXES]
    lines.append(f"Rationale: {scores.rationale}")
    return "\n".join(lines)


def _round_half_away(value: float) -> int:
    return int(math.copysign(math.floor(abs(value) + 0.5), value))


def parse_judge_response(text: str) -> JudgeScores:
    """Tolerant line-oriented parse of the answer block

    Labels match case-insensitively, with optional markdown decoration and
    ':' or '=' separators. The first line for an axis wins. Fractional
    scores are rounded half away from zero.
    """
    if not text or not text.strip():
        raise Unparseable("empty response")

    raw: Dict[str, str] = {}
    rationale_lines: Optional[List[str]] = None
    for line in text.splitlines():
        match = _LINE.match(line)
        if match:
            label, value = match.group(1).lower(), match.group(2).strip()
            if label == "rationale":
                if rationale_lines is None:
                    rationale_lines = [value]
                continue
            raw.setdefault(label, value)
        elif rationale_lines is not None and line.strip():
            rationale_lines.append(line.strip())

    if not raw:
        raise Unparseable("no labeled score lines found")

    scores: Dict[str, int] = {}
    for axis in AXES:
        if axis not in raw:
            raise MissingAxis(axis)
        number = _NUMBER.match(raw[axis])
        if number is None:
            raise Unparseable(f"score for {axis!r} is not a number: {raw[axis]!r}")
        value = float(number.group(1))
        if not value.is_integer():
            rounded = _round_half_away(value)
            logger.warning(f"Judge gave fractional {axis} score {value}; rounding to {rounded}")
            if not SCORE_MIN <= rounded <= SCORE_MAX:
                raise OutOfRange(axis, value)
            scores[axis] = rounded
            continue
        if not SCORE_MIN <= value <= SCORE_MAX:
            raise OutOfRange(axis, int(value))
        scores[axis] = int(value)

    rationale = " ".join(rationale_lines) if rationale_lines else ""
    return JudgeScores(**scores, rationale=rationale)


@dataclass(frozen=True)
class StudyJudgement:
    model: str
    study_id: str
    scores: Optional[JudgeScores] = None
    error: Optional[Dict[str, Any]] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "model": self.model,
            "study_id": self.study_id,
            "scores": self.scores.to_dict() if self.scores else None,
            "error": self.error,
        }


@dataclass
class ModelJudgement:
    model: str
    means: Dict[str, float]
    judged: int
    failed: int

    def to_dict(self) -> Dict[str, Any]:
        return {"model": self.model, "means": dict(self.means), "judged": self.judged, "failed": self.failed}


@dataclass
class JudgeSummary:
    """Per-axis means per model, plus every individual judgement"""

    models: Dict[str, ModelJudgement] = field(default_factory=dict)
    judgements: List[StudyJudgement] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "axes": list(AXES),
            "models": {name: self.models[name].to_dict() for name in self.models},
            "judgements": [j.to_dict() for j in self.judgements],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "JudgeSummary":
        try:
            models = {
                name: ModelJudgement(name, dict(m["means"]), int(m["judged"]), int(m["failed"]))
                for name, m in data["models"].items()
            }
        except (KeyError, TypeError, AttributeError) as e:
            raise DataError(f"not a judge summary: {e}") from e
        return cls(models=models)


def summarize(model: str, judgements: Sequence[StudyJudgement]) -> ModelJudgement:
    """Means over successful judgements, summed in study order"""
    ordered = sorted(judgements, key=lambda j: j.study_id)
    scored = [j.scores for j in ordered if j.scores is not None]
    if not scored:
        raise NoJudgements(model)
    means = {axis: math.fsum(getattr(s, axis) for s in scored) / len(scored) for axis in AXES}
    return ModelJudgement(model, means, judged=len(scored), failed=len(ordered) - len(scored))


def judge_corpus(
    trace_sets: Mapping[str, Sequence[PipelineTrace]],
    references: Mapping[str, str],
    backend: Backend,
    max_tokens: int = DEFAULT_MAX_TOKENS["judge"],
    workers: int = 4,
    prompts: Optional[PromptLibrary] = None,
) -> JudgeSummary:
    """Judge every (model, study) pair; failures are recorded, not raised"""
    if not trace_sets:
        raise EmptyInput("trace sets")
    latest = {model: latest_by_study(traces) for model, traces in trace_sets.items()}
    coverage = {model: set(by_study) for model, by_study in latest.items()}
    first_model = next(iter(coverage))
    for model, studies in coverage.items():
        if studies != coverage[first_model]:
            raise DataError(f"models {first_model!r} and {model!r} cover different studies")
    for study_id in sorted(coverage[first_model]):
        if not references.get(study_id, "").strip():
            raise MissingReference(study_id)

    library = prompts or prompt_library()
    tasks = [(model, latest[model][sid]) for model in sorted(latest) for sid in sorted(latest[model])]

    def judge_one(task: Tuple[str, PipelineTrace]) -> StudyJudgement:
        model, trace = task
        request = build_judge_prompt(
            trace.final_report,
            ReportText(references[trace.study_id]),
            max_tokens=max_tokens,
            backend_id=backend.backend_id,
            prompts=library,
        )
        try:
            response = backend.chat(request)
            return StudyJudgement(model, trace.study_id, scores=parse_judge_response(response.text))
        except (BackendError, JudgeError) as e:
            logger.warning(f"Judging {model}/{trace.study_id} failed: {e}")
            return StudyJudgement(model, trace.study_id, error=e.to_dict())

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        judgements = list(pool.map(judge_one, tasks))

    summary = JudgeSummary(judgements=judgements)
    for model in sorted(latest):
        summary.models[model] = summarize(model, [j for j in judgements if j.model == model])
        result = summary.models[model]
        logger.info(f"Judged {model}: {result.judged} scored, {result.failed} failed")
    return summary
