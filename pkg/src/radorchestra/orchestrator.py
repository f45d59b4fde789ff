"""
Pipeline orchestrator

Runs the stage DAG for one study:

    retrieval -> draft -> refiner --\
                                     >-- synthesis
    vision ------------------------/

The text branch and the vision branch run concurrently unless
parallel_branches is off. Corpus runs execute studies under a concurrency
limit, append each finished trace to traces.jsonl in study order, and
record failures without stopping the batch.
"""

import logging
import threading
import time
from concurrent.futures import Future, ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Set, Tuple, TypeVar, Union

from .agents.prompts import PromptLibrary, prompt_library
from .agents.roles import DraftReport, KeyFindings, VisualCaption, run_draft, run_refiner, run_synthesis, run_vision
from .backends.base import ImagePayload
from .backends.registry import BackendRegistry
from .common.config import RunConfig
from .common.errors import (
    ConfigError,
    DataError,
    EmptyInput,
    IoError,
    RadOrchestraError,
    StageFailed,
)
from .common.jsonl import AppendOnlyWriter, LineDiagnostic, iter_jsonl, write_json
from .common.text import digest_json
from .common.types import EmbeddingVector, Mode, PipelineTrace, ReportText, Stage, StageArtifact, Study
from .ingest import check_index_isolation, read_image, read_sidecar
from .retrieval import RetrievalIndex, RetrievalResult, query_top_k

logger = logging.getLogger(__name__)

TRACES_FILE = "traces.jsonl"
SUMMARY_FILE = "summary.json"
CONFIG_FILE = "config.json"

T = TypeVar("T")


@dataclass(frozen=True)
class StudyFailure:
    study_id: str
    stage: Optional[str]
    error_type: str
    message: str

    @classmethod
    def from_error(cls, study_id: str, error: Exception) -> "StudyFailure":
        if isinstance(error, StageFailed):
            return cls(study_id, error.stage, type(error.cause).__name__, str(error.cause))
        return cls(study_id, None, type(error).__name__, str(error))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "study_id": self.study_id,
            "stage": self.stage,
            "error_type": self.error_type,
            "message": self.message,
        }


@dataclass
class RunSummary:
    """Outcome counts of a corpus run; resumed studies count as succeeded"""

    studies_total: int = 0
    studies_succeeded: int = 0
    studies_failed: int = 0
    studies_resumed: int = 0
    failures: List[StudyFailure] = field(default_factory=list)
    config_digest: str = ""

    @property
    def ok(self) -> bool:
        return self.studies_failed == 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "studies_total": self.studies_total,
            "studies_succeeded": self.studies_succeeded,
            "studies_failed": self.studies_failed,
            "studies_resumed": self.studies_resumed,
            "failures": [f.to_dict() for f in sorted(self.failures, key=lambda f: f.study_id)],
            "config_digest": self.config_digest,
        }


@dataclass
class _Branch:
    artifacts: Dict[Stage, StageArtifact] = field(default_factory=dict)
    retrieval: Optional[RetrievalResult] = None
    retrieved: List[ReportText] = field(default_factory=list)
    draft: Optional[DraftReport] = None
    findings: Optional[KeyFindings] = None
    caption: Optional[VisualCaption] = None


class Pipeline:
    """Executes the stage DAG for single studies under one configuration"""

    def __init__(
        self,
        config: RunConfig,
        index: Optional[RetrievalIndex] = None,
        registry: Optional[BackendRegistry] = None,
        query_vectors: Optional[Dict[str, EmbeddingVector]] = None,
        prompts: Optional[PromptLibrary] = None,
        image_reader: Callable[[str], ImagePayload] = read_image,
    ) -> None:
        config.validate()
        if config.mode.needs_index and (index is None or len(index) == 0):
            raise ConfigError(f"mode {config.mode.value} needs a non-empty retrieval index")
        self.config = config
        self.index = index
        self.registry = registry or BackendRegistry.from_config(config)
        self.prompts = prompts or prompt_library()
        self.image_reader = image_reader
        if query_vectors is None and config.query_embeddings is not None and config.mode.needs_index:
            query_vectors = read_sidecar(config.query_embeddings).images
        self.query_vectors = query_vectors or {}
        self.config_digest = config.digest
        self._stages = config.mode.stages
        self._branch_pool: Optional[ThreadPoolExecutor] = None
        self._pool_lock = threading.Lock()

    def __enter__(self) -> "Pipeline":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()

    def close(self) -> None:
        with self._pool_lock:
            if self._branch_pool is not None:
                self._branch_pool.shutdown(wait=True)
                self._branch_pool = None

    def _pool(self) -> ThreadPoolExecutor:
        with self._pool_lock:
            if self._branch_pool is None:
                self._branch_pool = ThreadPoolExecutor(
                    max_workers=self.config.concurrency, thread_name_prefix="vision-branch"
                )
            return self._branch_pool

    def _temperature(self, role: str) -> float:
        spec = self.config.backends.get(self.config.bindings.get(role, ""))
        return spec.temperature if spec else 0.0

    def _run_stage(self, stage: Stage, study_id: str, fn: Callable[[], T]) -> Tuple[T, int]:
        start = time.perf_counter()
        try:
            result = fn()
        except Exception as e:
            logger.warning(f"[{study_id}] stage {stage.value} failed: {type(e).__name__}: {e}")
            raise StageFailed(stage.value, e) from e
        elapsed_ms = int((time.perf_counter() - start) * 1000)
        logger.debug(f"[{study_id}] stage {stage.value} finished in {elapsed_ms} ms")
        return result, elapsed_ms

    def _text_branch(self, study: Study, image: ImagePayload) -> _Branch:
        branch = _Branch()
        config = self.config
        assert self.index is not None

        def retrieve() -> Tuple[RetrievalResult, str, str, str]:
            query = self.query_vectors.get(study.study_id)
            if query is not None:
                source, backend_id = "sidecar", "none"
            else:
                embedder = self.registry.for_role("embedding")
                query = embedder.embed(image)
                source, backend_id = "embedded", embedder.backend_id
            result = query_top_k(self.index, query, config.k, exclude={study.study_id})
            if result.k_effective < result.k_requested:
                logger.info(f"[{study.study_id}] index holds {len(self.index)} reports; using k={result.k_effective}")
            return result, source, digest_json(list(query.values)), backend_id

        (result, source, query_digest, backend_id), elapsed = self._run_stage(Stage.RETRIEVAL, study.study_id, retrieve)
        branch.retrieval = result
        branch.retrieved = self.index.reports(result)
        branch.artifacts[Stage.RETRIEVAL] = StageArtifact.create(
            Stage.RETRIEVAL,
            {"query_source": source, "query_digest": query_digest, **result.to_dict()},
            backend_id=backend_id,
            elapsed_ms=elapsed,
        )

        draft_backend = self.registry.for_role("draft")
        branch.draft, elapsed = self._run_stage(
            Stage.DRAFT,
            study.study_id,
            lambda: run_draft(
                branch.retrieved,
                draft_backend,
                report_ids=result.report_ids,
                max_tokens=config.tokens_for("draft"),
                temperature=self._temperature("draft"),
                prompts=self.prompts,
            ),
        )
        branch.artifacts[Stage.DRAFT] = StageArtifact.create(
            Stage.DRAFT,
            branch.draft.to_content(),
            input_digests=[branch.artifacts[Stage.RETRIEVAL].digest],
            backend_id=draft_backend.backend_id,
            elapsed_ms=elapsed,
        )

        if Stage.REFINER in self._stages:
            refiner_backend = self.registry.for_role("refiner")
            draft = branch.draft
            branch.findings, elapsed = self._run_stage(
                Stage.REFINER,
                study.study_id,
                lambda: run_refiner(
                    draft,
                    branch.retrieved,
                    refiner_backend,
                    threshold=config.grounding_threshold,
                    stopwords=config.stopwords,
                    max_tokens=config.tokens_for("refiner"),
                    temperature=self._temperature("refiner"),
                    prompts=self.prompts,
                ),
            )
            branch.artifacts[Stage.REFINER] = StageArtifact.create(
                Stage.REFINER,
                branch.findings.to_content(),
                input_digests=[branch.artifacts[Stage.RETRIEVAL].digest, branch.artifacts[Stage.DRAFT].digest],
                backend_id=refiner_backend.backend_id,
                elapsed_ms=elapsed,
            )
        return branch

    def _vision_branch(self, study: Study, image: ImagePayload) -> _Branch:
        branch = _Branch()
        backend = self.registry.for_role("vision")
        branch.caption, elapsed = self._run_stage(
            Stage.VISION,
            study.study_id,
            lambda: run_vision(
                image,
                backend,
                max_tokens=self.config.tokens_for("vision"),
                temperature=self._temperature("vision"),
                prompts=self.prompts,
            ),
        )
        content = branch.caption.to_content()
        content["media_type"] = image.media_type.value
        branch.artifacts[Stage.VISION] = StageArtifact.create(
            Stage.VISION, content, backend_id=backend.backend_id, elapsed_ms=elapsed
        )
        return branch

    def _run_branches(self, study: Study, image: ImagePayload) -> Tuple[_Branch, _Branch]:
        has_text = Stage.DRAFT in self._stages
        has_vision = Stage.VISION in self._stages
        if not (has_text and has_vision and self.config.parallel_branches):
            text = self._text_branch(study, image) if has_text else _Branch()
            vision = self._vision_branch(study, image) if has_vision else _Branch()
            return text, vision

        vision_future: Future = self._pool().submit(self._vision_branch, study, image)
        text_error: Optional[StageFailed] = None
        text = _Branch()
        try:
            text = self._text_branch(study, image)
        except StageFailed as e:
            text_error = e
        try:
            vision = vision_future.result()
        except StageFailed as e:
            # report the failure of the earliest stage in canonical order
            raise text_error or e from None
        if text_error is not None:
            raise text_error
        return text, vision

    def run(self, study: Study) -> PipelineTrace:
        """Execute every stage of the configured mode for one study"""
        try:
            image = self.image_reader(study.image_ref)
        except DataError as e:
            logger.warning(f"[{study.study_id}] {e}")
            raise

        text, vision = self._run_branches(study, image)
        artifacts = {**text.artifacts, **vision.artifacts}

        if Stage.SYNTHESIS in self._stages:
            assert text.draft is not None
            backend = self.registry.for_role("synthesis")
            draft = text.draft
            synthesized, elapsed = self._run_stage(
                Stage.SYNTHESIS,
                study.study_id,
                lambda: run_synthesis(
                    draft,
                    text.findings,
                    vision.caption,
                    backend,
                    threshold=self.config.grounding_threshold,
                    stopwords=self.config.stopwords,
                    max_tokens=self.config.tokens_for("synthesis"),
                    temperature=self._temperature("synthesis"),
                    prompts=self.prompts,
                ),
            )
            parents = [artifacts[s].digest for s in (Stage.DRAFT, Stage.REFINER, Stage.VISION) if s in artifacts]
            artifacts[Stage.SYNTHESIS] = StageArtifact.create(
                Stage.SYNTHESIS,
                synthesized.to_content(),
                input_digests=parents,
                backend_id=backend.backend_id,
                elapsed_ms=elapsed,
            )
            final_report = synthesized.report
        else:
            assert vision.caption is not None
            final_report = vision.caption.caption

        trace = PipelineTrace(
            study_id=study.study_id,
            mode=self.config.mode,
            artifacts=tuple(artifacts[s] for s in (Stage.RETRIEVAL, Stage.DRAFT, Stage.REFINER, Stage.VISION, Stage.SYNTHESIS) if s in artifacts),
            final_report=final_report,
            config_digest=self.config_digest,
        )
        trace.validate()
        return trace


def run_pipeline(
    study: Study,
    index: Optional[RetrievalIndex],
    config: RunConfig,
    registry: Optional[BackendRegistry] = None,
    query_vectors: Optional[Dict[str, EmbeddingVector]] = None,
) -> PipelineTrace:
    """Run one study; raises StageFailed for the first failing stage"""
    with Pipeline(config, index, registry=registry, query_vectors=query_vectors) as pipeline:
        return pipeline.run(study)


def _resumable(path: Path, config_digest: str) -> Set[str]:
    if not path.exists():
        return set()
    return {t.study_id for t in load_traces(path) if t.config_digest == config_digest}


def run_corpus(
    studies: Sequence[Study],
    index: Optional[RetrievalIndex],
    config: RunConfig,
    registry: Optional[BackendRegistry] = None,
    query_vectors: Optional[Dict[str, EmbeddingVector]] = None,
    image_reader: Callable[[str], ImagePayload] = read_image,
) -> RunSummary:
    """Run every study, persisting traces incrementally under config.output_dir"""
    if not studies:
        raise EmptyInput("study list")
    if index is not None:
        check_index_isolation(index, studies)

    out_dir = Path(config.output_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoError(out_dir, e) from e
    traces_path = out_dir / TRACES_FILE
    write_json(out_dir / CONFIG_FILE, config.to_dict())

    summary = RunSummary(studies_total=len(studies), config_digest=config.digest)
    done = _resumable(traces_path, summary.config_digest) if config.resume else set()
    pending = [s for s in studies if s.study_id not in done]
    summary.studies_resumed = len(studies) - len(pending)
    summary.studies_succeeded = summary.studies_resumed
    if summary.studies_resumed:
        logger.info(f"Resuming: {summary.studies_resumed} studies already have traces for config {summary.config_digest[:12]}")

    results: Dict[int, Optional[PipelineTrace]] = {}
    next_to_write = 0
    with Pipeline(config, index, registry=registry, query_vectors=query_vectors, image_reader=image_reader) as pipeline, AppendOnlyWriter(
        traces_path, truncate=not config.resume
    ) as writer, ThreadPoolExecutor(max_workers=config.concurrency, thread_name_prefix="study") as pool:
        futures = {pool.submit(pipeline.run, study): position for position, study in enumerate(pending)}
        for future in as_completed(futures):
            position = futures[future]
            study = pending[position]
            try:
                results[position] = future.result()
                summary.studies_succeeded += 1
            except RadOrchestraError as e:
                results[position] = None
                summary.studies_failed += 1
                summary.failures.append(StudyFailure.from_error(study.study_id, e))
            except Exception as e:  # noqa: BLE001
                logger.exception(f"[{study.study_id}] unexpected failure")
                results[position] = None
                summary.studies_failed += 1
                summary.failures.append(StudyFailure.from_error(study.study_id, e))

            # flush the finished prefix so traces.jsonl keeps study order
            while next_to_write in results:
                trace = results.pop(next_to_write)
                if trace is not None:
                    writer.append(trace.to_dict())
                next_to_write += 1

    write_json(out_dir / SUMMARY_FILE, summary.to_dict())
    logger.info(
        f"Run finished: {summary.studies_succeeded}/{summary.studies_total} succeeded, {summary.studies_failed} failed"
    )
    return summary


def load_traces(
    path: Union[str, Path],
    diagnostics: Optional[List[LineDiagnostic]] = None,
) -> List[PipelineTrace]:
    """Read traces from a run directory or a traces file

    Corrupt or invalid lines are skipped, logged and appended to
    `diagnostics` when given; valid lines are always returned.
    """
    path = Path(path)
    if not path.exists():
        raise IoError(path, FileNotFoundError("no such file or directory"))
    if path.is_dir():
        path = path / TRACES_FILE
        if not path.exists():
            return []

    traces: List[PipelineTrace] = []
    for line_no, record, error in iter_jsonl(path):
        if error is None:
            assert record is not None
            try:
                trace = PipelineTrace.from_dict(record)
                trace.validate()
                traces.append(trace)
                continue
            except (KeyError, TypeError, ValueError, DataError) as e:
                error = f"invalid trace: {e}"
        logger.warning(f"Skipping {path}:{line_no}: {error}")
        if diagnostics is not None:
            diagnostics.append(LineDiagnostic(str(path), line_no, error))
    return traces


def latest_by_study(traces: Sequence[PipelineTrace]) -> Dict[str, PipelineTrace]:
    """Keep the last trace per study_id, warning about replaced ones"""
    latest: Dict[str, PipelineTrace] = {}
    for trace in traces:
        if trace.study_id in latest:
            logger.warning(f"Multiple traces for study {trace.study_id}; using the last one")
        latest[trace.study_id] = trace
    return latest


def mode_of(traces: Sequence[PipelineTrace]) -> Optional[Mode]:
    modes = {t.mode for t in traces}
    return modes.pop() if len(modes) == 1 else None
