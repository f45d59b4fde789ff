"""
Integration tests for the pipeline orchestrator

Runs real corpora through the stage DAG with the mock backend, scripted
HTTP servers and injected faults.
"""

import json
import os
import random
import subprocess
import sys
import textwrap
import threading
import time

import pytest

from radorchestra.backends.base import Backend
from radorchestra.backends.http import HttpBackend
from radorchestra.backends.mock import MockBackend
from radorchestra.backends.registry import BackendRegistry
from radorchestra.common.config import RunConfig
from radorchestra.common.errors import ConfigError, DataError, RateLimited, StageFailed
from radorchestra.common.jsonl import LineDiagnostic
from radorchestra.common.types import Mode, Split, Stage, Study
from radorchestra.ingest import build_retrieval_db, generate_fixture_corpus, read_sidecar
from radorchestra.orchestrator import (
    SUMMARY_FILE,
    TRACES_FILE,
    Pipeline,
    load_traces,
    run_corpus,
    run_pipeline,
)
from tests.helpers import ScriptedServer, timeout

pytestmark = pytest.mark.integration


class FlakyBackend(Backend):
    """Mock backend whose chat and caption calls fail transiently at a fixed rate"""

    def __init__(self, rate: float, seed: int = 0) -> None:
        super().__init__("mock")
        self.inner = MockBackend(seed=7, dims=64)
        self.rate = rate
        self.raised = 0
        self._rng = random.Random(seed)
        self._lock = threading.Lock()

    def _maybe_fail(self) -> None:
        with self._lock:
            fail = self._rng.random() < self.rate
            if fail:
                self.raised += 1
        if fail:
            raise RateLimited("scripted transient failure", attempts=1, backend_id=self.backend_id)

    def _chat(self, request):
        self._maybe_fail()
        return self.inner._chat(request)

    def _caption(self, request):
        self._maybe_fail()
        return self.inner._caption(request)

    def _embed(self, payload):
        return self.inner._embed(payload)


@pytest.fixture
def corpus20(tmp_path):
    """Fixture corpus with 20 test studies and an index over its 80 training reports"""
    corpus = generate_fixture_corpus(seed=7, n=100, out_dir=tmp_path / "corpus20")
    train = [s for s in corpus.studies if s.split is Split.TRAIN]
    test = [s for s in corpus.studies if s.split is Split.TEST]
    index = build_retrieval_db(train, sidecar=read_sidecar(corpus.sidecar))
    return corpus, index, test


def _stripped(path):
    return [t.without_timing() for t in load_traces(path)]


class TestFullMode:
    def test_runs_are_reproducible(self, tmp_path, fixture_corpus, fixture_index, test_studies, run_config):
        first = run_corpus(test_studies, fixture_index, run_config(output_dir=tmp_path / "a"))
        second = run_corpus(test_studies, fixture_index, run_config(output_dir=tmp_path / "b"))
        assert first.ok and second.ok
        assert first.config_digest == second.config_digest
        assert _stripped(tmp_path / "a") == _stripped(tmp_path / "b")

    def test_every_trace_has_five_stages(self, tmp_path, corpus20, run_config):
        corpus, index, test = corpus20
        config = run_config(query_embeddings=corpus.sidecar)
        summary = run_corpus(test, index, config)
        assert summary.studies_succeeded == 20
        traces = load_traces(config.output_dir)
        assert [t.study_id for t in traces] == [s.study_id for s in test]
        for trace in traces:
            trace.validate()
            assert trace.stages == [Stage.RETRIEVAL, Stage.DRAFT, Stage.REFINER, Stage.VISION, Stage.SYNTHESIS]
            assert trace.config_digest == config.digest
            assert trace.final_report.text == trace.artifact(Stage.SYNTHESIS).content["text"]

    def test_retrieval_uses_sidecar_queries(self, fixture_corpus, fixture_index, test_studies, run_config):
        trace = run_pipeline(test_studies[0], fixture_index, run_config())
        retrieval = trace.artifact(Stage.RETRIEVAL).content
        assert retrieval["query_source"] == "sidecar"
        assert retrieval["k_effective"] == 5
        top = retrieval["ranked"][0]["report_id"]
        assert fixture_corpus.families[top] == fixture_corpus.families[test_studies[0].study_id]

    def test_indexed_study_never_retrieves_its_own_report(self, fixture_corpus, fixture_index, run_config):
        train = [s for s in fixture_corpus.studies if s.split is Split.TRAIN]
        config = run_config()
        summary = run_corpus(train, fixture_index, config)
        assert summary.studies_succeeded == len(train) == 16
        for trace in load_traces(config.output_dir):
            ranked = [r["report_id"] for r in trace.artifact(Stage.RETRIEVAL).content["ranked"]]
            assert len(ranked) == 5
            assert trace.study_id not in ranked
            assert fixture_corpus.families[ranked[0]] == fixture_corpus.families[trace.study_id]

    def test_draft_consumes_retrieval(self, fixture_index, test_studies, run_config):
        trace = run_pipeline(test_studies[0], fixture_index, run_config())
        retrieval = trace.artifact(Stage.RETRIEVAL)
        draft = trace.artifact(Stage.DRAFT)
        assert draft.input_digests == (retrieval.digest,)
        assert draft.content["source_report_ids"] == [r["report_id"] for r in retrieval.content["ranked"]]

    def test_parallel_and_serial_branches_agree(self, tmp_path, fixture_index, test_studies, run_config):
        run_corpus(test_studies, fixture_index, run_config(output_dir=tmp_path / "parallel"))
        run_corpus(test_studies, fixture_index, run_config(output_dir=tmp_path / "serial", parallel_branches=False, concurrency=1))
        assert _stripped(tmp_path / "parallel") == _stripped(tmp_path / "serial")


class TestModes:
    def test_vision_only_needs_no_index(self, test_studies, run_config):
        config = run_config(mode=Mode.VISION_ONLY)
        summary = run_corpus(test_studies, None, config)
        assert summary.ok
        for trace in load_traces(config.output_dir):
            assert trace.stages == [Stage.VISION]
            assert trace.final_report.text == trace.artifacts[0].content["text"]

    def test_ablation_stage_sets(self, fixture_index, test_studies, run_config):
        no_refiner = run_pipeline(test_studies[0], fixture_index, run_config(mode=Mode.NO_REFINER))
        assert Stage.REFINER not in no_refiner.stages
        no_vision = run_pipeline(test_studies[0], fixture_index, run_config(mode=Mode.NO_VISION))
        assert no_vision.stages == [Stage.RETRIEVAL, Stage.DRAFT, Stage.REFINER, Stage.SYNTHESIS]

    def test_text_modes_need_an_index(self, run_config):
        with pytest.raises(ConfigError):
            Pipeline(run_config(mode=Mode.FULL), None)

    def test_modes_have_distinct_digests(self, run_config):
        digests = {run_config(mode=mode).digest for mode in Mode}
        assert len(digests) == len(Mode)


class TestFailures:
    def test_embedding_timeout_fails_retrieval_only(self, tmp_path, fixture_index, test_studies, http_spec):
        config = RunConfig(
            bindings={**RunConfig().bindings, "embedding": "remote"},
            backends={**RunConfig().backends, "remote": http_spec},
            output_dir=tmp_path / "timeout",
        )
        server = ScriptedServer([timeout])
        registry = BackendRegistry.from_config(config)
        registry.register(HttpBackend(http_spec, client=server.client(), sleep=lambda s: None))

        with pytest.raises(StageFailed) as excinfo:
            run_pipeline(test_studies[0], fixture_index, config, registry=registry)
        assert excinfo.value.stage == "retrieval"
        assert type(excinfo.value.cause).__name__ == "BackendTimeout"
        assert excinfo.value.exit_code == 3
        assert {r.url.path for r in server.requests} == {"/v1/embeddings"}
        assert len(server.requests) == http_spec.max_attempts

        summary = run_corpus(test_studies[:1], fixture_index, config, registry=registry)
        assert summary.studies_failed == 1
        assert summary.failures[0].stage == "retrieval"
        assert (config.output_dir / TRACES_FILE).read_text() == ""

    def test_unresolvable_image_fails_one_study(self, tmp_path, corpus20, run_config):
        corpus, index, test = corpus20
        os.remove(test[7].image_ref)
        config = run_config(query_embeddings=corpus.sidecar)
        summary = run_corpus(test, index, config)
        assert (summary.studies_succeeded, summary.studies_failed) == (19, 1)
        assert summary.failures[0].study_id == test[7].study_id
        assert summary.failures[0].error_type == "ImageUnavailable"
        assert summary.failures[0].stage is None
        traces = load_traces(config.output_dir)
        assert len(traces) == 19
        assert test[7].study_id not in {t.study_id for t in traces}
        written = json.loads((config.output_dir / SUMMARY_FILE).read_text())
        assert written["studies_failed"] == 1

    def test_flaky_backend_accounting(self, corpus20, run_config):
        corpus, index, test = corpus20
        config = run_config(query_embeddings=corpus.sidecar)
        registry = BackendRegistry.from_config(config)
        flaky = FlakyBackend(rate=0.3, seed=5)
        registry.register(flaky)

        summary = run_corpus(test, index, config, registry=registry)
        traces = load_traces(config.output_dir)
        assert summary.studies_total == 20
        assert summary.studies_succeeded + summary.studies_failed == 20
        assert summary.studies_succeeded == len(traces)
        assert {f.study_id for f in summary.failures}.isdisjoint(t.study_id for t in traces)
        assert all(f.error_type == "RateLimited" and f.stage is not None for f in summary.failures)
        assert (summary.studies_failed > 0) == (flaky.raised > 0)
        assert [t.study_id for t in traces] == [s.study_id for s in test if s.study_id in {t.study_id for t in traces}]

    def test_test_study_in_index_is_rejected(self, fixture_corpus, fixture_index, run_config):
        indexed = fixture_corpus.studies[0]
        leaked = Study(indexed.study_id, indexed.image_ref, indexed.reference_report, Split.TEST)
        with pytest.raises(DataError, match=indexed.study_id):
            run_corpus([leaked], fixture_index, run_config())


class TestPersistence:
    def test_resume_skips_finished_studies(self, fixture_index, test_studies, run_config):
        config = run_config()
        run_corpus(test_studies, fixture_index, config)
        traces_path = config.output_dir / TRACES_FILE
        lines = traces_path.read_text().splitlines(keepends=True)
        traces_path.write_text("".join(lines[:2]))

        summary = run_corpus(test_studies, fixture_index, config.with_overrides(resume=True))
        assert summary.studies_resumed == 2
        assert summary.studies_succeeded == 4
        assert sorted(t.study_id for t in load_traces(traces_path)) == sorted(s.study_id for s in test_studies)

    def test_resume_ignores_traces_of_other_configs(self, fixture_index, test_studies, run_config):
        run_corpus(test_studies, fixture_index, run_config())
        summary = run_corpus(test_studies, fixture_index, run_config(k=3, resume=True))
        assert summary.studies_resumed == 0
        assert summary.studies_succeeded == 4

    def test_fresh_run_truncates(self, fixture_index, test_studies, run_config):
        config = run_config()
        run_corpus(test_studies, fixture_index, config)
        run_corpus(test_studies, fixture_index, config)
        assert len(load_traces(config.output_dir)) == 4

    def test_corrupt_lines_are_skipped_with_diagnostics(self, fixture_index, test_studies, run_config):
        config = run_config()
        run_corpus(test_studies, fixture_index, config)
        traces_path = config.output_dir / TRACES_FILE
        with traces_path.open("a") as f:
            f.write('{"study_id": "half\n')
            f.write('{"study_id": "x", "mode": "full"}\n')
        diagnostics = []
        traces = load_traces(traces_path, diagnostics)
        assert len(traces) == 4
        assert [d.line for d in diagnostics] == [5, 6]
        assert all(isinstance(d, LineDiagnostic) for d in diagnostics)

    def test_invalid_utf8_line_is_a_diagnostic(self, fixture_index, test_studies, run_config):
        config = run_config()
        run_corpus(test_studies, fixture_index, config)
        traces_path = config.output_dir / TRACES_FILE
        with traces_path.open("ab") as f:
            f.write(b'{"study_id": "a\xff\xfe"}\n')
        diagnostics = []
        assert len(load_traces(traces_path, diagnostics)) == 4
        assert [(d.line, d.reason) for d in diagnostics] == [(5, "invalid UTF-8")]

        bad_only = config.output_dir / "bad.jsonl"
        bad_only.write_bytes(b'{"study_id": "a\xff\xfe"}\n')
        diagnostics = []
        assert load_traces(bad_only, diagnostics) == []
        assert len(diagnostics) == 1

        summary = run_corpus(test_studies, fixture_index, run_config(resume=True))
        assert summary.studies_resumed == 4

    def test_config_file_is_written(self, fixture_index, test_studies, run_config):
        config = run_config()
        run_corpus(test_studies, fixture_index, config)
        written = json.loads((config.output_dir / "config.json").read_text())
        assert written["config_digest"] == config.digest
        assert written["run"]["mode"] == "full"


KILL_SCRIPT = textwrap.dedent(
    """
    import sys
    import time

    from radorchestra.backends.mock import MockBackend
    from radorchestra.backends.registry import BackendRegistry
    from radorchestra.common.config import RunConfig
    from radorchestra.common.types import Split
    from radorchestra.ingest import build_retrieval_db, load_manifest, read_sidecar
    from radorchestra.orchestrator import run_corpus


    class SlowMock(MockBackend):
        def _chat(self, request):
            time.sleep(0.2)
            return super()._chat(request)


    corpus_dir, out_dir = sys.argv[1], sys.argv[2]
    studies = load_manifest(corpus_dir + "/manifest.jsonl")
    sidecar = corpus_dir + "/embeddings.jsonl"
    train = [s for s in studies if s.split is Split.TRAIN]
    test = [s for s in studies if s.split is Split.TEST]
    index = build_retrieval_db(train, sidecar=read_sidecar(sidecar))
    config = RunConfig(output_dir=out_dir, query_embeddings=sidecar, concurrency=2)
    registry = BackendRegistry.from_config(config)
    registry.register(SlowMock(seed=7, dims=64))
    run_corpus(test, index, config, registry=registry)
    """
)


@pytest.mark.slow
def test_killed_run_leaves_only_whole_lines(tmp_path):
    corpus = generate_fixture_corpus(seed=7, n=100, out_dir=tmp_path / "corpus")
    out_dir = tmp_path / "killed"
    env = {**os.environ, "PYTHONPATH": os.pathsep.join(sys.path)}
    process = subprocess.Popen(
        [sys.executable, "-c", KILL_SCRIPT, str(corpus.directory), str(out_dir)],
        env=env,
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )
    traces_path = out_dir / TRACES_FILE
    try:
        deadline = time.monotonic() + 60
        while time.monotonic() < deadline:
            if traces_path.exists() and traces_path.read_bytes().count(b"\n") >= 2:
                break
            if process.poll() is not None:
                break
            time.sleep(0.05)
    finally:
        process.kill()
        process.wait()

    data = traces_path.read_bytes()
    assert data.count(b"\n") >= 2
    assert data.endswith(b"\n")
    diagnostics = []
    traces = load_traces(traces_path, diagnostics)
    assert diagnostics == []
    assert len(traces) == data.count(b"\n")
