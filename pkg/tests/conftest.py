"""Shared fixtures for the radorchestra test suite"""

from typing import Callable

import pytest

from radorchestra.backends.mock import MockBackend
from radorchestra.common.config import BackendSpec, RunConfig
from radorchestra.common.types import Split
from radorchestra.ingest import FixtureCorpus, build_retrieval_db, generate_fixture_corpus, read_sidecar
from radorchestra.retrieval import RetrievalIndex
from tests.helpers import BASE_URL


@pytest.fixture
def mock():
    """Deterministic mock backend with the default seed"""
    return MockBackend(seed=7, dims=64)


@pytest.fixture
def fixture_corpus(tmp_path) -> FixtureCorpus:
    """Seed-7 synthetic corpus of 20 studies (16 train / 4 test)"""
    return generate_fixture_corpus(seed=7, n=20, out_dir=tmp_path / "fixture")


@pytest.fixture
def fixture_index(fixture_corpus) -> RetrievalIndex:
    train = [s for s in fixture_corpus.studies if s.split is Split.TRAIN]
    return build_retrieval_db(train, sidecar=read_sidecar(fixture_corpus.sidecar))


@pytest.fixture
def test_studies(fixture_corpus):
    return [s for s in fixture_corpus.studies if s.split is Split.TEST]


@pytest.fixture
def run_config(tmp_path, fixture_corpus) -> Callable[..., RunConfig]:
    """Factory for mock run configurations writing under tmp_path"""

    def make(**overrides) -> RunConfig:
        values = {
            "output_dir": tmp_path / "out",
            "query_embeddings": fixture_corpus.sidecar,
        }
        values.update(overrides)
        return RunConfig(**values)

    return make


@pytest.fixture
def http_spec() -> BackendSpec:
    return BackendSpec(
        backend_id="remote",
        kind="http",
        base_url=BASE_URL,
        model_name="test-model",
        max_attempts=4,
        deadline_s=60.0,
        timeout_s=5.0,
    )
