"""Unit tests for shared types, text utilities and configuration"""

import io
import logging
import math

import pytest

from radorchestra.common.config import RunConfig, config_from_dict, load_config
from radorchestra.common.errors import (
    ConfigError,
    DataError,
    DimensionMismatch,
    NonFiniteVector,
    RateLimited,
    StageFailed,
)
from radorchestra.common.log_utils import LOG_FORMAT, LogContext, TruncatingFormatter
from radorchestra.common.text import canonical_json, digest, digest_text, join_sentences, segment_sentences, tokenize
from radorchestra.common.types import (
    EmbeddingVector,
    Mode,
    PipelineTrace,
    ReportText,
    Stage,
    StageArtifact,
    Study,
)

pytestmark = pytest.mark.unit


class TestSegmentation:
    def test_splits_on_terminal_punctuation(self):
        assert segment_sentences("Lungs clear. Heart normal! Effusion? None") == [
            "Lungs clear.",
            "Heart normal!",
            "Effusion?",
            "None",
        ]

    def test_abbreviations_do_not_end_sentences(self):
        text = "Compared with prior study, e.g. the film from Dr. Smith. No change."
        assert segment_sentences(text) == [
            "Compared with prior study, e.g. the film from Dr. Smith.",
            "No change.",
        ]

    def test_decimal_numbers_stay_inside_sentence(self):
        assert segment_sentences("Nodule measures 1.5 cm. Stable.") == ["Nodule measures 1.5 cm.", "Stable."]

    def test_abbreviation_before_possessive(self):
        assert segment_sentences("Compared to Dr. Smith's film, stable.") == ["Compared to Dr. Smith's film, stable."]

    def test_abbreviation_after_carriage_return(self):
        assert segment_sentences("Lungs clear.\rDr. Smith reviewed.") == ["Lungs clear.", "Dr. Smith reviewed."]
        assert segment_sentences("Lungs clear.\r\nDr. Smith reviewed.") == ["Lungs clear.", "Dr. Smith reviewed."]

    @pytest.mark.parametrize(
        "text",
        [
            "Lungs clear.\n\nHeart normal!  Effusion? None",
            "Compared with prior study, e.g. the film from Dr. Smith.\tNo change.",
            "Nodule measures 1.5 cm (cf. prior).\rStable",
        ],
    )
    def test_segmenting_joined_sentences_is_stable(self, text):
        sentences = segment_sentences(text)
        assert segment_sentences(join_sentences(sentences)) == sentences

    def test_empty_and_whitespace(self):
        assert segment_sentences("") == []
        assert segment_sentences("   \n ") == []


def test_tokenize_lowercases_and_drops_punctuation():
    assert tokenize("The Heart-size is NORMAL, 2nd view.") == ["the", "heart", "size", "is", "normal", "2nd", "view"]


def test_canonical_json_is_key_order_independent():
    assert canonical_json({"b": 1, "a": [1, 2]}) == canonical_json({"a": [1, 2], "b": 1}) == '{"a":[1,2],"b":1}'
    assert digest_text("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"


def test_digest_of_empty_content():
    assert digest(b"") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"


class TestEmbeddingVector:
    def test_dims_must_match_values(self):
        with pytest.raises(DimensionMismatch):
            EmbeddingVector(dims=3, values=(1.0, 2.0))

    def test_rejects_non_finite(self):
        with pytest.raises(NonFiniteVector):
            EmbeddingVector.of([1.0, math.nan])
        with pytest.raises(NonFiniteVector):
            EmbeddingVector.of([math.inf, 0.0])

    def test_round_trip(self):
        vector = EmbeddingVector.of([0.25, -1.5, 3.0])
        assert EmbeddingVector.from_dict(vector.to_dict()) == vector
        assert vector.norm() == pytest.approx(math.sqrt(0.0625 + 2.25 + 9.0))


def test_study_round_trip_and_validation():
    study = Study("s-1", "images/s-1.png", "Lungs clear.", "train")
    assert Study.from_dict(study.to_dict()) == study
    with pytest.raises(DataError):
        Study("", "x.png", None, "test")


def test_report_text_sentences_are_derived():
    report = ReportText("No effusion. Heart normal.")
    assert report.sentences == ("No effusion.", "Heart normal.")
    assert ReportText.from_dict(report.to_dict()) == report
    assert not ReportText("  ")


class TestStageArtifact:
    def test_digest_ignores_elapsed_ms(self):
        a = StageArtifact.create(Stage.DRAFT, {"text": "x"}, ["p"], "mock", elapsed_ms=3)
        b = StageArtifact.create(Stage.DRAFT, {"text": "x"}, ["p"], "mock", elapsed_ms=900)
        assert a.digest == b.digest
        assert a != b

    def test_digest_covers_content_and_parents(self):
        a = StageArtifact.create(Stage.DRAFT, {"text": "x"}, ["p"], "mock")
        assert a.digest != StageArtifact.create(Stage.DRAFT, {"text": "y"}, ["p"], "mock").digest
        assert a.digest != StageArtifact.create(Stage.DRAFT, {"text": "x"}, ["q"], "mock").digest

    def test_content_is_a_copy(self):
        artifact = StageArtifact.create(Stage.VISION, {"text": "x", "list": [1]})
        artifact.content["list"].append(2)
        assert artifact.content == {"text": "x", "list": [1]}

    def test_negative_elapsed_rejected(self):
        with pytest.raises(DataError):
            StageArtifact(Stage.DRAFT, "{}", (), "mock", -1)


def _vision_only_trace(final: str = "Caption.") -> PipelineTrace:
    vision = StageArtifact.create(Stage.VISION, {"text": "Caption."}, backend_id="mock")
    return PipelineTrace("s-1", Mode.VISION_ONLY, (vision,), ReportText(final), "cfg")


class TestPipelineTrace:
    def test_valid_vision_only_trace(self):
        trace = _vision_only_trace()
        trace.validate()
        assert PipelineTrace.from_dict(trace.to_dict()) == trace

    def test_final_report_must_come_from_producing_stage(self):
        with pytest.raises(DataError):
            _vision_only_trace("Something else.").validate()

    def test_stage_set_must_match_mode(self):
        vision = StageArtifact.create(Stage.VISION, {"text": "c"})
        trace = PipelineTrace("s-1", Mode.FULL, (vision,), ReportText("c"), "cfg")
        with pytest.raises(DataError):
            trace.validate()

    def test_parents_must_precede_children(self):
        retrieval = StageArtifact.create(Stage.RETRIEVAL, {"ranked": []})
        draft = StageArtifact.create(Stage.DRAFT, {"text": "d"}, [retrieval.digest])
        vision = StageArtifact.create(Stage.VISION, {"text": "c"})
        synthesis = StageArtifact.create(Stage.SYNTHESIS, {"text": "f"}, [draft.digest, vision.digest])
        ok = PipelineTrace("s", Mode.NO_REFINER, (retrieval, draft, vision, synthesis), ReportText("f"), "cfg")
        ok.validate()
        backwards = PipelineTrace("s", Mode.NO_REFINER, (draft, retrieval, vision, synthesis), ReportText("f"), "cfg")
        with pytest.raises(DataError):
            backwards.validate()

    def test_synthesis_must_consume_every_generative_stage(self):
        retrieval = StageArtifact.create(Stage.RETRIEVAL, {"ranked": []})
        draft = StageArtifact.create(Stage.DRAFT, {"text": "d"}, [retrieval.digest])
        vision = StageArtifact.create(Stage.VISION, {"text": "c"})
        synthesis = StageArtifact.create(Stage.SYNTHESIS, {"text": "f"}, [draft.digest])
        trace = PipelineTrace("s", Mode.NO_REFINER, (retrieval, draft, vision, synthesis), ReportText("f"), "cfg")
        with pytest.raises(DataError):
            trace.validate()


def test_mode_stage_sets():
    assert Mode.FULL.stages == frozenset(Stage)
    assert Mode.VISION_ONLY.stages == {Stage.VISION}
    assert not Mode.VISION_ONLY.needs_index
    assert Stage.REFINER not in Mode.NO_REFINER.stages
    assert Stage.VISION not in Mode.NO_VISION.stages


class TestRunConfig:
    def test_defaults_bind_every_role_to_mock(self):
        config = RunConfig()
        config.validate()
        assert config.k == 5
        assert config.mode is Mode.FULL
        assert config.backend_for("vision").kind == "mock"

    def test_digest_ignores_operational_fields(self, tmp_path):
        base = RunConfig()
        other = base.with_overrides(output_dir=tmp_path, concurrency=1, parallel_branches=False, resume=True)
        assert base.digest == other.digest
        assert base.digest != base.with_overrides(k=3).digest
        assert base.digest != base.with_overrides(mode="vision_only").digest

    def test_rejects_literal_api_key(self):
        with pytest.raises(ConfigError):
            config_from_dict({"backends": {"x": {"base_url": "http://h", "api_key": "sk-secret"}}})

    def test_rejects_unknown_role_and_keys(self):
        with pytest.raises(ConfigError):
            config_from_dict({"agents": {"critic": "mock"}})
        with pytest.raises(ConfigError):
            config_from_dict({"run": {"kk": 3}})

    def test_unbound_backend_fails_validation(self):
        config = config_from_dict({"agents": {"draft": "missing"}})
        with pytest.raises(ConfigError):
            config.validate()

    def test_k_must_be_positive(self):
        with pytest.raises(ConfigError):
            RunConfig(k=0).validate()

    def test_load_toml(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text(
            '[run]\nk = 3\nmode = "no_vision"\nquery_embeddings = "emb.jsonl"\n'
            "[grounding]\nthreshold = 0.5\n"
            '[backends.gpt]\nkind = "http"\nbase_url = "http://h/v1"\nmodel_name = "m"\napi_key_env = "KEY"\n'
            '[agents]\ndraft = "gpt"\n'
        )
        config = load_config(path)
        assert config.k == 3
        assert config.mode is Mode.NO_VISION
        assert config.grounding_threshold == 0.5
        assert config.query_embeddings == tmp_path / "emb.jsonl"
        assert config.backend_for("draft").api_key_env == "KEY"
        assert "KEY" in str(config.to_dict())

    def test_invalid_toml(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[run\nk=")
        with pytest.raises(ConfigError):
            load_config(path)


def test_errors_render_machine_readable():
    cause = RateLimited("rate limited (429)", attempts=4, backend_id="remote")
    failed = StageFailed("retrieval", cause)
    assert failed.exit_code == 3
    assert failed.to_dict() == {
        "type": "StageFailed",
        "message": failed.message,
        "stage": "retrieval",
        "cause": "RateLimited",
    }
    assert cause.to_dict()["attempts"] == 4
    assert ConfigError("x").exit_code == 1
    assert DataError("x").exit_code == 2


def test_log_context_lifts_truncation_for_its_block():
    stream = io.StringIO()
    handler = logging.StreamHandler(stream)
    handler.setFormatter(TruncatingFormatter(LOG_FORMAT, max_length=20))
    logger = logging.getLogger("radorchestra.tests.log_context")
    logger.addHandler(handler)
    logger.setLevel(logging.INFO)
    logger.propagate = False
    message = "x" * 50
    try:
        logger.info(message)
        with LogContext(logger):
            logger.info(message)
        logger.info(message)
    finally:
        logger.removeHandler(handler)
    lines = stream.getvalue().splitlines()
    assert [line.endswith("... [truncated]") for line in lines] == [True, False, True]
    assert lines[1].endswith(" - " + message)
