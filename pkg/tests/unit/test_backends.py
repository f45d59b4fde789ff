"""Unit tests for backend clients, image payloads and the registry"""

import json
import time

import pytest

from radorchestra.backends import (
    BackendRegistry,
    ChatRequest,
    HttpBackend,
    ImagePayload,
    MediaType,
    MockBackend,
    VisionRequest,
    create_backend,
)
from radorchestra.backends.phrase_bank import CAPTION_ORDER, CAPTION_REGIONS, REPORT_FAMILIES, report_sentences
from radorchestra.common.config import BackendSpec, RunConfig
from radorchestra.common.errors import (
    AuthFailure,
    BackendHTTPError,
    BackendTimeout,
    ConfigError,
    DataError,
    DimensionMismatch,
    InvalidImage,
    MalformedResponse,
    RateLimited,
)
from radorchestra.common.text import segment_sentences
from tests.helpers import ScriptedServer, chat_body, embedding_body, jpeg_bytes, png_bytes, reply, timeout

pytestmark = pytest.mark.unit


def _backend(spec, *script) -> tuple:
    server = ScriptedServer(list(script))
    return HttpBackend(spec, client=server.client(), sleep=lambda s: None), server


def _chat(prompt: str = "Describe the film.", **kwargs) -> ChatRequest:
    return ChatRequest(system_prompt="You are a radiologist.", user_prompt=prompt, **kwargs)


class TestHttpRetries:
    def test_rate_limited_three_times_then_success(self, http_spec):
        backend, server = _backend(http_spec, reply(429), reply(429), reply(429), reply(200, chat_body("Lungs clear.")))
        response = backend.chat(_chat())
        assert response.text == "Lungs clear."
        assert response.attempts == 4
        assert response.usage == (12, 5)
        assert response.backend_id == "remote"
        assert len(server.requests) == 4

    def test_rate_limit_exhausts_attempts(self, http_spec):
        backend, server = _backend(http_spec, reply(429))
        with pytest.raises(RateLimited) as excinfo:
            backend.chat(_chat())
        assert excinfo.value.fields["attempts"] == 4
        assert len(server.requests) == 4

    def test_auth_failure_is_not_retried(self, http_spec):
        backend, server = _backend(http_spec, reply(401), reply(200, chat_body("never")))
        with pytest.raises(AuthFailure):
            backend.chat(_chat())
        assert len(server.requests) == 1

    def test_client_error_is_not_retried(self, http_spec):
        backend, server = _backend(http_spec, reply(400, text="bad request"))
        with pytest.raises(BackendHTTPError) as excinfo:
            backend.chat(_chat())
        assert excinfo.value.fields["status_code"] == 400
        assert len(server.requests) == 1

    def test_server_error_is_retried(self, http_spec):
        backend, server = _backend(http_spec, reply(503, text="busy"), reply(200, chat_body("Heart normal.")))
        assert backend.chat(_chat()).attempts == 2
        assert len(server.requests) == 2

    def test_timeout_exhausts_attempts(self, http_spec):
        backend, server = _backend(http_spec, timeout)
        with pytest.raises(BackendTimeout):
            backend.embed("query text")
        assert len(server.requests) == http_spec.max_attempts

    def test_request_timeout_is_cut_to_the_deadline(self, http_spec):
        spec = BackendSpec(**{**http_spec.to_dict(), "timeout_s": 30.0, "deadline_s": 2.0})
        backend, server = _backend(spec, reply(200, chat_body("ok")))
        backend.chat(_chat())
        assert 0 < server.requests[0].extensions["timeout"]["read"] <= 2.0

    @pytest.mark.slow
    def test_deadline_bounds_wall_time_with_real_sleep(self, http_spec):
        spec = BackendSpec(**{**http_spec.to_dict(), "deadline_s": 1.0, "max_attempts": 10})
        server = ScriptedServer([reply(503, text="busy")])
        backend = HttpBackend(spec, client=server.client())
        started = time.monotonic()
        with pytest.raises(BackendHTTPError):
            backend.chat(_chat())
        assert time.monotonic() - started < spec.deadline_s + 0.25
        assert 1 <= len(server.requests) < spec.max_attempts

    def test_single_attempt_spec(self, http_spec):
        spec = BackendSpec(**{**http_spec.to_dict(), "max_attempts": 1})
        backend, server = _backend(spec, reply(500))
        with pytest.raises(BackendHTTPError):
            backend.chat(_chat())
        assert len(server.requests) == 1


class TestHttpPayloads:
    def test_chat_payload_shape(self, http_spec):
        backend, server = _backend(http_spec, reply(200, chat_body("ok")))
        backend.chat(_chat("Findings?", max_tokens=128))
        sent = json.loads(server.requests[0].content)
        assert server.requests[0].url.path == "/v1/chat/completions"
        assert sent["model"] == "test-model"
        assert sent["max_tokens"] == 128
        assert sent["stream"] is False
        assert [m["role"] for m in sent["messages"]] == ["system", "user"]

    def test_vision_payload_carries_data_url(self, http_spec):
        image = ImagePayload.from_bytes(png_bytes(1))
        backend, server = _backend(http_spec, reply(200, chat_body("Caption.")))
        backend.caption(VisionRequest(system_prompt="sys", user_prompt="Describe.", image=image))
        parts = json.loads(server.requests[0].content)["messages"][1]["content"]
        assert parts[0] == {"type": "text", "text": "Describe."}
        assert parts[1]["image_url"]["url"] == image.data_url()
        assert parts[1]["image_url"]["url"].startswith("data:image/png;base64,")

    def test_bearer_token_from_environment(self, http_spec, monkeypatch):
        monkeypatch.setenv("RADORCHESTRA_TEST_KEY", "secret-token")
        spec = BackendSpec(**{**http_spec.to_dict(), "api_key_env": "RADORCHESTRA_TEST_KEY"})
        backend, server = _backend(spec, reply(200, chat_body("ok")))
        backend.chat(_chat())
        assert server.requests[0].headers["Authorization"] == "Bearer secret-token"

    def test_missing_key_variable_is_config_error(self, http_spec, monkeypatch):
        monkeypatch.delenv("RADORCHESTRA_TEST_KEY", raising=False)
        spec = BackendSpec(**{**http_spec.to_dict(), "api_key_env": "RADORCHESTRA_TEST_KEY"})
        with pytest.raises(ConfigError):
            HttpBackend(spec)

    def test_malformed_json_body(self, http_spec):
        backend, _ = _backend(http_spec, reply(200, text="not json"))
        with pytest.raises(MalformedResponse):
            backend.chat(_chat())

    def test_missing_choices(self, http_spec):
        backend, server = _backend(http_spec, reply(200, {"id": "x"}))
        with pytest.raises(MalformedResponse):
            backend.chat(_chat())
        assert len(server.requests) == 1

    def test_embedding_dims_are_checked(self, http_spec):
        spec = BackendSpec(**{**http_spec.to_dict(), "dims": 3})
        backend, _ = _backend(spec, reply(200, embedding_body([1.0, 0.0])))
        with pytest.raises(DimensionMismatch):
            backend.embed("text")

    def test_embedding_round_trip(self, http_spec):
        backend, server = _backend(http_spec, reply(200, embedding_body([0.5, -0.5, 1.0])))
        vector = backend.embed("No acute findings.")
        assert vector.values == (0.5, -0.5, 1.0)
        assert json.loads(server.requests[0].content)["input"] == "No acute findings."
        assert server.requests[0].url.path == "/v1/embeddings"

    def test_empty_embed_payload(self, http_spec):
        backend, server = _backend(http_spec, reply(200, embedding_body([1.0])))
        with pytest.raises(DataError):
            backend.embed("")
        assert server.requests == []


class TestMockBackend:
    def test_chat_quotes_prompt_sentences_most_frequent_first(self, mock):
        first, second = report_sentences()[0], report_sentences()[1]
        prompt = f"Report A: {first} {second}\nReport B: {second}"
        response = mock.chat(_chat(prompt, max_tokens=512))
        assert segment_sentences(response.text) == [second, first]

    def test_chat_respects_sentence_budget(self, mock):
        prompt = " ".join(report_sentences()[:6])
        response = mock.chat(_chat(prompt, max_tokens=128))
        assert len(segment_sentences(response.text)) == 2

    def test_chat_is_deterministic(self, mock):
        request = _chat("Nothing from the bank here.")
        assert mock.chat(request).text == MockBackend(seed=7, dims=64).chat(request).text

    def test_seed_changes_unquoted_output(self):
        request = _chat("Nothing from the bank here.", max_tokens=320)
        texts = {MockBackend(seed=seed).chat(request).text for seed in range(5)}
        assert len(texts) > 1
        for text in texts:
            assert set(segment_sentences(text)) <= set(report_sentences())

    def test_seed_orders_equally_frequent_quoted_sentences(self):
        retrieved = "\n".join(f"{i}. {family.report(0)}" for i, family in enumerate(REPORT_FAMILIES[:4], start=1))
        request = _chat(f"Retrieved reports:\n{retrieved}\nWrite the findings.", max_tokens=512)
        texts = [MockBackend(seed=seed).chat(request).text for seed in range(100)]
        assert len(set(texts)) == len(texts)
        for text in texts:
            sentences = segment_sentences(text)
            assert len(sentences) == 8
            assert all(sentence in retrieved for sentence in sentences)
        assert MockBackend(seed=3).chat(request).text == texts[3]

    def test_caption_has_one_sentence_per_region(self, mock):
        image = ImagePayload.from_bytes(png_bytes(4))
        text = mock.caption(VisionRequest(system_prompt="sys", user_prompt="Describe.", image=image)).text
        sentences = segment_sentences(text)
        assert len(sentences) == len(CAPTION_ORDER)
        for sentence, region in zip(sentences, CAPTION_ORDER):
            assert sentence in CAPTION_REGIONS[region]

    def test_caption_ignores_prompt_text(self, mock):
        image = ImagePayload.from_bytes(png_bytes(4))
        a = mock.caption(VisionRequest(system_prompt="sys", user_prompt="Describe.", image=image)).text
        b = mock.caption(VisionRequest(system_prompt="sys", user_prompt="Other words.", image=image)).text
        assert a == b

    def test_caption_follows_encoded_bytes_not_pixels(self, mock):
        def caption(data: bytes) -> str:
            return mock.caption(VisionRequest(system_prompt="sys", user_prompt="Describe.", image=ImagePayload.from_bytes(data))).text

        pairs = [(caption(png_bytes(seed)), caption(jpeg_bytes(seed))) for seed in range(5)]
        assert any(png != jpeg for png, jpeg in pairs)
        assert ImagePayload.from_bytes(png_bytes(0)).digest != ImagePayload.from_bytes(jpeg_bytes(0)).digest

    def test_embed_is_unit_and_seeded(self, mock):
        vector = mock.embed("Lungs clear.")
        assert vector.dims == 64
        assert vector.norm() == pytest.approx(1.0)
        assert mock.embed("Lungs clear.") == vector
        assert MockBackend(seed=8, dims=64).embed("Lungs clear.") != vector
        assert mock.embed(png_bytes(2)) == mock.embed(ImagePayload.from_bytes(png_bytes(2)))

    def test_judge_purpose_returns_score_block(self, mock):
        text = mock.chat(_chat("Compare these reports.", purpose="judge")).text
        lines = text.splitlines()
        assert len(lines) == 6
        for line in lines[:5]:
            label, value = line.split(": ")
            assert 5 <= int(value) <= 9
        assert lines[5] == "Rationale: Deterministic mock judgement."


class TestImagePayload:
    def test_detects_png_and_jpeg(self):
        assert ImagePayload.from_bytes(png_bytes()).media_type is MediaType.PNG
        assert ImagePayload.from_bytes(jpeg_bytes()).media_type is MediaType.JPEG

    def test_rejects_unknown_and_empty(self):
        with pytest.raises(InvalidImage):
            ImagePayload.from_bytes(b"GIF89a....")
        with pytest.raises(InvalidImage):
            ImagePayload.from_bytes(b"")

    def test_rejects_corrupted_png(self):
        data = png_bytes()
        with pytest.raises(InvalidImage):
            ImagePayload.from_bytes(data[:20])

    def test_bytes_are_passed_through(self):
        data = jpeg_bytes(3)
        assert ImagePayload.from_bytes(data).data == data


class TestRequests:
    def test_empty_prompt_rejected(self):
        with pytest.raises(DataError):
            ChatRequest(system_prompt=" ", user_prompt="x")

    def test_vision_request_needs_image(self):
        with pytest.raises(InvalidImage):
            VisionRequest(system_prompt="s", user_prompt="u")

    def test_digest_depends_on_prompt(self):
        assert _chat("a").digest != _chat("b").digest
        assert _chat("a").digest == _chat("a").digest


class TestRegistry:
    def test_roles_resolve_to_shared_client(self):
        registry = BackendRegistry.from_config(RunConfig())
        assert registry.for_role("draft") is registry.for_role("vision")
        assert isinstance(registry.for_role("embedding"), MockBackend)

    def test_unknown_backend_and_role(self):
        registry = BackendRegistry({}, {"draft": "nowhere"})
        with pytest.raises(ConfigError):
            registry.for_role("draft")
        with pytest.raises(ConfigError):
            registry.for_role("vision")

    def test_register_replaces_client(self, http_spec):
        backend, _ = _backend(http_spec, reply(200, chat_body("ok")))
        registry = BackendRegistry({}, {"draft": "remote"})
        registry.register(backend)
        assert registry.for_role("draft") is backend

    def test_create_backend_validates_spec(self):
        with pytest.raises(ConfigError):
            create_backend(BackendSpec(backend_id="x", kind="grpc"))
        with pytest.raises(ConfigError):
            create_backend(BackendSpec(backend_id="x", kind="http"))
        assert isinstance(create_backend(BackendSpec(backend_id="m", kind="mock", seed=3)), MockBackend)
