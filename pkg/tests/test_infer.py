from __future__ import annotations

import itertools
import json
import threading

import httpx
import pytest

from pvminer.infer import (
    BatchResult,
    ContextOverflow,
    DecodingConfig,
    EndpointConfig,
    HttpError,
    InferenceRecordCache,
    batch_run,
    complete,
)
from pvminer.prompt import load_template

from fixtures import EXEMPLAR_RECORDS

ENDPOINT = EndpointConfig(base_url="http://fake/v1", model="test-model",
                          backoff=0.0)
CFG = DecodingConfig()


def chat_response(content: str) -> httpx.Response:
    return httpx.Response(
        200, json={"choices": [{"message": {"content": content}}]}
    )


def mock_client(handler) -> httpx.Client:
    return httpx.Client(transport=httpx.MockTransport(handler))


class TestDecodingConfig:
    def test_faithful_mode_rejects_sampling(self):
        with pytest.raises(ValueError):
            DecodingConfig(temperature=0.7)
        with pytest.raises(ValueError):
            DecodingConfig(do_sample=True)
        cfg = DecodingConfig(temperature=0.7, do_sample=True, paper_faithful=False)
        assert cfg.temperature == 0.7

    def test_defaults(self):
        assert CFG.temperature == 0.0
        assert CFG.max_new_tokens == 1024
        assert CFG.stop == ("JSON_END",)
        assert CFG.max_context_tokens == 8096

    def test_few_shot_widens_context(self):
        assert CFG.for_few_shot().max_context_tokens == 16384
        assert CFG.max_context_tokens == 8096  # original untouched


class TestComplete:
    def test_happy_path_payload(self):
        seen = {}

        def handler(request):
            seen["payload"] = json.loads(request.content)
            seen["url"] = str(request.url)
            return chat_response('{"results": []} JSON_END trailing')

        out = complete(ENDPOINT, "PROMPT", CFG, client=mock_client(handler))
        # Stop string and anything after it are stripped client-side too.
        assert out == '{"results": []} '
        assert seen["url"].endswith("/chat/completions")
        payload = seen["payload"]
        assert payload["model"] == "test-model"
        assert payload["messages"] == [{"role": "user", "content": "PROMPT"}]
        assert payload["temperature"] == 0.0
        assert payload["max_tokens"] == 1024
        assert payload["stop"] == ["JSON_END"]

    def test_api_key_header(self):
        seen = {}

        def handler(request):
            seen["auth"] = request.headers.get("authorization")
            return chat_response("ok")

        endpoint = EndpointConfig(base_url="http://fake/v1", model="m",
                                  api_key="sekret", backoff=0.0)
        complete(endpoint, "p", CFG, client=mock_client(handler))
        assert seen["auth"] == "Bearer sekret"

    def test_retry_then_success(self):
        statuses = itertools.chain([503, 503], itertools.repeat(200))

        def handler(request):
            status = next(statuses)
            if status != 200:
                return httpx.Response(status, text="overloaded")
            return chat_response("recovered")

        out = complete(ENDPOINT, "p", CFG, client=mock_client(handler))
        assert out == "recovered"

    def test_retries_exhausted(self):
        def handler(request):
            return httpx.Response(500, text="boom")

        with pytest.raises(HttpError) as exc:
            complete(ENDPOINT, "p", CFG, client=mock_client(handler))
        assert exc.value.status == 500

    def test_client_error_not_retried(self):
        calls = []

        def handler(request):
            calls.append(1)
            return httpx.Response(400, text="bad request")

        with pytest.raises(HttpError):
            complete(ENDPOINT, "p", CFG, client=mock_client(handler))
        assert len(calls) == 1

    def test_context_overflow_detected(self):
        def handler(request):
            return httpx.Response(
                400, text="This model's maximum context length exceeded"
            )

        with pytest.raises(ContextOverflow):
            complete(ENDPOINT, "p", CFG, client=mock_client(handler))

    def test_empty_prompt_rejected(self):
        with pytest.raises(ValueError):
            complete(ENDPOINT, "", CFG)


class TestCache:
    def test_hit_skips_network(self, tmp_path):
        cache = InferenceRecordCache(tmp_path)
        calls = []

        def handler(request):
            calls.append(1)
            return chat_response("fresh")

        client = mock_client(handler)
        first = complete(ENDPOINT, "p", CFG, cache=cache, client=client)
        second = complete(ENDPOINT, "p", CFG, cache=cache, client=client)
        assert first == second == "fresh"
        assert len(calls) == 1

    def test_key_sensitivity(self, tmp_path):
        cache = InferenceRecordCache(tmp_path)
        cache.put("m", CFG, "prompt-a", "out-a", latency=0.0)
        assert cache.get("m", CFG, "prompt-a") == "out-a"
        assert cache.get("m", CFG, "prompt-b") is None
        assert cache.get("other", CFG, "prompt-a") is None
        assert cache.get("m", CFG.for_few_shot(), "prompt-a") is None

    def test_collision_guard(self, tmp_path):
        cache = InferenceRecordCache(tmp_path)
        cache.put("m", CFG, "prompt", "out", latency=0.0)
        path = cache._path(cache.key("m", CFG, "prompt"))
        doc = json.loads(path.read_text())
        doc["prompt"] = "someone else's prompt"
        path.write_text(json.dumps(doc))
        assert cache.get("m", CFG, "prompt") is None

    def test_concurrent_puts(self, tmp_path):
        cache = InferenceRecordCache(tmp_path)

        def worker(i):
            cache.put("m", CFG, f"p{i}", f"c{i}", latency=0.0)

        threads = [threading.Thread(target=worker, args=(i,)) for i in range(16)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        for i in range(16):
            assert cache.get("m", CFG, f"p{i}") == f"c{i}"


class TestBatchRun:
    def test_mixed_outcomes(self, cb, tmp_path):
        def handler(request):
            prompt = json.loads(request.content)["messages"][0]["content"]
            if EXEMPLAR_RECORDS[1].message.text in prompt:
                return httpx.Response(400, text="bad")
            return chat_response('{"results": []}')

        result = batch_run(
            EXEMPLAR_RECORDS, load_template("baseline"), cb, ENDPOINT, CFG,
            client=mock_client(handler),
        )
        assert set(result.completions) == {"ex-patient"}
        assert set(result.failures) == {"ex-provider"}
        assert "HttpError" in result.failures["ex-provider"]

    def test_resume_from_cache(self, cb, tmp_path):
        cache = InferenceRecordCache(tmp_path)
        calls = []

        def handler(request):
            calls.append(1)
            return chat_response('{"results": []}')

        client = mock_client(handler)
        args = (EXEMPLAR_RECORDS, load_template("baseline"), cb, ENDPOINT, CFG)
        first = batch_run(*args, cache=cache, client=client)
        again = batch_run(*args, cache=cache, client=client)
        assert first.completions == again.completions
        assert len(calls) == len(EXEMPLAR_RECORDS)

    def test_concurrency(self, cb):
        def handler(request):
            return chat_response('{"results": []}')

        result = batch_run(
            EXEMPLAR_RECORDS, load_template("baseline"), cb, ENDPOINT, CFG,
            concurrency=4, client=mock_client(handler),
        )
        assert len(result.completions) == len(EXEMPLAR_RECORDS)
        with pytest.raises(ValueError):
            batch_run(EXEMPLAR_RECORDS, load_template("baseline"), cb,
                      ENDPOINT, CFG, concurrency=0)
