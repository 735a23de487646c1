"""Inference clients: mocks, live HTTP path, fan-out, response cache."""

import json
import math
import threading
from pathlib import Path

import httpx
import pytest

from vqarerank.clients import (
    CacheStore,
    CachingVqaClient,
    LiveClientConfig,
    MockTextGenClient,
    MockVqaClient,
    OpenAIChatClient,
    TextGenRequest,
    VqaRequest,
    bounded_map,
    build_textgen_body,
    build_vqa_body,
    content_hash,
    encode_body,
    parse_completion_response,
    parse_logprobs_response,
)
from vqarerank.errors import (
    BackendUnavailable,
    DataError,
    MissingBothAnswerTokens,
    ProtocolError,
    Timeout,
)
from vqarerank.scoring import answer_probability

FIXTURES = Path(__file__).parent / "fixtures"
TOKENS = ("Yes", "No")


def vqa_request(question="Is it black?", refs=("img-1",)):
    return VqaRequest(question_text=question, image_refs=tuple(refs), answer_tokens=TOKENS)


class TestRequests:
    def test_textgen_requires_positive_max_tokens(self):
        with pytest.raises(DataError):
            TextGenRequest(prompt="p", max_tokens=0)

    def test_vqa_image_ref_count(self):
        vqa_request(refs=("a",))
        vqa_request(refs=("a", "b"))
        with pytest.raises(DataError):
            vqa_request(refs=())
        with pytest.raises(DataError):
            vqa_request(refs=("a", "b", "c"))

    def test_content_hash_is_stable(self):
        # Frozen value: the cache and fixture keys must never drift.
        assert content_hash({"a": 1, "b": [2, 3]}) == (
            "efbd0040190fb0871831e606c581f8a66db79d8e2bb836745a70051306956070"
        )

    def test_hash_ignores_key_order(self):
        assert content_hash({"a": 1, "b": 2}) == content_hash({"b": 2, "a": 1})

    def test_cache_key_covers_full_request(self):
        # any config change that alters the request must miss the cache
        base = vqa_request()
        assert base.content_key() != vqa_request(question="Is it red?").content_key()
        assert base.content_key() != vqa_request(refs=("img-1", "img-2")).content_key()
        other_tokens = VqaRequest(question_text="Is it black?", image_refs=("img-1",),
                                  answer_tokens=("yes", "no"))
        assert base.content_key() != other_tokens.content_key()
        prompt = TextGenRequest(prompt="p", max_tokens=8)
        assert prompt.content_key() != TextGenRequest(prompt="p", max_tokens=9).content_key()


class TestMockClients:
    def test_textgen_fixture_lookup(self):
        client = MockTextGenClient()
        request = TextGenRequest(prompt="hello", max_tokens=16)
        client.register(request, "OUTPUT")
        assert client.complete(request) == "OUTPUT"

    def test_textgen_strict_unregistered(self):
        client = MockTextGenClient(strict=True)
        request = TextGenRequest(prompt="hello", max_tokens=16)
        with pytest.raises(ProtocolError) as excinfo:
            client.complete(request)
        assert request.content_key() in str(excinfo.value)

    def test_vqa_fixture_passthrough(self):
        client = MockVqaClient()
        request = vqa_request()
        client.register(request, {"Yes": math.log(0.9), "No": math.log(0.1)})
        assert client.answer_logprobs(request) == {
            "Yes": math.log(0.9), "No": math.log(0.1)
        }

    def test_vqa_default_is_pure(self):
        request = vqa_request("Is it striped?")
        a = MockVqaClient().answer_logprobs(request)
        b = MockVqaClient().answer_logprobs(request)
        assert a == b
        p = math.exp(a["Yes"])
        assert 0.05 <= p <= 0.95

    def test_registered_failure(self):
        client = MockVqaClient()
        request = vqa_request()
        client.register_failure(request, BackendUnavailable("scripted outage"))
        with pytest.raises(BackendUnavailable):
            client.answer_logprobs(request)


class TestWireProtocol:
    def test_request_fixtures_roundtrip_byte_for_byte(self):
        for name in ("wire_request_textgen.json", "wire_request_vqa.json",
                     "wire_response_vqa.json", "wire_response_textgen.json"):
            raw = (FIXTURES / name).read_bytes()
            assert encode_body(json.loads(raw)) == raw

    def test_serializer_reproduces_recorded_vqa_request(self):
        request = VqaRequest(
            question_text="Is the garment longer than in the reference image?",
            image_refs=("ref-101", "cand-04"),
            answer_tokens=TOKENS,
        )
        body = build_vqa_body(
            "vqa-v1", request, image_url_template="https://images.example/{image_id}.jpg"
        )
        assert encode_body(body) == (FIXTURES / "wire_request_vqa.json").read_bytes()

    def test_serializer_reproduces_recorded_textgen_request(self):
        request = TextGenRequest(
            prompt="Describe the change: is black with no sleeves", max_tokens=256
        )
        body = build_textgen_body("question-gen-v1", request)
        assert encode_body(body) == (FIXTURES / "wire_request_textgen.json").read_bytes()

    def test_vqa_request_body_fields(self):
        body = build_vqa_body("m", vqa_request(refs=("r", "c")))
        assert body["temperature"] == 0
        assert body["max_tokens"] == 1
        assert body["logprobs"] is True
        assert body["top_logprobs"] >= 5
        parts = body["messages"][0]["content"]
        assert [p["type"] for p in parts] == ["text", "image_url", "image_url"]

    def test_logprob_extraction_matches_fixture(self):
        payload = json.loads((FIXTURES / "wire_response_vqa.json").read_bytes())
        logprobs = parse_logprobs_response(payload, TOKENS)
        _, p_expected = answer_probability(logprobs, TOKENS, "Yes")
        # recorded raws 0.7/0.25 renormalize to 0.7/0.95
        assert abs(p_expected - 0.7368421052631579) < 1e-9

    def test_completion_extraction(self):
        payload = json.loads((FIXTURES / "wire_response_textgen.json").read_bytes())
        text = parse_completion_response(payload)
        assert text.startswith("```questions")

    def test_malformed_responses(self):
        with pytest.raises(ProtocolError):
            parse_completion_response({"choices": []})
        with pytest.raises(ProtocolError):
            parse_logprobs_response({"choices": [{}]}, TOKENS)
        with pytest.raises(ProtocolError):
            parse_logprobs_response(
                {"choices": [{"logprobs": {"content": [{"top_logprobs": [
                    {"token": "Yes", "logprob": float("inf")}]}]}}]},
                TOKENS,
            )

    def test_partial_token_list_kept(self):
        # only one answer token in the top-k: the map carries that single
        # entry and scoring fills in the complement downstream
        payload = {
            "choices": [{"logprobs": {"content": [{"top_logprobs": [
                {"token": "Yes", "logprob": math.log(0.7)},
                {"token": "Sure", "logprob": math.log(0.2)}]}]}}]
        }
        logprobs = parse_logprobs_response(payload, TOKENS)
        assert "Yes" in logprobs and "No" not in logprobs

    def test_missing_both_answer_tokens(self):
        payload = {
            "choices": [{"logprobs": {"content": [{"top_logprobs": [
                {"token": "Maybe", "logprob": -0.1}]}]}}]
        }
        with pytest.raises(MissingBothAnswerTokens):
            parse_logprobs_response(payload, TOKENS)


def live_client(handler, retries=0, timeout=0.2):
    config = LiveClientConfig(
        base_url="http://vqa.test",
        model="m",
        transport_retries=retries,
        timeout_seconds=timeout,
        backoff_seconds=0.0,
    )
    return OpenAIChatClient(config, transport=httpx.MockTransport(handler))


class TestLiveClient:
    def test_complete_success(self):
        def handler(request):
            body = json.loads(request.content)
            assert body["model"] == "m"
            return httpx.Response(200, json={
                "choices": [{"message": {"role": "assistant", "content": "done"}}]
            })

        client = live_client(handler)
        assert client.complete(TextGenRequest(prompt="p", max_tokens=4)) == "done"

    def test_unreachable_host(self):
        def handler(request):
            raise httpx.ConnectError("connection refused")

        client = live_client(handler)
        with pytest.raises(BackendUnavailable):
            client.complete(TextGenRequest(prompt="p", max_tokens=4))

    def test_timeout_typed(self):
        def handler(request):
            raise httpx.ReadTimeout("too slow")

        client = live_client(handler)
        with pytest.raises(Timeout):
            client.complete(TextGenRequest(prompt="p", max_tokens=4))

    def test_transport_retry_then_success(self):
        calls = {"n": 0}

        def handler(request):
            calls["n"] += 1
            if calls["n"] < 3:
                raise httpx.ConnectError("flaky")
            return httpx.Response(200, json={
                "choices": [{"message": {"role": "assistant", "content": "ok"}}]
            })

        client = live_client(handler, retries=2)
        assert client.complete(TextGenRequest(prompt="p", max_tokens=4)) == "ok"
        assert calls["n"] == 3

    def test_protocol_error_not_retried(self):
        calls = {"n": 0}

        def handler(request):
            calls["n"] += 1
            return httpx.Response(200, content=b"not json")

        client = live_client(handler, retries=2)
        with pytest.raises(ProtocolError):
            client.complete(TextGenRequest(prompt="p", max_tokens=4))
        assert calls["n"] == 1

    def test_server_error_maps_to_unavailable(self):
        client = live_client(lambda request: httpx.Response(503))
        with pytest.raises(BackendUnavailable):
            client.complete(TextGenRequest(prompt="p", max_tokens=4))

    def test_api_key_header_from_env(self, monkeypatch):
        monkeypatch.setenv("TEST_VQA_KEY", "sekrit")
        seen = {}

        def handler(request):
            seen["auth"] = request.headers.get("authorization")
            return httpx.Response(200, json={
                "choices": [{"message": {"role": "assistant", "content": "ok"}}]
            })

        config = LiveClientConfig(base_url="http://x.test", model="m", api_key_env="TEST_VQA_KEY")
        client = OpenAIChatClient(config, transport=httpx.MockTransport(handler))
        client.complete(TextGenRequest(prompt="p", max_tokens=4))
        assert seen["auth"] == "Bearer sekrit"


class TestBoundedMap:
    def requests(self, n):
        return [vqa_request(f"Is attribute {i} present?") for i in range(n)]

    def test_limit_enforced(self):
        client = MockVqaClient(latency=0.03)
        bounded_map(self.requests(8), 2, client)
        assert client.max_in_flight == 2

    def test_results_in_order_with_positional_errors(self):
        requests = self.requests(3)
        client = MockVqaClient()
        client.register_failure(requests[1], BackendUnavailable("dead"))
        results = bounded_map(requests, 4, client)
        assert isinstance(results[0], dict)
        assert isinstance(results[1], BackendUnavailable)
        assert isinstance(results[2], dict)

    def test_empty_input(self):
        assert bounded_map([], 3, MockVqaClient()) == []

    def test_limit_one_equals_sequential(self):
        requests = self.requests(6)
        sequential = [MockVqaClient().answer_logprobs(r) for r in requests]
        assert bounded_map(requests, 1, MockVqaClient()) == sequential

    def test_invalid_limit(self):
        with pytest.raises(DataError):
            bounded_map(self.requests(1), 0, MockVqaClient())


class TestCacheStore:
    def test_hit_skips_backend(self, tmp_path):
        store = CacheStore(tmp_path / "vqa.jsonl")
        inner = MockVqaClient()
        client = CachingVqaClient(inner, store)
        request = vqa_request()
        first = client.answer_logprobs(request)
        second = client.answer_logprobs(request)
        assert first == second
        assert inner.call_count == 1
        assert store.hits == 1 and store.misses == 1

    def test_replay_across_processes_is_byte_identical(self, tmp_path):
        path = tmp_path / "vqa.jsonl"
        request = vqa_request()
        client = CachingVqaClient(MockVqaClient(), CacheStore(path))
        captured = client.answer_logprobs(request)
        bytes_after_capture = path.read_bytes()

        fresh_inner = MockVqaClient(strict=True)  # would raise if contacted
        replayed = CachingVqaClient(fresh_inner, CacheStore(path)).answer_logprobs(request)
        assert replayed == captured
        assert path.read_bytes() == bytes_after_capture
        assert fresh_inner.call_count == 0

    def test_header_line_present(self, tmp_path):
        path = tmp_path / "cache.jsonl"
        CacheStore(path)
        header = json.loads(path.read_text().splitlines()[0])
        assert header == {"format": "response-cache", "version": 1}

    def test_concurrent_writers_keep_every_record_parseable(self, tmp_path):
        store = CacheStore(tmp_path / "c.jsonl")
        client = CachingVqaClient(MockVqaClient(), store)
        requests = [vqa_request(f"Is variant {i} shown?") for i in range(40)]

        def work(chunk):
            for r in chunk:
                client.answer_logprobs(r)

        threads = [threading.Thread(target=work, args=(requests[i::4],)) for i in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        lines = (tmp_path / "c.jsonl").read_text().splitlines()
        records = [json.loads(ln) for ln in lines]
        assert len(records) == 41  # header + one per distinct request
        assert len({r["key"] for r in records[1:]}) == 40
