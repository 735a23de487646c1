"""HTTP re-ranking service."""

import json
import threading
from pathlib import Path

from fastapi.testclient import TestClient

from conftest import (
    GOLDEN_CIR_SCORES,
    GOLDEN_CONFIG,
    GOLDEN_QUERY,
    GOLDEN_QUESTIONS,
    make_golden_client,
)
from vqarerank.clients import MockTextGenClient, MockVqaClient, TextGenRequest
from vqarerank.config import AppConfig
from vqarerank.errors import BackendUnavailable
from vqarerank.questions import build_prompt, serialize_questions
from vqarerank.service import create_app

FIXTURES = Path(__file__).parent / "fixtures"


def golden_request_body(with_questions=True):
    body = {
        "query": {
            "query_id": GOLDEN_QUERY.query_id,
            "reference_image_id": GOLDEN_QUERY.reference_image_id,
            "modification_text": GOLDEN_QUERY.modification_text,
            "category": GOLDEN_QUERY.category.value,
        },
        "candidates": [
            {"candidate_id": cid, "score": score}
            for cid, score in GOLDEN_CIR_SCORES.items()
        ],
    }
    if with_questions:
        body["questions"] = [
            {"text": q.text, "expected_answer": q.expected_answer,
             "needs_reference": q.needs_reference}
            for q in GOLDEN_QUESTIONS
        ]
    return body


def golden_app(textgen_client=None):
    config = AppConfig(rerank=GOLDEN_CONFIG)
    return create_app(
        config,
        vqa_client=make_golden_client(),
        textgen_client=textgen_client or MockTextGenClient(),
    )


class TestRerankEndpoint:
    def test_golden_response_body(self):
        client = TestClient(golden_app())
        response = client.post("/rerank", json=golden_request_body())
        assert response.status_code == 200
        expected = json.loads((FIXTURES / "golden_service_response.json").read_text())
        assert response.json() == expected

    def test_questions_generated_when_absent(self):
        textgen = MockTextGenClient(strict=True)
        prompt = build_prompt(GOLDEN_QUERY.modification_text).rendered
        textgen.register(
            TextGenRequest(prompt=prompt, max_tokens=512),
            serialize_questions(GOLDEN_QUESTIONS),
        )
        client = TestClient(golden_app(textgen_client=textgen))
        response = client.post("/rerank", json=golden_request_body(with_questions=False))
        assert response.status_code == 200
        expected = json.loads((FIXTURES / "golden_service_response.json").read_text())
        assert response.json() == expected

    def test_schema_violation_400_with_field_path(self):
        client = TestClient(golden_app())
        body = golden_request_body()
        del body["query"]["modification_text"]
        response = client.post("/rerank", json=body)
        assert response.status_code == 400
        fields = [e["field"] for e in response.json()["detail"]]
        assert "query.modification_text" in fields

    def test_empty_candidates_rejected(self):
        client = TestClient(golden_app())
        body = golden_request_body()
        body["candidates"] = []
        response = client.post("/rerank", json=body)
        assert response.status_code == 400

    def test_unknown_category_rejected(self):
        client = TestClient(golden_app())
        body = golden_request_body()
        body["query"]["category"] = "spaceship"
        response = client.post("/rerank", json=body)
        assert response.status_code == 400
        assert "query" in response.json()["detail"][0]["field"]

    def test_backend_outage_502(self):
        vqa = MockVqaClient(strict=False)
        for cid in GOLDEN_CIR_SCORES:
            from vqarerank.engine import build_requests

            for request in build_requests(GOLDEN_QUERY, cid, GOLDEN_QUESTIONS,
                                           GOLDEN_CONFIG.answer_tokens):
                vqa.register_failure(request, BackendUnavailable("down"))
        app = create_app(AppConfig(rerank=GOLDEN_CONFIG), vqa_client=vqa,
                         textgen_client=MockTextGenClient())
        response = TestClient(app).post("/rerank", json=golden_request_body())
        assert response.status_code == 502

    def test_concurrent_identical_requests_identical_responses(self):
        client = TestClient(golden_app())
        body = golden_request_body()
        results = [None] * 6

        def hit(i):
            results[i] = client.post("/rerank", json=body).json()

        threads = [threading.Thread(target=hit, args=(i,)) for i in range(6)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert all(r == results[0] for r in results)

    def test_stateless_across_requests(self):
        client = TestClient(golden_app())
        first = client.post("/rerank", json=golden_request_body()).json()
        second = client.post("/rerank", json=golden_request_body()).json()
        assert first == second
