"""The re-ranking HTTP service, exercised in-process.

POST /rerank takes a query, candidates with raw CIR scores and (optional)
pre-generated questions, and answers with the ranking plus the reasoning
trace. This demo drives the FastAPI app through its test client so no
port or live backend is needed; `vqarerank serve` runs the same app for
real.

Run:  python demos/05_service_roundtrip.py
"""

import json

from fastapi.testclient import TestClient

from vqarerank import MockTextGenClient, MockVqaClient, RerankConfig
from vqarerank.config import AppConfig
from vqarerank.service import create_app

app = create_app(
    AppConfig(rerank=RerankConfig(n=4)),
    vqa_client=MockVqaClient(),  # deterministic hash-derived probabilities
    textgen_client=MockTextGenClient(),
)
client = TestClient(app)

body = {
    "query": {
        "query_id": "q1",
        "reference_image_id": "ref-7",
        "modification_text": "is sleeveless and bright yellow",
        "category": "toptee",
    },
    "candidates": [{"candidate_id": f"c{i}", "score": 10.0 - i} for i in range(6)],
    "questions": [
        {"text": "Is the top sleeveless?", "expected_answer": "Yes", "needs_reference": False},
        {"text": "Is the top bright yellow?", "expected_answer": "Yes", "needs_reference": False},
    ],
}

response = client.post("/rerank", json=body)
print(f"status: {response.status_code}\n")
payload = response.json()
print("ranking:")
for entry in payload["ranking"]:
    print(f"  {entry['candidate_image_id']:<4} fused={entry['fused_score']:.4f} "
          f"vqa={entry['vqa_score'] if entry['vqa_score'] is not None else '-'}")

print("\ntrace for the top candidate:")
top = payload["ranking"][0]["candidate_image_id"]
for candidate in payload["trace"]["candidates"]:
    if candidate["candidate_image_id"] == top:
        for entry in candidate["entries"]:
            print(f"  {entry['question']['text']:<28} -> {entry['predicted_answer']} "
                  f"(p={entry['probability_of_expected']:.2f})")

# schema violations answer 400 with the offending field path
bad = client.post("/rerank", json={"query": {"query_id": "q"}, "candidates": []})
print(f"\nmalformed request -> {bad.status_code}: "
      f"{json.dumps(bad.json()['detail'][:2], indent=None)}")
