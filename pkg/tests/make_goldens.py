"""Regenerate the committed golden fixture files under tests/fixtures/.

Run from the repository root after an intentional engine or format change:

    python tests/make_goldens.py

The script refuses to write goldens that disagree with the frozen
independent-oracle constants in conftest.py, so a behavioral regression
cannot silently re-anchor the golden files to itself.
"""

import json
import math
from pathlib import Path

from conftest import (
    GOLDEN_CIR_SCORES,
    GOLDEN_CONFIG,
    GOLDEN_EXPECTED,
    GOLDEN_PROBS,
    GOLDEN_QUERY,
    GOLDEN_QUESTIONS,
    golden_vqa_requests,
    make_golden_client,
)
from vqarerank import formats
from vqarerank.engine import rerank

FIXTURES = Path(__file__).parent / "fixtures"


def check_against_oracle(ranking):
    assert ranking.candidate_ids() == GOLDEN_EXPECTED["order"], "order drifted"
    for entry in ranking.entries:
        expected = GOLDEN_EXPECTED["fused"][entry.candidate_image_id]
        assert abs(entry.fused_score - expected) < 1e-12, (
            f"{entry.candidate_image_id}: {entry.fused_score} != {expected}"
        )


def main():
    FIXTURES.mkdir(exist_ok=True)

    formats.write_cir_scores(
        FIXTURES / "golden_cir_scores.jsonl", {GOLDEN_QUERY.query_id: GOLDEN_CIR_SCORES}
    )
    formats.write_question_corpus(
        FIXTURES / "golden_questions.jsonl",
        [
            {
                "query_id": GOLDEN_QUERY.query_id,
                "reference_image_id": GOLDEN_QUERY.reference_image_id,
                "category": GOLDEN_QUERY.category.value,
                "modification_text": GOLDEN_QUERY.modification_text,
                "questions": GOLDEN_QUESTIONS,
            }
        ],
    )

    fixtures = {}
    for candidate_id, probs in GOLDEN_PROBS.items():
        for request, (p_yes, p_no) in zip(golden_vqa_requests(candidate_id), probs):
            logprobs = {"Yes": math.log(p_yes)}
            if p_no is not None:
                logprobs["No"] = math.log(p_no)
            fixtures[request.content_key()] = logprobs
    formats.write_fixtures(FIXTURES / "golden_vqa_fixtures.jsonl", fixtures)

    ranking, trace = rerank(
        GOLDEN_QUERY, GOLDEN_CIR_SCORES, GOLDEN_QUESTIONS, GOLDEN_CONFIG,
        make_golden_client(),
    )
    check_against_oracle(ranking)
    formats.write_rankings(FIXTURES / "golden_rankings.jsonl", {GOLDEN_QUERY.query_id: ranking})
    formats.write_traces(FIXTURES / "golden_traces.jsonl", [trace])

    service_body = {
        "query_id": GOLDEN_QUERY.query_id,
        "ranking": formats.ranking_to_record(GOLDEN_QUERY.query_id, ranking)["ranking"],
        "trace": formats.trace_to_record(trace),
    }
    (FIXTURES / "golden_service_response.json").write_text(
        json.dumps(service_body, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    print(f"goldens written to {FIXTURES}")


if __name__ == "__main__":
    main()
