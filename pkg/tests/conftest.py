"""Shared fixtures, including the hand-derived golden re-ranking case.

The golden case: one dress query with three questions (expected Yes / No /
Yes, the third dual-image), eight candidates whose top four CIR scores are
nearly tied, lambda=0.068, k=0.8375, n=4. Expected numbers were computed
independently with a 50-digit high-precision evaluation of the fusion
formulas before the engine existed; see GOLDEN_EXPECTED below.
"""

import math

import pytest

from vqarerank.clients import MockVqaClient, VqaRequest
from vqarerank.domain import RerankConfig, RetrievalQuery, VisualQuestion


GOLDEN_QUERY = RetrievalQuery(
    query_id="q-dress-001",
    reference_image_id="ref-101",
    modification_text="is solid black with no sleeves and longer",
)

GOLDEN_QUESTIONS = [
    VisualQuestion(text="Is the dress solid black?", expected_answer="Yes"),
    VisualQuestion(text="Does the dress have sleeves?", expected_answer="No"),
    VisualQuestion(
        text="Is the dress longer than in the reference image?",
        expected_answer="Yes",
        needs_reference=True,
    ),
]

GOLDEN_CIR_SCORES = {
    "cand-01": 10.0,
    "cand-02": 9.98,
    "cand-03": 9.96,
    "cand-04": 9.94,
    "cand-05": 6.5,
    "cand-06": 4.0,
    "cand-07": 2.5,
    "cand-08": 0.0,
}

GOLDEN_CONFIG = RerankConfig(lambda_vqa=0.068, k=0.8375, n=4)

# Raw (p_yes, p_no) backend fixtures per top-4 candidate and question;
# None marks a token absent from the returned top log-probs.
GOLDEN_PROBS = {
    "cand-01": [(0.6, 0.4), (0.7, 0.3), (0.5, 0.5)],
    "cand-02": [(0.1, 0.9), (0.8, 0.2), (0.3, 0.7)],
    "cand-03": [(0.7, 0.3), (0.75, None), (0.4, 0.6)],
    "cand-04": [(0.95, 0.05), (0.1, 0.9), (0.9, 0.1)],
}

# Values frozen from the independent high-precision oracle run.
GOLDEN_EXPECTED = {
    "order": [
        "cand-04", "cand-01", "cand-03", "cand-02",
        "cand-05", "cand-06", "cand-07", "cand-08",
    ],
    "vqa": {
        "cand-04": 0.91666666666666667,
        "cand-01": 0.46666666666666667,
        "cand-03": 0.45,
        "cand-02": 0.2,
    },
    "fused": {
        "cand-04": 1.0596828667519903,
        "cand-01": 1.0512640488282352,
        "cand-03": 1.0466766949073086,
        "cand-02": 1.0395534701444192,
        "cand-05": 0.65,
        "cand-06": 0.4,
        "cand-07": 0.25,
        "cand-08": 0.0,
    },
}


def golden_vqa_requests(candidate_id):
    """The exact requests the engine issues for one top-4 candidate."""
    requests = []
    for question in GOLDEN_QUESTIONS:
        refs = (
            (GOLDEN_QUERY.reference_image_id, candidate_id)
            if question.needs_reference
            else (candidate_id,)
        )
        requests.append(
            VqaRequest(
                question_text=question.text,
                image_refs=refs,
                answer_tokens=GOLDEN_CONFIG.answer_tokens,
            )
        )
    return requests


def make_golden_client(**kwargs) -> MockVqaClient:
    client = MockVqaClient(strict=True, **kwargs)
    for candidate_id, probs in GOLDEN_PROBS.items():
        for request, (p_yes, p_no) in zip(golden_vqa_requests(candidate_id), probs):
            logprobs = {"Yes": math.log(p_yes)}
            if p_no is not None:
                logprobs["No"] = math.log(p_no)
            client.register(request, logprobs)
    return client


@pytest.fixture
def golden_client():
    return make_golden_client()
