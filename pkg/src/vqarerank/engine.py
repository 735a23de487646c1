"""End-to-end re-ranking of one query's candidate list.

The engine normalizes the raw CIR scores over the full candidate set,
selects the top-n candidates by raw CIR score, asks the VQA backend one
question per (candidate, question) pair through the bounded fan-out,
averages answer probabilities into a VQA score, fuses, and re-sorts.
Candidates outside the top-n keep their normalized CIR score, so a
non-reranked candidate can legitimately outrank a reranked one.
"""

from __future__ import annotations

import logging
from typing import Mapping, Sequence

from . import scoring
from .clients import TokenLogprobs, VqaRequest, bounded_map
from .domain import (
    CandidateScore,
    CandidateTrace,
    Ranking,
    ReasoningTrace,
    RerankConfig,
    RetrievalQuery,
    TraceEntry,
    VisualQuestion,
)
from .errors import (
    BackendError,
    BackendUnavailable,
    EmptyQuestionSet,
    EmptyScoreList,
    MissingBothAnswerTokens,
    Timeout,
)

logger = logging.getLogger(__name__)

DEFAULT_FAN_OUT = 8


def select_top_n(
    cir_scores: Mapping[str, float], n: int
) -> tuple[list[str], list[str]]:
    """Split candidate ids into (top, rest) by raw CIR score.

    The top list holds the min(n, N) highest-scored candidates; ties at the
    cutoff are broken by ascending candidate id. Together the two lists
    partition the input.
    """
    if not cir_scores:
        raise EmptyScoreList("no candidates to select from")
    ordered = sorted(cir_scores, key=lambda c: (-cir_scores[c], c))
    cut = min(max(n, 0), len(ordered))
    return ordered[:cut], ordered[cut:]


def _score_candidate(
    questions: Sequence[VisualQuestion],
    results: Sequence[TokenLogprobs | BackendError],
    answer_tokens: tuple[str, str],
) -> tuple[list[TraceEntry], float | None, int]:
    """Apply the per-candidate failure policy to one candidate's answers.

    Errored questions are excluded from the mean; when at least half of the
    questions errored the candidate is demoted (vqa_score None).
    """
    entries: list[TraceEntry] = []
    probabilities: list[float] = []
    errors = 0
    for question, result in zip(questions, results):
        if isinstance(result, BackendError):
            errors += 1
            continue
        try:
            prob, p_expected = scoring.answer_probability(
                result, answer_tokens, question.expected_answer
            )
        except MissingBothAnswerTokens:
            errors += 1
            continue
        probabilities.append(p_expected)
        entries.append(
            TraceEntry(
                question=question,
                predicted_answer=prob.predicted_answer,
                probability_of_expected=p_expected,
            )
        )
    if 2 * errors >= len(questions):
        return entries, None, errors
    return entries, scoring.vqa_score(probabilities), errors


def build_requests(
    query: RetrievalQuery,
    candidate_id: str,
    questions: Sequence[VisualQuestion],
    answer_tokens: tuple[str, str],
) -> list[VqaRequest]:
    """One request per question; dual-image questions attach the reference
    image first so the backend sees (reference, candidate)."""
    requests = []
    for q in questions:
        refs = (
            (query.reference_image_id, candidate_id)
            if q.needs_reference
            else (candidate_id,)
        )
        requests.append(
            VqaRequest(question_text=q.text, image_refs=refs, answer_tokens=answer_tokens)
        )
    return requests


def rerank(
    query: RetrievalQuery,
    cir_scores: Mapping[str, float],
    questions: Sequence[VisualQuestion],
    config: RerankConfig,
    vqa_client,
    *,
    fan_out: int = DEFAULT_FAN_OUT,
) -> tuple[Ranking, ReasoningTrace]:
    """Re-rank one query's candidates by fused CIR + VQA score."""
    if not questions:
        raise EmptyQuestionSet(f"query {query.query_id!r} has no questions")
    if not cir_scores:
        raise EmptyScoreList(f"query {query.query_id!r} has no candidate scores")

    candidate_ids = list(cir_scores)
    norms = dict(
        zip(candidate_ids, scoring.normalize_cir([cir_scores[c] for c in candidate_ids]))
    )
    top, rest = select_top_n(cir_scores, config.n)

    requests: list[VqaRequest] = []
    for candidate_id in top:
        requests.extend(build_requests(query, candidate_id, questions, config.answer_tokens))
    results = bounded_map(requests, fan_out, vqa_client)

    transport_failures = sum(
        1 for r in results if isinstance(r, (BackendUnavailable, Timeout))
    )
    if requests and transport_failures == len(requests):
        raise BackendUnavailable(
            f"all {len(requests)} VQA requests failed for query {query.query_id!r}"
        )

    scores: list[CandidateScore] = []
    traces: list[CandidateTrace] = []
    per_candidate = len(questions)
    for i, candidate_id in enumerate(top):
        chunk = results[i * per_candidate : (i + 1) * per_candidate]
        entries, vqa, errors = _score_candidate(questions, chunk, config.answer_tokens)
        if vqa is None:
            if errors:
                logger.warning(
                    "query %s: candidate %s demoted (%d/%d questions errored)",
                    query.query_id, candidate_id, errors, per_candidate,
                )
            scores.append(
                CandidateScore(
                    candidate_image_id=candidate_id,
                    cir_score_raw=cir_scores[candidate_id],
                    cir_score_norm=norms[candidate_id],
                    fused_score=norms[candidate_id],
                )
            )
            traces.append(
                CandidateTrace(
                    candidate_image_id=candidate_id,
                    entries=tuple(entries),
                    vqa_score=None,
                    demoted=True,
                    error_count=errors,
                )
            )
        else:
            fused = scoring.fuse(norms[candidate_id], vqa, config)
            scores.append(
                CandidateScore(
                    candidate_image_id=candidate_id,
                    cir_score_raw=cir_scores[candidate_id],
                    cir_score_norm=norms[candidate_id],
                    fused_score=fused,
                    vqa_score=vqa,
                )
            )
            traces.append(
                CandidateTrace(
                    candidate_image_id=candidate_id,
                    entries=tuple(entries),
                    vqa_score=vqa,
                    demoted=False,
                    error_count=errors,
                )
            )
    for candidate_id in rest:
        scores.append(
            CandidateScore(
                candidate_image_id=candidate_id,
                cir_score_raw=cir_scores[candidate_id],
                cir_score_norm=norms[candidate_id],
                fused_score=norms[candidate_id],
            )
        )

    return Ranking.from_scores(scores), ReasoningTrace(
        query_id=query.query_id, candidates=tuple(traces)
    )


def cir_only_ranking(cir_scores: Mapping[str, float]) -> Ranking:
    """Ranking by normalized CIR score alone (re-ranking disabled)."""
    if not cir_scores:
        raise EmptyScoreList("no candidate scores")
    ids = list(cir_scores)
    norms = scoring.normalize_cir([cir_scores[c] for c in ids])
    return Ranking.from_scores(
        CandidateScore(
            candidate_image_id=c,
            cir_score_raw=cir_scores[c],
            cir_score_norm=norm,
            fused_score=norm,
        )
        for c, norm in zip(ids, norms)
    )
