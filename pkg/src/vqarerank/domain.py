"""Core data model for composed-image-retrieval re-ranking.

Every type is an immutable dataclass that validates its own invariants at
construction time, so instances can be shared freely across threads.
Images are opaque string ids throughout; pixels never enter this package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .errors import (
    DataError,
    DuplicateQueryId,
    EmptyModificationText,
    NonPositiveK,
    UnknownCategory,
)

YES = "Yes"
NO = "No"

#: Connector used when a triplet supplies two caption fragments.
CAPTION_JOINER = ", and "


class Category(str, Enum):
    DRESS = "dress"
    SHIRT = "shirt"
    TOPTEE = "toptee"
    OTHER = "other"


@dataclass(frozen=True)
class RetrievalQuery:
    """One retrieval query: a reference image plus a modification request."""

    query_id: str
    reference_image_id: str
    modification_text: str
    category: Category = Category.OTHER

    def __post_init__(self):
        if isinstance(self.category, str):
            try:
                object.__setattr__(self, "category", Category(self.category))
            except ValueError:
                raise UnknownCategory(f"unknown category {self.category!r}") from None
        if not self.modification_text.strip():
            raise EmptyModificationText(f"query {self.query_id!r} has empty text")
        if not self.query_id:
            raise DataError("query_id must be non-empty")
        if not self.reference_image_id:
            raise DataError(f"query {self.query_id!r} has empty reference image id")


@dataclass(frozen=True)
class CandidateSet:
    """The ordered pool of candidate image ids searched for one query."""

    candidates: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.candidates)) != len(self.candidates):
            raise DataError("candidate ids must be unique")

    @property
    def size(self) -> int:
        return len(self.candidates)


@dataclass(frozen=True)
class VisualQuestion:
    """A yes/no question derived from the modification text.

    ``expected_answer`` is the answer a correctly modified image produces;
    ``needs_reference`` marks questions that compare candidate and reference.
    """

    text: str
    expected_answer: str
    needs_reference: bool = False

    def __post_init__(self):
        if not self.text.strip() or not self.text.rstrip().endswith("?"):
            raise DataError(f"question text must be non-empty and end with '?': {self.text!r}")
        if self.expected_answer not in (YES, NO):
            raise DataError(f"expected_answer must be {YES!r} or {NO!r}, got {self.expected_answer!r}")


@dataclass(frozen=True)
class AnswerProbability:
    """Renormalized yes/no answer probabilities for one question."""

    p_yes: float
    p_no: float

    def __post_init__(self):
        if not (0.0 <= self.p_yes <= 1.0 and 0.0 <= self.p_no <= 1.0):
            raise DataError(f"probabilities out of range: {self.p_yes}, {self.p_no}")
        if abs(self.p_yes + self.p_no - 1.0) > 1e-9:
            raise DataError(f"p_yes + p_no must be 1, got {self.p_yes + self.p_no}")

    @property
    def predicted_answer(self) -> str:
        # Ties resolve to Yes.
        return YES if self.p_yes >= self.p_no else NO

    def of(self, answer: str) -> float:
        return self.p_yes if answer == YES else self.p_no


@dataclass(frozen=True)
class CandidateScore:
    """All scores attached to one candidate image for one query."""

    candidate_image_id: str
    cir_score_raw: float
    cir_score_norm: float
    fused_score: float
    vqa_score: float | None = None

    def __post_init__(self):
        if not (0.0 <= self.cir_score_norm <= 1.0):
            raise DataError(f"cir_score_norm out of [0,1]: {self.cir_score_norm}")
        if self.vqa_score is not None and not (0.0 <= self.vqa_score <= 1.0):
            raise DataError(f"vqa_score out of [0,1]: {self.vqa_score}")
        if self.vqa_score is None and self.fused_score != self.cir_score_norm:
            raise DataError(
                "non-reranked candidate must carry fused_score == cir_score_norm"
            )

    @property
    def reranked(self) -> bool:
        return self.vqa_score is not None


def ranking_sort_key(score: CandidateScore) -> tuple[float, str]:
    """Descending fused score; ties broken by ascending candidate id."""
    return (-score.fused_score, score.candidate_image_id)


@dataclass(frozen=True)
class Ranking:
    """Candidates of one query ordered by fused score (descending).

    Equal fused scores are ordered by ascending candidate id, which keeps
    golden files and metric computations deterministic.
    """

    entries: tuple[CandidateScore, ...]

    def __post_init__(self):
        ids = [e.candidate_image_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise DataError("ranking contains duplicate candidate ids")
        for a, b in zip(self.entries, self.entries[1:]):
            if ranking_sort_key(a) > ranking_sort_key(b):
                raise DataError("ranking entries are not in sorted order")

    @classmethod
    def from_scores(cls, scores: Iterable[CandidateScore]) -> "Ranking":
        return cls(tuple(sorted(scores, key=ranking_sort_key)))

    def rank_of(self, candidate_image_id: str) -> int | None:
        """1-based rank of a candidate, or None if absent."""
        for i, entry in enumerate(self.entries, start=1):
            if entry.candidate_image_id == candidate_image_id:
                return i
        return None

    def candidate_ids(self) -> list[str]:
        return [e.candidate_image_id for e in self.entries]


@dataclass(frozen=True)
class RerankConfig:
    """Knobs of the fusion stage.

    Defaults follow the reported operating point: a small fusion weight,
    a compression temperature below 1, and a re-ranking depth of 250.
    """

    lambda_vqa: float = 0.068
    k: float = 0.8375
    n: int = 250
    normalization: str = "min_max"
    answer_tokens: tuple[str, str] = (YES, NO)

    def __post_init__(self):
        if self.lambda_vqa < 0:
            raise DataError(f"lambda_vqa must be >= 0, got {self.lambda_vqa}")
        if not self.k > 0:
            raise NonPositiveK(f"k must be > 0, got {self.k}")
        if not (isinstance(self.n, int) and self.n >= 1):
            raise DataError(f"n must be a positive integer, got {self.n!r}")
        if self.normalization != "min_max":
            raise DataError(f"unsupported normalization mode {self.normalization!r}")
        if len(self.answer_tokens) != 2 or not all(self.answer_tokens):
            raise DataError("answer_tokens must be a pair of non-empty strings")


@dataclass(frozen=True)
class TraceEntry:
    """One answered question for one candidate."""

    question: VisualQuestion
    predicted_answer: str
    probability_of_expected: float

    def __post_init__(self):
        if self.predicted_answer not in (YES, NO):
            raise DataError(f"predicted_answer must be Yes/No, got {self.predicted_answer!r}")
        if not (0.0 <= self.probability_of_expected <= 1.0):
            raise DataError("probability_of_expected out of [0,1]")


@dataclass(frozen=True)
class CandidateTrace:
    """Per-question reasoning record behind one candidate's VQA score.

    ``vqa_score`` is None for candidates that were demoted by the failure
    policy; ``error_count`` counts questions whose answer request failed.
    """

    candidate_image_id: str
    entries: tuple[TraceEntry, ...]
    vqa_score: float | None
    demoted: bool = False
    error_count: int = 0

    def __post_init__(self):
        if self.vqa_score is not None:
            if not self.entries:
                raise DataError("a scored candidate trace needs at least one entry")
            mean = math.fsum(e.probability_of_expected for e in self.entries) / len(self.entries)
            if abs(mean - self.vqa_score) > 1e-9:
                raise DataError(
                    f"trace mean {mean} disagrees with vqa_score {self.vqa_score}"
                )


@dataclass(frozen=True)
class ReasoningTrace:
    """All candidate traces produced while re-ranking one query."""

    query_id: str
    candidates: tuple[CandidateTrace, ...] = field(default_factory=tuple)

    def for_candidate(self, candidate_image_id: str) -> CandidateTrace | None:
        for trace in self.candidates:
            if trace.candidate_image_id == candidate_image_id:
                return trace
        return None


def join_captions(captions: Sequence[str]) -> str:
    """Join caption fragments into a single modification text."""
    parts = [c.strip() for c in captions if c and c.strip()]
    return CAPTION_JOINER.join(parts)


def validate_query(record: dict, seen_ids: set[str] | None = None) -> RetrievalQuery:
    """Validate one raw triplet record into a RetrievalQuery.

    The record carries ``query_id``, ``candidate`` (the reference image id,
    following the ingestion schema), ``captions`` (one pre-joined text or a
    pair of fragments) and ``category``. When ``seen_ids`` is given, ids are
    checked for uniqueness across the run and recorded.
    """
    query_id = str(record.get("query_id", "")).strip()
    if not query_id:
        raise DataError("record lacks a query_id")
    if seen_ids is not None:
        if query_id in seen_ids:
            raise DuplicateQueryId(f"query id {query_id!r} appears more than once")
        seen_ids.add(query_id)

    captions = record.get("captions")
    if isinstance(captions, str):
        captions = [captions]
    if not isinstance(captions, (list, tuple)) or not captions:
        raise DataError(f"query {query_id!r}: captions must be a non-empty list")
    text = join_captions([str(c) for c in captions])
    if not text:
        raise EmptyModificationText(f"query {query_id!r} has empty modification text")

    raw_category = str(record.get("category", Category.OTHER.value))
    try:
        category = Category(raw_category)
    except ValueError:
        raise UnknownCategory(
            f"query {query_id!r}: unknown category {raw_category!r}"
        ) from None

    return RetrievalQuery(
        query_id=query_id,
        reference_image_id=str(record.get("candidate", "")),
        modification_text=text,
        category=category,
    )
