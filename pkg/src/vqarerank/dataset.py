"""Construct a balanced yes/no VQA training corpus.

Positive examples come from annotated target images, whose answers are
already known from question generation; that pool is heavily skewed
towards "Yes". Balancing examples are produced by sampling non-target
images of the same clothing category and letting a larger annotator model
label them. A final global downsampling step makes the Yes/No split exact.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass
from typing import Mapping, Sequence

from . import scoring
from .clients import TokenLogprobs, VqaRequest, bounded_map
from .domain import NO, YES, RetrievalQuery, VisualQuestion
from .errors import (
    AnnotatorUnavailable,
    BackendError,
    BackendUnavailable,
    DataError,
    MissingQuestions,
    OneClassEmpty,
)

logger = logging.getLogger(__name__)

TARGET_KNOWN = "target_known"
AUTO_ANNOTATED = "auto_annotated"

DEFAULT_ATTEMPT_CAP = 4
ANSWER_TOKENS = (YES, NO)


@dataclass(frozen=True)
class Triplet:
    """One training triplet: a query plus its annotated target image."""

    query: RetrievalQuery
    target_image_id: str

    def __post_init__(self):
        if not self.target_image_id:
            raise DataError(f"triplet {self.query.query_id!r} lacks a target image")
        if self.target_image_id == self.query.reference_image_id:
            raise DataError(
                f"triplet {self.query.query_id!r}: target equals reference image"
            )


@dataclass(frozen=True)
class VqaExample:
    """One (question, image(s), answer) record of the training corpus."""

    question_text: str
    image_refs: tuple[str, ...]
    answer: str
    source: str
    origin_query_id: str
    confidence: float | None = None  # annotator confidence; metadata only

    def __post_init__(self):
        if len(self.image_refs) not in (1, 2):
            raise DataError("image_refs must hold 1 or 2 ids")
        if len(set(self.image_refs)) != len(self.image_refs):
            raise DataError("image_refs must not repeat an id")
        if self.answer not in (YES, NO):
            raise DataError(f"answer must be Yes or No, got {self.answer!r}")
        if self.source not in (TARGET_KNOWN, AUTO_ANNOTATED):
            raise DataError(f"unknown source {self.source!r}")


@dataclass(frozen=True)
class BalanceReport:
    total_examples: int
    yes_fraction: float
    dual_image_fraction: float


def _example_images(
    question: VisualQuestion, reference_image_id: str, image_id: str
) -> tuple[str, ...]:
    if question.needs_reference:
        return (reference_image_id, image_id)
    return (image_id,)


def positives_from_targets(
    triplets: Sequence[Triplet],
    question_corpus: Mapping[str, Sequence[VisualQuestion]],
) -> list[VqaExample]:
    """One target-image example per generated question.

    The answer is the question's expected answer: the target image is the
    annotated ground truth, so it satisfies the modification by definition.
    """
    examples: list[VqaExample] = []
    for triplet in triplets:
        questions = question_corpus.get(triplet.query.query_id)
        if not questions:
            raise MissingQuestions(
                f"triplet {triplet.query.query_id!r} has no generated questions"
            )
        for question in questions:
            examples.append(
                VqaExample(
                    question_text=question.text,
                    image_refs=_example_images(
                        question, triplet.query.reference_image_id, triplet.target_image_id
                    ),
                    answer=question.expected_answer,
                    source=TARGET_KNOWN,
                    origin_query_id=triplet.query.query_id,
                )
            )
    return examples


def _opposite(answer: str) -> str:
    return NO if answer == YES else YES


def _annotated_label(logprobs: TokenLogprobs) -> tuple[str, float]:
    prob, _ = scoring.answer_probability(logprobs, ANSWER_TOKENS, YES)
    label = prob.predicted_answer
    return label, prob.of(label)


def sample_and_annotate(
    triplets: Sequence[Triplet],
    question_corpus: Mapping[str, Sequence[VisualQuestion]],
    image_pool: Mapping[str, Sequence[str]],
    annotator_client,
    rng_seed: int,
    per_question_attempt_cap: int = DEFAULT_ATTEMPT_CAP,
    *,
    fan_out: int = 8,
) -> list[VqaExample]:
    """Sample non-target images and annotate them to offset the Yes skew.

    For every question the builder seeks one example labeled opposite to
    the question's expected answer. Candidate images are drawn uniformly
    (seeded) from the same-category pool, excluding the triplet's own
    target and reference images; up to ``per_question_attempt_cap`` sampled
    images are annotated in one bounded fan-out batch and the first
    opposite-labeled one is kept. Questions whose attempts all come back
    with the majority label stay under-balanced and are logged.
    """
    rng = random.Random(rng_seed)
    plan: list[tuple[Triplet, VisualQuestion, list[str]]] = []
    requests: list[VqaRequest] = []
    for triplet in triplets:
        questions = question_corpus.get(triplet.query.query_id)
        if not questions:
            raise MissingQuestions(
                f"triplet {triplet.query.query_id!r} has no generated questions"
            )
        pool = [
            img
            for img in image_pool.get(triplet.query.category.value, ())
            if img not in (triplet.target_image_id, triplet.query.reference_image_id)
        ]
        for question in questions:
            attempts = rng.sample(pool, min(per_question_attempt_cap, len(pool)))
            plan.append((triplet, question, attempts))
            for image_id in attempts:
                requests.append(
                    VqaRequest(
                        question_text=question.text,
                        image_refs=_example_images(
                            question, triplet.query.reference_image_id, image_id
                        ),
                        answer_tokens=ANSWER_TOKENS,
                    )
                )

    try:
        results = bounded_map(requests, fan_out, annotator_client)
    except BackendUnavailable as exc:
        raise AnnotatorUnavailable(str(exc)) from exc

    examples: list[VqaExample] = []
    cursor = 0
    for triplet, question, attempts in plan:
        chunk = results[cursor : cursor + len(attempts)]
        cursor += len(attempts)
        wanted = _opposite(question.expected_answer)
        found = False
        for image_id, result in zip(attempts, chunk):
            if isinstance(result, BackendError):
                continue
            label, confidence = _annotated_label(result)
            if label != wanted:
                continue
            examples.append(
                VqaExample(
                    question_text=question.text,
                    image_refs=_example_images(
                        question, triplet.query.reference_image_id, image_id
                    ),
                    answer=label,
                    source=AUTO_ANNOTATED,
                    origin_query_id=triplet.query.query_id,
                    confidence=confidence,
                )
            )
            found = True
            break
        if not found:
            logger.warning(
                "attempt cap exhausted: no %r-labeled image found for question %r (query %s)",
                wanted, question.text, triplet.query.query_id,
            )
    return examples


def balance(
    positives: Sequence[VqaExample],
    annotated: Sequence[VqaExample],
    rng_seed: int,
    strategy: str = "downsample_majority",
) -> tuple[list[VqaExample], BalanceReport]:
    """Downsample the majority answer class until Yes and No counts match.

    Drops are uniform at random (seeded); surviving examples keep their
    original relative order so corpus files diff cleanly across runs.
    """
    if strategy != "downsample_majority":
        raise ValueError(f"unknown balancing strategy {strategy!r}")
    combined = list(positives) + list(annotated)
    yes_idx = [i for i, ex in enumerate(combined) if ex.answer == YES]
    no_idx = [i for i, ex in enumerate(combined) if ex.answer == NO]
    if not yes_idx or not no_idx:
        raise OneClassEmpty(
            f"cannot balance: {len(yes_idx)} Yes vs {len(no_idx)} No examples"
        )
    majority, minority = (yes_idx, no_idx) if len(yes_idx) >= len(no_idx) else (no_idx, yes_idx)
    rng = random.Random(rng_seed)
    drop = set(rng.sample(majority, len(majority) - len(minority)))
    corpus = [ex for i, ex in enumerate(combined) if i not in drop]

    total = len(corpus)
    yes = sum(1 for ex in corpus if ex.answer == YES)
    dual = sum(1 for ex in corpus if len(ex.image_refs) == 2)
    report = BalanceReport(
        total_examples=total,
        yes_fraction=yes / total,
        dual_image_fraction=dual / total,
    )
    return corpus, report


def build_corpus(
    triplets: Sequence[Triplet],
    question_corpus: Mapping[str, Sequence[VisualQuestion]],
    image_pool: Mapping[str, Sequence[str]],
    annotator_client,
    rng_seed: int,
    per_question_attempt_cap: int = DEFAULT_ATTEMPT_CAP,
    *,
    fan_out: int = 8,
) -> tuple[list[VqaExample], BalanceReport]:
    """Full pipeline: positives, annotated negatives, global balancing."""
    positives = positives_from_targets(triplets, question_corpus)
    annotated = sample_and_annotate(
        triplets,
        question_corpus,
        image_pool,
        annotator_client,
        rng_seed,
        per_question_attempt_cap,
        fan_out=fan_out,
    )
    return balance(positives, annotated, rng_seed)
