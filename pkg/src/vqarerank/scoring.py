"""Numerical core: answer probabilities, VQA score, compression, fusion.

The final score of a candidate is

    fused = norm(cir_raw) + lambda_vqa * sigma_k(vqa)

where ``vqa`` is the mean probability of the expected answers and
``sigma_k`` compresses high VQA scores towards each other so that single
mispredicted questions cannot wreck an otherwise compatible candidate.
"""

from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np

from .domain import NO, YES, AnswerProbability, RerankConfig
from .errors import (
    EmptyQuestionSet,
    EmptyScoreList,
    MissingBothAnswerTokens,
    NonPositiveK,
)


def answer_probability(
    logprobs: Mapping[str, float],
    answer_tokens: tuple[str, str],
    expected_answer: str,
) -> tuple[AnswerProbability, float]:
    """Turn first-token log-probabilities into a renormalized yes/no pair.

    Raw probabilities are exponentiated token probabilities. When one of the
    two answer tokens is missing from the map (truncated top-k lists), its raw
    probability is filled in as max(0, 1 - p_other). The pair is then
    renormalized to sum to 1. Returns the pair and the probability of
    ``expected_answer``.
    """
    yes_token, no_token = answer_tokens
    raw_yes = math.exp(logprobs[yes_token]) if yes_token in logprobs else None
    raw_no = math.exp(logprobs[no_token]) if no_token in logprobs else None
    if raw_yes is None and raw_no is None:
        raise MissingBothAnswerTokens(
            f"neither {yes_token!r} nor {no_token!r} in log-probabilities"
        )
    if raw_yes is None:
        raw_yes = max(0.0, 1.0 - raw_no)
    if raw_no is None:
        raw_no = max(0.0, 1.0 - raw_yes)
    total = raw_yes + raw_no
    prob = AnswerProbability(p_yes=raw_yes / total, p_no=raw_no / total)
    return prob, prob.of(expected_answer)


def vqa_score(probabilities: Sequence[float]) -> float:
    """Mean probability of the expected answers over the question set."""
    if len(probabilities) == 0:
        raise EmptyQuestionSet("cannot average an empty probability list")
    return math.fsum(probabilities) / len(probabilities)


def sigma_k(x: float, k: float) -> float:
    """Sigmoid-like compression mapping 0 to 1/2 and 1 to 1.

    Evaluated through the tanh identity
        sigma_k(x) = 1/2 + coth(1/(2k)) * tanh(x/(2k)) / 2,
    which stays stable for extreme x/k where the exp form would overflow.
    """
    if not k > 0:
        raise NonPositiveK(f"k must be > 0, got {k}")
    half_inv_k = 1.0 / (2.0 * k)
    coth = 1.0 / math.tanh(half_inv_k)
    return 0.5 + coth * math.tanh(x * half_inv_k) / 2.0


def sigma_k_derivative(x: float, k: float) -> float:
    """Analytic d(sigma_k)/dx, used by the finite-difference stability check."""
    if not k > 0:
        raise NonPositiveK(f"k must be > 0, got {k}")
    half_inv_k = 1.0 / (2.0 * k)
    coth = 1.0 / math.tanh(half_inv_k)
    t = math.tanh(x * half_inv_k)
    return coth * (1.0 - t * t) * half_inv_k / 2.0


def normalize_cir(raw_scores: Sequence[float], mode: str = "min_max") -> list[float]:
    """Map raw CIR scores onto [0, 1] over the full candidate set.

    A degenerate range (all scores equal) maps every score to 0.5.
    """
    if len(raw_scores) == 0:
        raise EmptyScoreList("cannot normalize an empty score list")
    if mode != "min_max":
        raise ValueError(f"unsupported normalization mode {mode!r}")
    arr = np.asarray(raw_scores, dtype=np.float64)
    lo = float(arr.min())
    hi = float(arr.max())
    if hi == lo:
        return [0.5] * len(raw_scores)
    return [float(v) for v in (arr - lo) / (hi - lo)]


def fuse(cir_norm: float, vqa: float, config: RerankConfig) -> float:
    """Fused candidate score: cir_norm + lambda_vqa * sigma_k(vqa)."""
    if not (0.0 <= cir_norm <= 1.0):
        raise ValueError(f"cir_norm out of [0,1]: {cir_norm}")
    if not (0.0 <= vqa <= 1.0):
        raise ValueError(f"vqa out of [0,1]: {vqa}")
    return cir_norm + config.lambda_vqa * sigma_k(vqa, config.k)


def predicted_label(prob: AnswerProbability) -> str:
    """Hard yes/no label from a probability pair; ties go to Yes."""
    return YES if prob.p_yes >= prob.p_no else NO
