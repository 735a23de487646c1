"""Retrieval and classifier metrics.

Recall@k and MRR consume per-query rankings; the aggregation mirrors the
usual fashion benchmark layout (per-category R@10/R@50, their unweighted
averages, and a Global figure that averages Average R@10 and Average
R@50). Binary classifier metrics cover the VQA model evaluation surface:
accuracy, precision, recall at threshold 0.5, AUC-PR via step
interpolation and AUC-ROC via the rank statistic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .domain import NO, YES, Category, Ranking
from .errors import MissingCategory, MissingTarget, SingleClassOnly

FASHION_CATEGORIES = (Category.DRESS, Category.SHIRT, Category.TOPTEE)


def _target_rank(ranking: Ranking, target_id: str) -> int | None:
    return ranking.rank_of(target_id)


def recall_at_k(
    rankings: Mapping[str, Ranking],
    targets: Mapping[str, str],
    k: int,
) -> float:
    """Percentage of queries whose target appears in the top-k results."""
    if not rankings:
        raise MissingTarget("no rankings to evaluate")
    hits = 0
    for query_id, ranking in rankings.items():
        if query_id not in targets:
            raise MissingTarget(f"no target for query {query_id!r}")
        rank = _target_rank(ranking, targets[query_id])
        if rank is not None and rank <= k:
            hits += 1
    return 100.0 * hits / len(rankings)


def mrr(rankings: Mapping[str, Ranking], targets: Mapping[str, str]) -> float:
    """Mean reciprocal rank of the target over the full candidate list.

    A target absent from its candidate list contributes 0.
    """
    if not rankings:
        raise MissingTarget("no rankings to evaluate")
    reciprocal: list[float] = []
    for query_id, ranking in rankings.items():
        if query_id not in targets:
            raise MissingTarget(f"no target for query {query_id!r}")
        rank = _target_rank(ranking, targets[query_id])
        reciprocal.append(0.0 if rank is None else 1.0 / rank)
    return math.fsum(reciprocal) / len(reciprocal)


def global_recall(r_at10: float, r_at50: float) -> float:
    """The headline "Recall" figure: mean of R@10 and R@50."""
    return (r_at10 + r_at50) / 2.0


@dataclass(frozen=True)
class AggregateRow:
    """The Average columns of the results table."""

    avg_r_at_10: float
    avg_r_at_50: float
    global_score: float


def aggregate(per_category: Mapping[str, Mapping[str, float]]) -> AggregateRow:
    """Average the three clothing categories and compute the Global score.

    ``per_category`` maps category name to {"r@10": ..., "r@50": ...}.
    """
    values_10 = []
    values_50 = []
    for category in FASHION_CATEGORIES:
        metrics = per_category.get(category.value)
        if metrics is None:
            raise MissingCategory(f"missing metrics for category {category.value!r}")
        values_10.append(metrics["r@10"])
        values_50.append(metrics["r@50"])
    avg10 = math.fsum(values_10) / len(values_10)
    avg50 = math.fsum(values_50) / len(values_50)
    return AggregateRow(
        avg_r_at_10=avg10,
        avg_r_at_50=avg50,
        global_score=global_recall(avg10, avg50),
    )


# ---------------------------------------------------------------------------
# Binary classifier metrics for VQA answer prediction
# ---------------------------------------------------------------------------


def _as_binary(labels: Sequence[str]) -> np.ndarray:
    arr = np.zeros(len(labels), dtype=np.int64)
    for i, label in enumerate(labels):
        if label == YES:
            arr[i] = 1
        elif label != NO:
            raise ValueError(f"gold label must be Yes or No, got {label!r}")
    return arr


def auc_roc(scores: np.ndarray, labels: np.ndarray) -> float:
    """AUC-ROC by the rank statistic (average ranks handle ties)."""
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassOnly("AUC-ROC needs both classes")
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    ranks = np.empty(len(scores), dtype=np.float64)
    i = 0
    while i < len(sorted_scores):
        j = i
        while j + 1 < len(sorted_scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average 1-based rank
        i = j + 1
    rank_sum = float(ranks[pos].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def auc_pr(scores: np.ndarray, labels: np.ndarray) -> float:
    """AUC-PR via precision-recall step interpolation.

    Thresholds sweep the distinct scores from high to low; each recall
    increment contributes the precision reached at that threshold.
    """
    n_pos = int((labels == 1).sum())
    if n_pos == 0 or n_pos == len(labels):
        raise SingleClassOnly("AUC-PR needs both classes")
    order = np.argsort(-scores, kind="mergesort")
    sorted_labels = labels[order]
    sorted_scores = scores[order]
    area = 0.0
    tp = 0
    fp = 0
    prev_recall = 0.0
    i = 0
    while i < len(sorted_scores):
        j = i
        while j + 1 < len(sorted_scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        tp += int(sorted_labels[i : j + 1].sum())
        fp += (j - i + 1) - int(sorted_labels[i : j + 1].sum())
        recall = tp / n_pos
        precision = tp / (tp + fp)
        area += (recall - prev_recall) * precision
        prev_recall = recall
        i = j + 1
    return area


def vqa_classifier_metrics(
    predictions: Sequence[tuple[float, str]],
) -> dict[str, float]:
    """Threshold-0.5 accuracy/precision/recall plus both AUCs.

    ``predictions`` holds (p_yes, gold label) pairs with Yes as the
    positive class; p_yes >= 0.5 predicts Yes, matching the engine's
    tie-goes-to-Yes convention.
    """
    if not predictions:
        raise ValueError("predictions must be non-empty")
    scores = np.asarray([p for p, _ in predictions], dtype=np.float64)
    labels = _as_binary([g for _, g in predictions])
    if labels.min() == labels.max():
        raise SingleClassOnly("all gold labels identical; AUCs undefined")

    predicted = scores >= 0.5
    actual = labels == 1
    tp = int(np.sum(predicted & actual))
    fp = int(np.sum(predicted & ~actual))
    fn = int(np.sum(~predicted & actual))
    tn = int(np.sum(~predicted & ~actual))
    return {
        "accuracy": (tp + tn) / len(labels),
        "precision": tp / (tp + fp) if (tp + fp) else 0.0,
        "recall": tp / (tp + fn) if (tp + fn) else 0.0,
        "auc_pr": auc_pr(scores, labels),
        "auc_roc": auc_roc(scores, labels),
    }


# ---------------------------------------------------------------------------
# Re-ranking depth sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepPoint:
    n: int
    avg_recall: float
    requests_issued: int


def sweep_n(
    runner: Callable[[int], Mapping[str, Ranking]],
    n_values: Sequence[int],
    targets: Mapping[str, str],
    *,
    request_count: Callable[[], int] | None = None,
    ks: Sequence[int] = (10, 50),
) -> list[SweepPoint]:
    """Evaluate the recall/cost tradeoff across re-ranking depths.

    ``runner(n)`` re-ranks the fixed query set at depth n (n=0 means no
    re-ranking); ``request_count`` reads the cumulative number of backend
    requests issued, serving as the desk-scale latency proxy.
    """
    points: list[SweepPoint] = []
    before = request_count() if request_count else 0
    for n in n_values:
        rankings = runner(n)
        avg = math.fsum(recall_at_k(rankings, targets, k) for k in ks) / len(ks)
        after = request_count() if request_count else 0
        points.append(SweepPoint(n=n, avg_recall=avg, requests_issued=after - before))
        before = after
    return points
