"""Pipeline stages shared by the CLI commands and the HTTP service."""

from __future__ import annotations

import logging
from typing import Mapping, Sequence

from . import engine, evaluation, questions as qgen
from .clients import CachingTextGenClient, CachingVqaClient
from .config import AppConfig
from .domain import Category, Ranking, ReasoningTrace, RetrievalQuery, VisualQuestion, validate_query
from .errors import MissingQuestions

logger = logging.getLogger(__name__)


def queries_from_triplets(records: Sequence[Mapping]) -> list[RetrievalQuery]:
    seen: set[str] = set()
    return [validate_query(dict(r), seen) for r in records]


def targets_from_triplets(records: Sequence[Mapping]) -> dict[str, str]:
    return {str(r["query_id"]): str(r["target"]) for r in records}


def categories_from_triplets(records: Sequence[Mapping]) -> dict[str, str]:
    return {str(r["query_id"]): str(r.get("category", "other")) for r in records}


def generate_question_corpus(
    queries: Sequence[RetrievalQuery],
    text_client,
    *,
    retry_budget: int = 2,
    template: str | None = None,
) -> list[dict]:
    """One corpus entry per query, carrying the metadata rerank needs."""
    entries = []
    for query in queries:
        generated = qgen.generate_questions(
            query, text_client, retry_budget, template=template
        )
        entries.append(
            {
                "query_id": query.query_id,
                "reference_image_id": query.reference_image_id,
                "category": query.category.value,
                "modification_text": query.modification_text,
                "questions": generated,
            }
        )
    return entries


def query_from_corpus_entry(entry: Mapping) -> RetrievalQuery:
    return RetrievalQuery(
        query_id=str(entry["query_id"]),
        reference_image_id=str(entry["reference_image_id"]),
        modification_text=str(entry["modification_text"]),
        category=Category(str(entry["category"])),
    )


def rerank_all(
    cir_scores: Mapping[str, Mapping[str, float]],
    corpus: Mapping[str, Mapping],
    config: AppConfig,
    vqa_client,
) -> tuple[dict[str, Ranking], list[ReasoningTrace]]:
    """Re-rank every query present in the scores file.

    Every scored query must have a question corpus entry; questions are
    generated once per query and reused across its candidates.
    """
    rankings: dict[str, Ranking] = {}
    traces: list[ReasoningTrace] = []
    for query_id, scores in cir_scores.items():
        entry = corpus.get(query_id)
        if entry is None:
            raise MissingQuestions(f"no generated questions for query {query_id!r}")
        query = query_from_corpus_entry(entry)
        question_list: Sequence[VisualQuestion] = entry["questions"]
        ranking, trace = engine.rerank(
            query,
            dict(scores),
            question_list,
            config.rerank,
            vqa_client,
            fan_out=config.fan_out,
        )
        rankings[query_id] = ranking
        traces.append(trace)
    return rankings, traces


def evaluate_rankings(
    rankings: Mapping[str, Ranking],
    targets: Mapping[str, str],
    categories: Mapping[str, str],
    *,
    model_name: str = "run",
) -> dict:
    """Per-category metrics plus the Average/Global aggregation."""
    per_category: dict[str, dict[str, float]] = {}
    present = sorted({categories.get(q, "other") for q in rankings})
    for category in present:
        subset = {q: r for q, r in rankings.items() if categories.get(q, "other") == category}
        subset_targets = {q: targets[q] for q in subset}
        r10 = evaluation.recall_at_k(subset, subset_targets, 10)
        r50 = evaluation.recall_at_k(subset, subset_targets, 50)
        per_category[category] = {
            "r@10": r10,
            "r@50": r50,
            "recall": evaluation.global_recall(r10, r50),
            "mrr": evaluation.mrr(subset, subset_targets),
        }
    report: dict = {"model": model_name, "categories": per_category}

    overall_r10 = evaluation.recall_at_k(rankings, targets, 10)
    overall_r50 = evaluation.recall_at_k(rankings, targets, 50)
    report["overall"] = {
        "r@10": overall_r10,
        "r@50": overall_r50,
        "recall": evaluation.global_recall(overall_r10, overall_r50),
        "mrr": evaluation.mrr(rankings, targets),
        "queries": len(rankings),
    }

    fashion = [c.value for c in evaluation.FASHION_CATEGORIES]
    if all(c in per_category for c in fashion):
        row = evaluation.aggregate(per_category)
        report["average"] = {"r@10": row.avg_r_at_10, "r@50": row.avg_r_at_50}
        report["global"] = row.global_score
    else:
        # Fall back to the overall figures so the table stays printable.
        report["average"] = {"r@10": overall_r10, "r@50": overall_r50}
        report["global"] = evaluation.global_recall(overall_r10, overall_r50)
    return report


def client_stats(client) -> dict[str, int | None]:
    """Backend call and cache counters for operator-facing summaries."""
    stats: dict[str, int | None] = {"backend_calls": None, "cache_hits": None}
    if isinstance(client, (CachingTextGenClient, CachingVqaClient)):
        stats["cache_hits"] = client.store.hits
        stats["backend_calls"] = client.store.misses
        inner = client.inner
    else:
        inner = client
    calls = getattr(inner, "call_count", None)
    if calls is not None:
        stats["backend_calls"] = calls
    return stats
