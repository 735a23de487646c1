"""Versioned line-delimited file formats.

Every record file starts with a one-line header ``{"format": ..., "version":
...}`` followed by one JSON record per line. Records are written with a
fixed field order and compact separators so that re-runs with identical
inputs produce byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from .domain import (
    CandidateScore,
    CandidateTrace,
    Ranking,
    ReasoningTrace,
    TraceEntry,
    VisualQuestion,
)
from .dataset import VqaExample
from .errors import DataError, MalformedRecord

TRIPLETS = "cir-triplets"
CIR_SCORES = "cir-scores"
QUESTION_CORPUS = "question-corpus"
RANKINGS = "rankings"
TRACES = "traces"
VQA_CORPUS = "vqa-corpus"
IMAGE_INDEX = "image-index"
FIXTURES = "fixtures"
METRICS_REPORT = "metrics-report"

FORMAT_VERSION = 1


def dumps_record(record) -> str:
    return json.dumps(record, ensure_ascii=False, separators=(",", ":"))


def write_records(path: str | Path, format_name: str, records: Iterable[Mapping]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_record({"format": format_name, "version": FORMAT_VERSION}) + "\n")
        for record in records:
            fh.write(dumps_record(record) + "\n")


def read_records(path: str | Path, format_name: str) -> Iterator[tuple[int, dict]]:
    """Yield (line_number, record) pairs after checking the header line."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        lines = fh.readlines()
    if not lines:
        raise MalformedRecord(str(path), 1, "empty file, expected a format header")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise MalformedRecord(str(path), 1, f"invalid header: {exc}") from exc
    if not isinstance(header, dict) or header.get("format") != format_name:
        raise MalformedRecord(
            str(path), 1, f"expected format {format_name!r}, got {header!r}"
        )
    if header.get("version") != FORMAT_VERSION:
        raise MalformedRecord(
            str(path), 1, f"unsupported version {header.get('version')!r}"
        )
    for number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(str(path), number, f"invalid JSON: {exc}") from exc
        if not isinstance(record, dict):
            raise MalformedRecord(str(path), number, "record is not an object")
        yield number, record


def _require(record: dict, fields: Sequence[str], path: str, number: int) -> None:
    for field in fields:
        if field not in record:
            raise MalformedRecord(path, number, f"missing field {field!r}")


# ---------------------------------------------------------------------------
# Triplets and CIR scores (ingestion)
# ---------------------------------------------------------------------------


def load_triplet_records(path: str | Path) -> list[dict]:
    records = []
    for number, record in read_records(path, TRIPLETS):
        _require(record, ("query_id", "candidate", "target", "captions"), str(path), number)
        records.append(record)
    return records


def write_triplet_records(path: str | Path, records: Iterable[Mapping]) -> None:
    write_records(
        path,
        TRIPLETS,
        (
            {
                "query_id": r["query_id"],
                "candidate": r["candidate"],
                "target": r["target"],
                "captions": r["captions"],
                "category": r.get("category", "other"),
            }
            for r in records
        ),
    )


def load_cir_scores(path: str | Path) -> dict[str, dict[str, float]]:
    """Raw CIR scores grouped per query, preserving file order."""
    scores: dict[str, dict[str, float]] = {}
    for number, record in read_records(path, CIR_SCORES):
        _require(record, ("query_id", "candidate_id", "score"), str(path), number)
        per_query = scores.setdefault(str(record["query_id"]), {})
        candidate = str(record["candidate_id"])
        if candidate in per_query:
            raise MalformedRecord(
                str(path), number, f"duplicate candidate {candidate!r} for query {record['query_id']!r}"
            )
        try:
            per_query[candidate] = float(record["score"])
        except (TypeError, ValueError) as exc:
            raise MalformedRecord(str(path), number, f"score is not a number: {record['score']!r}") from exc
    return scores


def write_cir_scores(path: str | Path, scores: Mapping[str, Mapping[str, float]]) -> None:
    write_records(
        path,
        CIR_SCORES,
        (
            {"query_id": query_id, "candidate_id": candidate_id, "score": value}
            for query_id, per_query in scores.items()
            for candidate_id, value in per_query.items()
        ),
    )


# ---------------------------------------------------------------------------
# Question corpus
# ---------------------------------------------------------------------------


def question_to_dict(question: VisualQuestion) -> dict:
    return {
        "text": question.text,
        "expected_answer": question.expected_answer,
        "needs_reference": question.needs_reference,
    }


def question_from_dict(record: Mapping) -> VisualQuestion:
    return VisualQuestion(
        text=str(record["text"]),
        expected_answer=str(record["expected_answer"]),
        needs_reference=bool(record["needs_reference"]),
    )


def write_question_corpus(path: str | Path, entries: Iterable[Mapping]) -> None:
    """Entries carry query metadata plus the generated question list."""
    write_records(
        path,
        QUESTION_CORPUS,
        (
            {
                "query_id": e["query_id"],
                "reference_image_id": e["reference_image_id"],
                "category": e["category"],
                "modification_text": e["modification_text"],
                "questions": [question_to_dict(q) for q in e["questions"]],
            }
            for e in entries
        ),
    )


def load_question_corpus(path: str | Path) -> dict[str, dict]:
    corpus: dict[str, dict] = {}
    for number, record in read_records(path, QUESTION_CORPUS):
        _require(
            record,
            ("query_id", "reference_image_id", "category", "modification_text", "questions"),
            str(path),
            number,
        )
        try:
            questions = [question_from_dict(q) for q in record["questions"]]
        except (KeyError, TypeError, DataError) as exc:
            raise MalformedRecord(str(path), number, f"bad question entry: {exc}") from exc
        corpus[str(record["query_id"])] = {
            "query_id": str(record["query_id"]),
            "reference_image_id": str(record["reference_image_id"]),
            "category": str(record["category"]),
            "modification_text": str(record["modification_text"]),
            "questions": questions,
        }
    return corpus


# ---------------------------------------------------------------------------
# Rankings and traces
# ---------------------------------------------------------------------------


def candidate_score_to_dict(score: CandidateScore) -> dict:
    return {
        "candidate_image_id": score.candidate_image_id,
        "cir_score_raw": score.cir_score_raw,
        "cir_score_norm": score.cir_score_norm,
        "vqa_score": score.vqa_score,
        "fused_score": score.fused_score,
        "reranked": score.reranked,
    }


def ranking_to_record(query_id: str, ranking: Ranking) -> dict:
    return {
        "query_id": query_id,
        "ranking": [candidate_score_to_dict(e) for e in ranking.entries],
    }


def write_rankings(path: str | Path, rankings: Mapping[str, Ranking]) -> None:
    write_records(
        path,
        RANKINGS,
        (ranking_to_record(query_id, ranking) for query_id, ranking in rankings.items()),
    )


def load_rankings(path: str | Path) -> dict[str, Ranking]:
    rankings: dict[str, Ranking] = {}
    for number, record in read_records(path, RANKINGS):
        _require(record, ("query_id", "ranking"), str(path), number)
        entries = []
        for e in record["ranking"]:
            try:
                entries.append(
                    CandidateScore(
                        candidate_image_id=str(e["candidate_image_id"]),
                        cir_score_raw=float(e["cir_score_raw"]),
                        cir_score_norm=float(e["cir_score_norm"]),
                        fused_score=float(e["fused_score"]),
                        vqa_score=None if e.get("vqa_score") is None else float(e["vqa_score"]),
                    )
                )
            except (KeyError, TypeError, ValueError, DataError) as exc:
                raise MalformedRecord(str(path), number, f"bad ranking entry: {exc}") from exc
        rankings[str(record["query_id"])] = Ranking(tuple(entries))
    return rankings


def trace_to_record(trace: ReasoningTrace) -> dict:
    return {
        "query_id": trace.query_id,
        "candidates": [
            {
                "candidate_image_id": c.candidate_image_id,
                "vqa_score": c.vqa_score,
                "demoted": c.demoted,
                "error_count": c.error_count,
                "entries": [
                    {
                        "question": question_to_dict(e.question),
                        "predicted_answer": e.predicted_answer,
                        "probability_of_expected": e.probability_of_expected,
                    }
                    for e in c.entries
                ],
            }
            for c in trace.candidates
        ],
    }


def write_traces(path: str | Path, traces: Iterable[ReasoningTrace]) -> None:
    write_records(path, TRACES, (trace_to_record(t) for t in traces))


def load_traces(path: str | Path) -> dict[str, ReasoningTrace]:
    traces: dict[str, ReasoningTrace] = {}
    for number, record in read_records(path, TRACES):
        _require(record, ("query_id", "candidates"), str(path), number)
        candidates = []
        for c in record["candidates"]:
            try:
                entries = tuple(
                    TraceEntry(
                        question=question_from_dict(e["question"]),
                        predicted_answer=str(e["predicted_answer"]),
                        probability_of_expected=float(e["probability_of_expected"]),
                    )
                    for e in c["entries"]
                )
                candidates.append(
                    CandidateTrace(
                        candidate_image_id=str(c["candidate_image_id"]),
                        entries=entries,
                        vqa_score=None if c.get("vqa_score") is None else float(c["vqa_score"]),
                        demoted=bool(c.get("demoted", False)),
                        error_count=int(c.get("error_count", 0)),
                    )
                )
            except (KeyError, TypeError, ValueError, DataError) as exc:
                raise MalformedRecord(str(path), number, f"bad trace entry: {exc}") from exc
        traces[str(record["query_id"])] = ReasoningTrace(
            query_id=str(record["query_id"]), candidates=tuple(candidates)
        )
    return traces


# ---------------------------------------------------------------------------
# VQA training corpus
# ---------------------------------------------------------------------------


def vqa_example_to_dict(example: VqaExample) -> dict:
    # Field order is part of the format contract; confidence is metadata
    # only and never serialized.
    return {
        "question": example.question_text,
        "images": list(example.image_refs),
        "answer": example.answer,
        "source": example.source,
        "origin_query_id": example.origin_query_id,
    }


def write_vqa_corpus(path: str | Path, examples: Iterable[VqaExample]) -> None:
    write_records(path, VQA_CORPUS, (vqa_example_to_dict(e) for e in examples))


def load_vqa_corpus(path: str | Path) -> list[VqaExample]:
    examples = []
    for number, record in read_records(path, VQA_CORPUS):
        _require(
            record, ("question", "images", "answer", "source", "origin_query_id"), str(path), number
        )
        try:
            examples.append(
                VqaExample(
                    question_text=str(record["question"]),
                    image_refs=tuple(str(i) for i in record["images"]),
                    answer=str(record["answer"]),
                    source=str(record["source"]),
                    origin_query_id=str(record["origin_query_id"]),
                )
            )
        except DataError as exc:
            raise MalformedRecord(str(path), number, str(exc)) from exc
    return examples


# ---------------------------------------------------------------------------
# Image index and fixtures
# ---------------------------------------------------------------------------


def load_image_index(path: str | Path) -> dict[str, list[str]]:
    """Map category -> image ids, preserving file order."""
    index: dict[str, list[str]] = {}
    for number, record in read_records(path, IMAGE_INDEX):
        _require(record, ("image_id", "category"), str(path), number)
        index.setdefault(str(record["category"]), []).append(str(record["image_id"]))
    return index


def write_image_index(path: str | Path, entries: Iterable[tuple[str, str]]) -> None:
    write_records(
        path,
        IMAGE_INDEX,
        ({"image_id": image_id, "category": category} for image_id, category in entries),
    )


def load_fixtures(path: str | Path) -> dict[str, object]:
    fixtures: dict[str, object] = {}
    for number, record in read_records(path, FIXTURES):
        _require(record, ("key", "value"), str(path), number)
        fixtures[str(record["key"])] = record["value"]
    return fixtures


def write_fixtures(path: str | Path, fixtures: Mapping[str, object]) -> None:
    write_records(
        path, FIXTURES, ({"key": k, "value": v} for k, v in fixtures.items())
    )


# ---------------------------------------------------------------------------
# Metrics report
# ---------------------------------------------------------------------------


def write_metrics_report(path: str | Path, report: Mapping) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"format": METRICS_REPORT, "version": FORMAT_VERSION}
    payload.update(report)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=False, indent=2)
        fh.write("\n")


def format_metrics_table(report: Mapping) -> str:
    """Aligned text table: per-category R@10/R@50, Average and Global."""
    categories = report["categories"]
    average = report["average"]
    names = list(categories)
    header_top = ["Model"] + [c.capitalize() for c in names for _ in (0, 1)] + ["Average", "", ""]
    header_bot = [""] + ["R@10", "R@50"] * len(names) + ["R@10", "R@50", "Global"]
    row = [str(report.get("model", "run"))]
    for c in names:
        row += [f"{categories[c]['r@10']:.2f}", f"{categories[c]['r@50']:.2f}"]
    row += [
        f"{average['r@10']:.2f}",
        f"{average['r@50']:.2f}",
        f"{report['global']:.2f}",
    ]
    widths = [max(len(a), len(b), len(c)) for a, b, c in zip(header_top, header_bot, row)]
    lines = [
        "  ".join(cell.ljust(w) for cell, w in zip(cells, widths)).rstrip()
        for cells in (header_top, header_bot, row)
    ]
    return "\n".join(lines)
