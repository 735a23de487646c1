"""Decompose a modification text into yes/no visual questions.

The text backend is asked for a fenced, line-delimited block::

    ```questions
    Is the garment black? | Yes | single
    Does the garment have sleeves? | No | single
    Is the garment longer than in the reference image? | Yes | dual
    ```

``parse_question_list`` understands that block, ``serialize_questions``
produces it, and ``generate_questions`` drives a text backend with a retry
budget for unparseable completions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from string import Template
from typing import Mapping, Sequence

from .domain import NO, YES, RetrievalQuery, VisualQuestion
from .errors import (
    BackendError,
    EmptyCorpus,
    EmptyQuestionList,
    ExhaustedRetries,
    InvalidExpectedAnswer,
    NotAQuestion,
    ParseError,
)

logger = logging.getLogger(__name__)

FENCE_OPEN = "```questions"
FENCE_CLOSE = "```"
FIELD_SEPARATOR = " | "
SINGLE_IMAGE = "single"
DUAL_IMAGE = "dual"

#: Hard cap on questions kept per query; extras are dropped with a warning.
MAX_QUESTIONS_PER_QUERY = 10

_ANSWER_WORDS = {"yes": YES, "no": NO}
_IMAGE_WORDS = {SINGLE_IMAGE: False, DUAL_IMAGE: True}


@lru_cache(maxsize=1)
def _load_default_template() -> str:
    return (
        resources.files("vqarerank.prompts")
        .joinpath("default_prompt.txt")
        .read_text(encoding="utf-8")
    )


@dataclass(frozen=True)
class QuestionGenPrompt:
    """A rendered question-generation prompt."""

    system_instructions: str
    in_context_example: str
    target_text: str
    rendered: str


@dataclass(frozen=True)
class QuestionGenStats:
    """Corpus-level statistics over generated questions."""

    avg_questions_per_triplet: float
    dual_image_fraction: float


def escape_field(text: str) -> str:
    """Escape record delimiters and line breaks inside a field value."""
    return (
        text.replace("\\", "\\\\")
        .replace("|", "\\|")
        .replace("\r", "\\r")
        .replace("\n", "\\n")
    )


def unescape_field(text: str) -> str:
    out: list[str] = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text):
            nxt = text[i + 1]
            mapped = {"\\": "\\", "|": "|", "n": "\n", "r": "\r", "`": "`"}.get(nxt)
            if mapped is not None:
                out.append(mapped)
                i += 2
                continue
        out.append(ch)
        i += 1
    return "".join(out)


def _prompt_escape(text: str) -> str:
    # Backticks could otherwise open or close a fence inside the prompt.
    return escape_field(text).replace("`", "\\`")


def build_prompt(modification_text: str, template: str | None = None) -> QuestionGenPrompt:
    """Render the question-generation prompt for one modification text.

    Rendering is deterministic, embeds exactly one in-context example and
    escapes any structured-output delimiters appearing in the target text.
    """
    raw = template if template is not None else _load_default_template()
    rendered = Template(raw).substitute(
        modification_text=_prompt_escape(modification_text)
    )
    example_start = raw.find("Example request:")
    example = raw[example_start : raw.find("Request:")] if example_start >= 0 else ""
    return QuestionGenPrompt(
        system_instructions=raw,
        in_context_example=example.strip(),
        target_text=modification_text,
        rendered=rendered,
    )


def serialize_questions(questions: Sequence[VisualQuestion]) -> str:
    """Serialize questions into the fenced record block parsed back by
    :func:`parse_question_list`."""
    lines = [FENCE_OPEN]
    for q in questions:
        flag = DUAL_IMAGE if q.needs_reference else SINGLE_IMAGE
        lines.append(FIELD_SEPARATOR.join([escape_field(q.text), q.expected_answer, flag]))
    lines.append(FENCE_CLOSE)
    return "\n".join(lines)


def _dedup_key(text: str) -> str:
    return " ".join(text.split()).casefold()


def parse_question_list(backend_output: str) -> list[VisualQuestion]:
    """Parse the backend's fenced block into validated questions.

    Duplicate question texts (case- and whitespace-insensitive) are dropped,
    keeping the first occurrence. At most MAX_QUESTIONS_PER_QUERY questions
    are kept.
    """
    # Split on "\n" only: splitlines() would also split on exotic
    # terminators (U+2028, \x1e, ...) that may legitimately occur inside a
    # question text.
    lines = [ln.rstrip("\r") for ln in backend_output.split("\n")]
    try:
        start = next(i for i, ln in enumerate(lines) if ln.strip() == FENCE_OPEN)
    except StopIteration:
        raise ParseError(f"no {FENCE_OPEN!r} fence found in backend output") from None
    try:
        end = next(i for i in range(start + 1, len(lines)) if lines[i].strip() == FENCE_CLOSE)
    except StopIteration:
        raise ParseError("question fence is never closed") from None

    questions: list[VisualQuestion] = []
    seen: set[str] = set()
    for ln in lines[start + 1 : end]:
        if not ln.strip():
            continue
        fields = ln.split(FIELD_SEPARATOR)
        if len(fields) != 3:
            raise ParseError(f"expected 3 ' | '-separated fields, got {len(fields)}: {ln!r}")
        text = unescape_field(fields[0].strip())
        answer_word = fields[1].strip().casefold()
        image_word = fields[2].strip().casefold()
        if answer_word not in _ANSWER_WORDS:
            raise InvalidExpectedAnswer(f"expected answer must be Yes or No, got {fields[1]!r}")
        if image_word not in _IMAGE_WORDS:
            raise ParseError(f"image flag must be 'single' or 'dual', got {fields[2]!r}")
        if not text.strip() or not text.rstrip().endswith("?"):
            raise NotAQuestion(f"not an interrogative sentence: {text!r}")
        key = _dedup_key(text)
        if key in seen:
            continue
        seen.add(key)
        questions.append(
            VisualQuestion(
                text=text,
                expected_answer=_ANSWER_WORDS[answer_word],
                needs_reference=_IMAGE_WORDS[image_word],
            )
        )
    if not questions:
        raise EmptyQuestionList("backend output contains no questions")
    if len(questions) > MAX_QUESTIONS_PER_QUERY:
        logger.warning(
            "dropping %d question(s) beyond the cap of %d",
            len(questions) - MAX_QUESTIONS_PER_QUERY,
            MAX_QUESTIONS_PER_QUERY,
        )
        questions = questions[:MAX_QUESTIONS_PER_QUERY]
    return questions


def generate_questions(
    query: RetrievalQuery,
    text_backend,
    retry_budget: int = 2,
    *,
    template: str | None = None,
    max_tokens: int = 512,
) -> list[VisualQuestion]:
    """Generate questions for one query through a text backend.

    Unparseable completions are re-requested up to ``retry_budget`` times;
    transport failures propagate immediately as backend errors.
    """
    from .clients import TextGenRequest  # local import to avoid a cycle

    prompt = build_prompt(query.modification_text, template=template)
    request = TextGenRequest(prompt=prompt.rendered, max_tokens=max_tokens)
    attempts = retry_budget + 1
    last_error: ParseError | None = None
    for attempt in range(attempts):
        try:
            completion = text_backend.complete(request)
        except BackendError:
            raise
        try:
            return parse_question_list(completion)
        except ParseError as exc:
            last_error = exc
            logger.debug("parse attempt %d/%d failed: %s", attempt + 1, attempts, exc)
    assert last_error is not None
    raise ExhaustedRetries(attempts, last_error)


def question_stats(corpus: Mapping[str, Sequence[VisualQuestion]]) -> QuestionGenStats:
    """Average questions per query and fraction of dual-image questions."""
    if not corpus:
        raise EmptyCorpus("question corpus is empty")
    counts = [len(qs) for qs in corpus.values()]
    total = sum(counts)
    dual = sum(1 for qs in corpus.values() for q in qs if q.needs_reference)
    return QuestionGenStats(
        avg_questions_per_triplet=total / len(counts),
        dual_image_fraction=(dual / total) if total else 0.0,
    )
