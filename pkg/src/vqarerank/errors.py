"""Typed error taxonomy shared across the package.

Two broad families matter to callers: ``DataError`` (bad or inconsistent
input data, CLI exit code 2) and ``BackendError`` (inference backend
trouble, CLI exit code 3). Everything else is a plain ``VqaRerankError``.
"""

from __future__ import annotations


class VqaRerankError(Exception):
    """Base class for all typed errors raised by this package."""


# ---------------------------------------------------------------------------
# Data / validation errors (exit code 2)
# ---------------------------------------------------------------------------


class DataError(VqaRerankError):
    """Invalid, malformed or inconsistent input data."""


class EmptyModificationText(DataError):
    pass


class DuplicateQueryId(DataError):
    pass


class UnknownCategory(DataError):
    pass


class MalformedRecord(DataError):
    """A record file line failed to parse; carries the 1-based line number."""

    def __init__(self, path: str, line_number: int, reason: str):
        super().__init__(f"{path}:{line_number}: {reason}")
        self.path = path
        self.line_number = line_number
        self.reason = reason


class EmptyQuestionSet(DataError):
    pass


class EmptyScoreList(DataError):
    pass


class EmptyCorpus(DataError):
    pass


class NonPositiveK(DataError):
    pass


class MissingTarget(DataError):
    pass


class MissingCategory(DataError):
    pass


class MissingQuestions(DataError):
    pass


class SingleClassOnly(DataError):
    """AUC metrics are undefined when only one gold class is present."""


class OneClassEmpty(DataError):
    """Balancing is impossible when one answer class has no examples."""


class NotFound(DataError):
    pass


# ---------------------------------------------------------------------------
# Structured-output parse errors (a backend produced text we cannot use)
# ---------------------------------------------------------------------------


class ParseError(VqaRerankError):
    """Backend output does not follow the structured question format."""


class EmptyQuestionList(ParseError):
    pass


class InvalidExpectedAnswer(ParseError):
    pass


class NotAQuestion(ParseError):
    pass


# ---------------------------------------------------------------------------
# Backend errors (exit code 3)
# ---------------------------------------------------------------------------


class BackendError(VqaRerankError):
    """An inference backend failed."""


class BackendUnavailable(BackendError):
    pass


class AnnotatorUnavailable(BackendUnavailable):
    pass


class Timeout(BackendError):
    pass


class ProtocolError(BackendError):
    """The backend answered, but the response is malformed or unusable."""


class MissingBothAnswerTokens(BackendError):
    """Neither answer token appears in the returned log-probabilities."""


class ExhaustedRetries(BackendError):
    """All generation retries produced unparseable output."""

    def __init__(self, attempts: int, last_error: ParseError):
        super().__init__(
            f"question generation failed after {attempts} attempt(s): {last_error}"
        )
        self.attempts = attempts
        self.last_error = last_error
