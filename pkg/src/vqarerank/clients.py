"""Clients for the two external model roles.

Text generation (question generator, dataset annotator) and VQA answer
scoring both speak a chat-completions-style HTTP protocol: messages with
text and image parts, temperature 0, and per-token log-probabilities for
the first generated token on VQA calls. A deterministic fixture-backed
mock mirrors each role for offline runs and tests.

``bounded_map`` is the only concurrency primitive in the package: it fans
requests out over a thread pool while keeping at most ``limit`` requests
in flight and reporting per-request failures positionally.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import httpx

from .errors import (
    BackendError,
    BackendUnavailable,
    DataError,
    MissingBothAnswerTokens,
    ProtocolError,
    Timeout,
)

logger = logging.getLogger(__name__)

#: First-token log-probabilities for the answer position.
TokenLogprobs = dict[str, float]

#: Answer instruction appended to every VQA question; it constrains the
#: model to a single answer token so first-token log-probs are meaningful.
VQA_ANSWER_INSTRUCTION = "Answer with exactly one word: Yes or No."
DUAL_IMAGE_NOTE = "The first image is the reference; the second is the candidate."

DEFAULT_TIMEOUT_SECONDS = 60.0
DEFAULT_TRANSPORT_RETRIES = 2
TOP_LOGPROBS = 5


@dataclass(frozen=True)
class TextGenRequest:
    prompt: str
    max_tokens: int = 512
    temperature: float = 0.0

    def __post_init__(self):
        if self.max_tokens < 1:
            raise DataError(f"max_tokens must be >= 1, got {self.max_tokens}")

    def content_key(self) -> str:
        return content_hash(
            {"prompt": self.prompt, "max_tokens": self.max_tokens, "temperature": self.temperature}
        )


@dataclass(frozen=True)
class VqaRequest:
    """One yes/no question about one or two images.

    ``image_refs`` holds the candidate image alone for single-image
    questions, or (reference, candidate) in that order for dual-image ones.
    """

    question_text: str
    image_refs: tuple[str, ...]
    answer_tokens: tuple[str, str]

    def __post_init__(self):
        if len(self.image_refs) not in (1, 2):
            raise DataError(f"image_refs must hold 1 or 2 refs, got {len(self.image_refs)}")

    def content_key(self) -> str:
        return content_hash(
            {
                "question_text": self.question_text,
                "image_refs": list(self.image_refs),
                "answer_tokens": list(self.answer_tokens),
            }
        )


def canonical_json(payload) -> str:
    """Stable serialization used for hashing and fixture keys."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def content_hash(payload) -> str:
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Wire protocol (chat-completions style)
# ---------------------------------------------------------------------------


def build_textgen_body(model: str, request: TextGenRequest) -> dict:
    return {
        "model": model,
        "messages": [
            {"role": "user", "content": [{"type": "text", "text": request.prompt}]}
        ],
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    }


def build_vqa_body(model: str, request: VqaRequest, image_url_template: str = "{image_id}") -> dict:
    text = request.question_text + "\n" + VQA_ANSWER_INSTRUCTION
    if len(request.image_refs) == 2:
        text = DUAL_IMAGE_NOTE + "\n" + text
    content: list[dict] = [{"type": "text", "text": text}]
    for ref in request.image_refs:
        content.append(
            {"type": "image_url", "image_url": {"url": image_url_template.format(image_id=ref)}}
        )
    return {
        "model": model,
        "messages": [{"role": "user", "content": content}],
        "temperature": 0,
        "max_tokens": 1,
        "logprobs": True,
        "top_logprobs": TOP_LOGPROBS,
    }


def encode_body(body: dict) -> bytes:
    """Canonical request encoding; fixture files round-trip byte-for-byte."""
    return canonical_json(body).encode("utf-8")


def parse_completion_response(payload: dict) -> str:
    try:
        text = payload["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise ProtocolError(f"malformed completion response: {exc!r}") from exc
    if not isinstance(text, str):
        raise ProtocolError("completion content is not text")
    return text


def parse_logprobs_response(payload: dict, answer_tokens: tuple[str, str]) -> TokenLogprobs:
    """Extract first-token top log-probabilities from a chat response."""
    try:
        first = payload["choices"][0]["logprobs"]["content"][0]
        entries = first["top_logprobs"]
    except (KeyError, IndexError, TypeError) as exc:
        raise ProtocolError(f"malformed logprobs response: {exc!r}") from exc
    logprobs: TokenLogprobs = {}
    for entry in entries:
        try:
            token = entry["token"]
            value = float(entry["logprob"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed top_logprobs entry: {entry!r}") from exc
        if not math.isfinite(value):
            raise ProtocolError(f"non-finite logprob for token {token!r}")
        if token not in logprobs:
            logprobs[token] = value
    if not any(tok in logprobs for tok in answer_tokens):
        raise MissingBothAnswerTokens(
            f"no answer token among returned tokens {sorted(logprobs)}"
        )
    return logprobs


@dataclass
class LiveClientConfig:
    base_url: str
    model: str
    api_key_env: str | None = None
    image_url_template: str = "{image_id}"
    timeout_seconds: float = DEFAULT_TIMEOUT_SECONDS
    transport_retries: int = DEFAULT_TRANSPORT_RETRIES
    backoff_seconds: float = 0.5


class OpenAIChatClient:
    """Live HTTP client for both model roles.

    Transport errors are retried with exponential backoff; protocol errors
    (unusable responses) are not. Credentials come from the environment
    variable named in the config, never from files.
    """

    def __init__(self, config: LiveClientConfig, transport: httpx.BaseTransport | None = None):
        self.config = config
        headers = {"Content-Type": "application/json"}
        if config.api_key_env:
            key = os.environ.get(config.api_key_env)
            if key:
                headers["Authorization"] = f"Bearer {key}"
        self._http = httpx.Client(
            base_url=config.base_url.rstrip("/"),
            headers=headers,
            timeout=config.timeout_seconds,
            transport=transport,
        )

    def _post(self, body: dict) -> dict:
        last_exc: Exception | None = None
        for attempt in range(self.config.transport_retries + 1):
            try:
                response = self._http.post("/chat/completions", content=encode_body(body))
            except httpx.TimeoutException as exc:
                last_exc = Timeout(f"request timed out after {self.config.timeout_seconds}s")
                last_exc.__cause__ = exc
            except httpx.TransportError as exc:
                last_exc = BackendUnavailable(f"transport failure: {exc}")
                last_exc.__cause__ = exc
            else:
                if response.status_code >= 500:
                    raise BackendUnavailable(f"backend returned HTTP {response.status_code}")
                if response.status_code >= 400:
                    raise ProtocolError(
                        f"backend rejected request: HTTP {response.status_code}: {response.text[:200]}"
                    )
                try:
                    return response.json()
                except ValueError as exc:
                    raise ProtocolError("response body is not JSON") from exc
            if attempt < self.config.transport_retries:
                delay = self.config.backoff_seconds * (2**attempt)
                logger.debug("transport retry %d in %.2fs", attempt + 1, delay)
                time.sleep(delay)
        assert last_exc is not None
        raise last_exc

    def complete(self, request: TextGenRequest) -> str:
        return parse_completion_response(self._post(build_textgen_body(self.config.model, request)))

    def answer_logprobs(self, request: VqaRequest) -> TokenLogprobs:
        body = build_vqa_body(self.config.model, request, self.config.image_url_template)
        return parse_logprobs_response(self._post(body), request.answer_tokens)

    def close(self):
        self._http.close()


# ---------------------------------------------------------------------------
# Deterministic mocks
# ---------------------------------------------------------------------------


class _InstrumentedMock:
    """Shared bookkeeping: call counts and the high-water mark of in-flight
    requests, so tests can assert the fan-out bound."""

    def __init__(self, latency: float = 0.0):
        self.latency = latency
        self.call_count = 0
        self.max_in_flight = 0
        self._in_flight = 0
        self._lock = threading.Lock()

    def _enter(self):
        with self._lock:
            self.call_count += 1
            self._in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self._in_flight)
        if self.latency:
            time.sleep(self.latency)

    def _exit(self):
        with self._lock:
            self._in_flight -= 1


_DEFAULT_MOCK_COMPLETION = "\n".join(
    [
        "```questions",
        "Is the garment as requested? | Yes | single",
        "Does the garment differ from the reference where asked? | Yes | dual",
        "```",
    ]
)


class MockTextGenClient(_InstrumentedMock):
    """Pure fixture-backed text backend keyed by prompt content hash.

    In strict mode an unregistered request raises ProtocolError naming the
    hash; otherwise a fixed, valid canned completion is returned.
    """

    def __init__(self, fixtures: Mapping[str, str] | None = None, *, strict: bool = False,
                 latency: float = 0.0):
        super().__init__(latency)
        self.fixtures = dict(fixtures or {})
        self.strict = strict

    def register(self, request: TextGenRequest, completion: str) -> str:
        key = request.content_key()
        self.fixtures[key] = completion
        return key

    def complete(self, request: TextGenRequest) -> str:
        self._enter()
        try:
            key = request.content_key()
            if key in self.fixtures:
                return self.fixtures[key]
            if self.strict:
                raise ProtocolError(f"no fixture registered for request hash {key}")
            return _DEFAULT_MOCK_COMPLETION
        finally:
            self._exit()


def _hash_unit_interval(key: str) -> float:
    # 8 hex bytes -> uniform in [0, 1); stable across platforms.
    return int(key[:16], 16) / float(1 << 64)


class MockVqaClient(_InstrumentedMock):
    """Pure fixture-backed VQA backend keyed by request content hash.

    Unregistered requests in non-strict mode get a deterministic
    pseudo-random probability derived from the hash, keeping large fuzz and
    sweep runs reproducible without per-request fixtures.
    """

    def __init__(self, fixtures: Mapping[str, TokenLogprobs] | None = None, *,
                 strict: bool = False, latency: float = 0.0,
                 failures: Mapping[str, BackendError] | None = None):
        super().__init__(latency)
        self.fixtures = dict(fixtures or {})
        self.failures = dict(failures or {})
        self.strict = strict

    def register(self, request: VqaRequest, logprobs: TokenLogprobs) -> str:
        key = request.content_key()
        self.fixtures[key] = dict(logprobs)
        return key

    def register_probability(self, request: VqaRequest, p_yes: float) -> str:
        yes_token, no_token = request.answer_tokens
        return self.register(
            request, {yes_token: math.log(p_yes), no_token: math.log(1.0 - p_yes)}
        )

    def register_failure(self, request: VqaRequest, error: BackendError) -> str:
        key = request.content_key()
        self.failures[key] = error
        return key

    def answer_logprobs(self, request: VqaRequest) -> TokenLogprobs:
        self._enter()
        try:
            key = request.content_key()
            if key in self.failures:
                raise self.failures[key]
            if key in self.fixtures:
                return dict(self.fixtures[key])
            if self.strict:
                raise ProtocolError(f"no fixture registered for request hash {key}")
            p_yes = 0.05 + 0.9 * _hash_unit_interval(key)
            yes_token, no_token = request.answer_tokens
            return {yes_token: math.log(p_yes), no_token: math.log(1.0 - p_yes)}
        finally:
            self._exit()


# ---------------------------------------------------------------------------
# Bounded fan-out
# ---------------------------------------------------------------------------


def bounded_map(
    requests: Sequence[VqaRequest],
    limit: int,
    client,
) -> list[TokenLogprobs | BackendError]:
    """Answer a batch of VQA requests with at most ``limit`` in flight.

    Results come back in input order; a failed request contributes its
    BackendError positionally instead of aborting the batch.
    """
    if limit < 1:
        raise DataError(f"fan-out limit must be >= 1, got {limit}")
    if not requests:
        return []

    def one(request: VqaRequest) -> TokenLogprobs | BackendError:
        try:
            return client.answer_logprobs(request)
        except BackendError as exc:
            return exc

    if limit == 1 or len(requests) == 1:
        return [one(r) for r in requests]
    with ThreadPoolExecutor(max_workers=limit) as pool:
        return list(pool.map(one, requests))


# ---------------------------------------------------------------------------
# Append-only response cache
# ---------------------------------------------------------------------------


class CacheStore:
    """Append-only, content-hash-keyed record store backing one backend.

    Each record is one JSON line ``{"key": ..., "value": ...}`` written in a
    single append, so concurrent writers interleave whole records. Replayed
    values are returned exactly as captured.
    """

    HEADER = {"format": "response-cache", "version": 1}

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[str, object] = {}
        self.hits = 0
        self.misses = 0
        if self.path.exists():
            self._load()
        else:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "w", encoding="utf-8") as fh:
                fh.write(canonical_json(self.HEADER) + "\n")

    def _load(self):
        with open(self.path, encoding="utf-8") as fh:
            for i, line in enumerate(fh):
                if not line.strip():
                    continue
                record = json.loads(line)
                if i == 0 and record.get("format") == self.HEADER["format"]:
                    continue
                self._entries[record["key"]] = record["value"]

    def get(self, key: str):
        with self._lock:
            return self._entries.get(key)

    def put(self, key: str, value) -> None:
        line = canonical_json({"key": key, "value": value}) + "\n"
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = value
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line)
                fh.flush()

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)


class CachingTextGenClient:
    """Cache wrapper for a text backend; replay never re-contacts it."""

    def __init__(self, inner, store: CacheStore):
        self.inner = inner
        self.store = store

    def complete(self, request: TextGenRequest) -> str:
        key = request.content_key()
        cached = self.store.get(key)
        if cached is not None:
            self.store.hits += 1
            return cached["text"]
        self.store.misses += 1
        text = self.inner.complete(request)
        self.store.put(key, {"text": text})
        return text


class CachingVqaClient:
    """Cache wrapper for a VQA backend."""

    def __init__(self, inner, store: CacheStore):
        self.inner = inner
        self.store = store

    def answer_logprobs(self, request: VqaRequest) -> TokenLogprobs:
        key = request.content_key()
        cached = self.store.get(key)
        if cached is not None:
            self.store.hits += 1
            return dict(cached["logprobs"])
        self.store.misses += 1
        logprobs = self.inner.answer_logprobs(request)
        self.store.put(key, {"logprobs": logprobs})
        return logprobs
