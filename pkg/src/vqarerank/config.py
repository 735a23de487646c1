"""Declarative run configuration.

One JSON file carries the fusion knobs, backend endpoints, fan-out limit,
seeds and file paths; every field can be overridden by a CLI flag.
Credentials are never stored in the file: each live backend names the
environment variable holding its key.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from . import formats
from .clients import (
    CacheStore,
    CachingTextGenClient,
    CachingVqaClient,
    LiveClientConfig,
    MockTextGenClient,
    MockVqaClient,
    OpenAIChatClient,
)
from .domain import RerankConfig
from .errors import DataError

MODE_LIVE = "live"
MODE_MOCK = "mock"

#: Backend roles the pipeline may use.
ROLE_TEXTGEN = "textgen"
ROLE_VQA = "vqa"
ROLE_ANNOTATOR = "annotator"


@dataclass
class BackendConfig:
    mode: str = MODE_MOCK
    base_url: str = ""
    model: str = ""
    api_key_env: str | None = None
    image_url_template: str = "{image_id}"
    fixtures_path: str | None = None
    strict: bool = False
    timeout_seconds: float = 60.0
    transport_retries: int = 2

    def __post_init__(self):
        if self.mode not in (MODE_LIVE, MODE_MOCK):
            raise DataError(f"backend mode must be 'live' or 'mock', got {self.mode!r}")
        if self.mode == MODE_LIVE and not self.base_url:
            raise DataError("live backend requires a base_url")


@dataclass
class AppConfig:
    rerank: RerankConfig = field(default_factory=RerankConfig)
    backends: dict[str, BackendConfig] = field(default_factory=dict)
    fan_out: int = 8
    seed: int = 2024
    cache_dir: str | None = None
    prompt_template_path: str | None = None
    retry_budget: int = 2
    attempt_cap: int = 4

    def __post_init__(self):
        if self.fan_out < 1:
            raise DataError(f"fan_out must be >= 1, got {self.fan_out}")

    def backend(self, role: str) -> BackendConfig:
        return self.backends.get(role, BackendConfig())

    def prompt_template(self) -> str | None:
        if self.prompt_template_path is None:
            return None
        return Path(self.prompt_template_path).read_text(encoding="utf-8")


def _rerank_from_dict(raw: dict) -> RerankConfig:
    kwargs: dict[str, Any] = {}
    if "lambda_vqa" in raw:
        kwargs["lambda_vqa"] = float(raw["lambda_vqa"])
    if "k" in raw:
        kwargs["k"] = float(raw["k"])
    if "n" in raw:
        kwargs["n"] = int(raw["n"])
    if "normalization" in raw:
        kwargs["normalization"] = str(raw["normalization"])
    if "answer_tokens" in raw:
        tokens = raw["answer_tokens"]
        kwargs["answer_tokens"] = (str(tokens[0]), str(tokens[1]))
    return RerankConfig(**kwargs)


def load_config(path: str | Path | None) -> AppConfig:
    """Load the config file; a missing path yields pure defaults."""
    if path is None:
        return AppConfig()
    path = Path(path)
    if not path.exists():
        raise DataError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise DataError(f"config file {path} must hold a JSON object")

    backends = {}
    for role, spec in (raw.get("backends") or {}).items():
        if not isinstance(spec, dict):
            raise DataError(f"backend {role!r} must be an object")
        backends[role] = BackendConfig(**spec)

    return AppConfig(
        rerank=_rerank_from_dict(raw.get("rerank") or {}),
        backends=backends,
        fan_out=int(raw.get("fan_out", 8)),
        seed=int(raw.get("seed", 2024)),
        cache_dir=raw.get("cache_dir"),
        prompt_template_path=raw.get("prompt_template_path"),
        retry_budget=int(raw.get("retry_budget", 2)),
        attempt_cap=int(raw.get("attempt_cap", 4)),
    )


def apply_overrides(
    config: AppConfig,
    *,
    lambda_vqa: float | None = None,
    k: float | None = None,
    n: int | None = None,
    seed: int | None = None,
    backend_mode: str | None = None,
    cache_dir: str | None = None,
    fan_out: int | None = None,
) -> AppConfig:
    """Apply CLI flag overrides on top of the loaded config."""
    rerank = config.rerank
    if lambda_vqa is not None or k is not None or n is not None:
        rerank = replace(
            rerank,
            lambda_vqa=rerank.lambda_vqa if lambda_vqa is None else lambda_vqa,
            k=rerank.k if k is None else k,
            n=rerank.n if n is None else n,
        )
    backends = dict(config.backends)
    if backend_mode is not None:
        for role in (ROLE_TEXTGEN, ROLE_VQA, ROLE_ANNOTATOR):
            spec = backends.get(role, BackendConfig())
            backends[role] = replace(spec, mode=backend_mode)
    return replace(
        config,
        rerank=rerank,
        backends=backends,
        seed=config.seed if seed is None else seed,
        cache_dir=config.cache_dir if cache_dir is None else cache_dir,
        fan_out=config.fan_out if fan_out is None else fan_out,
    )


def _cache_store(config: AppConfig, role: str) -> CacheStore | None:
    if not config.cache_dir:
        return None
    return CacheStore(Path(config.cache_dir) / f"{role}.jsonl")


def build_textgen_client(config: AppConfig, role: str = ROLE_TEXTGEN):
    spec = config.backend(role)
    if spec.mode == MODE_LIVE:
        client = OpenAIChatClient(
            LiveClientConfig(
                base_url=spec.base_url,
                model=spec.model,
                api_key_env=spec.api_key_env,
                timeout_seconds=spec.timeout_seconds,
                transport_retries=spec.transport_retries,
            )
        )
    else:
        fixtures = {}
        if spec.fixtures_path:
            fixtures = {k: str(v) for k, v in formats.load_fixtures(spec.fixtures_path).items()}
        client = MockTextGenClient(fixtures, strict=spec.strict)
    store = _cache_store(config, role)
    return CachingTextGenClient(client, store) if store is not None else client


def build_vqa_client(config: AppConfig, role: str = ROLE_VQA):
    spec = config.backend(role)
    if spec.mode == MODE_LIVE:
        client = OpenAIChatClient(
            LiveClientConfig(
                base_url=spec.base_url,
                model=spec.model,
                api_key_env=spec.api_key_env,
                image_url_template=spec.image_url_template,
                timeout_seconds=spec.timeout_seconds,
                transport_retries=spec.transport_retries,
            )
        )
    else:
        fixtures = {}
        if spec.fixtures_path:
            fixtures = {
                k: {str(t): float(lp) for t, lp in v.items()}
                for k, v in formats.load_fixtures(spec.fixtures_path).items()
            }
        client = MockVqaClient(fixtures, strict=spec.strict)
    store = _cache_store(config, role)
    return CachingVqaClient(client, store) if store is not None else client
