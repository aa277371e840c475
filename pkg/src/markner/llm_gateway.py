"""Uniform access to a chat-completion LLM.

One gateway object wraps a provider (remote HTTP, scripted mock, or
transcript replay) with a persistent response cache, retry with
exponential backoff, a sliding-window rate limit, and an in-flight bound.
Every behavior that matters for reproducibility — cache keys, mock
matching, transcript replay — is deterministic.
"""

from __future__ import annotations

import collections
import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import requests

from .errors import (
    ProviderRejection,
    RetryableProviderError,
    TransportError,
    ValidationError,
)

logger = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")
API_KEY_ENV = "LLM_API_KEY"


@dataclass(frozen=True)
class Prompt:
    """Ordered chat messages; non-empty, and the last role is ``user``."""

    messages: tuple[tuple[str, str], ...]

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValidationError("prompt must contain at least one message")
        for role, _ in self.messages:
            if role not in ROLES:
                raise ValidationError(f"unknown message role {role!r}")
        if self.messages[-1][0] != "user":
            raise ValidationError("last prompt message must have role 'user'")

    def text(self) -> str:
        """Full prompt content as one string (mock matching, transcripts)."""
        return "\n".join(content for _, content in self.messages)


@dataclass(frozen=True)
class RequestOptions:
    model_id: str = "gpt-3.5-turbo"
    temperature: float = 0.0
    max_tokens: int = 256

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValidationError("temperature must be >= 0")


@dataclass(frozen=True)
class CompletionRequest:
    prompt: Prompt
    model_id: str = "gpt-3.5-turbo"
    temperature: float = 0.0
    max_tokens: int = 256

    @classmethod
    def build(cls, prompt: Prompt, opts: RequestOptions) -> "CompletionRequest":
        return cls(
            prompt=prompt,
            model_id=opts.model_id,
            temperature=opts.temperature,
            max_tokens=opts.max_tokens,
        )


@dataclass(frozen=True)
class CompletionResponse:
    text: str  # may be empty, never absent
    cached: bool = False
    provider_latency: float | None = None


def cache_key(request: CompletionRequest) -> str:
    """Hex digest identifying a request.

    Trailing whitespace is trimmed per message (template cosmetics must
    not fork cache entries); internal whitespace is preserved. Any change
    to model, temperature, max_tokens, or message content changes the key.
    """
    canonical = {
        "model_id": request.model_id,
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
        "messages": [[role, content.rstrip()] for role, content in request.prompt.messages],
    }
    payload = json.dumps(canonical, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Providers
# ---------------------------------------------------------------------------


class Provider:
    """A completion backend. Returns raw response text for a request."""

    def complete_text(self, request: CompletionRequest) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class MockRule:
    """Substring matcher -> scripted response.

    ``contains`` is a single substring, a list of substrings that must all
    appear in the prompt text, or None for the required catch-all.
    """

    response: str
    contains: str | tuple[str, ...] | None = None

    def matches(self, prompt_text: str) -> bool:
        if self.contains is None:
            return True
        needles = (self.contains,) if isinstance(self.contains, str) else self.contains
        return all(needle in prompt_text for needle in needles)


class MockProvider(Provider):
    """Deterministic scripted provider; first matching rule wins."""

    def __init__(self, rules: list[MockRule]):
        if not rules:
            raise ValidationError("mock script must contain at least one rule")
        if not any(rule.contains is None for rule in rules):
            raise ValidationError("mock script requires a catch-all rule (contains=None)")
        self.rules = list(rules)
        self.calls = 0
        self.call_times: list[float] = []
        self._lock = threading.Lock()

    def complete_text(self, request: CompletionRequest) -> str:
        with self._lock:
            self.calls += 1
            self.call_times.append(time.monotonic())
        text = request.prompt.text()
        for rule in self.rules:
            if rule.matches(text):
                return rule.response
        raise AssertionError("unreachable: catch-all rule guaranteed at construction")


def mock_provider(rules: list[MockRule]) -> MockProvider:
    return MockProvider(rules)


def mock_rules_from_file(path: str | Path) -> list[MockRule]:
    """Load a mock script: JSON list of {"contains": ..., "response": ...}."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read mock script {path}: {exc}") from exc
    if not isinstance(raw, list):
        raise ValidationError(f"{path}: mock script must be a JSON list")
    rules = []
    for i, item in enumerate(raw):
        if "response" not in item:
            raise ValidationError(f"{path}: rule {i} lacks a response")
        contains = item.get("contains")
        if isinstance(contains, list):
            contains = tuple(contains)
        rules.append(MockRule(response=item["response"], contains=contains))
    return rules


class ReplayProvider(Provider):
    """Serves responses recorded in a transcript file, keyed by digest."""

    def __init__(self, responses: dict[str, str]):
        if not responses:
            raise ValidationError("replay transcript is empty")
        self.responses = dict(responses)
        self.calls = 0

    @classmethod
    def from_transcript(cls, path: str | Path) -> "ReplayProvider":
        responses: dict[str, str] = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                responses[record["digest"]] = record["response_text"]
        return cls(responses)

    def complete_text(self, request: CompletionRequest) -> str:
        self.calls += 1
        digest = cache_key(request)
        if digest not in self.responses:
            raise ProviderRejection(f"no recorded response for request {digest[:12]}…")
        return self.responses[digest]


class HttpProvider(Provider):
    """OpenAI-compatible chat-completion endpoint.

    POSTs {model, temperature, max_tokens, messages} to ``base_url`` with a
    bearer token from the LLM_API_KEY environment variable and returns the
    first choice's message content.
    """

    def __init__(self, base_url: str, timeout: float = 60.0, session: requests.Session | None = None):
        self.base_url = base_url
        self.timeout = timeout
        self.session = session or requests.Session()

    def complete_text(self, request: CompletionRequest) -> str:
        body = {
            "model": request.model_id,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "messages": [
                {"role": role, "content": content} for role, content in request.prompt.messages
            ],
        }
        headers = {}
        api_key = os.environ.get(API_KEY_ENV)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        try:
            resp = self.session.post(
                self.base_url, json=body, headers=headers, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise RetryableProviderError(f"request failed: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise RetryableProviderError(f"provider returned HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise ProviderRejection(f"provider rejected request: HTTP {resp.status_code}: {resp.text[:500]}")
        try:
            payload = resp.json()
            content = payload["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderRejection(f"malformed provider response: {exc}") from exc
        return content if content is not None else ""


# ---------------------------------------------------------------------------
# Cache, rate limiting, retries
# ---------------------------------------------------------------------------


class FileCache:
    """One JSON file per key under a directory; survives process restarts."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
            probe = tempfile.NamedTemporaryFile(dir=self.directory, delete=True)
            probe.close()
        except OSError as exc:
            raise ValidationError(f"cache directory {self.directory} is not writable: {exc}") from exc

    def _path(self, key: str) -> Path:
        return self.directory / key

    def get(self, key: str) -> str | None:
        path = self._path(key)
        if not path.exists():
            return None
        record = json.loads(path.read_text(encoding="utf-8"))
        return record["response_text"]

    def put(self, key: str, response_text: str) -> None:
        record = {
            "request_digest": key,
            "response_text": response_text,
            "created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        }
        # write-temp-then-rename keeps concurrent readers off partial files
        fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(record, fh, ensure_ascii=False)
            os.replace(tmp, self._path(key))
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


class RateLimiter:
    """Sliding-window limiter: at most ``limit`` acquisitions per second."""

    def __init__(self, limit: float):
        if limit <= 0:
            raise ValidationError("rate limit must be positive")
        self.limit = limit
        self._times: collections.deque[float] = collections.deque()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                while self._times and now - self._times[0] >= 1.0:
                    self._times.popleft()
                if len(self._times) < self.limit:
                    self._times.append(now)
                    return
                wait = 1.0 - (now - self._times[0])
            time.sleep(max(wait, 0.001))


@dataclass(frozen=True)
class RetryPolicy:
    attempts: int = 3
    backoff_base: float = 1.0
    backoff_factor: float = 2.0

    def delay(self, attempt: int) -> float:
        return self.backoff_base * (self.backoff_factor**attempt)


# ---------------------------------------------------------------------------
# Gateway
# ---------------------------------------------------------------------------


@dataclass
class LlmGateway:
    """Provider + cache + retries + rate limit behind one ``complete`` call."""

    provider: Provider
    cache: FileCache | None = None
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    rate_limiter: RateLimiter | None = None
    max_in_flight: int = 4
    transcript_path: str | Path | None = None

    def __post_init__(self) -> None:
        if self.max_in_flight < 1:
            raise ValidationError("max_in_flight must be >= 1")
        self._in_flight = threading.Semaphore(self.max_in_flight)
        self._transcript_lock = threading.Lock()
        if self.transcript_path is not None:
            parent = Path(self.transcript_path).parent
            parent.mkdir(parents=True, exist_ok=True)

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        key = cache_key(request)
        if self.cache is not None:
            hit = self.cache.get(key)
            if hit is not None:
                return CompletionResponse(text=hit, cached=True)

        with self._in_flight:
            text, latency = self._call_with_retries(request)

        if self.cache is not None:
            self.cache.put(key, text)
        if self.transcript_path is not None:
            self._record(key, request, text)
        return CompletionResponse(text=text, cached=False, provider_latency=latency)

    def _call_with_retries(self, request: CompletionRequest) -> tuple[str, float]:
        last_error: Exception | None = None
        for attempt in range(self.retry.attempts):
            if self.rate_limiter is not None:
                self.rate_limiter.acquire()
            started = time.monotonic()
            try:
                text = self.provider.complete_text(request)
                return text, time.monotonic() - started
            except RetryableProviderError as exc:
                last_error = exc
                logger.warning(
                    "provider attempt %d/%d failed: %s", attempt + 1, self.retry.attempts, exc
                )
                if attempt + 1 < self.retry.attempts:
                    time.sleep(self.retry.delay(attempt))
        raise TransportError(
            f"provider failed after {self.retry.attempts} attempts: {last_error}",
            attempts=self.retry.attempts,
        )

    def _record(self, key: str, request: CompletionRequest, text: str) -> None:
        line = json.dumps(
            {"digest": key, "prompt_text": request.prompt.text(), "response_text": text},
            ensure_ascii=False,
        )
        with self._transcript_lock:
            with open(self.transcript_path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
