"""Completion backends: OpenAI-compatible HTTP client, scripted mock, disk cache.

All harness LLM traffic goes through the ``complete(request)`` interface so
the whole pipeline can run against either a live endpoint or a deterministic
fixture file. Responses optionally carry per-token logprobs, which downstream
modules turn into vote confidences.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Protocol

import httpx

from .errors import (
    ConfigurationError,
    DecodeError,
    FixtureMissError,
    TransportError,
)

logger = logging.getLogger(__name__)

DEFAULT_API_KEY_ENV = "DRPE_API_KEY"


class FinishReason(str, Enum):
    STOP = "stop"
    LENGTH = "length"
    OTHER = "other"


@dataclass(frozen=True)
class CompletionRequest:
    """A single text-completion call.

    The harness always issues requests with temperature 0 (greedy decoding);
    the field exists so callers can deviate deliberately.
    """

    prompt: str
    max_tokens: int = 512
    temperature: float = 0.0
    want_logprobs: bool = False
    model_id: str = "default"

    def __post_init__(self) -> None:
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")


@dataclass(frozen=True)
class CompletionResponse:
    """Backend output: text plus optional per-token (token, logprob) pairs."""

    text: str
    tokens: tuple[tuple[str, float], ...] = ()
    finish_reason: FinishReason = FinishReason.STOP

    def __post_init__(self) -> None:
        for tok, lp in self.tokens:
            if lp > 0:
                raise ValueError(f"logprob must be <= 0, got {lp} for token {tok!r}")

    @property
    def tokens_match_text(self) -> bool:
        """True when the token strings concatenate exactly to ``text``."""
        if not self.tokens:
            return False
        return "".join(tok for tok, _ in self.tokens) == self.text


class Backend(Protocol):
    def complete(self, request: CompletionRequest) -> CompletionResponse: ...


def canonical_request(request: CompletionRequest) -> str:
    """Canonical serialized form of a request, independent of field order."""
    payload = {
        "max_tokens": request.max_tokens,
        "model_id": request.model_id,
        "prompt": request.prompt,
        "temperature": request.temperature,
        "want_logprobs": request.want_logprobs,
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def cache_key(request: CompletionRequest) -> str:
    """Stable digest of a request; changes iff any request field changes."""
    return hashlib.sha256(canonical_request(request).encode("utf-8")).hexdigest()


def _response_to_dict(response: CompletionResponse) -> dict:
    return {
        "text": response.text,
        "tokens": [[tok, lp] for tok, lp in response.tokens],
        "finish_reason": response.finish_reason.value,
    }


def _response_from_dict(payload: dict) -> CompletionResponse:
    return CompletionResponse(
        text=payload["text"],
        tokens=tuple((str(t), float(lp)) for t, lp in payload.get("tokens", [])),
        finish_reason=FinishReason(payload.get("finish_reason", "stop")),
    )


class ResponseCache:
    """Disk cache of completion responses keyed by request digest.

    One JSON file per entry. Writes are atomic (tmp file + rename) and
    serialized per key; reads take no lock because entries are immutable
    once written.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _lock_for(self, key: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(key, threading.Lock())

    def _path(self, key: str) -> Path:
        return self.root / f"{key}.json"

    def get(self, key: str) -> CompletionResponse | None:
        path = self._path(key)
        if not path.exists():
            return None
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
            return _response_from_dict(payload["response"])
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise ConfigurationError(f"corrupt cache entry {path}: {exc}") from exc

    def put(self, key: str, response: CompletionResponse) -> None:
        entry = {
            "key": key,
            "created_at": datetime.now(timezone.utc).isoformat(),
            "response": _response_to_dict(response),
        }
        path = self._path(key)
        with self._lock_for(key):
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps(entry, ensure_ascii=False), encoding="utf-8")
            os.replace(tmp, path)

    def stats(self) -> dict:
        files = list(self.root.glob("*.json"))
        return {"entries": len(files), "bytes": sum(f.stat().st_size for f in files)}

    def clear(self) -> int:
        files = list(self.root.glob("*.json"))
        for f in files:
            f.unlink()
        return len(files)


@dataclass(frozen=True)
class MockRule:
    """One scripted fixture entry; ``substring`` and ``digest`` are exclusive."""

    response: CompletionResponse
    substring: str | None = None
    digest: str | None = None

    def matches(self, request: CompletionRequest) -> bool:
        if self.substring is not None:
            return self.substring in request.prompt
        return self.digest == cache_key(request)


class MockBackend:
    """Deterministic scripted backend.

    Rules are matched in file order against each request (substring of the
    prompt, or digest of the canonicalized request); the first match wins.
    A request matching no rule raises :class:`FixtureMissError`.
    """

    def __init__(self, rules: list[MockRule]):
        self.rules = list(rules)
        self.calls: list[CompletionRequest] = []
        self._calls_lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> "MockBackend":
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"mock script not found: {path}")
        rules = []
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            rules.append(cls._parse_rule(record, path, lineno))
        return cls(rules)

    @staticmethod
    def _parse_rule(record: dict, path: Path, lineno: int) -> MockRule:
        match = record.get("match")
        if not isinstance(match, dict) or len(match) != 1:
            raise ConfigurationError(
                f"{path}:{lineno}: 'match' must be an object with exactly one of "
                f"'substring' or 'digest'"
            )
        (kind, value), = match.items()
        if kind not in ("substring", "digest") or not isinstance(value, str) or not value:
            raise ConfigurationError(f"{path}:{lineno}: unsupported match rule {match!r}")
        text = record.get("response_text")
        if not isinstance(text, str):
            raise ConfigurationError(f"{path}:{lineno}: missing 'response_text'")
        raw_tokens = record.get("token_logprobs", [])
        tokens = tuple((str(tok), float(lp)) for tok, lp in raw_tokens)
        for tok, lp in tokens:
            if lp > 0:
                raise ConfigurationError(
                    f"{path}:{lineno}: logprob for token {tok!r} must be <= 0"
                )
        if tokens and "".join(tok for tok, _ in tokens) != text:
            raise ConfigurationError(
                f"{path}:{lineno}: token strings do not concatenate to response_text"
            )
        finish = FinishReason(record.get("finish_reason", "stop"))
        response = CompletionResponse(text=text, tokens=tokens, finish_reason=finish)
        return MockRule(
            response=response,
            substring=value if kind == "substring" else None,
            digest=value if kind == "digest" else None,
        )

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        with self._calls_lock:
            self.calls.append(request)
        for rule in self.rules:
            if rule.matches(request):
                response = rule.response
                # A fixture may script logprobs the caller did not ask for.
                if not request.want_logprobs and response.tokens:
                    response = replace(response, tokens=())
                return response
        head = request.prompt[:120].replace("\n", "\\n")
        raise FixtureMissError(f"no mock rule matches prompt starting with: {head!r}")


class LiveBackend:
    """Client for an OpenAI-compatible ``/completions`` endpoint.

    Retries transport failures and HTTP 429 with bounded exponential backoff;
    any other provider failure surfaces as :class:`DecodeError`. The auth
    token is read from an environment variable, never from configuration
    files.
    """

    def __init__(
        self,
        base_url: str,
        *,
        api_key_env: str = DEFAULT_API_KEY_ENV,
        timeout: float = 60.0,
        max_attempts: int = 3,
        backoff_base: float = 0.5,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if not base_url:
            raise ConfigurationError("live backend requires a base URL")
        self.base_url = base_url.rstrip("/")
        self.api_key_env = api_key_env
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self._sleep = sleep
        headers = {}
        token = os.environ.get(api_key_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._client = client or httpx.Client(timeout=timeout, headers=headers)

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        payload: dict = {
            "model": request.model_id,
            "prompt": request.prompt,
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        }
        if request.want_logprobs:
            payload["logprobs"] = 1

        last_error: Exception | None = None
        for attempt in range(1, self.max_attempts + 1):
            try:
                http_response = self._client.post(f"{self.base_url}/completions", json=payload)
            except httpx.TransportError as exc:
                last_error = exc
                logger.warning("transport error on attempt %d: %s", attempt, exc)
            else:
                if http_response.status_code == 429:
                    last_error = TransportError("rate limited (HTTP 429)", attempt)
                    logger.warning("rate limited on attempt %d", attempt)
                elif http_response.status_code != 200:
                    raise DecodeError(
                        f"completions endpoint returned HTTP {http_response.status_code}: "
                        f"{http_response.text[:200]}"
                    )
                else:
                    return self._decode(http_response)
            if attempt < self.max_attempts:
                self._sleep(self.backoff_base * (2 ** (attempt - 1)))
        raise TransportError(f"completion failed: {last_error}", self.max_attempts)

    @staticmethod
    def _decode(http_response: httpx.Response) -> CompletionResponse:
        try:
            data = http_response.json()
            choice = data["choices"][0]
            text = choice["text"]
            finish = choice.get("finish_reason", "other")
            tokens: tuple[tuple[str, float], ...] = ()
            logprobs = choice.get("logprobs")
            if logprobs:
                raw_tokens = logprobs.get("tokens") or []
                raw_lps = logprobs.get("token_logprobs") or []
                # First-token logprob can be null (no conditioning context);
                # positive values are provider rounding noise. Both clamp to 0.
                tokens = tuple(
                    (str(tok), min(float(lp if lp is not None else 0.0), 0.0))
                    for tok, lp in zip(raw_tokens, raw_lps)
                )
        except (json.JSONDecodeError, KeyError, IndexError, TypeError, ValueError) as exc:
            raise DecodeError(f"malformed provider payload: {exc}") from exc
        try:
            finish_reason = FinishReason(finish)
        except ValueError:
            finish_reason = FinishReason.OTHER
        return CompletionResponse(text=text, tokens=tokens, finish_reason=finish_reason)


class CachingBackend:
    """Wraps a backend with a :class:`ResponseCache`.

    The cache is consulted before delegating and written after; concurrent
    identical requests are serialized per key so at most one inner call is
    issued for any given request.
    """

    def __init__(self, inner: Backend, cache: ResponseCache):
        self.inner = inner
        self.cache = cache
        self.hits = 0
        self.misses = 0
        self._inflight: dict[str, threading.Lock] = {}
        self._inflight_guard = threading.Lock()
        self._counter_lock = threading.Lock()

    def _key_lock(self, key: str) -> threading.Lock:
        with self._inflight_guard:
            return self._inflight.setdefault(key, threading.Lock())

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        key = cache_key(request)
        with self._key_lock(key):
            cached = self.cache.get(key)
            if cached is not None:
                with self._counter_lock:
                    self.hits += 1
                return cached
            response = self.inner.complete(request)
            self.cache.put(key, response)
            with self._counter_lock:
                self.misses += 1
            return response
