"""Uniform completion interface over an OpenAI-compatible wire protocol.

Backends are registered by id: a real HTTP backend speaking
``POST {base_url}/v1/chat/completions``, or a scripted mock driven by a
fixture file so every test runs offline. The gateway layers a digest-keyed
response cache and a global in-flight bound on top of whichever backend
serves a request.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Protocol

import httpx

from .core import MapsError

API_KEY_ENV = "MAPS_API_KEY"


class BackendUnavailable(MapsError):
    """The wire backend kept failing after every retry."""


class MockMiss(MapsError):
    """The mock has no scripted reply for this prompt digest.

    This signals a fixture gap; the mock never fabricates output.
    """


@dataclass(frozen=True)
class CompletionRequest:
    """One completion call.

    ``seed_tag`` differentiates repeated samples at equal parameters so a
    cache (and a scripted mock) can address each i.i.d. draw individually.
    """

    backend_id: str
    user: str
    system: Optional[str] = None
    temperature: float = 0.0
    max_tokens: int = 512
    seed_tag: str = ""

    def __post_init__(self) -> None:
        if not self.user:
            raise ValueError("user prompt must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be in [0, 2]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class Completion:
    text: str
    cached: bool
    latency_ms: float

    def __post_init__(self) -> None:
        if self.latency_ms < 0:
            raise ValueError("latency_ms must be non-negative")


def cache_key(req: CompletionRequest) -> str:
    """Stable 256-bit digest over every request field that affects output."""
    payload = json.dumps(
        [
            req.backend_id,
            req.system or "",
            req.user,
            repr(req.temperature),
            req.max_tokens,
            req.seed_tag,
        ],
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def prompt_digest(user: str, system: Optional[str] = None) -> str:
    """Digest of the prompt alone; the key space of mock fixture files."""
    payload = json.dumps([system or "", user], ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class Backend(Protocol):
    def complete_raw(self, req: CompletionRequest) -> str: ...


@dataclass
class _MockEntry:
    default: Optional[str] = None
    seeds: dict[str, str] = field(default_factory=dict)


class MockBackend:
    """Scripted backend: prompt digest -> reply, optionally per seed_tag.

    Lookup prefers the seed-specific reply, then the default; a miss raises
    :class:`MockMiss`. ``latency_s`` injects a uniform simulated call
    latency, and the backend tracks the peak number of concurrent calls so
    tests can observe the gateway's in-flight bound.
    """

    def __init__(self, latency_s: float = 0.0) -> None:
        self._entries: dict[str, _MockEntry] = {}
        self.latency_s = latency_s
        self._lock = threading.Lock()
        self._in_flight = 0
        self.max_observed_in_flight = 0

    @classmethod
    def from_fixture_file(cls, path: str | Path, latency_s: float = 0.0) -> "MockBackend":
        backend = cls(latency_s=latency_s)
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        for digest, entry in data.items():
            backend._entries[digest] = _MockEntry(
                default=entry.get("default"),
                seeds=dict(entry.get("seeds", {})),
            )
        return backend

    def to_fixture_file(self, path: str | Path) -> None:
        data: dict[str, Any] = {}
        for digest, entry in self._entries.items():
            item: dict[str, Any] = {}
            if entry.default is not None:
                item["default"] = entry.default
            if entry.seeds:
                item["seeds"] = dict(entry.seeds)
            data[digest] = item
        Path(path).write_text(
            json.dumps(data, ensure_ascii=False, indent=2, sort_keys=True),
            encoding="utf-8",
        )

    def script(
        self,
        user: str,
        reply: str,
        *,
        system: Optional[str] = None,
        seed_tag: Optional[str] = None,
    ) -> None:
        """Register a reply for a prompt, optionally for one seed_tag."""
        entry = self._entries.setdefault(prompt_digest(user, system), _MockEntry())
        if seed_tag is None:
            entry.default = reply
        else:
            entry.seeds[seed_tag] = reply

    def complete_raw(self, req: CompletionRequest) -> str:
        with self._lock:
            self._in_flight += 1
            self.max_observed_in_flight = max(self.max_observed_in_flight, self._in_flight)
        try:
            if self.latency_s > 0:
                time.sleep(self.latency_s)
            digest = prompt_digest(req.user, req.system)
            entry = self._entries.get(digest)
            if entry is not None:
                if req.seed_tag and req.seed_tag in entry.seeds:
                    return entry.seeds[req.seed_tag]
                if entry.default is not None:
                    return entry.default
            raise MockMiss(
                f"no scripted reply for prompt digest {digest} (seed_tag={req.seed_tag!r})"
            )
        finally:
            with self._lock:
                self._in_flight -= 1


_RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class WireBackend:
    """OpenAI-compatible chat-completions client with retry/backoff.

    Transient failures (transport errors, HTTP 429/5xx) are retried up to
    ``max_retries`` times with exponential backoff; anything else fails
    immediately. The bearer token is read from ``MAPS_API_KEY``.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        *,
        timeout_s: float = 60.0,
        max_retries: int = 3,
        backoff_base_s: float = 1.0,
        client: Optional[httpx.Client] = None,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.max_retries = max_retries
        self.backoff_base_s = backoff_base_s
        self._client = client or httpx.Client(timeout=timeout_s)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(API_KEY_ENV)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        return headers

    def complete_raw(self, req: CompletionRequest) -> str:
        messages = []
        if req.system:
            messages.append({"role": "system", "content": req.system})
        messages.append({"role": "user", "content": req.user})
        body = {
            "model": self.model,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        url = f"{self.base_url}/v1/chat/completions"
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff_base_s * 2 ** (attempt - 1))
            try:
                resp = self._client.post(url, json=body, headers=self._headers())
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if resp.status_code in _RETRYABLE_STATUS:
                last_error = BackendUnavailable(f"HTTP {resp.status_code} from {url}")
                continue
            if resp.status_code != 200:
                raise BackendUnavailable(f"HTTP {resp.status_code} from {url}: {resp.text}")
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (KeyError, IndexError, ValueError) as exc:
                raise BackendUnavailable(f"malformed completion reply from {url}") from exc
        raise BackendUnavailable(
            f"retries exhausted for {url}: {last_error}"
        ) from last_error


class ResponseCache:
    """Digest-keyed completion cache with an optional append-only file."""

    def __init__(self, path: Optional[str | Path] = None) -> None:
        self._memory: dict[str, str] = {}
        self._path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        if self._path is not None and self._path.exists():
            with self._path.open(encoding="utf-8") as fp:
                for line in fp:
                    if line.strip():
                        row = json.loads(line)
                        self._memory[row["key"]] = row["text"]

    def get(self, key: str) -> Optional[str]:
        with self._lock:
            return self._memory.get(key)

    def put(self, key: str, text: str) -> None:
        with self._lock:
            if key in self._memory:
                return
            self._memory[key] = text
            if self._path is not None:
                with self._path.open("a", encoding="utf-8") as fp:
                    fp.write(json.dumps({"key": key, "text": text}, ensure_ascii=False) + "\n")


class LlmGateway:
    """Shared completion front-end: caching, retries, an in-flight bound.

    Safe to call from many threads; at most ``max_concurrency`` backend
    requests are in flight at once (cache hits bypass the bound).
    """

    def __init__(
        self,
        backends: dict[str, Backend],
        *,
        cache_path: Optional[str | Path] = None,
        caching: bool = True,
        max_concurrency: int = 8,
    ) -> None:
        if max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")
        self._backends = dict(backends)
        self._cache = ResponseCache(cache_path) if caching else None
        self._slots = threading.Semaphore(max_concurrency)

    def register(self, backend_id: str, backend: Backend) -> None:
        self._backends[backend_id] = backend

    def complete(self, req: CompletionRequest) -> Completion:
        backend = self._backends.get(req.backend_id)
        if backend is None:
            raise BackendUnavailable(f"no backend registered under {req.backend_id!r}")
        key = cache_key(req)
        if self._cache is not None:
            hit = self._cache.get(key)
            if hit is not None:
                return Completion(text=hit, cached=True, latency_ms=0.0)
        t0 = time.perf_counter()
        with self._slots:
            text = backend.complete_raw(req)
        latency_ms = (time.perf_counter() - t0) * 1000.0
        if self._cache is not None:
            self._cache.put(key, text)
        return Completion(text=text, cached=False, latency_ms=latency_ms)
