"""Chat-completion providers behind one config and wire protocol.

Request: POST {base_url}/chat/completions with {model, messages,
temperature, max_tokens}; response: {choices: [{message: {content}}]}.
Every generator and judge model is the same shape, so a mock server or
any OpenAI-compatible endpoint can stand in.

Reliability knobs live here so callers stay simple: 3 attempts with
exponential backoff from 2 s on transport errors and 5xx, a per-client
token bucket enforcing requests_per_minute, and an optional on-disk
response cache keyed by the full request payload hash.  The cache is
what makes pipeline runs resumable: replaying an identical prompt hits
the cache instead of the provider.  Clock and sleep are injectable so
tests never wait.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import requests

from .textutil import content_id

MAX_ATTEMPTS = 3
BACKOFF_START_S = 2.0


class ProviderError(Exception):
    """A provider call failed after all retries."""


@dataclass(frozen=True)
class ProviderConfig:
    name: str
    base_url: str
    model_id: str
    temperature: float = 0.7
    max_output_tokens: int = 1024
    auth_env_var: str = "FORGE_PROVIDER_KEY"
    requests_per_minute: int = 60

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.requests_per_minute < 1:
            raise ValueError("requests_per_minute must be >= 1")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be >= 1")


class TokenBucket:
    """Blocking rate limiter: capacity and refill both = per_minute."""

    def __init__(
        self,
        per_minute: int,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.rate = per_minute / 60.0
        self.capacity = float(per_minute)
        self.tokens = float(per_minute)
        self.clock = clock
        self.sleep = sleep
        self.last = clock()

    def acquire(self) -> None:
        while True:
            now = self.clock()
            self.tokens = min(self.capacity, self.tokens + (now - self.last) * self.rate)
            self.last = now
            if self.tokens >= 1.0:
                self.tokens -= 1.0
                return
            self.sleep((1.0 - self.tokens) / self.rate)


class ResponseCache:
    """One JSON file per request hash; misses return None."""

    def __init__(self, cache_dir: Path):
        self.dir = Path(cache_dir)
        self.dir.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.dir / f"{key}.json"

    def get(self, key: str) -> str | None:
        path = self._path(key)
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))["content"]

    def put(self, key: str, content: str) -> None:
        payload = json.dumps({"key": key, "content": content}, ensure_ascii=False)
        self._path(key).write_text(payload, encoding="utf-8")


class ChatClient:
    """One provider endpoint with retries, rate cap, and caching."""

    def __init__(
        self,
        config: ProviderConfig,
        session: requests.Session | None = None,
        cache: ResponseCache | None = None,
        sleep: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.monotonic,
        timeout: float = 120.0,
    ):
        self.config = config
        self.session = session or requests.Session()
        self.cache = cache
        self.sleep = sleep
        self.timeout = timeout
        self.bucket = TokenBucket(config.requests_per_minute, clock, sleep)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.config.auth_env_var)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def complete(
        self,
        messages: Sequence[dict],
        temperature: float | None = None,
        max_tokens: int | None = None,
    ) -> str:
        """Return the first choice's message content for one chat turn."""
        payload = {
            "model": self.config.model_id,
            "messages": list(messages),
            "temperature": (
                self.config.temperature if temperature is None else temperature
            ),
            "max_tokens": (
                self.config.max_output_tokens if max_tokens is None else max_tokens
            ),
        }
        key = content_id(json.dumps(payload, sort_keys=True, ensure_ascii=False))
        if self.cache is not None:
            hit = self.cache.get(key)
            if hit is not None:
                return hit
        content = self._post_with_retries(payload)
        if self.cache is not None:
            self.cache.put(key, content)
        return content

    def _post_with_retries(self, payload: dict) -> str:
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        last_error: Exception | None = None
        for attempt in range(MAX_ATTEMPTS):
            if attempt > 0:
                self.sleep(BACKOFF_START_S * 2 ** (attempt - 1))
            self.bucket.acquire()
            try:
                resp = self.session.post(
                    url, json=payload, headers=self._headers(), timeout=self.timeout
                )
            except requests.RequestException as exc:
                last_error = exc
                continue
            if resp.status_code >= 500:
                last_error = ProviderError(
                    f"{self.config.name}: server error {resp.status_code}"
                )
                continue
            if resp.status_code != 200:
                raise ProviderError(
                    f"{self.config.name}: request rejected "
                    f"({resp.status_code}): {resp.text[:200]}"
                )
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, LookupError, TypeError) as exc:
                raise ProviderError(
                    f"{self.config.name}: malformed completion response: {exc}"
                ) from exc
        raise ProviderError(
            f"{self.config.name}: gave up after {MAX_ATTEMPTS} attempts: {last_error}"
        )


class ProviderPool:
    """Round-robin over several interchangeable generator clients."""

    def __init__(self, clients: Sequence[ChatClient]):
        if not clients:
            raise ValueError("pool needs at least one client")
        self.clients = list(clients)
        self._next = 0

    def pick(self) -> ChatClient:
        client = self.clients[self._next % len(self.clients)]
        self._next += 1
        return client
