"""Transport-level client for chat-completion style model endpoints.

The wire shape is the common one: a JSON POST with ``model``,
``messages`` (system/user/assistant roles), ``temperature`` and
``max_tokens``, answered by ``choices[0].message.content``.  The target
model is pure configuration; any compatible endpoint works.

Credentials come from an environment variable (default
``CHORDREFINE_API_KEY``); transient transport failures and rate limits
are retried with exponential backoff (1 s base, doubling, five attempts).
Request/response pairs can be recorded to a JSON fixture and replayed
byte-identically, which keeps every test offline.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import requests

DEFAULT_API_KEY_ENV = "CHORDREFINE_API_KEY"

BACKOFF_BASE = 1.0
BACKOFF_FACTOR = 2.0
MAX_ATTEMPTS = 5


class GatewayError(Exception):
    pass


class AuthError(GatewayError):
    pass


class RateLimited(GatewayError):
    pass


class TransportError(GatewayError):
    pass


class ModelRefusal(GatewayError):
    pass


class TransientFailure(GatewayError):
    """Internal signal: worth retrying (connection trouble, 5xx, 429)."""

    def __init__(self, message: str, rate_limited: bool = False):
        super().__init__(message)
        self.rate_limited = rate_limited


class ValidationExhausted(GatewayError):
    """All validation retries failed; carries every attempted exchange."""

    def __init__(self, attempts: list[dict]):
        super().__init__(f"validator rejected {len(attempts)} attempt(s)")
        self.attempts = attempts


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple[ChatMessage, ...]
    temperature: float = 0.0
    max_tokens: int = 4096

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple(self.messages))
        if not self.messages:
            raise ValueError("request needs at least one message")
        if self.messages[0].role != "system":
            raise ValueError("first message must have the system role")

    def with_reply_and_followup(self, reply: str, followup: str) -> "ChatRequest":
        extra = (ChatMessage("assistant", reply), ChatMessage("user", followup))
        return ChatRequest(self.model, self.messages + extra, self.temperature, self.max_tokens)

    def payload(self) -> dict:
        return {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in self.messages],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }


@dataclass(frozen=True)
class ChatResponse:
    content: str
    finish_reason: str = "stop"
    prompt_tokens: int = 0
    completion_tokens: int = 0


class HttpTransport:
    """POSTs payloads to a chat-completion endpoint with bearer auth."""

    def __init__(
        self,
        url: str,
        api_key_env: str = DEFAULT_API_KEY_ENV,
        timeout: float = 120.0,
    ):
        self.url = url
        self.api_key_env = api_key_env
        self.timeout = timeout

    def send(self, payload: dict) -> dict:
        api_key = os.environ.get(self.api_key_env, "")
        if not api_key:
            raise AuthError(f"no API key in ${self.api_key_env}")
        try:
            resp = requests.post(
                self.url,
                json=payload,
                headers={"Authorization": f"Bearer {api_key}"},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise TransientFailure(f"connection failure: {exc}") from exc
        if resp.status_code in (401, 403):
            raise AuthError(f"endpoint rejected credentials ({resp.status_code})")
        if resp.status_code == 429:
            raise TransientFailure("rate limited", rate_limited=True)
        if resp.status_code >= 500:
            raise TransientFailure(f"server error {resp.status_code}")
        if resp.status_code != 200:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()
        except ValueError as exc:
            raise TransportError(f"non-JSON response: {exc}") from exc


class FixtureTransport:
    """Record or replay request/response pairs from a JSON fixture file.

    Replay matches requests by their exact serialized payload, so a
    replayed conversation is byte-identical to the recorded one.
    """

    def __init__(self, path: str | Path, mode: str = "replay", inner=None):
        if mode not in ("record", "replay"):
            raise ValueError(f"mode must be record or replay, got {mode!r}")
        if mode == "record" and inner is None:
            raise ValueError("record mode needs an inner transport")
        self.path = Path(path)
        self.mode = mode
        self.inner = inner
        self._pairs: list[dict] = []
        if self.path.exists():
            self._pairs = json.loads(self.path.read_text())

    @staticmethod
    def _key(payload: dict) -> str:
        return json.dumps(payload, sort_keys=True)

    def send(self, payload: dict) -> dict:
        if self.mode == "record":
            response = self.inner.send(payload)
            self._pairs.append({"request": payload, "response": response})
            self.path.write_text(json.dumps(self._pairs, indent=2))
            return response
        key = self._key(payload)
        for pair in self._pairs:
            if self._key(pair["request"]) == key:
                return pair["response"]
        raise TransportError(f"no recorded response for request in {self.path}")


def _parse_response(raw: dict) -> ChatResponse:
    try:
        choice = raw["choices"][0]
        content = choice["message"]["content"]
        finish = choice.get("finish_reason", "stop")
    except (KeyError, IndexError, TypeError) as exc:
        raise TransportError(f"malformed completion payload: {exc}") from exc
    usage = raw.get("usage", {}) or {}
    if not content:
        raise ModelRefusal(f"empty completion (finish reason {finish!r})")
    return ChatResponse(
        content=content,
        finish_reason=finish,
        prompt_tokens=int(usage.get("prompt_tokens", 0)),
        completion_tokens=int(usage.get("completion_tokens", 0)),
    )


@dataclass
class ChatClient:
    """Retrying client, shareable across threads.

    ``max_in_flight`` caps concurrent requests through a semaphore;
    ``sleep`` is injectable so backoff tests run instantly.
    """

    transport: object
    max_in_flight: int = 4
    sleep: Callable[[float], None] = time.sleep
    retry_log: list[str] = field(default_factory=list)

    def __post_init__(self):
        self._gate = threading.BoundedSemaphore(self.max_in_flight)

    def complete(self, request: ChatRequest) -> ChatResponse:
        delay = BACKOFF_BASE
        last: TransientFailure | None = None
        with self._gate:
            for attempt in range(1, MAX_ATTEMPTS + 1):
                try:
                    raw = self.transport.send(request.payload())
                except TransientFailure as exc:
                    last = exc
                    if attempt == MAX_ATTEMPTS:
                        break
                    self.retry_log.append(
                        f"attempt {attempt} failed ({exc}); retrying in {delay:.0f}s"
                    )
                    self.sleep(delay)
                    delay *= BACKOFF_FACTOR
                    continue
                return _parse_response(raw)
        assert last is not None
        if last.rate_limited:
            raise RateLimited(f"still rate limited after {MAX_ATTEMPTS} attempts")
        raise TransportError(f"gave up after {MAX_ATTEMPTS} attempts: {last}")

    def complete_with_validation(
        self,
        request: ChatRequest,
        validator: Callable[[str], object],
        retries: int = 2,
    ) -> tuple[object, list[ChatMessage]]:
        """Run ``validator`` over the completion, re-prompting on failure.

        Each failed attempt appends the validator's error as a new user
        message, up to ``retries`` re-prompts.  Returns the first parsed
        value with the full exchange transcript; raises
        :class:`ValidationExhausted` carrying all attempts otherwise.
        """
        if retries < 0:
            raise ValueError("retries must be >= 0")
        attempts: list[dict] = []
        current = request
        for _ in range(retries + 1):
            response = self.complete(current)
            try:
                value = validator(response.content)
            except Exception as exc:
                attempts.append({"response": response.content, "error": str(exc)})
                current = current.with_reply_and_followup(
                    response.content,
                    f"That output was rejected: {exc}. "
                    "Reply again with a corrected answer in the required format.",
                )
                continue
            transcript = list(current.messages) + [
                ChatMessage("assistant", response.content)
            ]
            return value, transcript
        raise ValidationExhausted(attempts)
