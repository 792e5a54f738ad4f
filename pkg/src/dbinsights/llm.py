"""Chat-completion gateway: remote OpenAI-compatible backend, scripted mock, usage ledger."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import requests

from .errors import BackendError, MockMiss
from .prompts import KNOWN_TAGS, temperature_for

logger = logging.getLogger(__name__)

Role = str  # "system" | "user" | "assistant"
_ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatMessage:
    role: Role
    content: str

    def __post_init__(self) -> None:
        if self.role not in _ROLES:
            raise ValueError(f"invalid role {self.role!r}")


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[ChatMessage, ...]
    temperature: float
    tag: str

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("messages must be nonempty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")
        if self.tag not in KNOWN_TAGS:
            raise ValueError(f"unknown prompt tag {self.tag!r}")


@dataclass(frozen=True)
class UsageRecord:
    tag: str
    prompt_tokens: int
    completion_tokens: int
    wall_ms: float
    cost: float


def content_hash(request: ChatRequest) -> str:
    """Stable hash of the concatenated message contents (roles excluded)."""
    joined = "\n".join(m.content for m in request.messages)
    return hashlib.sha256(joined.encode("utf-8")).hexdigest()[:16]


def fixture_key(request: ChatRequest) -> str:
    return f"{request.tag}:{content_hash(request)}"


@dataclass
class RawCompletion:
    text: str
    prompt_tokens: int
    completion_tokens: int


class LlmBackend(Protocol):
    def complete(self, request: ChatRequest) -> RawCompletion: ...


ResponseRule = Callable[[str], bool]


class MockBackend:
    """Deterministic scripted backend.

    Responses resolve from (in order):
      1. the fixture map, keyed "tag:content-hash" (the on-disk format),
      2. pure rules: (tag, optional content predicate/substring, response),
         where a callable response receives the joined message contents.

    Rules are never consumed, so identical requests always yield identical
    responses. Every served call is recorded for prompt-capture assertions
    and can be exported back out as a fixture map.
    """

    def __init__(self, fixtures: dict[str, str] | None = None):
        self.fixtures: dict[str, str] = dict(fixtures or {})
        self._rules: list[tuple[str, ResponseRule | None, str | Callable[[str], str]]] = []
        self.calls: list[ChatRequest] = []
        self._served: dict[str, str] = {}

    @classmethod
    def from_file(cls, path: str | Path) -> "MockBackend":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def add_fixture(self, request: ChatRequest, response: str) -> None:
        self.fixtures[fixture_key(request)] = response

    def add_rule(
        self,
        tag: str,
        response: str | Callable[[str], str],
        when: str | ResponseRule | None = None,
    ) -> None:
        """Register a response for a tag; `when` narrows by content substring or predicate."""
        if isinstance(when, str):
            needle = when
            when = lambda content: needle in content  # noqa: E731
        self._rules.append((tag, when, response))

    def complete(self, request: ChatRequest) -> RawCompletion:
        self.calls.append(request)
        content = "\n".join(m.content for m in request.messages)
        key = fixture_key(request)
        text = self.fixtures.get(key)
        if text is None:
            for tag, when, response in self._rules:
                if tag != request.tag:
                    continue
                if when is not None and not when(content):
                    continue
                text = response(content) if callable(response) else response
                break
        if text is None:
            raise MockMiss(request.tag, content_hash(request))
        self._served[key] = text
        return RawCompletion(
            text=text,
            prompt_tokens=len(content) // 4,
            completion_tokens=len(text) // 4,
        )

    def served_fixtures(self) -> dict[str, str]:
        """Fixture map covering every call served so far (for record/replay)."""
        return dict(self._served)

    def requests_for(self, tag: str) -> list[ChatRequest]:
        return [r for r in self.calls if r.tag == tag]


class RemoteBackend:
    """OpenAI-compatible chat-completions client with bounded retries."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str = "DBINSIGHTS_API_KEY",
        max_attempts: int = 3,
        backoff_s: float = 1.0,
        timeout_s: float = 60.0,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = os.environ.get(api_key_env, "")
        self.max_attempts = max_attempts
        self.backoff_s = backoff_s
        self.timeout_s = timeout_s
        self.session = session or requests.Session()

    def complete(self, request: ChatRequest) -> RawCompletion:
        payload = {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_status: int | None = None
        last_body = ""
        for attempt in range(1, self.max_attempts + 1):
            try:
                resp = self.session.post(
                    f"{self.base_url}/chat/completions",
                    json=payload,
                    headers=headers,
                    timeout=self.timeout_s,
                )
                last_status, last_body = resp.status_code, resp.text[:2000]
                if resp.status_code == 200:
                    body = resp.json()
                    text = body["choices"][0]["message"]["content"]
                    usage = body.get("usage", {})
                    return RawCompletion(
                        text=text,
                        prompt_tokens=int(usage.get("prompt_tokens", 0)),
                        completion_tokens=int(usage.get("completion_tokens", 0)),
                    )
            except requests.RequestException as exc:
                last_status, last_body = None, str(exc)
            if attempt < self.max_attempts:
                delay = self.backoff_s * (2 ** (attempt - 1))
                logger.warning(
                    "chat attempt %d/%d failed (status=%s), retrying in %.1fs",
                    attempt, self.max_attempts, last_status, delay,
                )
                time.sleep(delay)
        raise BackendError(
            f"backend failed after {self.max_attempts} attempts (status={last_status})",
            status=last_status,
            body=last_body,
            attempts=self.max_attempts,
        )


@dataclass
class TagCost:
    calls: int = 0
    total_cost: float = 0.0


class LlmGateway:
    """Backend plus the run's append-only usage ledger.

    Safe to call from multiple workers: ledger appends are serialized and
    backends hold no per-request state.
    """

    def __init__(self, backend: LlmBackend, price_in: float = 0.0, price_out: float = 0.0):
        if price_in < 0 or price_out < 0:
            raise ValueError("per-token prices must be >= 0")
        self.backend = backend
        self.price_in = price_in
        self.price_out = price_out
        self.ledger: list[UsageRecord] = []
        self._lock = threading.Lock()

    def send_chat(self, request: ChatRequest) -> tuple[str, UsageRecord]:
        start = time.monotonic()
        completion = self.backend.complete(request)
        wall_ms = (time.monotonic() - start) * 1000.0
        usage = UsageRecord(
            tag=request.tag,
            prompt_tokens=completion.prompt_tokens,
            completion_tokens=completion.completion_tokens,
            wall_ms=wall_ms,
            cost=completion.prompt_tokens * self.price_in
            + completion.completion_tokens * self.price_out,
        )
        with self._lock:
            self.ledger.append(usage)
        return completion.text, usage

    def send(
        self,
        tag: str,
        messages: list[tuple[Role, str]] | list[ChatMessage],
        temperature: float | None = None,
    ) -> str:
        """Convenience wrapper used by pipeline stages."""
        msgs = tuple(
            m if isinstance(m, ChatMessage) else ChatMessage(role=m[0], content=m[1])
            for m in messages
        )
        request = ChatRequest(
            messages=msgs,
            temperature=temperature_for(tag) if temperature is None else temperature,
            tag=tag,
        )
        text, _ = self.send_chat(request)
        return text


def aggregate_cost(ledger: list[UsageRecord]) -> dict[str, TagCost]:
    """Per-tag call counts and cost sums; the grand total is the sum over tags."""
    out: dict[str, TagCost] = {}
    for record in ledger:
        entry = out.setdefault(record.tag, TagCost())
        entry.calls += 1
        entry.total_cost += record.cost
    return out


def total_cost(ledger: list[UsageRecord]) -> float:
    return sum(record.cost for record in ledger)
