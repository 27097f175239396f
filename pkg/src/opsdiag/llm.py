"""Language-model gateway: token counting, a scripted deterministic provider,
and an OpenAI-compatible HTTP provider.

The scripted provider is the workhorse for tests and replay: it answers from a
ScriptBook by substring-matching the last user-role message, first match wins,
with optional per-entry use limits.
"""

from __future__ import annotations

import json
import math
import os
import threading
from dataclasses import dataclass, field
from typing import Any

from .errors import (
    NoScriptMatch,
    ProviderTimeout,
    ProviderUnavailable,
    ScriptParseError,
)


def count_tokens(text: str) -> int:
    """Deterministic token estimate: ceil(utf-8 bytes / 4)."""
    if not text:
        return 0
    return math.ceil(len(text.encode("utf-8")) / 4)


def canonical_text(content: Any) -> str:
    """Render message content to the text used for token counting.

    Structured payloads are serialized with sorted keys so counts are
    replay-stable regardless of construction order.
    """
    if isinstance(content, str):
        return content
    return json.dumps(content, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


@dataclass(frozen=True)
class ChatMessage:
    role: str  # system | user | assistant | tool
    content: str


@dataclass
class ChatRequest:
    messages: list[ChatMessage]
    tool_schemas: list[dict] = field(default_factory=list)
    max_output_tokens: int = 1024
    temperature: float = 0.0


@dataclass
class ChatResponse:
    text: str
    prompt_tokens: int
    completion_tokens: int
    finish_reason: str = "stop"  # stop | length | error


@dataclass
class ScriptEntry:
    matcher: str
    response: str
    max_uses: int | None = None  # None = unlimited
    uses: int = 0

    def exhausted(self) -> bool:
        return self.max_uses is not None and self.uses >= self.max_uses


class ScriptBook:
    """Ordered list of (matcher, response, max_uses) entries.

    Matching is substring-based over the last user-role message, first
    unexhausted match wins. Duplicate matchers are allowed; earlier entries
    shadow later ones until exhausted.
    """

    def __init__(self, entries: list[ScriptEntry]):
        for e in entries:
            if not e.matcher:
                raise ScriptParseError("script entry with empty matcher")
        self.entries = entries
        self._lock = threading.Lock()

    def lookup(self, last_user_message: str) -> str:
        with self._lock:
            for entry in self.entries:
                if entry.exhausted():
                    continue
                if entry.matcher in last_user_message:
                    entry.uses += 1
                    return entry.response
        raise NoScriptMatch(
            "no script entry matches the last user message",
            last_user_message=last_user_message,
        )

    @classmethod
    def from_obj(cls, obj: Any, path: str = "<memory>") -> "ScriptBook":
        if not isinstance(obj, list):
            raise ScriptParseError(f"{path}: script must be a list of entries")
        entries = []
        for i, rec in enumerate(obj, start=1):
            if not isinstance(rec, dict) or "matcher" not in rec or "response" not in rec:
                raise ScriptParseError(f"{path}: entry {i} missing matcher/response", line=i)
            if not rec["matcher"]:
                raise ScriptParseError(f"{path}: entry {i} has empty matcher", line=i)
            response = rec["response"]
            if not isinstance(response, str):
                response = json.dumps(response, ensure_ascii=False)
            max_uses = rec.get("max_uses")
            if max_uses is not None and (not isinstance(max_uses, int) or max_uses < 1):
                raise ScriptParseError(f"{path}: entry {i} max_uses must be >= 1", line=i)
            entries.append(ScriptEntry(rec["matcher"], response, max_uses))
        return cls(entries)


def load_script(path: str | os.PathLike) -> ScriptBook:
    """Load a ScriptBook from a JSON file: a list of {matcher, response, max_uses?}."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ScriptParseError(f"{path}: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScriptParseError(f"{path}: line {exc.lineno}: {exc.msg}", line=exc.lineno) from exc
    return ScriptBook.from_obj(obj, path=str(path))


class ScriptedProvider:
    """Deterministic provider answering from a ScriptBook."""

    name = "scripted"

    def __init__(self, book: ScriptBook):
        self.book = book

    def complete(self, request: ChatRequest) -> ChatResponse:
        last_user = ""
        for msg in request.messages:
            if msg.role == "user":
                last_user = msg.content
        text = self.book.lookup(last_user)
        prompt = sum(count_tokens(m.content) for m in request.messages)
        return ChatResponse(
            text=text,
            prompt_tokens=prompt,
            completion_tokens=count_tokens(text),
            finish_reason="stop",
        )


class HttpProvider:
    """OpenAI-compatible chat-completions provider."""

    name = "http"

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str = "OPSDIAG_API_KEY",
        timeout_ms: int = 30_000,
        retries: int = 2,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.timeout_ms = timeout_ms
        self.retries = retries

    def complete(self, request: ChatRequest) -> ChatResponse:
        import httpx

        payload = {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "max_tokens": request.max_output_tokens,
            "temperature": request.temperature,
        }
        headers = {}
        api_key = os.environ.get(self.api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        last_exc: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                resp = httpx.post(
                    f"{self.base_url}/chat/completions",
                    json=payload,
                    headers=headers,
                    timeout=self.timeout_ms / 1000.0,
                )
                resp.raise_for_status()
                body = resp.json()
                choice = body["choices"][0]
                usage = body.get("usage", {})
                return ChatResponse(
                    text=choice["message"]["content"],
                    prompt_tokens=usage.get("prompt_tokens", 0),
                    completion_tokens=usage.get("completion_tokens", 0),
                    finish_reason=choice.get("finish_reason", "stop"),
                )
            except httpx.TimeoutException as exc:
                last_exc = exc
            except httpx.HTTPError as exc:
                last_exc = exc
        if isinstance(last_exc, httpx.TimeoutException):
            raise ProviderTimeout(str(last_exc)) from last_exc
        raise ProviderUnavailable(str(last_exc)) from last_exc
