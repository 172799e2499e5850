"""Chat-completion backends: remote HTTP adapters plus record/replay wrappers.

Every backend turns a :class:`ChatRequest` into a :class:`Completion`. The
request carries the rendered prompt (what goes over the wire) and the raw
template fields (only offline mocks look at those).
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import httpx

from maxshapley.errors import EmptyAnswerError, EndpointError, ReplayMissError, SchemaError
from maxshapley.judge.endpoints import EndpointConfig

logger = logging.getLogger(__name__)

ANTHROPIC_VERSION = "2023-06-01"
_RETRYABLE_STATUS = {408, 409, 429, 500, 502, 503, 504, 529}


@dataclass(frozen=True)
class ChatRequest:
    stage: str
    prompt: str
    fields: dict[str, Any] = field(default_factory=dict, compare=False)

    @property
    def prompt_hash(self) -> str:
        return prompt_hash(self.prompt)


@dataclass(frozen=True)
class Completion:
    text: str
    tokens_in: int
    tokens_out: int


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def word_count(text: str) -> int:
    """Offline token proxy: whitespace-separated words."""
    return len(text.split())


class ChatBackend:
    def complete(self, request: ChatRequest) -> Completion:
        raise NotImplementedError


class _Retryable(Exception):
    pass


class HTTPChatBackend(ChatBackend):
    """JSON chat-completion client for OpenAI-style or Anthropic-style APIs.

    Transport errors, timeouts and 408/429/5xx responses are retried with
    exponential backoff; ``endpoint.max_retries`` bounds the total number of
    attempts. At most ``endpoint.max_in_flight`` requests run concurrently.
    """

    def __init__(self, endpoint: EndpointConfig, client: httpx.Client | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        if endpoint.api not in ("openai", "anthropic"):
            raise EndpointError(f"HTTPChatBackend cannot serve api shape {endpoint.api!r}")
        self.endpoint = endpoint
        self.client = client or httpx.Client(timeout=endpoint.request_timeout)
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(endpoint.max_in_flight)
        self.attempts = 0

    def _api_key(self) -> str:
        if not self.endpoint.api_key_env:
            return ""
        key = os.environ.get(self.endpoint.api_key_env)
        if not key:
            raise EndpointError(f"environment variable {self.endpoint.api_key_env} is not set")
        return key

    def _build(self, prompt: str) -> tuple[str, dict, dict]:
        ep = self.endpoint
        base = ep.base_url.rstrip("/")
        key = self._api_key()
        messages = [{"role": "user", "content": prompt}]
        if ep.api == "openai":
            url = f"{base or 'https://api.openai.com/v1'}/chat/completions"
            headers = {"Authorization": f"Bearer {key}"} if key else {}
            body = {"model": ep.model_name, "messages": messages, "temperature": ep.temperature,
                    "max_tokens": ep.max_tokens}
        else:
            url = f"{base or 'https://api.anthropic.com'}/v1/messages"
            headers = {"x-api-key": key, "anthropic-version": ANTHROPIC_VERSION}
            body = {"model": ep.model_name, "messages": messages, "temperature": ep.temperature,
                    "max_tokens": ep.max_tokens}
        return url, headers, body

    def _parse(self, payload: dict) -> Completion:
        try:
            if self.endpoint.api == "openai":
                text = payload["choices"][0]["message"]["content"] or ""
                usage = payload.get("usage", {})
                return Completion(text, int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0)))
            text = "".join(block.get("text", "") for block in payload["content"] if block.get("type") == "text")
            usage = payload.get("usage", {})
            return Completion(text, int(usage.get("input_tokens", 0)), int(usage.get("output_tokens", 0)))
        except (KeyError, IndexError, TypeError) as exc:
            raise EndpointError(f"malformed response from {self.endpoint.model_name}: {exc}") from exc

    def complete(self, request: ChatRequest) -> Completion:
        url, headers, body = self._build(request.prompt)
        last: Exception | None = None
        for attempt in range(self.endpoint.max_retries):
            if attempt:
                self._sleep(self.endpoint.backoff_seconds * 2 ** (attempt - 1))
            self.attempts += 1
            try:
                with self._slots:
                    response = self.client.post(url, json=body, headers=headers,
                                                timeout=self.endpoint.request_timeout)
                if response.status_code in _RETRYABLE_STATUS:
                    raise _Retryable(f"HTTP {response.status_code}")
                if response.status_code >= 400:
                    raise EndpointError(f"HTTP {response.status_code} from {url}: {response.text[:200]}")
                completion = self._parse(response.json())
            except (httpx.TransportError, _Retryable) as exc:
                logger.warning("attempt %d/%d to %s failed: %s", attempt + 1, self.endpoint.max_retries, url, exc)
                last = exc
                continue
            if not completion.text.strip():
                raise EmptyAnswerError(f"empty completion for stage {request.stage!r}")
            return completion
        raise EndpointError(f"{url} failed after {self.endpoint.max_retries} attempts: {last}")


class RecordingBackend(ChatBackend):
    """Passes requests through and appends every exchange to a JSONL transcript."""

    def __init__(self, inner: ChatBackend, path: str | Path):
        self.inner = inner
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest) -> Completion:
        completion = self.inner.complete(request)
        line = json.dumps({
            "stage": request.stage,
            "prompt_hash": request.prompt_hash,
            "prompt": request.prompt,
            "completion": completion.text,
            "usage": {"tokens_in": completion.tokens_in, "tokens_out": completion.tokens_out},
        }, ensure_ascii=False)
        with self._lock, self.path.open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")
        return completion


class ReplayBackend(ChatBackend):
    """Answers from a recorded transcript, keyed by (stage, prompt hash)."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._entries: dict[tuple[str, str], Completion] = {}
        if not self.path.exists():
            raise SchemaError(f"replay transcript {self.path} does not exist")
        with self.path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    key = (rec["stage"], rec["prompt_hash"])
                    usage = rec.get("usage", {})
                    completion = Completion(rec["completion"], int(usage.get("tokens_in", 0)),
                                            int(usage.get("tokens_out", 0)))
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise SchemaError(f"bad transcript record: {exc}", line=lineno) from exc
                self._entries.setdefault(key, completion)

    def __len__(self) -> int:
        return len(self._entries)

    def complete(self, request: ChatRequest) -> Completion:
        try:
            return self._entries[(request.stage, request.prompt_hash)]
        except KeyError:
            raise ReplayMissError(
                f"no recorded completion for stage {request.stage!r} prompt {request.prompt_hash[:12]}"
            ) from None
