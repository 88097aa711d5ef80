"""Judge transports: an OpenAI-style chat-completions client and a scripted mock.

Both expose ``complete(messages, *, temperature, max_tokens, top_logprobs,
key, seed)`` returning a :class:`~stepuq.judge.parsing.Completion`. ``key`` is
``(case_id, sample_index)`` and is only used by the scripted client.
"""

from __future__ import annotations

import logging
import os
import threading
import time
from pathlib import Path
from typing import Any, Callable, Optional, Protocol

import httpx

from ..io import iter_jsonl
from .parsing import Completion, TokenLogprob

logger = logging.getLogger(__name__)

GREEDY_INDEX = 0
P_TRUE_INDEX = -1
DEFAULT_API_KEY_ENV = "STEPUQ_API_KEY"


class TransportError(RuntimeError):
    """The judge could not be reached or refused the request."""


class JudgeClient(Protocol):
    def complete(
        self,
        messages: list[dict[str, str]],
        *,
        temperature: float,
        max_tokens: int,
        top_logprobs: int,
        key: tuple[str, int],
        seed: Optional[int] = None,
    ) -> Completion: ...


def completion_from_response(body: dict[str, Any]) -> Completion:
    try:
        choice = body["choices"][0]
        text = choice["message"]["content"] or ""
    except (KeyError, IndexError, TypeError) as exc:
        raise TransportError(f"malformed completion response: {exc!r}") from None
    content = (choice.get("logprobs") or {}).get("content") or []
    return Completion(text=text, tokens=tuple(TokenLogprob.from_wire(t) for t in content))


class ChatClient:
    """Chat-completions client with bounded concurrency and retry on transient failures.

    Retries connection errors, timeouts, HTTP 429 and 5xx with exponential
    backoff; other 4xx responses fail immediately.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        *,
        api_key: Optional[str] = None,
        api_key_env: str = DEFAULT_API_KEY_ENV,
        timeout: float = 60.0,
        max_retries: int = 3,
        max_concurrent_requests: int = 8,
        backoff: float = 1.0,
        transport: Optional[httpx.BaseTransport] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        key = api_key if api_key is not None else os.environ.get(api_key_env, "")
        headers = {"Authorization": f"Bearer {key}"} if key else {}
        self._http = httpx.Client(headers=headers, timeout=timeout, transport=transport)
        self.max_retries = max_retries
        self.backoff = backoff
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max_concurrent_requests)

    def close(self) -> None:
        self._http.close()

    def probe(self) -> None:
        """Raise :class:`TransportError` if the endpoint cannot be reached at all."""
        try:
            self._http.get(f"{self.endpoint}/models")
        except httpx.TransportError as exc:
            raise TransportError(f"endpoint {self.endpoint} unreachable: {exc}") from exc

    def _post(self, path: str, payload: dict[str, Any]) -> dict[str, Any]:
        last: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                self._sleep(self.backoff * 2 ** (attempt - 1))
            try:
                with self._slots:
                    resp = self._http.post(f"{self.endpoint}{path}", json=payload)
            except httpx.TransportError as exc:
                last = exc
                logger.warning("request failed (attempt %d/%d): %s", attempt + 1, self.max_retries + 1, exc)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = TransportError(f"HTTP {resp.status_code}")
                logger.warning("HTTP %d (attempt %d/%d)", resp.status_code, attempt + 1, self.max_retries + 1)
                continue
            if resp.status_code >= 400:
                raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()
            except ValueError as exc:
                raise TransportError(f"response is not JSON: {exc}") from None
        raise TransportError(f"gave up after {self.max_retries + 1} attempts: {last}")

    def complete(
        self,
        messages: list[dict[str, str]],
        *,
        temperature: float,
        max_tokens: int,
        top_logprobs: int,
        key: tuple[str, int] = ("", 0),
        seed: Optional[int] = None,
    ) -> Completion:
        payload: dict[str, Any] = {
            "model": self.model,
            "messages": messages,
            "temperature": temperature,
            "max_tokens": max_tokens,
            "logprobs": True,
            "top_logprobs": top_logprobs,
        }
        if seed is not None:
            payload["seed"] = seed
        return completion_from_response(self._post("/chat/completions", payload))

    def embed(self, texts: list[str], model: str) -> list[list[float]]:
        body = self._post("/embeddings", {"model": model, "input": texts})
        try:
            data = sorted(body["data"], key=lambda d: d.get("index", 0))
            return [list(map(float, d["embedding"])) for d in data]
        except (KeyError, TypeError) as exc:
            raise TransportError(f"malformed embeddings response: {exc!r}") from None


def script_entry(case_id: str, sample_index: int, completion: Completion) -> dict[str, Any]:
    """One line of a scripted-response file."""
    return {
        "case_id": case_id,
        "sample_index": sample_index,
        "content": completion.text,
        "logprobs": [t.to_wire() for t in completion.tokens],
    }


class ScriptedClient:
    """Replays responses from a line-delimited file keyed by ``(case_id, sample_index)``.

    A line may carry ``"error": "..."`` instead of content to script a
    transport failure. Unknown keys also fail as transport errors.
    """

    def __init__(self, entries: dict[tuple[str, int], dict[str, Any]]):
        self._entries = entries
        self.calls: list[tuple[tuple[str, int], float]] = []
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedClient":
        entries = {}
        for _, rec in iter_jsonl(path):
            entries[(rec["case_id"], int(rec["sample_index"]))] = rec
        return cls(entries)

    def probe(self) -> None:
        return None

    def complete(
        self,
        messages: list[dict[str, str]],
        *,
        temperature: float,
        max_tokens: int = 0,
        top_logprobs: int = 0,
        key: tuple[str, int],
        seed: Optional[int] = None,
    ) -> Completion:
        with self._lock:
            self.calls.append((key, temperature))
        rec = self._entries.get(key)
        if rec is None:
            raise TransportError(f"no scripted response for {key}")
        if rec.get("error"):
            raise TransportError(rec["error"])
        tokens = tuple(TokenLogprob.from_wire(t) for t in rec.get("logprobs") or ())
        return Completion(text=rec.get("content", ""), tokens=tokens)
