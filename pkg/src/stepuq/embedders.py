"""Text embedders for SEU: an embeddings-endpoint client and a scripted mock."""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

from .estimators import EstimatorUnavailable
from .io import iter_jsonl
from .judge.client import ChatClient


class HttpEmbedder:
    """Calls ``{endpoint}/embeddings`` with the same auth and retry policy as the judge."""

    def __init__(self, endpoint: str, model: str, **client_kwargs):
        self.model = model
        self._client = ChatClient(endpoint, model, **client_kwargs)

    def __call__(self, texts: list[str]) -> list[list[float]]:
        return self._client.embed(texts, self.model)

    def close(self) -> None:
        self._client.close()


class ScriptedEmbedder:
    """Looks vectors up by exact text from lines of ``{"text": ..., "vector": [...]}``."""

    def __init__(self, table: dict[str, Sequence[float]], default: Optional[Sequence[float]] = None):
        self.table = dict(table)
        self.default = default

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedEmbedder":
        return cls({rec["text"]: rec["vector"] for _, rec in iter_jsonl(path)})

    def __call__(self, texts: list[str]) -> list[Sequence[float]]:
        out = []
        for t in texts:
            if t in self.table:
                out.append(self.table[t])
            elif self.default is not None:
                out.append(self.default)
            else:
                raise EstimatorUnavailable(f"no scripted vector for text {t[:40]!r}")
        return out
