"""Run manifests: resolved config plus input and output digests for each CLI stage."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Optional

from . import __version__
from .io import sha256_file


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    config: dict[str, Any]
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    seeds: list[int] = field(default_factory=list)
    extra: dict[str, Any] = field(default_factory=dict)
    tool_version: str = __version__
    started_at: str = field(default_factory=_now)
    finished_at: Optional[str] = None
    run_id: str = ""

    @classmethod
    def start(cls, command: str, config: dict[str, Any], inputs: Iterable[str | Path] = (), seeds: Iterable[int] = ()) -> "RunManifest":
        digests = {str(p): sha256_file(p) for p in inputs}
        m = cls(command=command, config=config, inputs=digests, seeds=list(seeds))
        blob = json.dumps([command, config, sorted(digests.values())], sort_keys=True, default=str)
        m.run_id = hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]
        return m

    def finish(self, outputs: Iterable[str | Path], path: str | Path) -> Path:
        self.outputs = {str(p): sha256_file(p) for p in outputs}
        self.finished_at = _now()
        path = Path(path)
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))


def manifest_path(output: str | Path) -> Path:
    output = Path(output)
    if output.is_dir():
        return output / "manifest.json"
    return output.with_name(output.name + ".manifest.json")
