"""Greedy plus diverse judge sampling for one step, and the append-only sample store."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from ..core import JudgeSample, PredictiveDistribution, StepCase, StepVerification
from ..io import dumps
from .client import GREEDY_INDEX, DEFAULT_API_KEY_ENV, JudgeClient, TransportError
from .parsing import to_sample
from .prompts import TEMPLATE_VERSION, render_prompt

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class JudgeConfig:
    endpoint: str = "http://localhost:8000/v1"
    model: str = "Qwen2-Math-72B-Instruct"
    t_greedy: float = 0.1
    t_diverse: float = 1.0
    n_diverse: int = 10
    max_tokens: int = 512
    top_logprobs_requested: int = 5
    epsilon_prob: float = 1e-4
    request_timeout: float = 60.0
    max_retries: int = 3
    max_concurrent_requests: int = 8
    api_key_env: str = DEFAULT_API_KEY_ENV
    prompt_version: str = TEMPLATE_VERSION
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if self.t_greedy < 0 or self.t_diverse < 0:
            raise ValueError("temperatures must be non-negative")
        if self.n_diverse < 1:
            raise ValueError("n_diverse must be at least 1")
        if not 0 < self.epsilon_prob <= 0.01:
            raise ValueError("epsilon_prob must lie in (0, 0.01]")

    def to_dict(self) -> dict:
        return asdict(self)


class StepSamplingError(RuntimeError):
    def __init__(self, case_id: str, cause: str):
        self.case_id = case_id
        self.cause = cause
        super().__init__(f"{case_id}: {cause}")


def _majority(samples: Iterable[JudgeSample]) -> Optional[int]:
    votes = [s.decision for s in samples if s.parse_ok]
    if not votes:
        return None
    return 1 if 2 * sum(votes) > len(votes) else 0


def predicted_label(greedy: JudgeSample, diverse: Sequence[JudgeSample]) -> int:
    """Greedy decision; falls back to greedy argmax, diverse majority, then ``0``."""
    if greedy.parse_ok:
        return greedy.decision
    if greedy.class_dist is not None:
        return greedy.class_dist.argmax()
    vote = _majority(diverse)
    return 0 if vote is None else vote


def sample_step(
    case: StepCase,
    cfg: JudgeConfig,
    client: JudgeClient,
    executor: Optional[Executor] = None,
) -> StepVerification:
    """One greedy and ``n_diverse`` diverse judge samples for ``case``.

    Raises :class:`StepSamplingError` when the greedy request or every
    diverse request fails at the transport level. Parse failures are kept.
    """
    prompt = render_prompt(case, cfg.prompt_version)
    messages = prompt.messages()

    def call(index: int) -> JudgeSample:
        temperature = cfg.t_greedy if index == GREEDY_INDEX else cfg.t_diverse
        completion = client.complete(
            messages,
            temperature=temperature,
            max_tokens=cfg.max_tokens,
            top_logprobs=cfg.top_logprobs_requested,
            key=(case.case_id, index),
            seed=None if cfg.seed is None else cfg.seed + index,
        )
        return to_sample(completion, temperature, cfg.epsilon_prob)

    indices = range(cfg.n_diverse + 1)
    own = executor is None
    pool = ThreadPoolExecutor(max_workers=cfg.max_concurrent_requests) if own else executor
    try:
        futures = [pool.submit(call, i) for i in indices]
        results: list[JudgeSample | TransportError] = []
        for fut in futures:  # fold in index order, not arrival order
            try:
                results.append(fut.result())
            except TransportError as exc:
                results.append(exc)
    finally:
        if own:
            pool.shutdown()

    greedy = results[0]
    if isinstance(greedy, TransportError):
        raise StepSamplingError(case.case_id, f"greedy request failed: {greedy}")
    diverse = [r for r in results[1:] if isinstance(r, JudgeSample)]
    errors = [r for r in results[1:] if isinstance(r, TransportError)]
    if not diverse:
        raise StepSamplingError(case.case_id, f"all diverse requests failed: {errors[0]}")
    shortfall = None
    if errors:
        shortfall = f"{len(errors)}/{cfg.n_diverse} diverse requests failed: {errors[0]}"

    label = predicted_label(greedy, diverse)
    if greedy.parse_ok and greedy.class_dist is not None and greedy.class_dist.argmax() != greedy.decision:
        logger.warning("%s: greedy decision disagrees with its token distribution", case.case_id)
    return StepVerification(
        case_id=case.case_id,
        greedy_sample=greedy,
        predicted_label=label,
        ground_truth=case.ground_truth,
        diverse_samples=tuple(diverse),
        prompt_version=cfg.prompt_version,
        shortfall_reason=shortfall,
    )


def solution_reward(steps: Sequence[PredictiveDistribution]) -> float:
    """Solution-level reward: product of per-step no-error probabilities."""
    if not steps:
        raise ValueError("solution_reward needs at least one step")
    return math.prod(d.p_no_error for d in steps)


class SampleStore:
    """Append-only line-delimited store of :class:`StepVerification` records.

    Opening an existing store drops a truncated final line left by an
    interrupted write so that appends resume cleanly.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._done: set[str] = set()
        if self.path.exists():
            self._recover()

    def _recover(self) -> None:
        good: list[str] = []
        dropped = 0
        with open(self.path, encoding="utf-8") as f:
            for line in f:
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    if not line.endswith("\n"):
                        raise ValueError("unterminated line")
                except ValueError:
                    dropped += 1
                    continue
                if rec["case_id"] in self._done:
                    continue
                self._done.add(rec["case_id"])
                good.append(line if line.endswith("\n") else line + "\n")
        if dropped:
            logger.warning("dropping %d unreadable line(s) from %s", dropped, self.path)
            with open(self.path, "w", encoding="utf-8", newline="\n") as f:
                f.writelines(good)

    def __contains__(self, case_id: str) -> bool:
        return case_id in self._done

    def __len__(self) -> int:
        return len(self._done)

    def append(self, v: StepVerification) -> None:
        if v.case_id in self._done:
            raise ValueError(f"{v.case_id} already stored")
        with open(self.path, "a", encoding="utf-8", newline="\n") as f:
            f.write(dumps(v.to_dict()) + "\n")
            f.flush()
        self._done.add(v.case_id)


def load_verifications(path: str | Path) -> list[StepVerification]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                out.append(StepVerification.from_dict(json.loads(line)))
    return out
