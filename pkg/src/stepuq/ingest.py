"""Turn process-supervision annotations into per-step verification cases.

The canonical input is one solution per line::

    {"solution_id": "...", "question": "...",
     "steps": [{"text": "...", "rating": 1}, {"text": "...", "rating": -1}]}

``solution_id`` is optional; when absent it is derived from the content.
Public PRM800K phase-2 records are converted with :func:`adapt_prm800k`.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Optional, Sequence

from .core import StepCase, validate_trace

logger = logging.getLogger(__name__)

RATINGS = (-1, 0, 1)


class IngestError(ValueError):
    def __init__(self, message: str, lineno: Optional[int] = None):
        self.lineno = lineno
        where = f"line {lineno}: " if lineno is not None else ""
        super().__init__(where + message)


@dataclass(frozen=True)
class RawAnnotation:
    solution_id: str
    question: str
    steps: tuple[tuple[str, int], ...]  # (text, rater label)

    def __post_init__(self) -> None:
        for _, rating in self.steps:
            if rating not in RATINGS or isinstance(rating, bool):
                raise IngestError(f"rating {rating!r} not in {{-1, 0, +1}}")


@dataclass(frozen=True)
class SubsetSpec:
    """Either a solution count to sample or an explicit id list (not both)."""

    n_questions: Optional[int] = None
    ids: Optional[tuple[str, ...]] = None

    def __post_init__(self) -> None:
        if self.n_questions is not None and self.ids is not None:
            raise ValueError("give n_questions or ids, not both")
        if self.n_questions is not None and self.n_questions < 1:
            raise ValueError("n_questions must be positive")


@dataclass
class IngestSummary:
    questions: int
    solutions: int
    steps: int
    positives: int
    positive_rate: float
    mean_steps_per_solution: float
    skipped_records: int = 0
    selected_ids: list[str] = field(default_factory=list)

    def render(self) -> str:
        return (
            f"questions: {self.questions}\n"
            f"solutions: {self.solutions}\n"
            f"steps: {self.steps}\n"
            f"positives: {self.positives} ({100 * self.positive_rate:.1f}%)\n"
            f"mean steps per solution: {self.mean_steps_per_solution:.1f}\n"
            f"skipped records: {self.skipped_records}"
        )


def map_label(rating: int, locator: str = "") -> int:
    """Rater label to error label: negative means an error, everything else not."""
    if rating not in RATINGS or isinstance(rating, bool):
        raise IngestError(f"rating {rating!r} not in {{-1, 0, +1}} {locator}".rstrip())
    return 1 if rating == -1 else 0


def truncate_at_first_error(steps: Sequence[tuple[str, int]]) -> list[tuple[str, int]]:
    """Cut a labelled trace right after its first error step."""
    out = []
    for text, label in steps:
        out.append((text, label))
        if label == 1:
            break
    return out


def _content_id(question: str, texts: Iterable[str]) -> str:
    h = hashlib.sha1(question.encode("utf-8"))
    for t in texts:
        h.update(b"\x00")
        h.update(t.encode("utf-8"))
    return h.hexdigest()[:16]


def parse_record(record: Any) -> RawAnnotation:
    """Validate one canonical record."""
    if not isinstance(record, dict):
        raise IngestError("record is not an object")
    question = record.get("question")
    steps = record.get("steps")
    if not isinstance(question, str) or not isinstance(steps, list) or not steps:
        raise IngestError("record needs a 'question' string and a nonempty 'steps' list")
    parsed = []
    for i, step in enumerate(steps):
        if not isinstance(step, dict) or not isinstance(step.get("text"), str):
            raise IngestError(f"step {i} lacks a 'text' string")
        rating = step.get("rating")
        if rating not in RATINGS or isinstance(rating, bool):
            raise IngestError(f"step {i} rating {rating!r} not in {{-1, 0, +1}}")
        parsed.append((step["text"], rating))
    sid = record.get("solution_id") or _content_id(question, (t for t, _ in parsed))
    return RawAnnotation(solution_id=str(sid), question=question, steps=tuple(parsed))


def adapt_prm800k(record: dict[str, Any]) -> dict[str, Any]:
    """Map a PRM800K phase-2 record onto the canonical shape.

    Each labelled step takes the completion the labeller chose, or the first
    completion when none was chosen. Unrated trailing steps end the trace.
    """
    try:
        problem = record["question"]["problem"]
        label_steps = record["label"]["steps"]
    except (KeyError, TypeError) as exc:
        raise IngestError(f"not a PRM800K record: missing {exc}") from None
    steps = []
    for step in label_steps:
        completions = step.get("completions") or []
        chosen = step.get("chosen_completion")
        if chosen is not None and 0 <= chosen < len(completions):
            comp = completions[chosen]
        elif completions:
            comp = completions[0]
        else:
            break
        if comp.get("rating") is None:
            break
        steps.append({"text": comp["text"], "rating": comp["rating"]})
    out: dict[str, Any] = {"question": problem, "steps": steps}
    if "timestamp" in record:
        out["solution_id"] = _content_id(problem + record["timestamp"], (s["text"] for s in steps))
    return out


def select_ids(all_ids: Sequence[str], subset: Optional[SubsetSpec], seed: int) -> list[str]:
    """Pick the solution ids to keep, uniformly without replacement."""
    ordered = sorted(all_ids)
    if subset is None or (subset.n_questions is None and subset.ids is None):
        return ordered
    if subset.ids is not None:
        known = set(ordered)
        missing = [i for i in subset.ids if i not in known]
        if missing:
            logger.warning("%d requested ids not present in input", len(missing))
        return sorted(i for i in set(subset.ids) if i in known)
    n = subset.n_questions
    if n >= len(ordered):
        if n > len(ordered):
            logger.warning("requested %d solutions but only %d available", n, len(ordered))
        return ordered
    return sorted(random.Random(seed).sample(ordered, n))


def cases_for(raw: RawAnnotation) -> list[StepCase]:
    labelled = [(text, map_label(r)) for text, r in raw.steps]
    labelled = truncate_at_first_error(labelled)
    cases = []
    preceding: list[str] = []
    for idx, (text, label) in enumerate(labelled, start=1):
        cases.append(
            StepCase(
                case_id=f"{raw.solution_id}/{idx:03d}",
                solution_id=raw.solution_id,
                question=raw.question,
                preceding_steps=tuple(preceding),
                candidate_step=text,
                step_index=idx,
                ground_truth=label,
            )
        )
        preceding.append(text)
    return cases


def iter_records(path: str | Path) -> Iterator[tuple[int, Any]]:
    """``(line_number, record)`` pairs; an undecodable line yields an :class:`IngestError`."""
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                yield lineno, IngestError(f"invalid JSON: {exc.msg}")


def build_cases(
    records: Iterable[tuple[int, Any]],
    subset: Optional[SubsetSpec] = None,
    seed: int = 0,
    strict: bool = False,
    fmt: str = "canonical",
) -> tuple[list[StepCase], IngestSummary]:
    """Build step cases from ``(line_number, record)`` pairs.

    Malformed records are skipped and counted, or raise :class:`IngestError`
    when ``strict`` is set. Output is sorted by solution id then step index.
    """
    raws: dict[str, RawAnnotation] = {}
    skipped = 0
    for lineno, record in records:
        try:
            if isinstance(record, IngestError):
                raise record
            if fmt == "prm800k":
                record = adapt_prm800k(record)
            raw = parse_record(record)
            if raw.solution_id in raws:
                raise IngestError(f"duplicate solution_id {raw.solution_id!r}")
        except IngestError as exc:
            if strict:
                raise IngestError(str(exc), lineno) from None
            logger.warning("skipping line %s: %s", lineno, exc)
            skipped += 1
            continue
        raws[raw.solution_id] = raw

    chosen = select_ids(list(raws), subset, seed)
    cases: list[StepCase] = []
    for sid in chosen:
        trace = cases_for(raws[sid])
        problems = validate_trace(trace)
        if problems:  # unreachable after truncation; kept as a guard
            raise IngestError(f"{sid}: {', '.join(problems)}")
        cases.extend(trace)

    n_steps = len(cases)
    positives = sum(c.ground_truth for c in cases)
    summary = IngestSummary(
        questions=len({raws[s].question for s in chosen}),
        solutions=len(chosen),
        steps=n_steps,
        positives=positives,
        positive_rate=positives / n_steps if n_steps else 0.0,
        mean_steps_per_solution=n_steps / len(chosen) if chosen else 0.0,
        skipped_records=skipped,
        selected_ids=chosen,
    )
    return cases, summary
