from __future__ import annotations

from typing import Optional, Sequence

from stepuq.core import JudgeSample, PredictiveDistribution, StepCase, StepVerification


def sample(p_error: Optional[float], decision: Optional[int] = None, *, parse_ok: bool = True,
           lp: Optional[float] = -0.5, temperature: float = 1.0, rationale: str = "r") -> JudgeSample:
    """A parsed sample with the given error probability; decision defaults to its argmax."""
    dist = None if p_error is None else PredictiveDistribution.from_p_error(p_error)
    if decision is None and dist is not None:
        decision = dist.argmax()
    return JudgeSample(
        rationale=rationale,
        decision=decision if parse_ok else None,
        parse_ok=parse_ok,
        temperature=temperature,
        raw_token_prob_yes=p_error,
        raw_token_prob_no=None if p_error is None else 1.0 - p_error,
        class_dist=dist if parse_ok else None,
        mean_token_logprob=lp,
    )


def verification(case_id: str, pred: int, truth: int, diverse: Sequence[JudgeSample] = ()) -> StepVerification:
    greedy = sample(0.9 if pred else 0.1, temperature=0.1)
    return StepVerification(case_id, greedy, pred, truth, tuple(diverse))


def case(case_id: str = "s/001", preceding: Sequence[str] = (), truth: int = 0) -> StepCase:
    return StepCase(
        case_id=case_id,
        solution_id=case_id.split("/")[0],
        question="What is 2 + 3?",
        preceding_steps=tuple(preceding),
        candidate_step="2 + 3 = 5",
        step_index=len(preceding) + 1,
        ground_truth=truth,
    )


ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {status} - {detail}")
