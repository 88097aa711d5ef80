"""Prompt templates for step-wise verification and P(True) self-reflection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from ..core import JudgeSample, StepCase

TEMPLATE_VERSION = "v1"
NOCOT_VERSION = "v1-nocot"

_INSTRUCTIONS = """\
You are a professional mathematician. Given a problem and the previously proposed steps, your task is to evaluate whether the next proposed step contains any errors in relation to the preceding steps, giving your reasoning. If there is an error, state "yes". If there is no error, state "no". Focus solely on the transition from the previous step to the next.

The evaluation should adhere to the following criteria:

1. Accuracy: Verify all calculations, including algebraic manipulations and numerical computations, are correct.

2. Logical Progression: Ensure the next proposed step follows logically from the previous step, applying mathematical rules, theorems, or formulas correctly, and making reasonable observations. Note: Omit this criterion if the step being evaluated is the first step, as there are no preceding steps to compare.

3. Step-by-Step Focus: Evaluate only the immediate transition from the previous step to the next proposed step. Do not mark the next step as incorrect for not performing an action that should logically occur in a future step.

Problem: {problem}
Preceding Steps: {preceding}

Next Proposed Step to be Evaluated: {step}

"""

_FORMAT_COT = """\
Now, generate your response in the following JSON format. Give your reasoning in short and concise sentences after "reasoning", then output your final evaluation after "has_error".

{"reasoning": "Your reasoning here.", "has_error": "yes/no"}"""

_FORMAT_NOCOT = """\
Now, generate your response in the following JSON format. Output only your final evaluation after "has_error".

{"has_error": "yes/no"}"""

NO_PRECEDING = "(none)"


@dataclass(frozen=True)
class PromptBundle:
    text: str
    version: str

    def messages(self) -> list[dict[str, str]]:
        return [{"role": "user", "content": self.text}]


def _format_preceding(steps: Sequence[str]) -> str:
    if not steps:
        return NO_PRECEDING
    return "\n" + "\n".join(f"Step {i}: {s}" for i, s in enumerate(steps, start=1))


def render_prompt(case: StepCase, version: str = TEMPLATE_VERSION) -> PromptBundle:
    if version not in (TEMPLATE_VERSION, NOCOT_VERSION):
        raise ValueError(f"unknown template version {version!r}")
    body = _INSTRUCTIONS.format(
        problem=case.question,
        preceding=_format_preceding(case.preceding_steps),
        step=case.candidate_step,
    )
    tail = _FORMAT_COT if version == TEMPLATE_VERSION else _FORMAT_NOCOT
    return PromptBundle(text=body + tail, version=version)


P_TRUE_VERSION = "ptrue-v1"


def _verdict_line(sample: JudgeSample) -> str:
    verdict = {1: "yes", 0: "no"}.get(sample.decision, "unparsed")
    reason = " ".join(sample.rationale.split())
    return f"has_error: {verdict}" + (f" (reasoning: {reason})" if reason else "")


def render_p_true_prompt(
    case: StepCase, proposed: JudgeSample, alternatives: Sequence[JudgeSample]
) -> PromptBundle:
    """Zero-shot self-evaluation prompt in the brainstorm-then-judge style."""
    lines = [
        "You are a professional mathematician checking a verification of one solution step.",
        "",
        f"Problem: {case.question}",
        f"Preceding Steps: {_format_preceding(case.preceding_steps)}",
        f"Next Proposed Step to be Evaluated: {case.candidate_step}",
        "",
        "Question: does the next proposed step contain an error?",
        "",
        "Brainstormed answers:",
    ]
    lines += [f"{i}. {_verdict_line(s)}" for i, s in enumerate(alternatives, start=1)]
    lines += [
        "",
        f"Proposed answer: {_verdict_line(proposed)}",
        "",
        "Is the proposed answer:",
        " (A) True",
        " (B) False",
        "Answer with a single word, True or False.",
        "The proposed answer is:",
    ]
    return PromptBundle(text="\n".join(lines), version=P_TRUE_VERSION)
