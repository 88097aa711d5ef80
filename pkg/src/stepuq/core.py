"""Domain types shared by every stage of the pipeline.

Labels follow one convention everywhere: ``1`` means the step contains an
error, ``0`` means it does not. Entropies use the natural log, so the
two-class maximum is ``ln 2``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Optional

LN2 = math.log(2.0)
PROB_TOL = 1e-9

ENTROPY_ESTIMATORS = (
    "cot_entropy",
    "cot_entropy_discrete",
    "total",
    "aleatoric",
    "epistemic",
)
ESTIMATOR_IDS = ENTROPY_ESTIMATORS[:2] + (
    "naive_entropy",
    "p_true",
    "seu",
    "random",
) + ENTROPY_ESTIMATORS[2:]


class ValidationError(ValueError):
    """A record violates a domain invariant."""


def _check_label(name: str, value: Any) -> None:
    if value not in (0, 1) or isinstance(value, bool):
        raise ValidationError(f"{name} must be 0 or 1, got {value!r}")


@dataclass(frozen=True)
class StepCase:
    case_id: str
    solution_id: str
    question: str
    preceding_steps: tuple[str, ...]
    candidate_step: str
    step_index: int
    ground_truth: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "preceding_steps", tuple(self.preceding_steps))
        if self.step_index != len(self.preceding_steps) + 1:
            raise ValidationError(
                f"{self.case_id}: step_index {self.step_index} does not follow "
                f"{len(self.preceding_steps)} preceding steps"
            )
        _check_label("ground_truth", self.ground_truth)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["preceding_steps"] = list(self.preceding_steps)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "StepCase":
        return cls(
            case_id=d["case_id"],
            solution_id=d["solution_id"],
            question=d["question"],
            preceding_steps=tuple(d["preceding_steps"]),
            candidate_step=d["candidate_step"],
            step_index=int(d["step_index"]),
            ground_truth=int(d["ground_truth"]),
        )


@dataclass(frozen=True)
class PredictiveDistribution:
    """Normalized belief over ``{no_error, error}`` for one step."""

    p_no_error: float
    p_error: float

    def __post_init__(self) -> None:
        if self.p_no_error < 0 or self.p_error < 0:
            raise ValidationError(f"negative probability in {self}")
        if abs(self.p_no_error + self.p_error - 1.0) > PROB_TOL:
            raise ValidationError(f"probabilities do not sum to 1: {self}")

    @classmethod
    def from_p_error(cls, p_error: float) -> "PredictiveDistribution":
        return cls(p_no_error=1.0 - p_error, p_error=p_error)

    @classmethod
    def normalize(cls, mass_no: float, mass_yes: float) -> "PredictiveDistribution":
        """Normalize two unnormalized class masses (no-token, yes-token)."""
        total = mass_no + mass_yes
        if not total > 0:
            raise ValidationError("cannot normalize zero total mass")
        p_error = mass_yes / total
        return cls(p_no_error=1.0 - p_error, p_error=p_error)

    def argmax(self) -> int:
        # ties resolve to "no error"
        return 1 if self.p_error > self.p_no_error else 0

    def is_degenerate(self) -> bool:
        return self.p_error in (0.0, 1.0)

    def to_dict(self) -> dict[str, float]:
        return {"p_no_error": self.p_no_error, "p_error": self.p_error}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PredictiveDistribution":
        return cls(p_no_error=float(d["p_no_error"]), p_error=float(d["p_error"]))


@dataclass(frozen=True)
class JudgeSample:
    """One sampled judge output.

    ``class_dist`` is ``None`` when the decision token could not be located in
    the returned token stream; such samples still count for the black-box
    estimators through ``decision``.
    """

    rationale: str
    decision: Optional[int]
    parse_ok: bool
    temperature: float
    raw_token_prob_yes: Optional[float] = None
    raw_token_prob_no: Optional[float] = None
    class_dist: Optional[PredictiveDistribution] = None
    mean_token_logprob: Optional[float] = None
    text: str = ""

    def __post_init__(self) -> None:
        if self.parse_ok:
            _check_label("decision", self.decision)
        for name in ("raw_token_prob_yes", "raw_token_prob_no"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} out of range: {v}")

    @property
    def probs_ok(self) -> bool:
        return self.parse_ok and self.class_dist is not None

    def response_text(self) -> str:
        """Full response as seen by embedding-based estimators."""
        if self.text:
            return self.text
        verdict = {1: "yes", 0: "no"}.get(self.decision, "")
        return f"{self.rationale}\nhas_error: {verdict}"

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["class_dist"] = self.class_dist.to_dict() if self.class_dist else None
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "JudgeSample":
        cd = d.get("class_dist")
        return cls(
            rationale=d.get("rationale", ""),
            decision=d.get("decision"),
            parse_ok=bool(d["parse_ok"]),
            temperature=float(d["temperature"]),
            raw_token_prob_yes=d.get("raw_token_prob_yes"),
            raw_token_prob_no=d.get("raw_token_prob_no"),
            class_dist=PredictiveDistribution.from_dict(cd) if cd else None,
            mean_token_logprob=d.get("mean_token_logprob"),
            text=d.get("text", ""),
        )


def correctness(predicted_label: int, ground_truth: int) -> int:
    return int(predicted_label == ground_truth)


@dataclass(frozen=True)
class StepVerification:
    case_id: str
    greedy_sample: JudgeSample
    predicted_label: int
    ground_truth: int
    diverse_samples: tuple[JudgeSample, ...]
    correctness: int = -1
    prompt_version: str = "v1"
    shortfall_reason: Optional[str] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "diverse_samples", tuple(self.diverse_samples))
        _check_label("predicted_label", self.predicted_label)
        _check_label("ground_truth", self.ground_truth)
        expected = correctness(self.predicted_label, self.ground_truth)
        if self.correctness == -1:
            object.__setattr__(self, "correctness", expected)
        elif self.correctness != expected:
            raise ValidationError(
                f"{self.case_id}: stored correctness {self.correctness} "
                f"disagrees with labels ({self.predicted_label}, {self.ground_truth})"
            )
        g = self.greedy_sample
        if g.parse_ok and g.decision != self.predicted_label:
            raise ValidationError(
                f"{self.case_id}: predicted_label differs from parsed greedy decision"
            )

    @property
    def parse_rate(self) -> float:
        if not self.diverse_samples:
            return 0.0
        return sum(s.parse_ok for s in self.diverse_samples) / len(self.diverse_samples)

    def to_dict(self) -> dict[str, Any]:
        return {
            "case_id": self.case_id,
            "predicted_label": self.predicted_label,
            "ground_truth": self.ground_truth,
            "correctness": self.correctness,
            "prompt_version": self.prompt_version,
            "shortfall_reason": self.shortfall_reason,
            "greedy_sample": self.greedy_sample.to_dict(),
            "diverse_samples": [s.to_dict() for s in self.diverse_samples],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "StepVerification":
        return cls(
            case_id=d["case_id"],
            greedy_sample=JudgeSample.from_dict(d["greedy_sample"]),
            predicted_label=int(d["predicted_label"]),
            ground_truth=int(d["ground_truth"]),
            diverse_samples=tuple(JudgeSample.from_dict(s) for s in d["diverse_samples"]),
            correctness=int(d.get("correctness", -1)),
            prompt_version=d.get("prompt_version", "v1"),
            shortfall_reason=d.get("shortfall_reason"),
        )


@dataclass(frozen=True)
class UncertaintyRecord:
    """Score of one estimator on one step; higher means more uncertain.

    ``score`` is ``None`` when the estimator was unavailable for the step, in
    which case ``note`` carries the reason.
    """

    case_id: str
    estimator_id: str
    score: Optional[float]
    n_samples_used: int
    seed: Optional[int] = None
    note: Optional[str] = None

    def __post_init__(self) -> None:
        if self.estimator_id not in ESTIMATOR_IDS:
            raise ValidationError(f"unknown estimator {self.estimator_id!r}")
        if self.score is None:
            return
        if self.estimator_id in ENTROPY_ESTIMATORS:
            if not -PROB_TOL <= self.score <= LN2 + PROB_TOL:
                raise ValidationError(
                    f"{self.estimator_id} score {self.score} outside [0, ln 2]"
                )

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "UncertaintyRecord":
        return cls(**d)


@dataclass(frozen=True)
class CurvePoint:
    coverage: float
    f1: float
    n_retained: int
    f1_std: float = 0.0


@dataclass
class EstimatorMetrics:
    auroc: Optional[float]
    auprc: Optional[float]
    au_f1c: Optional[float]
    rejection_curve: list[CurvePoint]
    auroc_std: float = 0.0
    auprc_std: float = 0.0
    au_f1c_std: float = 0.0
    n_seeds: int = 1
    n_scored: int = 0
    n_unavailable: int = 0
    note: Optional[str] = None


@dataclass
class EvalReport:
    estimators: dict[str, EstimatorMetrics]
    verification_accuracy: float
    verification_f1: float
    positive_rate: float
    n_steps: int
    prompt_version: str = "v1"
    skipped: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "EvalReport":
        ests = {}
        for name, m in d["estimators"].items():
            m = dict(m)
            m["rejection_curve"] = [CurvePoint(**p) for p in m["rejection_curve"]]
            ests[name] = EstimatorMetrics(**m)
        return cls(**{**d, "estimators": ests})


def validate_trace(steps: Iterable[StepCase]) -> list[str]:
    """Return every truncation-invariant violation in one solution trace.

    An empty list means the trace is valid. Steps are expected sorted by
    ``step_index``.
    """
    steps = list(steps)
    violations: list[str] = []
    if not steps:
        return violations
    if len({s.solution_id for s in steps}) > 1:
        violations.append("mixed solution ids")
    for expected, s in enumerate(steps, start=1):
        if s.step_index != expected:
            violations.append(f"gap in step indices at {s.case_id}")
            break
    violations.extend(label_violations(s.ground_truth for s in steps))
    return violations


def label_violations(labels: Iterable[int]) -> list[str]:
    """Truncation-invariant check on a bare label sequence."""
    labels = list(labels)
    out = []
    positives = [i for i, y in enumerate(labels) if y == 1]
    if len(positives) > 1:
        out.append("multiple positives")
    if any(i != len(labels) - 1 for i in positives):
        out.append("positive not terminal")
    return out
