"""Synthetic judge corpora with known ground truth.

Each step gets a latent difficulty: the probability ``q`` that a sampled
rationale leans toward the correct verdict, drawn from a Beta distribution
with mean ``judge_skill``. A rationale's confidence in the side it leans to
is ``0.5 + 0.5 * B`` with ``B ~ Beta(belief_concentration, 1)``, drawn by
inversion so that raising the concentration sharpens every belief of a
fixed-seed corpus. Diverse samples draw their verdict from that belief; the
greedy sample takes its argmax.

Samples are produced as wire-format completions (text plus token
log-probabilities) and parsed by the judge's own code path, so a corpus is
indistinguishable from a mock-client run over the emitted script.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import JudgeSample, PredictiveDistribution, StepCase, StepVerification
from .estimators import Embedder, binary_entropy, estimate_step
from .ingest import RawAnnotation, cases_for
from .io import write_jsonl
from .judge.client import GREEDY_INDEX, P_TRUE_INDEX, script_entry
from .judge.parsing import Completion, TokenLogprob, to_sample
from .judge.prompts import TEMPLATE_VERSION
from .judge.sampling import predicted_label
from .metrics import ScoredStep, auroc

_PIECE_RE = re.compile(r"\s*\w+|\s*[^\w\s]|\s+")
N_TAGS = 5


@dataclass(frozen=True)
class SimConfig:
    n_questions: int = 150
    step_error_rate: float = 0.1
    judge_skill: float = 0.85
    belief_concentration: float = 6.0
    difficulty_concentration: float = 4.0
    n_diverse: int = 10
    max_steps: int = 12
    parse_failure_rate: float = 0.0
    degenerate: bool = False
    t_greedy: float = 0.1
    t_diverse: float = 1.0
    epsilon_prob: float = 1e-4
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("step_error_rate", "judge_skill", "parse_failure_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.belief_concentration <= 0 or self.difficulty_concentration <= 0:
            raise ValueError("concentrations must be positive")
        if self.n_questions < 1 or self.n_diverse < 1 or self.max_steps < 1:
            raise ValueError("counts must be positive")

    def to_dict(self) -> dict:
        return {k: (repr(v) if isinstance(v, float) and math.isinf(v) else v) for k, v in asdict(self).items()}


@dataclass
class SimCorpus:
    config: SimConfig
    cases: list[StepCase]
    verifications: list[StepVerification]
    raw_records: list[dict] = field(default_factory=list)
    script: list[dict] = field(default_factory=list)
    embeddings: dict[str, list[float]] = field(default_factory=dict)

    def embedder(self) -> Embedder:
        table = self.embeddings
        return lambda texts: [table[t] for t in texts]

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "raw": out / "raw.jsonl",
            "cases": out / "cases.jsonl",
            "samples": out / "samples.jsonl",
            "script": out / "script.jsonl",
            "embeddings": out / "embeddings.jsonl",
        }
        write_jsonl(paths["raw"], self.raw_records)
        write_jsonl(paths["cases"], (c.to_dict() for c in self.cases))
        write_jsonl(paths["samples"], (v.to_dict() for v in self.verifications))
        write_jsonl(paths["script"], self.script)
        write_jsonl(paths["embeddings"], ({"text": t, "vector": v} for t, v in sorted(self.embeddings.items())))
        return paths


def _beta(rng: np.random.Generator, mean: float, concentration: float) -> float:
    """Beta draw by mean and concentration; degenerate at the mean in the limits."""
    if mean <= 0.0 or mean >= 1.0 or math.isinf(concentration):
        return float(mean)
    return float(rng.beta(mean * concentration, (1.0 - mean) * concentration))


def first_error_index(rng: np.random.Generator, rate: float, max_steps: int) -> Optional[int]:
    """1-based index of the first error, or ``None`` if the trace survives ``max_steps``."""
    if rate <= 0.0:
        return None
    k = int(rng.geometric(rate))
    return k if k <= max_steps else None


def _tag(p_error: float) -> int:
    return min(N_TAGS - 1, int(p_error * N_TAGS))


def rationale_text(decision: int, tag: int) -> str:
    verdict = "contains an error" if decision else "is correct"
    return f"[cluster:{tag}] After checking the computation, the step {verdict}."


def embedding_for(decision: int, tag: int) -> list[float]:
    vec = [0.0] * (2 + N_TAGS)
    vec[decision] = 1.0
    vec[2 + tag] = 0.5
    return vec


def _completion(
    rationale: str, decision: int, p_error: float, mean_logprob: float
) -> Completion:
    word = "yes" if decision else "no"
    text = json.dumps({"reasoning": rationale, "has_error": word})
    pieces = _PIECE_RE.findall(text)
    value_at = text.rindex(f'"{word}"') + 1
    alts = [(w, p) for w, p in (("yes", p_error), ("no", 1.0 - p_error)) if p > 0.0]
    alts.sort(key=lambda a: -a[1])
    top = tuple((w, math.log(p)) for w, p in alts)
    lp_dec = math.log(p_error if decision else 1.0 - p_error)
    n = len(pieces)
    filler = min(0.0, (n * mean_logprob - lp_dec) / (n - 1))
    tokens = []
    pos = 0
    for piece in pieces:
        if pos <= value_at < pos + len(piece):
            tokens.append(TokenLogprob(piece, lp_dec, top))
        else:
            tokens.append(TokenLogprob(piece, filler, ()))
        pos += len(piece)
    return Completion(text=text, tokens=tuple(tokens))


def _p_true_completion(greedy: JudgeSample, diverse: Sequence[JudgeSample]) -> Completion:
    """Self-check reply whose belief in "True" is the smoothed agreement with the greedy verdict."""
    agree = sum(1 for s in diverse if s.parse_ok and s.decision == greedy.decision)
    p = (agree + 1) / (len(diverse) + 2)
    word = " True" if p >= 0.5 else " False"
    top = ((" True", math.log(p)), (" False", math.log(1.0 - p)))
    return Completion(text=word, tokens=(TokenLogprob(word, dict(top)[word], top),))


_MALFORMED = "I looked at the step but I am not sure how to format my answer."


def generate_corpus(cfg: SimConfig) -> SimCorpus:
    """Deterministic synthetic corpus; question ``i`` uses its own sub-seed."""
    corpus = SimCorpus(config=cfg, cases=[], verifications=[])
    for q in range(cfg.n_questions):
        rng = np.random.default_rng([cfg.seed, q])
        first_err = first_error_index(rng, cfg.step_error_rate, cfg.max_steps)
        length = first_err if first_err is not None else cfg.max_steps
        labels = [0] * length
        if first_err is not None:
            labels[-1] = 1
        sid = f"q{q:05d}"
        ratings = [-1 if y else int(rng.choice([0, 1])) for y in labels]
        if first_err is not None:  # trailing steps after the first error get truncated on ingest
            ratings += [int(r) for r in rng.choice([-1, 0, 1], size=int(rng.integers(0, 3)))]
        steps = [(f"Step {t + 1} of synthetic solution {q}.", r) for t, r in enumerate(ratings)]
        raw = RawAnnotation(solution_id=sid, question=f"Synthetic question {q}.", steps=tuple(steps))
        corpus.raw_records.append(
            {"solution_id": sid, "question": raw.question, "steps": [{"text": t, "rating": r} for t, r in steps]}
        )
        for case in cases_for(raw):
            corpus.cases.append(case)
            corpus.verifications.append(_simulate_step(rng, cfg, case, corpus))
    return corpus


def _simulate_step(rng: np.random.Generator, cfg: SimConfig, case: StepCase, corpus: SimCorpus) -> StepVerification:
    y = case.ground_truth
    q = _beta(rng, cfg.judge_skill, cfg.difficulty_concentration)
    samples: list[JudgeSample] = []
    for index in range(cfg.n_diverse + 1):
        greedy = index == GREEDY_INDEX
        leans_correct = rng.random() < q
        confidence = 0.5 + 0.5 * float(rng.random()) ** (1.0 / cfg.belief_concentration)
        p_correct = confidence if leans_correct else 1.0 - confidence
        p_error = p_correct if y == 1 else 1.0 - p_correct
        if greedy:
            decision = 1 if p_error > 0.5 else 0
        else:
            decision = int(rng.random() < p_error)
        spread = float(rng.gamma(2.0, 0.5))
        temperature = cfg.t_greedy if greedy else cfg.t_diverse
        failed = not greedy and cfg.parse_failure_rate > 0 and rng.random() < cfg.parse_failure_rate
        tag = _tag(p_error)
        rationale = rationale_text(decision, tag)
        if cfg.degenerate:
            sample = JudgeSample(
                rationale=rationale,
                decision=decision,
                parse_ok=True,
                temperature=temperature,
                raw_token_prob_yes=float(decision),
                raw_token_prob_no=float(1 - decision),
                class_dist=PredictiveDistribution.from_p_error(float(decision)),
                mean_token_logprob=0.0,
            )
            corpus.embeddings[sample.response_text()] = embedding_for(decision, tag)
        else:
            # sharper beliefs read as more fluent sequences
            mean_lp = -spread * binary_entropy(p_error)
            if failed:
                completion = Completion(_MALFORMED, (TokenLogprob(_MALFORMED, mean_lp, ()),))
            else:
                completion = _completion(rationale, decision, p_error, mean_lp)
                corpus.embeddings[completion.text] = embedding_for(decision, tag)
            corpus.script.append(script_entry(case.case_id, index, completion))
            sample = to_sample(completion, temperature, cfg.epsilon_prob)
        samples.append(sample)
    greedy_sample, diverse = samples[0], samples[1:]
    if not cfg.degenerate:
        corpus.script.append(script_entry(case.case_id, P_TRUE_INDEX, _p_true_completion(greedy_sample, diverse)))
    return StepVerification(
        case_id=case.case_id,
        greedy_sample=greedy_sample,
        predicted_label=predicted_label(greedy_sample, diverse),
        ground_truth=y,
        diverse_samples=tuple(diverse),
        prompt_version=TEMPLATE_VERSION,
    )


def oracle_separation_check(
    corpus: SimCorpus, estimator: str, random_seed: int = 0
) -> float:
    """AUROC of ``estimator`` for predicting greedy-verdict correctness on the corpus."""
    embedder = corpus.embedder() if estimator == "seu" else None
    scored = []
    for v in corpus.verifications:
        recs = estimate_step(v, (estimator,), embedder=embedder, random_seeds=(random_seed,))
        score = recs[0].score
        scored.append(
            ScoredStep(v.case_id, math.nan if score is None else score, v.predicted_label, v.ground_truth)
        )
    return auroc([s for s in scored if not math.isnan(s.uncertainty)])


def corpus_summary(cases: Sequence[StepCase]) -> dict[str, float]:
    sols = {c.solution_id for c in cases}
    pos = sum(c.ground_truth for c in cases)
    return {
        "solutions": len(sols),
        "steps": len(cases),
        "positives": pos,
        "positive_rate": pos / len(cases) if cases else 0.0,
    }
