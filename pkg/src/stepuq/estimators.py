"""Per-step uncertainty scores. Higher always means more uncertain.

CoT Entropy treats each sampled rationale as a draw from the judge's own
posterior over critiques, so the posterior predictive over the verdict is a
plain Monte-Carlo average of the per-rationale class distributions. The
decomposition splits its entropy into the expected per-rationale entropy
(aleatoric) and the remaining mutual information (epistemic).
"""

from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .core import (
    JudgeSample,
    PredictiveDistribution,
    StepCase,
    StepVerification,
    UncertaintyRecord,
)
from .judge.client import P_TRUE_INDEX, TransportError
from .judge.parsing import TRUE_FALSE, first_word_prob
from .judge.prompts import render_p_true_prompt


class EstimatorUnavailable(RuntimeError):
    """The estimator has no usable input for this step."""


def binary_entropy(p: float) -> float:
    """Natural-log entropy of a Bernoulli(p); ``0 ln 0`` is taken as 0."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability out of range: {p}")
    h = 0.0
    for q in (p, 1.0 - p):
        if q > 0.0:
            h -= q * math.log(q)
    return h


@dataclass(frozen=True)
class ClusterSet:
    """Samples grouped by verdict. Each cluster holds its members' class distributions."""

    no_error: tuple[PredictiveDistribution, ...]
    error: tuple[PredictiveDistribution, ...]

    @property
    def counts(self) -> tuple[int, int]:
        return len(self.no_error), len(self.error)

    def members(self) -> tuple[PredictiveDistribution, ...]:
        return self.no_error + self.error


def cluster_samples(samples: Iterable[JudgeSample]) -> ClusterSet:
    """Group parsed samples by decision; samples without a distribution are dropped."""
    groups: dict[int, list[PredictiveDistribution]] = {0: [], 1: []}
    for s in samples:
        if s.probs_ok:
            groups[s.decision].append(s.class_dist)
    return ClusterSet(no_error=tuple(groups[0]), error=tuple(groups[1]))


def _usable_dists(samples: Iterable[JudgeSample]) -> list[PredictiveDistribution]:
    dists = list(cluster_samples(samples).members())
    if not dists:
        raise EstimatorUnavailable("no parsed sample with class probabilities")
    return dists


def posterior_predictive(samples: Sequence[JudgeSample]) -> PredictiveDistribution:
    """Uniform Monte-Carlo average of the per-rationale class distributions."""
    dists = _usable_dists(samples)
    p_error = math.fsum(d.p_error for d in dists) / len(dists)
    return PredictiveDistribution.from_p_error(min(1.0, max(0.0, p_error)))


def cot_entropy(samples: Sequence[JudgeSample]) -> float:
    return binary_entropy(posterior_predictive(samples).p_error)


def cot_entropy_discrete(samples: Sequence[JudgeSample]) -> float:
    """Entropy of the empirical verdict frequencies; needs no token probabilities."""
    votes = [s.decision for s in samples if s.parse_ok]
    if not votes:
        raise EstimatorUnavailable("no parsed sample")
    return binary_entropy(sum(votes) / len(votes))


def naive_entropy(samples: Sequence[JudgeSample]) -> float:
    """Negated mean of length-normalized sequence log-probabilities.

    Uses every sample that carries log-probabilities, parsed or not.
    """
    lps = [s.mean_token_logprob for s in samples if s.mean_token_logprob is not None]
    if not lps:
        raise EstimatorUnavailable("no sequence log-probabilities")
    return -math.fsum(lps) / len(lps)


@dataclass(frozen=True)
class DecompositionResult:
    total: float
    aleatoric: float
    epistemic: float


def decompose(samples: Sequence[JudgeSample]) -> DecompositionResult:
    dists = _usable_dists(samples)
    p_error = min(1.0, max(0.0, math.fsum(d.p_error for d in dists) / len(dists)))
    total = binary_entropy(p_error)
    aleatoric = math.fsum(binary_entropy(d.p_error) for d in dists) / len(dists)
    return DecompositionResult(total=total, aleatoric=aleatoric, epistemic=total - aleatoric)


Embedder = Callable[[list[str]], Sequence[Sequence[float]]]


def mean_pairwise_cosine(vectors: Sequence[Sequence[float]]) -> float:
    v = np.asarray(vectors, dtype=float)
    norms = np.linalg.norm(v, axis=1)
    if np.any(norms == 0):
        raise EstimatorUnavailable("zero embedding vector")
    u = v / norms[:, None]
    sims = [float(u[i] @ u[j]) for i, j in itertools.combinations(range(len(u)), 2)]
    return math.fsum(sims) / len(sims)


def seu(samples: Sequence[JudgeSample], embedder: Embedder) -> float:
    """One minus the mean pairwise cosine similarity of the parsed responses.

    Returns 0 when fewer than two responses parsed.
    """
    texts = [s.response_text() for s in samples if s.parse_ok]
    if len(texts) < 2:
        return 0.0
    try:
        vectors = embedder(texts)
    except EstimatorUnavailable:
        raise
    except Exception as exc:
        raise EstimatorUnavailable(f"embedder failed: {exc}") from exc
    if len(vectors) != len(texts):
        raise EstimatorUnavailable("embedder returned wrong number of vectors")
    return 1.0 - mean_pairwise_cosine(vectors)


def random_baseline(seed: int, case_id: str) -> float:
    """Uniform score in ``[0, 1)``, fixed per ``(seed, case_id)``."""
    digest = hashlib.sha256(f"{seed}\x00{case_id}".encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big")).random()


def p_true(case: StepCase, verification: StepVerification, cfg, client) -> float:
    """One minus the judge's probability that its own greedy verdict is true."""
    if not verification.greedy_sample.parse_ok:
        raise EstimatorUnavailable("greedy verdict not parsed")
    prompt = render_p_true_prompt(case, verification.greedy_sample, verification.diverse_samples)
    try:
        completion = client.complete(
            prompt.messages(),
            temperature=cfg.t_greedy,
            max_tokens=8,
            top_logprobs=cfg.top_logprobs_requested,
            key=(case.case_id, P_TRUE_INDEX),
            seed=cfg.seed,
        )
    except TransportError as exc:
        raise EstimatorUnavailable(f"P(True) request failed: {exc}") from exc
    prob = first_word_prob(completion.tokens, TRUE_FALSE, cfg.epsilon_prob)
    if prob is None:
        raise EstimatorUnavailable("no True/False token in P(True) response")
    return 1.0 - prob


SAMPLE_ESTIMATORS: dict[str, Callable[[Sequence[JudgeSample]], float]] = {
    "cot_entropy": cot_entropy,
    "cot_entropy_discrete": cot_entropy_discrete,
    "naive_entropy": naive_entropy,
}
DECOMPOSITION = ("total", "aleatoric", "epistemic")
DEFAULT_ESTIMATORS = (
    "cot_entropy",
    "cot_entropy_discrete",
    "naive_entropy",
    "p_true",
    "seu",
    "random",
    *DECOMPOSITION,
)


def _record(v: StepVerification, name: str, fn: Callable[[], float], n: int, **kw) -> UncertaintyRecord:
    try:
        return UncertaintyRecord(v.case_id, name, fn(), n, **kw)
    except EstimatorUnavailable as exc:
        return UncertaintyRecord(v.case_id, name, None, 0, note=str(exc), **kw)


def estimate_step(
    v: StepVerification,
    estimators: Sequence[str] = DEFAULT_ESTIMATORS,
    *,
    case: Optional[StepCase] = None,
    judge_cfg=None,
    client=None,
    embedder: Optional[Embedder] = None,
    random_seeds: Sequence[int] = (0,),
) -> list[UncertaintyRecord]:
    """Score one verified step with every requested estimator.

    Estimators that need a resource which was not supplied (a judge client
    for P(True), an embedder for SEU) are left out; the caller reports them.
    """
    samples = v.diverse_samples
    n_parsed = sum(s.parse_ok for s in samples)
    n_probs = sum(s.probs_ok for s in samples)
    out: list[UncertaintyRecord] = []
    for name in estimators:
        if name in SAMPLE_ESTIMATORS:
            n = {
                "cot_entropy": n_probs,
                "cot_entropy_discrete": n_parsed,
                "naive_entropy": sum(s.mean_token_logprob is not None for s in samples),
            }[name]
            out.append(_record(v, name, lambda f=SAMPLE_ESTIMATORS[name]: f(samples), n))
        elif name == "seu":
            if embedder is None:
                continue
            note = "low_sample" if n_parsed < 2 else None
            rec = _record(v, name, lambda: seu(samples, embedder), n_parsed)
            if note and rec.score is not None:
                rec = UncertaintyRecord(v.case_id, name, rec.score, n_parsed, note=note)
            out.append(rec)
        elif name == "p_true":
            if client is None or case is None:
                continue
            out.append(_record(v, name, lambda: p_true(case, v, judge_cfg, client), 1))
        elif name == "random":
            for seed in random_seeds:
                out.append(UncertaintyRecord(v.case_id, "random", random_baseline(seed, v.case_id), 0, seed=seed))
        elif name in DECOMPOSITION:
            continue
        else:
            raise ValueError(f"unknown estimator {name!r}")
    wanted = [d for d in DECOMPOSITION if d in estimators]
    if wanted:
        try:
            parts = decompose(samples)
            out += [UncertaintyRecord(v.case_id, d, getattr(parts, d), n_probs) for d in wanted]
        except EstimatorUnavailable as exc:
            out += [UncertaintyRecord(v.case_id, d, None, 0, note=str(exc)) for d in wanted]
    return out
