"""Parse judge responses and read class probabilities off the token stream."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

from ..core import JudgeSample, PredictiveDistribution

DEFAULT_EPSILON = 1e-4

YES_NO = ("yes", "no")
TRUE_FALSE = ("true", "false")

_KEY_RE = re.compile(r'"has_error"\s*:\s*"?')
_BPE_MARKERS = "Ġ▁"  # byte-level and sentencepiece space markers


@dataclass(frozen=True)
class TokenLogprob:
    token: str
    logprob: float
    top: tuple[tuple[str, float], ...] = ()

    @classmethod
    def from_wire(cls, d: dict) -> "TokenLogprob":
        top = tuple((t["token"], float(t["logprob"])) for t in d.get("top_logprobs") or ())
        return cls(token=d["token"], logprob=float(d["logprob"]), top=top)

    def to_wire(self) -> dict:
        return {
            "token": self.token,
            "logprob": self.logprob,
            "top_logprobs": [{"token": t, "logprob": lp} for t, lp in self.top],
        }


@dataclass(frozen=True)
class Completion:
    text: str
    tokens: tuple[TokenLogprob, ...] = ()


class Verdict(NamedTuple):
    rationale: Optional[str]
    decision: Optional[int]
    parse_ok: bool
    value_offset: Optional[int] = None


_FAILED = Verdict(None, None, False, None)


def _normalize_value(value) -> Optional[int]:
    if isinstance(value, bool):
        return int(value)
    if not isinstance(value, str):
        return None
    word = normalize_token(value)
    if word == "yes":
        return 1
    if word == "no":
        return 0
    return None


def parse_response(raw_text: str) -> Verdict:
    """Extract ``(rationale, decision, parse_ok)`` from a judge response.

    Scans for the first JSON object carrying a ``has_error`` key, so leading
    prose and code fences are tolerated. Never raises.
    """
    if not isinstance(raw_text, str):
        return _FAILED
    decoder = json.JSONDecoder()
    idx = raw_text.find("{")
    while idx != -1:
        try:
            obj, end = decoder.raw_decode(raw_text, idx)
        except ValueError:
            idx = raw_text.find("{", idx + 1)
            continue
        if isinstance(obj, dict) and "has_error" in obj:
            decision = _normalize_value(obj["has_error"])
            if decision is None:
                return _FAILED
            rationale = obj.get("reasoning", "")
            if not isinstance(rationale, str):
                rationale = json.dumps(rationale)
            offset = None
            matches = list(_KEY_RE.finditer(raw_text, idx, end))
            if matches:
                offset = matches[-1].end()
            return Verdict(rationale, decision, True, offset)
        idx = raw_text.find("{", idx + 1)
    return _FAILED


def normalize_token(token: str) -> str:
    """Leading alphabetic run of a token, lower-cased.

    ``" Yes"``, ``"yes"`` and ``'"yes'`` all normalize to ``"yes"``.
    """
    i = 0
    while i < len(token) and not (token[i].isalpha() and token[i] not in _BPE_MARKERS):
        i += 1
    j = i
    while j < len(token) and token[j].isalpha():
        j += 1
    return token[i:j].lower()


def class_masses(
    top: Sequence[tuple[str, float]], words: tuple[str, str] = YES_NO
) -> tuple[float, float]:
    """Summed probability of each class's token variants: ``(positive, negative)``."""
    pos = neg = 0.0
    for token, logprob in top:
        word = normalize_token(token)
        if word == words[0]:
            pos += math.exp(logprob)
        elif word == words[1]:
            neg += math.exp(logprob)
    return pos, neg


def extract_class_probs(
    top: Sequence[tuple[str, float]],
    epsilon: float = DEFAULT_EPSILON,
    words: tuple[str, str] = YES_NO,
) -> tuple[PredictiveDistribution, float, float]:
    """Two-class distribution from top-k alternatives at the decision position.

    Returns ``(dist, p_positive, p_negative)`` where the raw masses are
    floored at ``epsilon`` (a class missing from top-k gets exactly
    ``epsilon``) and capped at 1.
    """
    pos, neg = class_masses(top, words)
    pos = min(1.0, max(pos, epsilon))
    neg = min(1.0, max(neg, epsilon))
    return PredictiveDistribution.normalize(mass_no=neg, mass_yes=pos), pos, neg


def locate_token(tokens: Sequence[TokenLogprob], text: str, offset: Optional[int]) -> Optional[int]:
    """Index of the token that renders the character at ``offset``.

    Falls back to the last yes/no token when the token stream does not
    reproduce the text.
    """
    if offset is not None and "".join(t.token for t in tokens) == text:
        pos = 0
        for i, tok in enumerate(tokens):
            nxt = pos + len(tok.token)
            if pos <= offset < nxt:
                # the value may start after a quote token
                if normalize_token(tok.token) in YES_NO:
                    return i
                if i + 1 < len(tokens) and normalize_token(tokens[i + 1].token) in YES_NO:
                    return i + 1
                return None
            pos = nxt
        return None
    for i in range(len(tokens) - 1, -1, -1):
        if normalize_token(tokens[i].token) in YES_NO:
            return i
    return None


def mean_logprob(tokens: Sequence[TokenLogprob]) -> Optional[float]:
    if not tokens:
        return None
    return math.fsum(t.logprob for t in tokens) / len(tokens)


def _alternatives(tok: TokenLogprob) -> tuple[tuple[str, float], ...]:
    # the sampled token belongs in the top-k even when a server omits it
    if any(t == tok.token for t, _ in tok.top):
        return tok.top
    return tok.top + ((tok.token, tok.logprob),)


def to_sample(completion: Completion, temperature: float, epsilon: float = DEFAULT_EPSILON) -> JudgeSample:
    """Parse a completion and read its class distribution."""
    verdict = parse_response(completion.text)
    dist = p_yes = p_no = None
    if verdict.parse_ok and completion.tokens:
        idx = locate_token(completion.tokens, completion.text, verdict.value_offset)
        if idx is not None:
            dist, p_yes, p_no = extract_class_probs(_alternatives(completion.tokens[idx]), epsilon)
    return JudgeSample(
        rationale=verdict.rationale or "",
        decision=verdict.decision,
        parse_ok=verdict.parse_ok,
        temperature=temperature,
        raw_token_prob_yes=p_yes,
        raw_token_prob_no=p_no,
        class_dist=dist,
        mean_token_logprob=mean_logprob(completion.tokens),
        text=completion.text,
    )


def first_word_prob(
    tokens: Sequence[TokenLogprob], words: tuple[str, str], epsilon: float = DEFAULT_EPSILON
) -> Optional[float]:
    """Normalized probability of ``words[0]`` at the first token matching either word."""
    for tok in tokens:
        if normalize_token(tok.token) in words:
            return extract_class_probs(_alternatives(tok), epsilon, words)[0].p_error
    return None
