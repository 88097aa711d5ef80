"""Scoring uncertainty against verification correctness.

The event being predicted is "the greedy verdict was correct" (``z = 1``);
lower uncertainty means higher confidence. The F1 used for rejection curves
is on the error class of the verdict itself (``1`` = step has an error).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import CurvePoint, correctness

CURVE_GRID = tuple(i / 100 for i in range(60, 101, 4))  # 60..96 and 100
AUF1C_GRID = tuple(i / 100 for i in range(30, 101))
AUF1C_BAND = (0.30, 1.00)


class UndefinedMetric(ValueError):
    """The metric is undefined for this input (e.g. a single correctness class)."""


@dataclass(frozen=True)
class ScoredStep:
    case_id: str
    uncertainty: float
    predicted_label: int
    ground_truth: int

    @property
    def correctness(self) -> int:
        return correctness(self.predicted_label, self.ground_truth)


def _split(scored: Sequence[ScoredStep]) -> tuple[np.ndarray, np.ndarray]:
    u = np.array([s.uncertainty for s in scored], dtype=float)
    z = np.array([s.correctness for s in scored], dtype=int)
    n_pos = int(z.sum())
    if n_pos == 0 or n_pos == len(z):
        raise UndefinedMetric("both correct and incorrect steps are required")
    return u, z


def _tie_groups(values: np.ndarray) -> list[np.ndarray]:
    """Index groups of equal values, in ascending value order."""
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    breaks = np.flatnonzero(np.diff(sorted_vals)) + 1
    return np.split(order, breaks)


def auroc(scored: Sequence[ScoredStep]) -> float:
    """P(random correct step is less uncertain than random incorrect step); ties count half.

    Computed from doubled mid-ranks so the numerator is an exact integer.
    """
    u, z = _split(scored)
    n1 = int(z.sum())
    n0 = len(z) - n1
    # Rank by confidence (-u): ascending uncertainty gets the highest rank.
    doubled_rank = np.empty(len(u), dtype=np.int64)
    pos = 0
    for grp in _tie_groups(-u):
        lo, hi = pos + 1, pos + len(grp)
        doubled_rank[grp] = lo + hi
        pos = hi
    u2 = int(doubled_rank[z == 1].sum()) - n1 * (n1 + 1)
    return u2 / (2 * n1 * n0)


def auprc(scored: Sequence[ScoredStep]) -> float:
    """Average precision for detecting correct verifications, ranked by confidence.

    Each distinct confidence level is one threshold; the sum runs over recall
    increments weighted by precision at that threshold. Accumulated as an
    exact fraction, so the returned float is correctly rounded.
    """
    u, z = _split(scored)
    n_pos = int(z.sum())
    total = Fraction(0)
    tp = fp = 0
    for grp in _tie_groups(u):  # lowest uncertainty first
        d_tp = int(z[grp].sum())
        tp += d_tp
        fp += len(grp) - d_tp
        if d_tp:
            total += Fraction(d_tp * tp, tp + fp)
    return float(total / n_pos)


def f1_error_class(predicted: Iterable[int], truth: Iterable[int]) -> float:
    """F1 with the error class as positive; 0 when precision + recall is 0."""
    tp = fp = fn = 0
    for p, y in zip(predicted, truth):
        if p == 1 and y == 1:
            tp += 1
        elif p == 1:
            fp += 1
        elif y == 1:
            fn += 1
    denom = 2 * tp + fp + fn
    return 0.0 if tp == 0 else 2 * tp / denom


def accuracy(predicted: Sequence[int], truth: Sequence[int]) -> float:
    return sum(int(p == y) for p, y in zip(predicted, truth)) / len(predicted)


def retained_count(coverage: float, n: int) -> int:
    # round before ceil so that e.g. 0.3 * 10 does not become 4
    return max(1, math.ceil(round(coverage * n, 9)))


def confidence_order(scored: Sequence[ScoredStep]) -> list[ScoredStep]:
    """Most confident first; ties broken by case id. ``nan`` sorts last."""
    return sorted(
        scored,
        key=lambda s: (math.isnan(s.uncertainty), 0.0 if math.isnan(s.uncertainty) else s.uncertainty, s.case_id),
    )


def rejection_curve(scored: Sequence[ScoredStep], coverages: Sequence[float] = CURVE_GRID) -> list[CurvePoint]:
    """Error-class F1 on the most confident fraction of steps, per coverage level."""
    if not scored:
        raise ValueError("rejection_curve needs at least one step")
    ordered = confidence_order(scored)
    n = len(ordered)
    out = []
    for c in coverages:
        if not 0 < c <= 1:
            raise ValueError(f"coverage {c} outside (0, 1]")
        k = retained_count(c, n)
        kept = ordered[:k]
        f1 = f1_error_class([s.predicted_label for s in kept], [s.ground_truth for s in kept])
        out.append(CurvePoint(coverage=c, f1=f1, n_retained=k))
    return out


def au_f1c(curve: Sequence[CurvePoint], band: tuple[float, float] = AUF1C_BAND) -> float:
    """Trapezoidal mean of F1 over the coverage band (area divided by band width)."""
    lo, hi = band
    pts = sorted((p.coverage, p.f1) for p in curve if lo - 1e-12 <= p.coverage <= hi + 1e-12)
    if len(pts) < 2 or abs(pts[0][0] - lo) > 1e-9 or abs(pts[-1][0] - hi) > 1e-9:
        raise UndefinedMetric(f"curve does not span coverage band [{lo}, {hi}]")
    area = math.fsum((x1 - x0) * (y0 + y1) / 2 for (x0, y0), (x1, y1) in zip(pts, pts[1:]))
    return area / (hi - lo)


@dataclass
class EstimatorScores:
    auroc: Optional[float]
    auprc: Optional[float]
    au_f1c: float
    curve: list[CurvePoint]


def score_estimator(scored: Sequence[ScoredStep]) -> EstimatorScores:
    """All metrics for one estimator.

    Steps whose uncertainty is ``nan`` (estimator unavailable) are excluded
    from AUROC/AUPRC and ranked least confident on the rejection curve, so the
    full-coverage point always sees every step.
    """
    usable = [s for s in scored if not math.isnan(s.uncertainty)]
    try:
        roc, prc = auroc(usable), auprc(usable)
    except UndefinedMetric:
        roc = prc = None
    full = rejection_curve(scored, AUF1C_GRID)
    display = rejection_curve(scored, CURVE_GRID)
    return EstimatorScores(auroc=roc, auprc=prc, au_f1c=au_f1c(full), curve=display)
