"""Join uncertainty records with verifications and compute an :class:`EvalReport`."""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import (
    ESTIMATOR_IDS,
    CurvePoint,
    EstimatorMetrics,
    EvalReport,
    StepVerification,
    UncertaintyRecord,
)
from .metrics import ScoredStep, accuracy, f1_error_class, score_estimator

METRICS = ("auroc", "auprc", "au_f1c")


def _mean_std(values: Sequence[Optional[float]]) -> tuple[Optional[float], float]:
    vals = [v for v in values if v is not None]
    if not vals:
        return None, 0.0
    if all(v == vals[0] for v in vals):
        return vals[0], 0.0
    return math.fsum(vals) / len(vals), float(np.std(vals, ddof=1))


def scored_steps(verifications: Sequence[StepVerification], records: Iterable[UncertaintyRecord]) -> list[ScoredStep]:
    """Attach each verification's score; missing or unavailable scores become ``nan``."""
    by_case = {r.case_id: r.score for r in records}
    out = []
    for v in verifications:
        score = by_case.get(v.case_id)
        out.append(
            ScoredStep(
                case_id=v.case_id,
                uncertainty=math.nan if score is None else float(score),
                predicted_label=v.predicted_label,
                ground_truth=v.ground_truth,
            )
        )
    return out


def evaluate(
    verifications: Sequence[StepVerification],
    records: Iterable[UncertaintyRecord],
    skipped: Optional[dict[str, str]] = None,
) -> EvalReport:
    """Metrics per estimator; seeded estimators report mean and standard deviation over seeds."""
    if not verifications:
        raise ValueError("no verifications to evaluate")
    pred = [v.predicted_label for v in verifications]
    truth = [v.ground_truth for v in verifications]

    groups: dict[str, dict[Optional[int], list[UncertaintyRecord]]] = defaultdict(lambda: defaultdict(list))
    for r in records:
        groups[r.estimator_id][r.seed].append(r)

    estimators: dict[str, EstimatorMetrics] = {}
    for name in ESTIMATOR_IDS:
        if name not in groups:
            continue
        runs = []
        n_unavailable = 0
        for seed in sorted(groups[name], key=lambda s: -1 if s is None else s):
            steps = scored_steps(verifications, groups[name][seed])
            n_unavailable = sum(math.isnan(s.uncertainty) for s in steps)
            runs.append(score_estimator(steps))
        stats = {m: _mean_std([getattr(r, m) for r in runs]) for m in METRICS}
        curve = []
        for i, point in enumerate(runs[0].curve):
            f1, sd = _mean_std([r.curve[i].f1 for r in runs])
            curve.append(CurvePoint(point.coverage, f1, point.n_retained, sd))
        estimators[name] = EstimatorMetrics(
            auroc=stats["auroc"][0],
            auprc=stats["auprc"][0],
            au_f1c=stats["au_f1c"][0],
            rejection_curve=curve,
            auroc_std=stats["auroc"][1],
            auprc_std=stats["auprc"][1],
            au_f1c_std=stats["au_f1c"][1],
            n_seeds=len(runs),
            n_scored=len(verifications) - n_unavailable,
            n_unavailable=n_unavailable,
            note=None if runs[0].auroc is not None else "single correctness class; AUROC/AUPRC undefined",
        )

    versions = sorted({v.prompt_version for v in verifications})
    return EvalReport(
        estimators=estimators,
        verification_accuracy=accuracy(pred, truth),
        verification_f1=f1_error_class(pred, truth),
        positive_rate=sum(truth) / len(truth),
        n_steps=len(verifications),
        prompt_version=",".join(versions),
        skipped=dict(sorted((skipped or {}).items())),
    )


def _fmt(v: Optional[float]) -> str:
    return "" if v is None else format(v, ".12g")


def flat_csv(report: EvalReport) -> str:
    """One row per estimator x metric, then one row per rejection-curve point."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kind", "estimator", "metric", "coverage", "value", "std", "n"])
    for name, m in report.estimators.items():
        for metric in METRICS:
            w.writerow(["metric", name, metric, "", _fmt(getattr(m, metric)), _fmt(getattr(m, f"{metric}_std")), m.n_scored])
    for name, m in report.estimators.items():
        for p in m.rejection_curve:
            w.writerow(["curve", name, "rejection_f1", _fmt(p.coverage), _fmt(p.f1), _fmt(p.f1_std), p.n_retained])
    return buf.getvalue()
