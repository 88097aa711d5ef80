"""Render an EvalReport as comparison tables and rejection-F1 bar charts."""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Optional, Sequence

from .core import EvalReport
from .metrics import f1_error_class

DISPLAY_NAMES = {
    "random": "Random",
    "naive_entropy": "Naive Entropy",
    "p_true": "P(True)",
    "seu": "SEU",
    "cot_entropy_discrete": "CoT Entropy (Discrete)",
    "cot_entropy": "CoT Entropy",
    "total": "Total",
    "aleatoric": "Aleatoric",
    "epistemic": "Epistemic",
}
COMPARISON = ("random", "naive_entropy", "p_true", "seu", "cot_entropy_discrete", "cot_entropy")
DECOMPOSITION = ("random", "aleatoric", "epistemic", "total")


def _num(v: Optional[float]) -> str:
    return "" if v is None else f"{v:.3f}"


def comparison_table(report: EvalReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["Method", "AUROC", "AUROC_std", "AUPRC", "AUPRC_std", "AU-F1C", "AU-F1C_std", "n_seeds", "n_scored"])
    for name in DISPLAY_NAMES:
        m = report.estimators.get(name)
        if m is None:
            continue
        w.writerow([
            DISPLAY_NAMES[name],
            _num(m.auroc), _num(m.auroc_std),
            _num(m.auprc), _num(m.auprc_std),
            _num(m.au_f1c), _num(m.au_f1c_std),
            m.n_seeds, m.n_scored,
        ])
    return buf.getvalue()


def verification_table(report: EvalReport) -> str:
    """Judge F1/accuracy next to the constant predictors."""
    p = report.positive_rate
    n = report.n_steps
    n_pos = round(p * n)
    truth = [1] * n_pos + [0] * (n - n_pos)
    mode = "No-CoT prompted" if "nocot" in report.prompt_version else "CoT prompted"
    rows = [
        (mode, report.verification_f1, report.verification_accuracy),
        ("Predicting all 0s", f1_error_class([0] * n, truth), 1.0 - p),
        ("Predicting all 1s", f1_error_class([1] * n, truth), p),
    ]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["Method", "F1", "Acc"])
    for name, f1, acc in rows:
        w.writerow([name, f"{f1:.3f}", f"{acc:.3f}"])
    return buf.getvalue()


def plot_rejection_f1(report: EvalReport, estimators: Sequence[str], path: str | Path, title: str) -> Optional[Path]:
    """Grouped bars of Rejection-F1 below full coverage, with the 100% level dashed."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    names = [e for e in estimators if e in report.estimators]
    if not names:
        return None
    plt.rcParams["svg.hashsalt"] = "stepuq"
    curves = {e: [p for p in report.estimators[e].rejection_curve if p.coverage < 1.0] for e in names}
    coverages = [p.coverage for p in curves[names[0]]]
    width = 0.8 / len(names)
    fig, ax = plt.subplots(figsize=(8, 4))
    for i, e in enumerate(names):
        xs = [j + (i - (len(names) - 1) / 2) * width for j in range(len(coverages))]
        ax.bar(
            xs,
            [p.f1 for p in curves[e]],
            width,
            yerr=[p.f1_std for p in curves[e]],
            label=DISPLAY_NAMES[e],
            capsize=2,
        )
    ax.axhline(report.verification_f1, linestyle="--", color="grey", linewidth=1, label="100% (no rejection)")
    ax.set_xticks(range(len(coverages)))
    ax.set_xticklabels([f"{round(c * 100)}%" for c in coverages])
    ax.set_xlabel("Retained steps (most confident first)")
    ax.set_ylabel("F1 on retained steps")
    ax.set_title(title)
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def render(report: EvalReport, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in (("table1.csv", comparison_table(report)), ("verification.csv", verification_table(report))):
        (out / name).write_text(text, encoding="utf-8", newline="")
        written.append(out / name)
    for fname, ests, title in (
        ("rejection_f1.svg", COMPARISON, "Rejection-F1 by uncertainty method"),
        ("decomposition.svg", DECOMPOSITION, "Rejection-F1 by uncertainty type"),
    ):
        p = plot_rejection_f1(report, ests, out / fname, title)
        if p is not None:
            written.append(p)
    return written
