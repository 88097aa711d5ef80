from __future__ import annotations

import math
from collections import defaultdict

import numpy as np
import pytest
from scipy import stats

from stepuq.core import validate_trace
from stepuq.estimators import cot_entropy, cot_entropy_discrete, decompose, estimate_step
from stepuq.ingest import build_cases
from stepuq.simulator import SimConfig, corpus_summary, first_error_index, generate_corpus, oracle_separation_check


def test_deterministic_per_seed():
    a = generate_corpus(SimConfig(n_questions=8, seed=5))
    b = generate_corpus(SimConfig(n_questions=8, seed=5))
    c = generate_corpus(SimConfig(n_questions=8, seed=6))
    assert [v.to_dict() for v in a.verifications] == [v.to_dict() for v in b.verifications]
    assert a.script == b.script and a.raw_records == b.raw_records
    assert [v.to_dict() for v in a.verifications] != [v.to_dict() for v in c.verifications]


def test_questions_are_independent_of_corpus_size():
    small = generate_corpus(SimConfig(n_questions=3, seed=2))
    big = generate_corpus(SimConfig(n_questions=6, seed=2))
    n = len(small.cases)
    assert [v.to_dict() for v in small.verifications] == [v.to_dict() for v in big.verifications[:n]]


def test_traces_are_valid_and_match_ingest():
    corpus = generate_corpus(SimConfig(n_questions=30, seed=1, step_error_rate=0.2))
    by_sol = defaultdict(list)
    for c in corpus.cases:
        by_sol[c.solution_id].append(c)
    assert all(validate_trace(t) == [] for t in by_sol.values())
    cases, summary = build_cases(enumerate(corpus.raw_records, start=1))
    assert sorted(cases, key=lambda c: c.case_id) == sorted(corpus.cases, key=lambda c: c.case_id)
    assert summary.steps == corpus_summary(corpus.cases)["steps"]


def test_zero_error_rate_gives_no_positives():
    corpus = generate_corpus(SimConfig(n_questions=10, step_error_rate=0.0, max_steps=5))
    assert all(c.ground_truth == 0 for c in corpus.cases)
    assert len(corpus.cases) == 50


def test_first_error_index_matches_geometric_law():
    rate, max_steps, n = 0.1, 12, 10_000
    counts = np.zeros(max_steps + 1)
    for q in range(n):
        k = first_error_index(np.random.default_rng([0, q]), rate, max_steps)
        counts[max_steps if k is None else k - 1] += 1
    pmf = [rate * (1 - rate) ** (k - 1) for k in range(1, max_steps + 1)]
    expected = np.array(pmf + [(1 - rate) ** max_steps]) * n
    _, pvalue = stats.chisquare(counts, expected)
    assert pvalue > 0.01


def test_perfect_judge_limit_scores_zero():
    cfg = SimConfig(n_questions=10, judge_skill=1.0, belief_concentration=math.inf, degenerate=True, seed=3)
    corpus = generate_corpus(cfg)
    assert all(v.correctness == 1 for v in corpus.verifications)
    for v in corpus.verifications:
        recs = estimate_step(v, ("cot_entropy", "cot_entropy_discrete", "naive_entropy", "seu", "total", "aleatoric", "epistemic"),
                             embedder=corpus.embedder())
        assert all(abs(r.score) <= 1e-12 for r in recs)


def test_perfect_judge_token_path_is_near_zero():
    corpus = generate_corpus(SimConfig(n_questions=10, judge_skill=1.0, belief_concentration=math.inf, seed=3))
    assert all(v.correctness == 1 for v in corpus.verifications)
    eps = 1e-4 / (1 + 1e-4)
    floor = -eps * math.log(eps) - (1 - eps) * math.log(1 - eps)
    assert all(cot_entropy(v.diverse_samples) <= floor + 1e-12 for v in corpus.verifications)


def test_degenerate_mode_discrete_equals_continuous():
    corpus = generate_corpus(SimConfig(n_questions=40, degenerate=True, seed=4))
    for v in corpus.verifications:
        assert all(s.class_dist.is_degenerate() for s in v.diverse_samples)
        assert cot_entropy(v.diverse_samples) == cot_entropy_discrete(v.diverse_samples)


def test_sharper_beliefs_lower_aleatoric():
    means = []
    for conc in (2.0, 6.0, 20.0, 100.0):
        corpus = generate_corpus(SimConfig(n_questions=60, belief_concentration=conc, seed=9))
        means.append(np.mean([decompose(v.diverse_samples).aleatoric for v in corpus.verifications]))
    assert all(a >= b for a, b in zip(means, means[1:]))


def test_parse_failures_are_injected():
    corpus = generate_corpus(SimConfig(n_questions=30, parse_failure_rate=0.3, seed=2))
    rates = [v.parse_rate for v in corpus.verifications]
    assert 0.6 < np.mean(rates) < 0.8
    assert all(v.greedy_sample.parse_ok for v in corpus.verifications)


def test_separation_is_real_at_small_scale():
    corpus = generate_corpus(SimConfig(n_questions=80, seed=1))
    assert oracle_separation_check(corpus, "cot_entropy") > oracle_separation_check(corpus, "random")


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(judge_skill=1.5)
    with pytest.raises(ValueError):
        SimConfig(belief_concentration=0)
    with pytest.raises(ValueError):
        SimConfig(n_diverse=0)
    assert SimConfig(belief_concentration=math.inf).to_dict()["belief_concentration"] == "inf"


def test_write_emits_pipeline_files(tmp_path):
    paths = generate_corpus(SimConfig(n_questions=3)).write(tmp_path)
    assert {p.name for p in paths.values()} == {"raw.jsonl", "cases.jsonl", "samples.jsonl", "script.jsonl", "embeddings.jsonl"}
    assert all(p.stat().st_size > 0 for p in paths.values())


def test_p_true_script_is_informative():
    from stepuq.judge.client import ScriptedClient
    from stepuq.judge.sampling import JudgeConfig

    corpus = generate_corpus(SimConfig(n_questions=80, seed=1))
    client = ScriptedClient({(e["case_id"], e["sample_index"]): e for e in corpus.script})
    by_case = {c.case_id: c for c in corpus.cases}
    scores = {}
    for v in corpus.verifications:
        (rec,) = estimate_step(v, ("p_true",), case=by_case[v.case_id], judge_cfg=JudgeConfig(), client=client)
        scores[v.case_id] = rec.score
    assert all(0 < s < 1 for s in scores.values())
    from stepuq.metrics import ScoredStep, auroc

    steps = [ScoredStep(v.case_id, scores[v.case_id], v.predicted_label, v.ground_truth) for v in corpus.verifications]
    assert auroc(steps) > 0.6
