from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stepuq.core import UncertaintyRecord
from stepuq.embedders import ScriptedEmbedder
from stepuq.estimators import (
    EstimatorUnavailable,
    binary_entropy,
    cluster_samples,
    cot_entropy,
    cot_entropy_discrete,
    decompose,
    estimate_step,
    mean_pairwise_cosine,
    naive_entropy,
    p_true,
    posterior_predictive,
    random_baseline,
    seu,
)
from stepuq.judge.client import P_TRUE_INDEX, ScriptedClient, script_entry
from stepuq.judge.parsing import Completion, TokenLogprob
from stepuq.judge.sampling import JudgeConfig

from conftest import case, sample, verification

LN2 = math.log(2)

# Reference values computed independently with mpmath at 30 digits.
H_08 = 0.5004024235381879
H_09 = 0.3250829733914482
H_07 = 0.6108643020548935


def test_binary_entropy_reference_values():
    assert binary_entropy(0.8) == pytest.approx(H_08, abs=1e-15)
    assert binary_entropy(0.9) == pytest.approx(H_09, abs=1e-15)
    assert binary_entropy(0.3) == pytest.approx(H_07, abs=1e-15)
    assert binary_entropy(0.5) == pytest.approx(LN2, abs=1e-15)
    assert binary_entropy(0.0) == binary_entropy(1.0) == 0.0
    with pytest.raises(ValueError):
        binary_entropy(1.2)


def test_decomposition_fixture():
    d = decompose([sample(0.9), sample(0.7), sample(0.8)])
    assert d.total == pytest.approx(H_08, abs=1e-12)
    assert d.aleatoric == pytest.approx((H_09 + H_07 + H_08) / 3, abs=1e-12)
    assert (d.total, d.aleatoric, d.epistemic) == pytest.approx((0.50040, 0.47878, 0.02162), abs=1e-4)


def test_cot_entropy_is_total():
    s = [sample(0.9), sample(0.7), sample(0.8)]
    assert cot_entropy(s) == decompose(s).total


def test_cot_entropy_ignores_samples_without_probabilities():
    s = [sample(0.9), sample(None, decision=1), sample(0.2, parse_ok=False)]
    assert cot_entropy(s) == pytest.approx(binary_entropy(0.9))
    assert posterior_predictive(s).p_error == pytest.approx(0.9)
    assert cluster_samples(s).counts == (0, 1)
    with pytest.raises(EstimatorUnavailable):
        cot_entropy([sample(None, parse_ok=False)])


def test_discrete_uses_decision_frequencies():
    s = [sample(0.6), sample(0.9), sample(0.1), sample(None, decision=1), sample(0.5, parse_ok=False)]
    assert cot_entropy_discrete(s) == pytest.approx(binary_entropy(3 / 4))
    with pytest.raises(EstimatorUnavailable):
        cot_entropy_discrete([sample(0.5, parse_ok=False)])


def test_naive_entropy():
    s = [sample(0.5, lp=-0.2), sample(0.5, lp=-0.6), sample(0.5, parse_ok=False, lp=-1.0), sample(0.5, lp=None)]
    assert naive_entropy(s) == pytest.approx(0.6)
    with pytest.raises(EstimatorUnavailable):
        naive_entropy([sample(0.5, lp=None)])


def test_seu_against_numpy_oracle():
    vecs = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]]
    u = np.array(vecs) / np.linalg.norm(vecs, axis=1, keepdims=True)
    sims = u @ u.T
    expected = sims[np.triu_indices(3, 1)].mean()
    assert mean_pairwise_cosine(vecs) == pytest.approx(expected, abs=1e-15)
    s = [sample(0.9, rationale=f"r{i}") for i in range(3)]
    table = {x.response_text(): v for x, v in zip(s, vecs)}
    assert seu(s, ScriptedEmbedder(table)) == pytest.approx(1 - expected)


def test_seu_edge_cases():
    emb = ScriptedEmbedder({}, default=[1.0, 0.0])
    assert seu([sample(0.9)], emb) == 0.0
    assert seu([sample(0.9), sample(0.2)], emb) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(EstimatorUnavailable):
        seu([sample(0.9), sample(0.2)], ScriptedEmbedder({}))

    def broken(texts):
        raise RuntimeError("gpu on fire")

    with pytest.raises(EstimatorUnavailable, match="embedder failed"):
        seu([sample(0.9), sample(0.2)], broken)


def test_random_baseline_is_deterministic_and_uniformish():
    assert random_baseline(0, "a") == random_baseline(0, "a")
    assert random_baseline(0, "a") != random_baseline(1, "a")
    xs = [random_baseline(3, f"c{i}") for i in range(4000)]
    assert 0 <= min(xs) and max(xs) < 1
    assert abs(np.mean(xs) - 0.5) < 0.02


def test_p_true_reads_true_probability():
    c = case("a/001")
    v = verification("a/001", 0, 0, [sample(0.2), sample(0.7)])
    top = ((" True", math.log(0.75)), (" False", math.log(0.25)))
    comp = Completion(" True", (TokenLogprob(" True", math.log(0.75), top),))
    client = ScriptedClient({("a/001", P_TRUE_INDEX): script_entry("a/001", P_TRUE_INDEX, comp)})
    assert p_true(c, v, JudgeConfig(), client) == pytest.approx(0.25)
    with pytest.raises(EstimatorUnavailable):
        p_true(case("b/001"), verification("b/001", 0, 0), JudgeConfig(), client)


def test_estimate_step_records():
    v = verification("a/001", 1, 1, [sample(0.9), sample(0.7), sample(0.8)])
    recs = estimate_step(v, random_seeds=(0, 1, 2))
    names = [r.estimator_id for r in recs]
    # SEU and P(True) need resources that were not supplied
    assert "seu" not in names and "p_true" not in names
    assert names.count("random") == 3
    by = {r.estimator_id: r for r in recs if r.estimator_id != "random"}
    assert by["cot_entropy"].score == by["total"].score
    assert by["epistemic"].score == pytest.approx(0.0216191905, abs=1e-9)
    assert by["cot_entropy"].n_samples_used == 3


def test_estimate_step_unavailable_is_recorded_not_raised():
    v = verification("a/001", 0, 0, [sample(None, parse_ok=False, lp=None)] * 2)
    recs = {r.estimator_id: r for r in estimate_step(v, ("cot_entropy", "naive_entropy", "total"))}
    assert recs["cot_entropy"].score is None and recs["cot_entropy"].note
    assert recs["total"].score is None


def test_estimate_step_seu_low_sample_note():
    v = verification("a/001", 0, 0, [sample(0.3)])
    (rec,) = estimate_step(v, ("seu",), embedder=ScriptedEmbedder({}, default=[1.0]))
    assert rec.score == 0.0 and rec.note == "low_sample"


# properties

probs = st.floats(0.0, 1.0, allow_nan=False)
sample_sets = st.lists(probs, min_size=1, max_size=12)


@given(sample_sets)
def test_decomposition_identities(ps):
    d = decompose([sample(p) for p in ps])
    assert abs(d.total - d.aleatoric - d.epistemic) <= 1e-9
    assert d.epistemic >= -1e-9
    for x in (d.total, d.aleatoric):
        assert -1e-9 <= x <= LN2 + 1e-9


@given(st.lists(st.sampled_from([0.0, 1.0]), min_size=1, max_size=12))
def test_degenerate_sets_discrete_equals_continuous(ps):
    s = [sample(p) for p in ps]
    assert cot_entropy(s) == cot_entropy_discrete(s)
    assert decompose(s).aleatoric == 0.0


@given(sample_sets, st.randoms())
def test_cot_entropy_permutation_invariant(ps, rnd):
    shuffled = list(ps)
    rnd.shuffle(shuffled)
    assert cot_entropy([sample(p) for p in ps]) == pytest.approx(cot_entropy([sample(p) for p in shuffled]), abs=1e-12)


@given(probs, st.integers(1, 12))
def test_identical_samples_have_no_epistemic(p, n):
    d = decompose([sample(p)] * n)
    assert abs(d.epistemic) <= 1e-12


@settings(max_examples=50)
@given(sample_sets)
def test_records_validate(ps):
    for r in estimate_step(verification("a/001", 0, 0, [sample(p) for p in ps])):
        assert isinstance(r, UncertaintyRecord)
