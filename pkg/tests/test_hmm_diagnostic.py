import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from probchain.hmm_diagnostic import (
    SCENARIOS,
    DiscreteHmm,
    ModelFormatError,
    SequenceDataset,
    classify,
    cycle_models,
    emission_models,
    flatten_transitions,
    format_hmm,
    forward_loglik,
    forward_loglik_batch,
    generate,
    load_hmm,
    markov_necessity_test,
    parse_hmm,
    run_scenario,
    two_step_transition,
)
from probchain.sampling import Rand48


def random_hmm(k: int, L: int, seed: int) -> DiscreteHmm:
    rng = np.random.default_rng(seed)
    return DiscreteHmm(
        rng.dirichlet(np.ones(k), size=k), rng.dirichlet(np.ones(L), size=k), rng.dirichlet(np.ones(k))
    )


def brute_force_likelihood(hmm: DiscreteHmm, seq) -> float:
    total = 0.0
    for states in itertools.product(range(hmm.k), repeat=len(seq)):
        p = hmm.pi[states[0]] * hmm.B[states[0], seq[0]]
        for t in range(1, len(seq)):
            p *= hmm.A[states[t - 1], states[t]] * hmm.B[states[t], seq[t]]
        total += p
    return total


@given(st.integers(1, 4), st.integers(2, 4), st.integers(1, 6), st.integers(0, 10**6))
@settings(max_examples=40, deadline=None)
def test_forward_matches_path_sum(k, L, T, seed):
    hmm = random_hmm(k, L, seed)
    seq = np.random.default_rng(seed + 1).integers(0, L, size=T)
    expected = brute_force_likelihood(hmm, seq)
    assert math.exp(forward_loglik(hmm, seq)) == pytest.approx(expected, rel=1e-9, abs=1e-300)


def test_forward_matches_path_sum_longest_case():
    hmm = random_hmm(4, 3, 11)
    seq = [0, 2, 1, 1, 0, 2, 2, 1]
    assert math.exp(forward_loglik(hmm, seq)) == pytest.approx(brute_force_likelihood(hmm, seq), rel=1e-9)


def test_likelihoods_sum_to_one_over_all_sequences():
    hmm = random_hmm(3, 2, 5)
    total = math.fsum(math.exp(forward_loglik(hmm, s)) for s in itertools.product(range(2), repeat=5))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_batch_matches_scalar():
    hmm = random_hmm(3, 4, 2)
    seqs = np.random.default_rng(0).integers(0, 4, size=(50, 9))
    batch = forward_loglik_batch(hmm, seqs)
    np.testing.assert_allclose(batch, [forward_loglik(hmm, s) for s in seqs], rtol=1e-12)


def test_long_sequence_does_not_underflow():
    hmm = random_hmm(3, 5, 7)
    seq = Rand48(1).uniforms(5000)
    ll = forward_loglik(hmm, (seq * 5).astype(int))
    assert math.isfinite(ll) and ll < -1000


def test_impossible_sequence():
    fwd, _ = cycle_models(3)
    assert forward_loglik(fwd, [0, 2]) == -math.inf
    assert forward_loglik_batch(fwd, np.array([[0, 2], [0, 1]]))[0] == -math.inf
    assert forward_loglik(fwd, [0, 2], floor=1e-6) > -math.inf
    with pytest.raises(ValueError):
        forward_loglik(fwd, [])


def test_two_step_transition():
    A = np.array([[0.9, 0.1], [0.4, 0.6]])
    assert two_step_transition(A, 0, 1) == pytest.approx(0.9 * 0.1 + 0.1 * 0.6)
    assert two_step_transition(A, 0, 1) == pytest.approx((A @ A)[0, 1])


def test_validation():
    with pytest.raises(ValueError):
        DiscreteHmm(np.eye(2), np.array([[0.5, 0.5], [0.5, 0.6]]), [0.5, 0.5])
    with pytest.raises(ValueError):
        DiscreteHmm(np.eye(3), np.eye(2), [0.5, 0.5])
    with pytest.raises(ValueError):
        DiscreteHmm(np.eye(2), np.eye(2), [1.5, -0.5])


def test_flatten_keeps_emissions():
    hmm = random_hmm(4, 3, 1)
    flat = flatten_transitions(hmm)
    assert np.all(flat.A == 0.25)
    assert np.array_equal(flat.B, hmm.B) and np.array_equal(flat.pi, hmm.pi)


def test_generate_deterministic_and_in_range():
    hmm = random_hmm(3, 4, 3)
    a = generate(hmm, 10, 100, Rand48(5), label=2)
    b = generate(hmm, 10, 100, Rand48(5), label=2)
    assert np.array_equal(a.sequences, b.sequences)
    assert a.sequences.shape == (100, 10) and a.sequences.max() < 4
    assert np.all(a.labels == 2)
    with pytest.raises(ValueError):
        generate(hmm, 0, 5, Rand48(0))


def test_generate_emission_frequencies():
    # a single-state model emits i.i.d. from its emission row
    hmm = DiscreteHmm([[1.0]], [[0.2, 0.3, 0.5]], [1.0])
    seqs = generate(hmm, 20, 5000, Rand48(1)).sequences
    freq = np.bincount(seqs.ravel(), minlength=3) / seqs.size
    np.testing.assert_allclose(freq, [0.2, 0.3, 0.5], atol=0.01)


def test_classify_ties_go_to_lowest_index():
    hmm = random_hmm(2, 3, 0)
    assert np.all(classify([hmm, hmm], np.zeros((4, 3), dtype=int)) == 0)


def test_cycle_classes_drop_to_chance():
    run = run_scenario(cycle_models(), "cycle", 2000, 12, Rand48(4))
    assert run.report.accuracy_true == 1.0
    assert run.report.accuracy_flat == pytest.approx(0.5, abs=0.05)


def test_emission_classes_do_not_need_transitions():
    run = run_scenario(emission_models(), "emission", 2000, 12, Rand48(4))
    assert abs(run.report.drop) < 0.02


def test_necessity_test_needs_two_models():
    with pytest.raises(ValueError):
        markov_necessity_test(cycle_models()[:1], SequenceDataset(np.zeros((1, 2), int), np.zeros(1, int)))


def test_scenarios_registry():
    assert set(SCENARIOS) == {"cycle", "emission", "mixed"}
    for build in SCENARIOS.values():
        assert len(build()) >= 2


def test_model_file_round_trip(tmp_path):
    hmm = random_hmm(3, 4, 9)
    path = tmp_path / "m.hmm"
    path.write_text("# test model\n" + format_hmm(hmm), encoding="utf-8")
    back = load_hmm(path)
    assert back.name == "m"
    np.testing.assert_allclose(back.A, hmm.A, rtol=1e-15)
    np.testing.assert_allclose(back.B, hmm.B, rtol=1e-15)


def test_model_file_renormalizes_rounded_text():
    text = "2 2\n0.5 0.5\n0.3333333 0.6666667\n1 0\n0.25 0.75\n0.1 0.9\n"
    hmm = parse_hmm(text)
    assert hmm.A.sum(axis=1) == pytest.approx([1.0, 1.0], abs=1e-15)


@pytest.mark.parametrize(
    "text",
    [
        "",
        "2\n",
        "2 2\n0.5 0.5\n1 0\n0 1\n1 0\n",
        "2 2\n0.5 0.5\n1 0\n0 1\n1 0\n0 1 0\n",
        "2 2\n0.5 0.5\n0.9 0\n0 1\n1 0\n0 1\n",
        "2 2\n0.5 x\n1 0\n0 1\n1 0\n0 1\n",
    ],
)
def test_model_file_errors(text):
    with pytest.raises(ModelFormatError):
        parse_hmm(text)
