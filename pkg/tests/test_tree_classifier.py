import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from probchain.tree_classifier import (
    LetterTree,
    TrialResult,
    generate_tree,
    path_log_scores,
    path_products,
    perturb_and_classify,
    perturb_and_classify_reference,
    sweep,
    target_path,
)
from probchain.sampling import Rand48


def brute_force_target(tree: LetterTree) -> tuple[int, ...]:
    best, best_path = -math.inf, None
    for path in itertools.product(range(tree.breadth), repeat=tree.depth):
        prefix_idx = [0] * tree.depth
        idx = 0
        for lvl, c in enumerate(path):
            idx = idx * tree.breadth + c
            prefix_idx[lvl] = idx
        score = math.fsum(math.log(tree.levels[lvl][prefix_idx[lvl]]) for lvl in range(tree.depth))
        if score > best:
            best, best_path = score, path
    return best_path


@pytest.mark.parametrize("d, b, paths", [(1, 2, 2), (3, 2, 8), (7, 6, 279936)])
def test_path_count(d, b, paths):
    tree = generate_tree(d, b, Rand48(0))
    assert tree.path_count == paths
    assert len(path_log_scores(tree)) == paths
    assert tree.edge_count == sum(b**k for k in range(1, d + 1))


def test_edges_in_open_unit_interval():
    tree = generate_tree(5, 4, Rand48(3))
    e = tree.flat_edges()
    assert e.min() > 0 and e.max() < 1


def test_path_budget():
    with pytest.raises(ValueError, match="budget"):
        generate_tree(9, 6, Rand48(0))
    generate_tree(3, 3, Rand48(0), path_budget=27)
    with pytest.raises(ValueError):
        generate_tree(3, 3, Rand48(0), path_budget=26)
    with pytest.raises(ValueError):
        generate_tree(3, 1, Rand48(0))


@given(st.integers(1, 5), st.integers(2, 5), st.data())
@settings(max_examples=50)
def test_path_index_round_trip(d, b, data):
    tree = LetterTree(d, b, [])
    idx = data.draw(st.integers(0, b**d - 1))
    assert tree.path_index(tree.path_of(idx)) == idx


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("d, b", [(2, 3), (3, 2), (4, 3)])
def test_target_path_matches_brute_force(seed, d, b):
    tree = generate_tree(d, b, Rand48(seed))
    assert target_path(tree) == brute_force_target(tree)


def test_path_products_match_log_scores():
    tree = generate_tree(4, 3, Rand48(8))
    prods = path_products([lv[None, :] for lv in tree.levels], 3)[0]
    np.testing.assert_allclose(np.log(prods), path_log_scores(tree), rtol=1e-13)


def test_zero_noise_is_always_correct():
    tree = generate_tree(4, 3, Rand48(1))
    res = perturb_and_classify(tree, 0.0, 50, Rand48(2))
    assert res.correct == 50 and res.f_measure == 1.0 and res.negative_trials == 0


@pytest.mark.parametrize("d, b, eps", [(3, 2, 0.32), (4, 4, 0.08), (5, 3, 0.16), (2, 6, 0.5)])
def test_kernel_matches_reference(d, b, eps):
    tree = generate_tree(d, b, Rand48(d * b))
    r1, r2 = Rand48(99), Rand48(99)
    fast = perturb_and_classify(tree, eps, 300, r1)
    slow = perturb_and_classify_reference(tree, eps, 300, r2)
    assert fast == slow
    assert r1.state == r2.state


def test_negative_eps_rejected():
    with pytest.raises(ValueError):
        perturb_and_classify(generate_tree(2, 2, Rand48(0)), -0.1, 5, Rand48(0))


def test_f_measure_is_mean_of_precision_and_recall():
    res = TrialResult(trials=400, correct=300, negative_trials=4)
    assert res.f_measure == pytest.approx(0.75)
    assert res.negative_fraction == pytest.approx(0.01)


def test_sweep_small_grid():
    table = sweep(depths=[2, 3], breadths=[2, 3], eps_values=[0.01, 0.32], models_per_topology=4,
                  trials_per_model=50, seed=7, path_budget=20)
    assert table.skipped == [(3, 3)]
    assert len(table.per_model) == 3 * 4
    rows = table.rows()
    assert [r[0] for r in rows] == [2, 2, 3, 3]
    for _, _, mean, sd, neg in rows:
        assert 0 <= mean <= 100 and sd >= 0 and 0 <= neg <= 1
    assert table.cell(2, 0.01)[0] >= table.cell(2, 0.32)[0]
    assert "skipped" in table.format()


def test_sweep_independent_of_jobs():
    kw = dict(depths=[3], breadths=[2, 3], eps_values=[0.08], models_per_topology=3, trials_per_model=40, seed=1)
    assert sweep(jobs=1, **kw).per_model == sweep(jobs=3, **kw).per_model


def test_sweep_rejects_empty_grid():
    with pytest.raises(ValueError):
        sweep(depths=[])
