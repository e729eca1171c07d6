from itertools import combinations

import numpy as np
import pytest

from bucast.ensemble import (
    circular_block_indices,
    default_block_len,
    fit_csr,
    fit_forest,
    fit_tree,
    predict_forest,
)
from bucast.factors import preselect_by_tstat
from bucast.linear import fit_ols
from bucast.preprocess import InsufficientHistoryError
from tests.conftest import make_design


# ---------------------------------------------------------------------------
# complete subset regression
# ---------------------------------------------------------------------------


def test_csr_degenerate_enumeration_is_single_ols():
    rng = np.random.default_rng(0)
    n = 60
    C = rng.standard_normal((n, 4))
    y = C @ np.array([1.0, -0.5, 0.2, 0.0]) + 0.3 * rng.standard_normal(n)
    px = rng.standard_normal(4)
    ens = fit_csr(make_design(C, y, predict_x=px), p_tilde=4, p_subset=4)
    assert ens.n_members == 1
    ols = fit_ols(make_design(C, y))
    assert ens.predict(px) == pytest.approx(ols.forecast(px), rel=1e-10)


def test_csr_matches_hand_enumerated_average():
    rng = np.random.default_rng(1)
    n = 80
    C = rng.standard_normal((n, 10))
    y = C[:, 0] - C[:, 1] + 0.5 * rng.standard_normal(n)
    px = rng.standard_normal(10)
    ens = fit_csr(make_design(C, y, predict_x=px), p_tilde=6, p_subset=2)
    assert ens.n_members == 15
    sel, _ = preselect_by_tstat(y, None, C, mode="rank", top=6)
    member_preds = []
    for sub in combinations(range(6), 2):
        cols = [sel[s] for s in sub]
        Z = np.column_stack([np.ones(n), C[:, cols]])
        cf, *_ = np.linalg.lstsq(Z, y, rcond=None)
        member_preds.append(cf[0] + cf[1] * px[cols[0]] + cf[2] * px[cols[1]])
    assert ens.predict(px) == pytest.approx(np.mean(member_preds), abs=1e-12)


def test_csr_duplicate_candidates_are_symmetric():
    rng = np.random.default_rng(2)
    n = 70
    base = rng.standard_normal((n, 5))
    C = np.column_stack([base, base[:, 0]])  # column 5 duplicates column 0
    y = base[:, 0] * 2 + 0.2 * rng.standard_normal(n)
    px = rng.standard_normal(6)
    px[5] = px[0]
    ens = fit_csr(make_design(C, y, predict_x=px), p_tilde=6, p_subset=2)
    # members containing either duplicate predict identically
    preds = {}
    for k in range(ens.n_members):
        cols = frozenset(int(ens.candidate_cols[j]) for j in ens.subsets[k])
        val = ens.coefs[k, 0] + float(
            (px[ens.candidate_cols[ens.subsets[k]]] * ens.coefs[k, 1:]).sum()
        )
        preds.setdefault(cols, []).append(val)
    for a in list(preds):
        swapped = frozenset(5 if c == 0 else (0 if c == 5 else c) for c in a)
        if swapped in preds and swapped != a:
            assert np.allclose(preds[a], preds[swapped], atol=1e-6)


def test_csr_shrinkage_identity():
    # averaging member coefficients (zeros for non-members) reproduces the
    # ensemble prediction as a single linear rule
    rng = np.random.default_rng(3)
    n = 90
    C = rng.standard_normal((n, 12))
    y = C[:, 2] + 0.4 * rng.standard_normal(n)
    px = rng.standard_normal(12)
    ens = fit_csr(make_design(C, y, predict_x=px), p_tilde=6, p_subset=3)
    c0, cbar = ens.average_coefficients()
    linear_rule = c0 + float(px[ens.candidate_cols] @ cbar)
    assert linear_rule == pytest.approx(ens.predict(px), abs=1e-12)


def test_csr_too_few_candidates_raises():
    rng = np.random.default_rng(4)
    C = rng.standard_normal((40, 3))
    with pytest.raises(InsufficientHistoryError):
        fit_csr(make_design(C, rng.standard_normal(40)), p_tilde=6, p_subset=4)


# ---------------------------------------------------------------------------
# regression trees
# ---------------------------------------------------------------------------


def test_tree_constant_target_is_single_leaf():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((30, 4))
    y = np.full(30, 1.7)
    tree = fit_tree(X, y, min_leaf=1, feature_fraction=1.0, rng=0)
    assert tree.n_nodes == 1
    ((val, cnt),) = tree.leaves()
    assert val == pytest.approx(1.7, abs=1e-14)
    assert cnt == 30


def test_tree_step_function_splits_at_midpoint():
    X = np.arange(10, dtype=float)[:, None]
    y = np.where(X[:, 0] < 5, 0.0, 1.0)
    tree = fit_tree(X, y, min_leaf=1, feature_fraction=1.0, rng=0)
    assert tree.feature[0] == 0
    assert tree.threshold[0] == pytest.approx(4.5)
    np.testing.assert_array_equal(tree.predict(X), y)


def test_tree_min_leaf_equal_n_is_single_mean_leaf():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((25, 3))
    y = rng.standard_normal(25)
    tree = fit_tree(X, y, min_leaf=25, feature_fraction=1.0, rng=0)
    assert tree.n_nodes == 1
    assert tree.value[0] == pytest.approx(y.mean())


def test_tree_interpolates_with_unit_leaves_and_unique_values():
    rng = np.random.default_rng(7)
    X = rng.standard_normal((40, 6))
    y = rng.standard_normal(40)
    tree = fit_tree(X, y, min_leaf=1, feature_fraction=1.0, rng=1)
    np.testing.assert_allclose(tree.predict(X), y, atol=1e-12)


def test_tree_exhaustive_split_search_matches_oracle():
    # one feature, ten rows: best split by brute force over all midpoints
    rng = np.random.default_rng(8)
    x = np.sort(rng.standard_normal(10))
    y = rng.standard_normal(10)
    tree = fit_tree(x[:, None], y, min_leaf=2, feature_fraction=1.0, rng=0)
    best = None
    for i in range(1, 9):
        if i < 2 or 10 - i < 2:
            continue
        sse = np.var(y[:i]) * i + np.var(y[i:]) * (10 - i)
        if best is None or sse < best[0]:
            best = (sse, 0.5 * (x[i - 1] + x[i]))
    assert tree.threshold[0] == pytest.approx(best[1])


def test_tree_every_leaf_respects_min_leaf():
    rng = np.random.default_rng(9)
    X = rng.standard_normal((200, 10))
    y = X[:, 0] + rng.standard_normal(200)
    for min_leaf in (1, 5, 17):
        tree = fit_tree(X, y, min_leaf=min_leaf, feature_fraction=0.5, rng=3)
        assert min(c for _, c in tree.leaves()) >= min_leaf


# ---------------------------------------------------------------------------
# forest
# ---------------------------------------------------------------------------


def test_forest_identity_bootstrap_single_tree_collapse():
    rng = np.random.default_rng(10)
    X = rng.standard_normal((50, 5))
    y = rng.standard_normal(50)
    forest = fit_forest(X, y, n_trees=1, min_leaf=1, feature_fraction=1.0,
                        seed=4, bootstrap="identity")
    np.testing.assert_allclose(predict_forest(forest, X), y, atol=1e-12)


def test_forest_predictions_stay_in_target_range():
    rng = np.random.default_rng(11)
    X = rng.standard_normal((150, 8))
    y = np.sin(X[:, 0]) + 0.5 * rng.standard_normal(150)
    forest = fit_forest(X, y, n_trees=60, min_leaf=5, feature_fraction=1.0 / 3.0, seed=5)
    grid = rng.standard_normal((300, 8)) * 3.0
    p = predict_forest(forest, grid)
    assert p.min() >= y.min() - 1e-12
    assert p.max() <= y.max() + 1e-12


def test_forest_same_seed_bit_identical_different_seed_differs():
    rng = np.random.default_rng(12)
    X = rng.standard_normal((90, 6))
    y = rng.standard_normal(90)
    a = fit_forest(X, y, n_trees=25, seed=7)
    b = fit_forest(X, y, n_trees=25, seed=7)
    c = fit_forest(X, y, n_trees=25, seed=8)
    np.testing.assert_array_equal(predict_forest(a, X), predict_forest(b, X))
    assert any(
        not np.array_equal(x, z)
        for x, z in zip(a.bootstrap_indices, c.bootstrap_indices)
    )


def test_forest_beats_ols_on_nonlinear_dgp():
    # Friedman-style surface: strongly nonlinear in half the features
    wins = 0
    reps = 20
    for s in range(reps):
        rng = np.random.default_rng(4000 + s)
        n, J = 400, 10
        X = rng.uniform(0.0, 1.0, size=(n, J))
        def f(Z):
            return (10.0 * np.sin(np.pi * Z[:, 0] * Z[:, 1])
                    + 20.0 * (Z[:, 2] - 0.5) ** 2 + 10.0 * Z[:, 3] + 5.0 * Z[:, 4])
        y = f(X) + rng.standard_normal(n)
        Xte = rng.uniform(0.0, 1.0, size=(200, J))
        yte = f(Xte) + rng.standard_normal(200)
        forest = fit_forest(X, y, n_trees=100, min_leaf=5,
                            feature_fraction=1.0 / 3.0, seed=s)
        mse_rf = np.mean((predict_forest(forest, Xte) - yte) ** 2)
        ols = fit_ols(make_design(X, y))
        mse_ols = np.mean((ols.predict(Xte) - yte) ** 2)
        wins += mse_rf < mse_ols
    assert wins >= reps * 0.9


def test_block_bootstrap_structure():
    rng = np.random.default_rng(13)
    n = 100
    bl = default_block_len(n)
    assert bl == 5  # ceil(100 ** (1/3))
    idx = circular_block_indices(n, bl, rng)
    assert len(idx) == n
    assert idx.min() >= 0 and idx.max() < n
    # consecutive entries inside a block increase by 1 modulo n
    inside = [(idx[i + 1] - idx[i]) % n == 1 for i in range(n - 1)
              if (i + 1) % bl != 0]
    assert all(inside)


def test_forest_width_mismatch_raises():
    rng = np.random.default_rng(14)
    X = rng.standard_normal((40, 4))
    forest = fit_forest(X, rng.standard_normal(40), n_trees=3, seed=0)
    with pytest.raises(ValueError):
        predict_forest(forest, np.zeros((2, 5)))
