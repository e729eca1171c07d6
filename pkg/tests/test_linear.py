import numpy as np
import pytest

from bucast._kernels import cd_solve_traced
from bucast.linear import (
    RankDeficiencyError,
    _PenalizedProblem,
    fit_adalasso,
    fit_ar_bic,
    fit_augmented_ar,
    fit_hnkpc,
    fit_lasso,
    fit_ols,
    fit_ridge,
    forecast_ar_bic,
    forecast_hist_mean,
    forecast_rw,
    soft_threshold,
)
from tests.conftest import make_design


# ---------------------------------------------------------------------------
# naive benchmarks
# ---------------------------------------------------------------------------


def test_rw_returns_last_value_for_every_horizon():
    s = np.array([0.1, -0.2, 0.53])
    for h in (0, 4, 11):
        assert forecast_rw(s, 2, h) == 0.53
    assert forecast_rw(np.array([1.0, 0.0]), 1, 3) == 0.0
    rng = np.random.default_rng(0)
    path = np.cumsum(rng.standard_normal(50)) * 0.1
    assert forecast_rw(path, 49, 7) == path[-1]


def test_hist_mean_examples():
    assert forecast_hist_mean(np.array([1.0, 2.0, 3.0]), 2) == 2.0
    assert forecast_hist_mean(np.full(30, 0.7), 29) == pytest.approx(0.7, abs=1e-15)
    rng = np.random.default_rng(1)
    s = rng.standard_normal(200)
    total = 0.0
    for v in s[:120]:
        total += v
    assert abs(forecast_hist_mean(s, 119) - total / 120) < 1e-12


# ---------------------------------------------------------------------------
# OLS
# ---------------------------------------------------------------------------


def test_ols_exact_linear_data():
    x = np.linspace(0.0, 2.0, 40)
    fit = fit_ols(make_design(x[:, None], 2.0 + 3.0 * x))
    assert fit.intercept == pytest.approx(2.0, abs=1e-10)
    assert fit.beta[0] == pytest.approx(3.0, abs=1e-10)
    assert np.abs(fit.residuals).max() <= 1e-10


def test_ols_orthogonal_regressor_gets_zero_slope():
    n = 64
    x = np.sin(np.arange(n))
    x = x - x.mean()
    y = np.cos(2.0 * np.arange(n))
    y = y - y.mean()
    y = y - (y @ x) / (x @ x) * x  # exactly orthogonal, centered
    fit = fit_ols(make_design(x[:, None], y))
    assert abs(fit.beta[0]) < 1e-12


def test_ols_matches_normal_equations():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((120, 8))
    y = X @ rng.standard_normal(8) + rng.standard_normal(120)
    fit = fit_ols(make_design(X, y))
    A = np.column_stack([np.ones(120), X])
    expect = np.linalg.solve(A.T @ A, A.T @ y)
    np.testing.assert_allclose(
        np.concatenate([[fit.intercept], fit.beta]), expect, rtol=1e-8
    )


def test_ols_rank_deficiency_names_columns():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(30)
    X = np.column_stack([x, 2.0 * x, rng.standard_normal(30)])
    with pytest.raises(RankDeficiencyError) as exc:
        fit_ols(make_design(X, rng.standard_normal(30)))
    assert any(c in ("f0", "f1") for c in exc.value.columns)


def test_fit_predictions_equal_intercept_plus_beta_exactly():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((60, 5))
    y = rng.standard_normal(60)
    d = make_design(X, y)
    for fit in (fit_ols(d), fit_ridge(d, 0.5)[0], fit_lasso(d)[0]):
        np.testing.assert_array_equal(fit.residuals, y - (fit.intercept + X @ fit.beta))


# ---------------------------------------------------------------------------
# AR with BIC order selection
# ---------------------------------------------------------------------------


def test_ar_bic_prefers_small_order_on_white_noise():
    wins = 0
    reps = 200
    for s in range(reps):
        rng = np.random.default_rng(s)
        series = rng.standard_normal(150)
        _, p = fit_ar_bic(series, horizon=1, max_p=3)
        wins += p == 1
    assert wins > reps / 2  # majority rule


def test_ar_bic_recovers_ar2():
    hits = 0
    for s in range(10):
        rng = np.random.default_rng(100 + s)
        n = 300
        x = np.zeros(n)
        for t in range(2, n):
            x[t] = 1.1 * x[t - 1] - 0.5 * x[t - 2] + rng.standard_normal()
        _, p = fit_ar_bic(x, horizon=1, max_p=4)
        hits += p == 2
    assert hits >= 8


def test_ar_bic_single_candidate():
    rng = np.random.default_rng(5)
    _, p = fit_ar_bic(rng.standard_normal(80), horizon=0, max_p=1)
    assert p == 1


def test_ar_forecast_uses_origin_anchoring():
    # exact noiseless AR(1): x_t = rho * x_{t-1}
    rho, n = 0.8, 40
    x = rho ** np.arange(n, dtype=float)
    f = forecast_ar_bic(x, horizon=1, max_p=1)
    assert f == pytest.approx(rho**n, rel=1e-8)  # anchored at x_{n-1}
    # nowcast h=0 can only use the previous month: rho * x_{n-2} = x_{n-1}
    f0 = forecast_ar_bic(x, horizon=0, max_p=1)
    assert f0 == pytest.approx(x[-1], rel=1e-8)


# ---------------------------------------------------------------------------
# augmented AR and Phillips-curve menus (OLS on those designs)
# ---------------------------------------------------------------------------


def _augmented_design(rng, n=140, eta=0.6, noise=0.0):
    lag = rng.standard_normal(n)
    expec = rng.standard_normal(n)
    months = np.arange(n) % 12
    dummies = np.zeros((n, 11))
    for m in range(1, 12):
        dummies[:, m - 1] = months == m
    delta = rng.uniform(-0.4, 0.4, 11)
    y = 0.3 + 0.5 * lag + eta * expec + dummies @ delta + noise * rng.standard_normal(n)
    X = np.column_stack([lag, expec, dummies])
    dummy_mask = np.array([False, False] + [True] * 11)
    return make_design(X, y, is_dummy=dummy_mask), (0.3, 0.5, eta, delta)


def test_augmented_ar_perfect_expectation_column():
    rng = np.random.default_rng(6)
    n = 120
    expec = rng.standard_normal(n)
    X = np.column_stack([rng.standard_normal(n), expec])
    fit = fit_augmented_ar(make_design(X, expec.copy()))
    assert fit.beta[1] == pytest.approx(1.0, abs=1e-10)
    assert abs(fit.beta[0]) < 1e-10
    assert abs(fit.intercept) < 1e-10


def test_augmented_ar_zero_expectation_reduces_to_smaller_fit():
    rng = np.random.default_rng(7)
    n = 100
    lag = rng.standard_normal(n)
    y = 0.2 + 0.7 * lag + 0.1 * rng.standard_normal(n)
    X_aug = np.column_stack([lag, np.zeros(n)])
    full = fit_augmented_ar(make_design(X_aug, y))
    reduced = fit_ols(make_design(lag[:, None], y))
    assert full.intercept == pytest.approx(reduced.intercept, abs=1e-10)
    assert full.beta[0] == pytest.approx(reduced.beta[0], abs=1e-10)
    assert full.beta[1] == 0.0  # zero-variance column dropped
    assert "zero-variance" in full.note


def test_augmented_ar_recovers_known_coefficients():
    rng = np.random.default_rng(8)
    d, (mu, phi, eta, delta) = _augmented_design(rng, noise=1e-5)
    fit = fit_augmented_ar(d)
    assert fit.intercept == pytest.approx(mu, abs=1e-3)
    assert fit.beta[0] == pytest.approx(phi, abs=1e-3)
    assert fit.beta[1] == pytest.approx(eta, abs=1e-3)
    np.testing.assert_allclose(fit.beta[2:], delta, atol=1e-3)


def test_hnkpc_zero_activity_coefficients_under_null():
    rng = np.random.default_rng(9)
    reps, inside = 60, 0
    for _ in range(reps):
        n = 200
        lag = rng.standard_normal(n)
        expec = rng.standard_normal(n)
        g = rng.standard_normal(n)
        ds = rng.standard_normal(n)
        y = 0.1 + 0.4 * lag + 0.5 * expec + rng.standard_normal(n)  # psi = 0
        fit = fit_hnkpc(make_design(np.column_stack([lag, expec, g, ds]), y))
        se = np.sqrt(np.sum(fit.residuals**2) / (n - 5))
        inside += abs(fit.beta[2]) < 3.0 * se  # crude 3-sigma envelope
    assert inside >= reps * 0.9


def test_hnkpc_collinear_activity_and_exchange_raise():
    rng = np.random.default_rng(10)
    n = 80
    g = rng.standard_normal(n)
    X = np.column_stack([rng.standard_normal(n), g, g])
    with pytest.raises(RankDeficiencyError):
        fit_hnkpc(make_design(X, rng.standard_normal(n)))


def test_hnkpc_recovers_known_dgp():
    rng = np.random.default_rng(11)
    n = 400
    lag, expec, g, ds = (rng.standard_normal(n) for _ in range(4))
    y = 0.2 + 0.3 * lag + 0.5 * expec + 0.8 * g - 0.6 * ds + 1e-4 * rng.standard_normal(n)
    fit = fit_hnkpc(make_design(np.column_stack([lag, expec, g, ds]), y))
    np.testing.assert_allclose(fit.beta, [0.3, 0.5, 0.8, -0.6], atol=1e-3)


# ---------------------------------------------------------------------------
# ridge
# ---------------------------------------------------------------------------


def test_ridge_vanishing_penalty_matches_ols():
    rng = np.random.default_rng(12)
    X = rng.standard_normal((100, 10))
    y = X @ rng.standard_normal(10) + 0.2 * rng.standard_normal(100)
    d = make_design(X, y)
    ols = fit_ols(d)
    ridge, _ = fit_ridge(d, 1e-8)
    np.testing.assert_allclose(ridge.beta, ols.beta, rtol=1e-5)
    assert ridge.intercept == pytest.approx(ols.intercept, rel=1e-5, abs=1e-8)


def test_ridge_infinite_penalty_shrinks_to_mean():
    rng = np.random.default_rng(13)
    X = rng.standard_normal((60, 4))
    y = rng.standard_normal(60) + 1.5
    fit, _ = fit_ridge(make_design(X, y), 1e8)
    assert np.abs(fit.beta).max() < 1e-6
    assert fit.intercept == pytest.approx(y.mean(), abs=1e-5)


def test_ridge_scalar_closed_form():
    rng = np.random.default_rng(14)
    n = 50
    x = rng.standard_normal(n)
    x = (x - x.mean()) / x.std(ddof=1)
    y = 0.7 * x + 0.3 * rng.standard_normal(n)
    fit, _ = fit_ridge(make_design(x[:, None], y), 1.0)
    yc = y - y.mean()
    assert fit.beta[0] == pytest.approx((x @ yc) / (x @ x + n), rel=1e-10)


def test_ridge_bic_grid_is_decreasing_and_df_sane():
    rng = np.random.default_rng(15)
    X = rng.standard_normal((80, 6))
    y = X[:, 0] + rng.standard_normal(80)
    fit, path = fit_ridge(make_design(X, y))
    assert np.all(np.diff(path.penalties) < 0)
    assert 1.0 <= fit.df <= 7.0 + 1.0


# ---------------------------------------------------------------------------
# lasso
# ---------------------------------------------------------------------------


def test_soft_threshold_grid_including_boundary():
    for z in (-2.0, -1.0, -0.3, 0.0, 0.3, 1.0, 2.0):
        for g in (0.0, 0.3, 1.0):
            expect = np.sign(z) * max(abs(z) - g, 0.0)
            assert soft_threshold(z, g) == expect
    assert soft_threshold(1.0, 1.0) == 0.0
    assert soft_threshold(-1.0, 1.0) == 0.0


def test_lasso_ximax_yields_all_zero_slopes():
    rng = np.random.default_rng(16)
    X = rng.standard_normal((90, 15))
    y = X[:, 3] + 0.5 * rng.standard_normal(90)
    fit, path = fit_lasso(make_design(X, y))
    assert path.nnz[0] == 0
    assert np.all(path.betas[0] == 0.0)
    # one notch above ximax is also all-zero
    fit2, _ = fit_lasso(make_design(X, y), penalty_rule=float(path.penalties[0] * 2))
    assert np.all(fit2.beta == 0.0)
    assert fit2.intercept == pytest.approx(y.mean())


def _orthonormal_design(rng, n=128, J=32, coef=(3.0, -2.0, 1.0)):
    A = rng.standard_normal((n, J))
    A = A - A.mean(axis=0)
    Q, _ = np.linalg.qr(A)
    X = Q * np.sqrt(n - 1)  # mean 0, sd(ddof=1) exactly 1 columns
    beta = np.zeros(J)
    beta[: len(coef)] = coef
    y = X @ beta + rng.standard_normal(n)
    return make_design(X, y)


def test_lasso_orthonormal_closed_form_every_grid_point():
    rng = np.random.default_rng(17)
    d = _orthonormal_design(rng)
    n = d.n
    fit, path = fit_lasso(d)
    Xc = d.X - d.X.mean(axis=0)
    yc = d.y - d.y.mean()
    c = Xc.T @ yc / n
    q = np.diag(Xc.T @ Xc / n)
    for g, xi in enumerate(path.penalties):
        oracle = np.sign(c) * np.maximum(np.abs(c) - xi, 0.0) / q
        np.testing.assert_allclose(path.betas[g], oracle, atol=1e-8)


def test_lasso_objective_non_increasing_per_sweep():
    rng = np.random.default_rng(18)
    X = rng.standard_normal((60, 25))
    y = X[:, :3] @ np.array([1.0, -2.0, 1.5]) + rng.standard_normal(60)
    d = make_design(X, y)
    prob = _PenalizedProblem(d)
    w = np.ones(25)
    for xi in (0.5, 0.1, 0.01):
        trace = np.full(500, np.nan)
        beta = np.zeros(25)
        used = cd_solve_traced(prob.Q, prob.c, prob.yss, xi, w, beta, 1e-7, 500, trace)
        vals = trace[:used]
        assert np.all(np.diff(vals) <= 1e-12)


def test_lasso_bic_choice_is_permutation_invariant():
    rng = np.random.default_rng(19)
    X = rng.standard_normal((100, 12))
    y = X[:, :2] @ np.array([2.0, -1.0]) + 0.5 * rng.standard_normal(100)
    d1 = make_design(X, y)
    fit1, path1 = fit_lasso(d1)
    perm = rng.permutation(12)
    d2 = make_design(X[:, perm], y)
    fit2, path2 = fit_lasso(d2)
    assert fit1.penalty == pytest.approx(fit2.penalty, rel=1e-12)
    np.testing.assert_allclose(fit2.beta, fit1.beta[perm], atol=1e-6)
    np.testing.assert_allclose(fit1.predict(X), fit2.predict(X[:, perm]), atol=1e-6)


def test_lasso_support_recovery_smoke():
    hits = 0
    reps = 25
    for s in range(reps):
        rng = np.random.default_rng(300 + s)
        n, J = 200, 50
        X = rng.standard_normal((n, J))
        beta = np.zeros(J)
        beta[:3] = [4.0, -3.0, 5.0]
        y = X @ beta + rng.standard_normal(n)
        fit, _ = fit_lasso(make_design(X, y))
        hits += set(np.nonzero(beta)[0]) <= set(np.nonzero(fit.beta)[0])
    assert hits >= reps * 0.8


def test_lasso_selection_cap_walks_to_larger_penalty():
    rng = np.random.default_rng(20)
    n, J = 60, 30
    X = rng.standard_normal((n, J))
    y = X @ rng.standard_normal(J)  # dense truth forces many nonzeros
    d = make_design(X, y)
    fit_uncapped, _ = fit_lasso(d)
    cap = 4
    fit_capped, path = fit_lasso(d, selection_cap=cap)
    assert (fit_capped.beta != 0).sum() <= cap
    assert fit_capped.penalty >= fit_uncapped.penalty


def test_lasso_nonconvergence_is_flagged_not_fatal():
    rng = np.random.default_rng(21)
    X = rng.standard_normal((40, 20))
    X[:, 1] = X[:, 0] + 1e-9 * rng.standard_normal(40)  # near-duplicate columns
    y = X[:, 0] + 0.01 * rng.standard_normal(40)
    import bucast.linear as lin

    old = lin.CD_MAX_SWEEPS
    lin.CD_MAX_SWEEPS = 2
    try:
        fit, _ = fit_lasso(make_design(X, y))
    finally:
        lin.CD_MAX_SWEEPS = old
    assert not fit.converged
    assert "sweep limit" in fit.note


# ---------------------------------------------------------------------------
# adaptive lasso
# ---------------------------------------------------------------------------


def test_adalasso_all_zero_stage_one_reduces_to_scaled_lasso():
    rng = np.random.default_rng(22)
    n, J = 80, 10
    X = rng.standard_normal((n, J))
    y = rng.standard_normal(n)  # pure noise: BIC keeps the empty model
    d = make_design(X, y)
    stage1, _ = fit_lasso(d)
    assert np.all(stage1.beta == 0.0)
    T = np.sqrt(n)
    ada, ada_path = fit_adalasso(d)
    scaled, _ = fit_lasso(d, penalty_rule=ada_path.penalties * T)
    np.testing.assert_allclose(ada.beta, scaled.beta, atol=1e-10)
    assert ada.intercept == pytest.approx(scaled.intercept, abs=1e-10)


def test_adalasso_forced_unit_weights_equal_plain_lasso_bitwise():
    rng = np.random.default_rng(23)
    X = rng.standard_normal((70, 12))
    y = X[:, 2] * 2 + 0.3 * rng.standard_normal(70)
    d = make_design(X, y)
    plain, _ = fit_lasso(d)
    forced, _ = fit_adalasso(d, zeta_override=np.ones(12))
    np.testing.assert_array_equal(forced.beta, plain.beta)
    assert forced.intercept == plain.intercept
    assert forced.penalty == plain.penalty


def test_adalasso_keeps_huge_true_coefficient():
    kept = 0
    reps = 20
    for s in range(reps):
        rng = np.random.default_rng(500 + s)
        n, J = 150, 40
        X = rng.standard_normal((n, J))
        y = 10.0 * X[:, 7] + rng.standard_normal(n)
        fit, _ = fit_adalasso(make_design(X, y))
        kept += fit.beta[7] != 0.0
    assert kept == reps


def test_adalasso_no_more_false_positives_than_lasso_smoke():
    reps, wins = 20, 0
    for s in range(reps):
        rng = np.random.default_rng(700 + s)
        n, J = 200, 50
        X = rng.standard_normal((n, J))
        beta = np.zeros(J)
        beta[:3] = [4.0, -3.0, 5.0]
        y = X @ beta + rng.standard_normal(n)
        d = make_design(X, y)
        las, _ = fit_lasso(d)
        ada, _ = fit_adalasso(d)
        fp_l = np.sum((las.beta != 0) & (beta == 0))
        fp_a = np.sum((ada.beta != 0) & (beta == 0))
        wins += fp_a <= fp_l
    assert wins >= reps * 0.7
