import numpy as np
import pytest

from bucast.dates import parse_month
from bucast.panel import (
    AGGREGATE_COMPONENT,
    Predictor,
    SeriesPanel,
    aggregate_scheme,
    truncate_panel,
)
from bucast.preprocess import (
    FULL_INFORMATION,
    OWN_LAGS_ONLY,
    OWN_PLUS_CONTROLS,
    ZeroBaseError,
    apply_transform,
    build_design,
    observed_predictors,
    seasonal_dummies,
    standardize,
)
from tests.conftest import make_design


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------


def test_pct_change_constant_growth():
    np.testing.assert_allclose(
        apply_transform((100.0, 101.0, 102.01), "pct_change"), [1.0, 1.0]
    )


def test_first_diff_constant_series():
    np.testing.assert_allclose(apply_transform((5.0, 5.0, 5.0), "first_diff"), [0.0, 0.0])


def test_transforms_match_direct_formula():
    rng = np.random.default_rng(0)
    x = rng.uniform(50.0, 150.0, size=200)
    got = apply_transform(x, "pct_change")
    expect = np.array([100.0 * (x[t] / x[t - 1] - 1.0) for t in range(1, 200)])
    np.testing.assert_allclose(got, expect, atol=1e-12)
    np.testing.assert_allclose(
        apply_transform(x, "first_diff"),
        [x[t] - x[t - 1] for t in range(1, 200)],
        atol=1e-12,
    )


def test_pct_change_zero_base_raises():
    with pytest.raises(ZeroBaseError):
        apply_transform((1.0, 0.0, 2.0), "pct_change")


def test_pct_change_inverse_reconstruction():
    rng = np.random.default_rng(1)
    x = rng.uniform(80.0, 120.0, size=100)
    g = apply_transform(x, "pct_change")
    rebuilt = [x[0]]
    for v in g:
        rebuilt.append(rebuilt[-1] * (1.0 + v / 100.0))
    np.testing.assert_allclose(rebuilt, x, rtol=1e-10)


# ---------------------------------------------------------------------------
# design construction
# ---------------------------------------------------------------------------


def _toy_panel(n=10):
    """Short panel with recognizable values for hand alignment checks."""
    start = parse_month("2014-01")
    dates = np.arange(start, start + n, dtype=np.int64)
    agg = np.arange(10, 10 + n, dtype=float)        # value 10 + t
    pred = np.arange(100, 100 + n, dtype=float)     # value 100 + t
    panel = SeriesPanel(
        dates=dates,
        aggregate=agg,
        predictors={"z": Predictor(pred, availability_lag=2, transform="none")},
        expectation=np.tile(np.arange(n, dtype=float)[:, None], (1, 3)),
    )
    return panel, aggregate_scheme(dates)


def test_own_lag_alignment_hand_table():
    panel, scheme = _toy_panel()
    start = panel.start
    # h=0, p=1: the regressor for target t is the latest release before
    # the target, i.e. the previous month's value
    d = build_design(panel, scheme, AGGREGATE_COMPONENT, horizon=0,
                     window_end=start + 9, feature_menu=OWN_LAGS_ONLY, lag_depth=1)
    for row, t in enumerate(d.targets):
        assert d.y[row] == panel.aggregate[t - start]
        assert d.X[row, 0] == panel.aggregate[t - 1 - start]
    # prediction row re-anchors to the origin: h=0 uses the origin's previous month
    assert d.predict_x[0] == panel.aggregate[9 - 1]
    # h=2, p=2: regressors dated t-2 and t-3; prediction anchored at the origin
    d2 = build_design(panel, scheme, AGGREGATE_COMPONENT, horizon=2,
                      window_end=start + 9, feature_menu=OWN_LAGS_ONLY, lag_depth=2)
    for row, t in enumerate(d2.targets):
        assert d2.X[row, 0] == panel.aggregate[t - 2 - start]
        assert d2.X[row, 1] == panel.aggregate[t - 3 - start]
    assert d2.predict_x[0] == panel.aggregate[9]
    assert d2.predict_x[1] == panel.aggregate[8]


def test_predictor_availability_lag_column():
    panel, scheme = _toy_panel()
    start = panel.start
    d = build_design(panel, scheme, AGGREGATE_COMPONENT, horizon=0,
                     window_end=start + 9, feature_menu=FULL_INFORMATION, lag_depth=1)
    j = d.feature_names.index("x:z:1")
    for row, t in enumerate(d.targets):
        # availability lag 2 at h=0: the column holds the value for month t-2
        assert d.X[row, j] == panel.predictors["z"].values[t - 2 - start]


def test_january_row_has_all_zero_dummies():
    panel, scheme = _toy_panel(n=14)  # spans 2015-01
    start = panel.start  # 2014-01
    d = build_design(panel, scheme, AGGREGATE_COMPONENT, horizon=0,
                     window_end=start + 13, feature_menu=OWN_PLUS_CONTROLS, lag_depth=1)
    dummies = d.X[:, d.is_dummy]
    rows_jan = [i for i, t in enumerate(d.targets) if (t - 1) % 12 == 0]
    assert rows_jan, "toy panel spans a January"
    for i in rows_jan:
        assert np.all(dummies[i] == 0.0)
    # every other row marks exactly one month
    for i in range(d.n):
        assert dummies[i].sum() == (0.0 if i in rows_jan else 1.0)


def test_seasonal_dummy_block_shape():
    months = np.arange(parse_month("2015-01"), parse_month("2015-01") + 24)
    D = seasonal_dummies(months)
    assert D.shape == (24, 11)
    assert D.sum() == 22.0  # two years minus two Januaries


def test_expectation_column_alignment():
    panel, scheme = _toy_panel()
    start = panel.start
    h = 2
    d = build_design(panel, scheme, AGGREGATE_COMPONENT, horizon=h,
                     window_end=start + 9, feature_menu=OWN_PLUS_CONTROLS, lag_depth=1)
    j = d.feature_names.index("expec")
    for row, t in enumerate(d.targets):
        assert d.X[row, j] == panel.expectation[t - h - start, h]
    assert d.predict_x[j] == panel.expectation[9, h]


def test_no_leakage_estimation_rows_equal_earlier_prediction_rows(small_panel):
    """Features of the estimation row for target t at horizon h must equal
    the prediction row of the design built at origin t - h."""
    panel, schemes, _ = small_panel
    scheme = schemes[2]
    comp = scheme.component_ids[1]
    obs = observed_predictors(panel)
    T = int(panel.dates[90])
    for h in (0, 2, 5):
        d = build_design(panel, scheme, comp, horizon=h, window_end=T,
                         feature_menu=FULL_INFORMATION, lag_depth=3, obs=obs)
        for t in (int(d.targets[-1]), int(d.targets[-4])):
            d_at_origin = build_design(
                panel, scheme, comp, horizon=h, window_end=t - h,
                feature_menu=FULL_INFORMATION, lag_depth=3, obs=obs,
            )
            row = int(np.nonzero(d.targets == t)[0][0])
            np.testing.assert_array_equal(d.X[row], d_at_origin.predict_x)


def test_design_identical_from_origin_truncated_panel(small_panel):
    panel, schemes, _ = small_panel
    scheme = schemes[3]
    comp = scheme.component_ids[0]
    T = int(panel.dates[80])
    tp, _ = truncate_panel(panel, schemes, T)
    for h in (0, 4):
        d_full = build_design(panel, scheme, comp, h, T, FULL_INFORMATION, 3)
        d_trunc = build_design(tp, scheme, comp, h, T, FULL_INFORMATION, 3)
        np.testing.assert_array_equal(d_full.X, d_trunc.X)
        np.testing.assert_array_equal(d_full.y, d_trunc.y)
        np.testing.assert_array_equal(d_full.predict_x, d_trunc.predict_x)


# ---------------------------------------------------------------------------
# standardize
# ---------------------------------------------------------------------------


def test_standardize_simple_column():
    d = make_design(np.array([[1.0], [2.0], [3.0]]), np.zeros(3))
    ds, means, scales, zv = standardize(d)
    np.testing.assert_allclose(ds.X[:, 0], [-1.0, 0.0, 1.0])
    assert means[0] == 2.0 and scales[0] == 1.0
    assert not zv.any()


def test_standardize_constant_column_flagged_and_zeroed():
    X = np.column_stack([np.full(10, 3.0), np.arange(10.0)])
    d = make_design(X, np.zeros(10))
    ds, _, _, zv = standardize(d)
    assert zv[0] and not zv[1]
    assert np.all(ds.X[:, 0] == 0.0)


def test_standardize_matches_recomputation():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((50, 6)) * rng.uniform(0.5, 4.0, 6) + rng.uniform(-3, 3, 6)
    d = make_design(X, np.zeros(50))
    ds, means, scales, _ = standardize(d)
    assert np.abs(ds.X.mean(axis=0)).max() < 1e-12
    np.testing.assert_allclose(ds.X.std(axis=0, ddof=1), np.ones(6), atol=1e-12)
    np.testing.assert_allclose(means, X.mean(axis=0), atol=1e-12)
    np.testing.assert_allclose(scales, X.std(axis=0, ddof=1), atol=1e-12)


def test_standardize_leaves_dummies_untouched():
    rng = np.random.default_rng(3)
    X = np.column_stack([rng.standard_normal(20), (np.arange(20) % 2).astype(float)])
    d = make_design(X, np.zeros(20), is_dummy=[False, True])
    ds, _, _, _ = standardize(d)
    np.testing.assert_array_equal(ds.X[:, 1], X[:, 1])
