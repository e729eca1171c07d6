import numpy as np
import pytest

from bucast.preprocess import DesignMatrix
from bucast.synthetic import SyntheticSpec, generate


def make_design(X, y, predict_x=None, is_dummy=None, horizon=0, origin=0):
    """Bare design wrapper for estimator-level tests."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = X.shape
    names = [f"f{j}" for j in range(k)]
    dummy = np.zeros(k, bool) if is_dummy is None else np.asarray(is_dummy, bool)
    return DesignMatrix(
        targets=np.arange(n, dtype=np.int64),
        y=y,
        X=X,
        feature_names=names,
        base_names=list(names),
        is_dummy=dummy,
        penalize=~dummy,
        horizon=horizon,
        origin=origin,
        predict_x=np.zeros(k) if predict_x is None else np.asarray(predict_x, float),
    )


@pytest.fixture(scope="session")
def small_panel():
    """Compact synthetic panel shared by harness-level tests."""
    spec = SyntheticSpec(
        n_months=110, n_subgroups=6, n_groups=3, n_categories=2,
        n_predictors=18, k_factors=2, sparsity=3, seed=42,
    )
    panel, schemes, truth = generate(spec)
    return panel, schemes, truth
