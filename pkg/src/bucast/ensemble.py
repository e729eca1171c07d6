"""Complete subset regression and the block-bootstrap random forest."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import _kernels
from .factors import preselect_by_tstat
from .linear import LinearFit
from .preprocess import DesignMatrix, InsufficientHistoryError


# ---------------------------------------------------------------------------
# Complete subset regression
# ---------------------------------------------------------------------------


@dataclass
class SubsetEnsemble:
    """Equal-weight average of all size-p OLS fits on a screened pool.

    Member k regresses the target on [intercept, candidates in
    ``subsets[k]``]; excluded candidates implicitly carry zero
    coefficients, which is what gives the average its shrinkage flavor.
    """

    candidate_cols: np.ndarray        # design columns of the screened pool
    candidate_names: list[str]
    subsets: np.ndarray               # (M, p) indexes into the pool
    coefs: np.ndarray                 # (M, p + 1), intercept first
    feature_names: list[str] = field(default_factory=list)

    @property
    def n_members(self) -> int:
        return self.subsets.shape[0]

    def member_fit(self, k: int) -> LinearFit:
        names = [self.candidate_names[j] for j in self.subsets[k]]
        return LinearFit(
            intercept=float(self.coefs[k, 0]),
            beta=self.coefs[k, 1:].copy(),
            feature_names=names,
            residuals=np.zeros(0),
            df=float(self.subsets.shape[1] + 1),
        )

    def average_coefficients(self) -> tuple[float, np.ndarray]:
        """Pool-wide (intercept, beta) averaging zeros for non-members."""
        M, p = self.subsets.shape
        beta = np.zeros(len(self.candidate_names))
        for k in range(M):
            beta[self.subsets[k]] += self.coefs[k, 1:]
        return float(self.coefs[:, 0].mean()), beta / M

    def predict_pool(self, xpool: np.ndarray) -> float:
        """Forecast from a vector over the candidate pool."""
        vals = self.coefs[:, 0] + (xpool[self.subsets] * self.coefs[:, 1:]).sum(axis=1)
        return float(vals.mean())

    def predict(self, x_full: np.ndarray) -> float:
        """Forecast from a full design row."""
        return self.predict_pool(x_full[self.candidate_cols])


def fit_csr(
    design: DesignMatrix,
    p_tilde: int = 20,
    p_subset: int = 4,
) -> SubsetEnsemble:
    """Complete subset regression over the design's non-dummy columns.

    Candidates are ranked by the |t| of a bivariate regression of the
    target on each column (the intercept is the only control, since the
    members themselves carry no fixed controls); the top ``p_tilde``
    survive and all C(p_tilde, p_subset) member regressions are fit.
    """
    y = design.y
    pool_idx = np.nonzero(~design.is_dummy)[0]
    C = design.X[:, pool_idx]
    n = len(y)
    if n <= p_subset + 2:
        raise InsufficientHistoryError("too few rows for subset regressions")
    sel, _ = preselect_by_tstat(y, None, C, mode="rank", top=p_tilde)
    if len(sel) < p_subset:
        raise InsufficientHistoryError(
            f"only {len(sel)} usable candidates for subsets of {p_subset}"
        )
    keep = pool_idx[sel]
    Z = np.column_stack([np.ones(n), design.X[:, keep]])
    G = Z.T @ Z
    gy = Z.T @ y

    subsets = np.array(list(combinations(range(len(sel)), p_subset)), dtype=np.int64)
    M = subsets.shape[0]
    cols = np.concatenate([np.zeros((M, 1), np.int64), subsets + 1], axis=1)
    A = G[cols[:, :, None], cols[:, None, :]]
    b = gy[cols]
    try:
        coefs = np.linalg.solve(A, b[..., None])[..., 0]
        bad = ~np.all(np.isfinite(coefs), axis=1)
    except np.linalg.LinAlgError:
        coefs = np.zeros((M, p_subset + 1))
        bad = np.ones(M, bool)
    if bad.any():
        for k in np.nonzero(bad)[0]:
            coefs[k], _, _, _ = np.linalg.lstsq(Z[:, cols[k]], y, rcond=None)
    else:
        # guard against silently ill-conditioned members
        resid = np.einsum("mij,mj->mi", A, coefs) - b
        rough = np.abs(resid).max(axis=1) > 1e-6 * (1.0 + np.abs(b).max())
        for k in np.nonzero(rough)[0]:
            coefs[k], _, _, _ = np.linalg.lstsq(Z[:, cols[k]], y, rcond=None)
    return SubsetEnsemble(
        candidate_cols=keep,
        candidate_names=[design.feature_names[j] for j in keep],
        subsets=subsets,
        coefs=coefs,
        feature_names=list(design.feature_names),
    )


# ---------------------------------------------------------------------------
# Regression trees and random forest
# ---------------------------------------------------------------------------


@dataclass
class RegressionTree:
    """Array-backed binary regression tree (feature < 0 marks a leaf)."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return _kernels.tree_predict(
            self.feature, self.threshold, self.left, self.right, self.value, X
        )

    def leaves(self) -> list[tuple[float, int]]:
        """(value, training-row count) of every leaf."""
        return [
            (float(self.value[i]), int(self.count[i]))
            for i in range(self.n_nodes)
            if self.feature[i] < 0
        ]


@dataclass
class ForestModel:
    """Bagged trees plus the bootstrap draws that built them."""

    trees: list[RegressionTree]
    bootstrap_indices: list[np.ndarray]
    n_features: int
    min_leaf: int
    feature_fraction: float
    block_len: int
    seed: int

    @property
    def n_trees(self) -> int:
        return len(self.trees)


def mtry_count(n_features: int, fraction: float) -> int:
    if not 0.0 < fraction <= 1.0:
        raise ValueError("feature_fraction must be in (0, 1]")
    return max(1, math.ceil(fraction * n_features))


def default_block_len(n: int) -> int:
    return max(1, math.ceil(n ** (1.0 / 3.0)))


def circular_block_indices(n: int, block_len: int, rng: np.random.Generator) -> np.ndarray:
    """Circular block bootstrap: random starts, wrap-around blocks, length n."""
    nblocks = math.ceil(n / block_len)
    starts = rng.integers(0, n, nblocks)
    idx = (starts[:, None] + np.arange(block_len)[None, :]).ravel()[:n] % n
    return idx.astype(np.int64)


def _grow(Xt, y, sort_idx, boot, min_leaf, mtry, kernel_seed) -> RegressionTree:
    nb = len(boot)
    cap = 2 * nb + 8
    feat = np.empty(cap, np.int64)
    thr = np.empty(cap, np.float64)
    left = np.empty(cap, np.int64)
    right = np.empty(cap, np.int64)
    value = np.empty(cap, np.float64)
    count = np.empty(cap, np.int64)
    used = _kernels.build_tree(
        Xt, y, sort_idx, boot, min_leaf, mtry, kernel_seed,
        feat, thr, left, right, value, count,
    )
    return RegressionTree(
        feature=feat[:used].copy(),
        threshold=thr[:used].copy(),
        left=left[:used].copy(),
        right=right[:used].copy(),
        value=value[:used].copy(),
        count=count[:used].copy(),
    )


def fit_tree(
    X: np.ndarray,
    y: np.ndarray,
    min_leaf: int = 5,
    feature_fraction: float = 1.0,
    rng: np.random.Generator | int = 0,
) -> RegressionTree:
    """Grow one greedy SSE-minimizing tree on the full sample.

    At each node ``ceil(fraction * J)`` features are drawn without
    replacement; candidate thresholds are midpoints of consecutive
    distinct sorted values; growth stops when a node has zero SSE or no
    split leaves both children with ``min_leaf`` rows.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, J = X.shape
    if n < 1:
        raise InsufficientHistoryError("empty sample")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    Xt = np.ascontiguousarray(X.T)
    sort_idx = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
    seed = int(rng.integers(0, 2**32 - 1))
    return _grow(Xt, y, sort_idx, np.arange(n, dtype=np.int64),
                 int(min_leaf), mtry_count(J, feature_fraction), seed)


def fit_forest(
    X: np.ndarray,
    y: np.ndarray,
    n_trees: int = 500,
    min_leaf: int = 5,
    feature_fraction: float = 1.0 / 3.0,
    block_len: int | None = None,
    seed: int = 0,
    bootstrap: str = "block",
) -> ForestModel:
    """Bagged regression trees over circular block-bootstrap resamples.

    Per-tree randomness comes from independent streams spawned off the
    master seed, so results are bit-identical for a given seed and
    independent of any fitting order. ``bootstrap="identity"`` is a
    testing hook that feeds every tree the original sample.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, J = X.shape
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    if min_leaf < 1 or n < min_leaf:
        raise InsufficientHistoryError("sample smaller than min_leaf")
    if bootstrap not in ("block", "identity"):
        raise ValueError(f"unknown bootstrap kind: {bootstrap!r}")
    bl = default_block_len(n) if block_len is None else int(block_len)
    mtry = mtry_count(J, feature_fraction)
    Xt = np.ascontiguousarray(X.T)
    sort_idx = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
    streams = np.random.SeedSequence(seed).spawn(n_trees)
    trees = []
    boots = []
    for b in range(n_trees):
        rng = np.random.default_rng(streams[b])
        if bootstrap == "identity":
            boot = np.arange(n, dtype=np.int64)
        else:
            boot = circular_block_indices(n, bl, rng)
        kernel_seed = int(rng.integers(0, 2**32 - 1))
        trees.append(_grow(Xt, y, sort_idx, boot, int(min_leaf), mtry, kernel_seed))
        boots.append(boot)
    return ForestModel(
        trees=trees,
        bootstrap_indices=boots,
        n_features=J,
        min_leaf=int(min_leaf),
        feature_fraction=float(feature_fraction),
        block_len=bl,
        seed=int(seed),
    )


def predict_forest(model: ForestModel, X: np.ndarray) -> np.ndarray:
    """Average of the member trees' predictions."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.n_features:
        raise ValueError(
            f"expected {model.n_features} features, got {X.shape[1]}"
        )
    out = np.zeros(X.shape[0])
    for tree in model.trees:
        out += tree.predict(X)
    return out / model.n_trees
