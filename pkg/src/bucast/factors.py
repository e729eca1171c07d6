"""PCA factor extraction, factor-count selection, t-stat screening,
factor-augmented regressions, target factors, and the factor-plus-
idiosyncratic regression.

Factors are extracted from the standardized observed-clock predictor
window only (never from inflation lags, the expectation, or dummies),
re-estimated for every expanding window. Factor scores have unit
sample variance (f'f/n = I) and each factor's sign is fixed so its
largest-magnitude loading is positive.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .linear import LinearFit, fit_adalasso
from .preprocess import (
    DesignMatrix,
    InsufficientHistoryError,
    ObservedPredictors,
    lagged_month_block,
    lagged_month_columns,
    trim_rows,
)

log = logging.getLogger(__name__)


@dataclass
class FactorDecomposition:
    """Result of a K-factor PCA fit: X = factors @ loadings.T + resid."""

    factors: np.ndarray
    loadings: np.ndarray
    resid: np.ndarray
    k: int
    explained_shares: np.ndarray


def extract_factors(X: np.ndarray, k: int) -> FactorDecomposition:
    """First-K principal-component factors of a standardized matrix.

    Factor scores are scaled to unit sample variance; loadings are the
    least-squares projection of X on the scores, so the reconstruction
    ``factors @ loadings.T + resid`` is exact and resid is orthogonal
    to every factor.
    """
    X = np.asarray(X, dtype=float)
    n, J = X.shape
    if k < 1 or k > min(n, J):
        raise ValueError(f"k={k} outside 1..min(n, J)={min(n, J)}")
    U, sv, Vt = np.linalg.svd(X, full_matrices=False)
    f = math.sqrt(n) * U[:, :k]
    lam = Vt[:k].T * (sv[:k] / math.sqrt(n))
    for j in range(k):
        i = int(np.argmax(np.abs(lam[:, j])))
        if lam[i, j] < 0:
            lam[:, j] = -lam[:, j]
            f[:, j] = -f[:, j]
    resid = X - f @ lam.T
    total = float((sv**2).sum())
    shares = (sv[:k] ** 2) / total if total > 0 else np.zeros(k)
    return FactorDecomposition(factors=f, loadings=lam, resid=resid, k=k,
                               explained_shares=shares)


def select_k_icp2(X: np.ndarray, k_max: int = 10) -> int:
    """Number of factors minimizing ln V(k) + k ((n+J)/(nJ)) ln min(n,J).

    V(k) is the mean squared idiosyncratic residual after removing k
    principal components; the grid starts at 1.
    """
    X = np.asarray(X, dtype=float)
    n, J = X.shape
    if k_max < 1 or k_max > min(n, J):
        raise ValueError(f"k_max={k_max} outside 1..min(n, J)={min(n, J)}")
    sv = np.linalg.svd(X, compute_uv=False)
    total = float((X * X).sum())
    penalty = (n + J) / (n * J) * math.log(min(n, J))
    best_k, best_ic = 1, math.inf
    cum = 0.0
    for k in range(1, k_max + 1):
        cum += float(sv[k - 1] ** 2)
        v = max(total - cum, 1e-300) / (n * J)
        ic = math.log(v) + k * penalty
        if ic < best_ic:
            best_ic, best_k = ic, k
    return best_k


def standardized_window(
    obs: ObservedPredictors, panel_start: int, window_end: int
) -> tuple[np.ndarray, int]:
    """Standardized observed-clock predictor rows up to the window end.

    Returns (matrix, first_month). Columns constant inside the window
    are zeroed.
    """
    lo = obs.first_complete
    hi = window_end - panel_start + 1
    if hi - lo < 2:
        raise InsufficientHistoryError("predictor window too short for factors")
    W = obs.matrix[lo:hi]
    mu = W.mean(axis=0)
    sd = W.std(axis=0, ddof=1)
    Z = np.where(sd > 0, (W - mu) / np.where(sd > 0, sd, 1.0), 0.0)
    return Z, panel_start + lo


def preselect_by_tstat(
    y: np.ndarray,
    controls: np.ndarray | None,
    candidates: np.ndarray,
    alpha: float = 0.05,
    mode: str = "threshold",
    top: int | None = None,
) -> tuple[list[int], np.ndarray]:
    """Screen candidate columns by the t-statistic of their coefficient
    in an OLS of y on [intercept, controls, candidate].

    ``threshold`` mode keeps |t| above the two-sided normal critical
    value at ``alpha``; ``rank`` mode keeps the ``top`` largest |t|.
    Candidates collinear with the controls are skipped (t set to NaN)
    with a log warning. Returns (selected indices, t-statistics).
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    C = np.asarray(candidates, dtype=float)
    if controls is None or controls.size == 0:
        W = np.ones((n, 1))
    else:
        W = np.column_stack([np.ones(n), controls])
    q = W.shape[1]
    if n <= q + 1:
        raise InsufficientHistoryError("too few rows for t-stat screening")
    Qw, _ = np.linalg.qr(W)
    y_t = y - Qw @ (Qw.T @ y)
    C_t = C - Qw @ (Qw.T @ C)
    xx = (C_t * C_t).sum(axis=0)
    xy = C_t.T @ y_t
    yy = float(y_t @ y_t)
    dof = n - q - 1
    tol = n * np.finfo(float).eps * max(1.0, float(np.max(np.abs(C), initial=0.0)) ** 2)
    tstats = np.full(C.shape[1], np.nan)
    ok = xx > tol
    if (~ok).any():
        log.warning("skipped %d rank-deficient candidate(s)", int((~ok).sum()))
    bhat = np.where(ok, xy / np.where(ok, xx, 1.0), 0.0)
    rss = np.maximum(yy - bhat * xy, 0.0)
    sigma2 = rss / dof
    with np.errstate(divide="ignore", invalid="ignore"):
        t = bhat / np.sqrt(sigma2 / np.where(ok, xx, 1.0))
    tstats[ok] = t[ok]
    if mode == "threshold":
        crit = norm.ppf(1.0 - alpha / 2.0)
        sel = [int(j) for j in np.nonzero(ok & (np.abs(tstats) > crit))[0]]
    elif mode == "rank":
        if top is None:
            raise ValueError("rank mode needs top")
        order = np.argsort(-np.abs(np.where(ok, tstats, -np.inf)), kind="stable")
        sel = [int(j) for j in order[: min(top, int(ok.sum()))] if ok[j]]
    else:
        raise ValueError(f"unknown mode: {mode!r}")
    return sel, tstats


def fit_factor_augmented(
    controls: DesignMatrix,
    factor_values: np.ndarray,
    first_month: int,
    p: int,
    selection_cap: int | None = None,
    name_prefix: str = "factor",
) -> LinearFit:
    """Adaptive lasso on controls plus p observed-clock lags of each factor."""
    design = controls
    F = np.asarray(factor_values, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    for k in range(F.shape[1]):
        design = lagged_month_columns(
            F[:, k], first_month, design, p,
            name_fmt=f"{name_prefix}:{k + 1}:{{lag}}",
            base_fmt=f"{name_prefix}:{k + 1}",
        )
    fit, _ = fit_adalasso(design, selection_cap=selection_cap)
    return fit


def fit_factor_model(
    controls: DesignMatrix,
    window: np.ndarray,
    first_month: int,
    p: int = 3,
    k_max: int = 10,
    selection_cap: int | None = None,
    k_override: int | None = None,
) -> tuple[LinearFit, int]:
    """Factor-augmented regression: IC-selected K factors, adaLASSO fit."""
    k = k_override if k_override is not None else select_k_icp2(window, k_max)
    if k == 0:
        fit, _ = fit_adalasso(controls, selection_cap=selection_cap)
        return fit, 0
    dec = extract_factors(window, k)
    fit = fit_factor_augmented(controls, dec.factors, first_month, p, selection_cap)
    return fit, k


def fit_target_factor(
    controls: DesignMatrix,
    window: np.ndarray,
    first_month: int,
    alpha: float = 0.05,
    p: int = 3,
    selection_cap: int | None = None,
) -> tuple[LinearFit, dict]:
    """Screened single-factor model.

    Each predictor is tested against the target on top of the controls;
    survivors at level ``alpha`` feed a one-factor extraction whose lags
    augment the controls. With no survivor the fit falls back to the
    controls alone and is flagged.
    """
    h = controls.horizon
    controls = trim_rows(controls, first_month + h + (p - 1))
    rows = controls.targets - h - first_month
    if rows.max() >= window.shape[0]:
        raise InsufficientHistoryError("screening rows ahead of factor window")
    cand = window[rows]
    sel, _ = preselect_by_tstat(controls.y, controls.X, cand, alpha, "threshold")
    if not sel:
        fit, _ = fit_adalasso(controls, selection_cap=selection_cap)
        fit.note = "target-factor fallback: empty selection"
        return fit, {"selected": [], "fallback": True, "design": controls}
    dec = extract_factors(window[:, sel], 1)
    design = lagged_month_columns(
        dec.factors[:, 0], first_month, controls, p,
        name_fmt="factor:1:{lag}", base_fmt="factor:1",
    )
    fit, _ = fit_adalasso(design, selection_cap=selection_cap)
    return fit, {"selected": sel, "fallback": False, "design": design}


def fit_farmpredict(
    controls: DesignMatrix,
    window: np.ndarray,
    first_month: int,
    predictor_ids: tuple[str, ...],
    p: int = 3,
    k_max: int = 10,
    selection_cap: int | None = None,
    k_override: int | None = None,
) -> tuple[LinearFit, int]:
    """Joint regression on factors and idiosyncratic leftovers.

    Removes the IC-selected common factors from the predictor window,
    then fits adaLASSO on controls + p lags of every factor + p lags of
    every idiosyncratic residual series, all in one stage.
    """
    k = k_override if k_override is not None else select_k_icp2(window, k_max)
    design = controls
    if k > 0:
        dec = extract_factors(window, k)
        design = lagged_month_block(
            dec.factors, first_month, design, p,
            tuple(str(kk + 1) for kk in range(k)),
            name_fmt="factor:{id}:{lag}", base_fmt="factor:{id}",
        )
        resid = dec.resid
    else:
        resid = window
    design = lagged_month_block(
        resid, first_month, design, p, tuple(predictor_ids),
        name_fmt="u:{id}:{lag}", base_fmt="u:{id}",
    )
    fit, _ = fit_adalasso(design, selection_cap=selection_cap)
    return fit, k
