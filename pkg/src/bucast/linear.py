"""Linear estimators: naive benchmarks, OLS, direct-h AR with BIC order
selection, ridge, lasso, and the two-stage adaptive lasso.

Penalized fits run on standardized features (dummies and intercept are
never penalized or rescaled) and return coefficients mapped back to the
original scale. Penalties are selected by BIC over a descending
log-spaced grid; a selection cap, when given, walks the choice toward
larger penalties until the count of nonzero penalized coefficients
respects the cap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import _kernels
from .preprocess import DesignMatrix, InsufficientHistoryError, standardize

CD_TOL = 1e-7
CD_MAX_SWEEPS = 10_000
GRID_POINTS = 100
GRID_SPAN = 1e-4  # grid floor relative to the all-zero penalty


class RankDeficiencyError(Exception):
    """Design matrix is rank deficient; names the collinear columns."""

    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(f"collinear columns: {', '.join(self.columns)}")


def soft_threshold(z: float, gamma: float) -> float:
    """sign(z) * max(|z| - gamma, 0)."""
    if z > gamma:
        return z - gamma
    if z < -gamma:
        return z + gamma
    return 0.0


@dataclass
class LinearFit:
    """A fitted linear predictor on the original feature scale."""

    intercept: float
    beta: np.ndarray
    feature_names: list[str]
    residuals: np.ndarray
    df: float
    penalty: float = 0.0
    converged: bool = True
    note: str = ""

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.intercept + X @ self.beta

    def forecast(self, x: np.ndarray) -> float:
        return float(self.intercept + x @ self.beta)

    def nonzero_features(self) -> list[str]:
        return [n for n, b in zip(self.feature_names, self.beta) if b != 0.0]


@dataclass
class PenaltyPath:
    """Per-grid-point diagnostics of a penalized fit."""

    penalties: np.ndarray
    bic: np.ndarray
    nnz: np.ndarray
    converged: np.ndarray
    chosen: int
    betas: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if len(self.penalties) < 2:
            raise ValueError("penalty path needs at least 2 grid points")
        if not np.all(np.diff(self.penalties) < 0):
            raise ValueError("penalty grid must be strictly decreasing")


def bic_score(n: int, ssr: float, df: float) -> float:
    return n * math.log(max(ssr / n, 1e-300)) + df * math.log(n)


# ---------------------------------------------------------------------------
# Naive benchmarks
# ---------------------------------------------------------------------------


def forecast_rw(series, origin_pos: int, horizon: int = 0) -> float:
    """Latest observed value, for every horizon."""
    return float(np.asarray(series)[origin_pos])


def forecast_hist_mean(series, origin_pos: int, horizon: int = 0) -> float:
    """Mean of the expanding window up to and including the origin."""
    s = np.asarray(series, dtype=float)[: origin_pos + 1]
    if len(s) == 0:
        raise InsufficientHistoryError("historical mean needs >= 1 observation")
    return float(s.mean())


# ---------------------------------------------------------------------------
# OLS
# ---------------------------------------------------------------------------


def _check_rank(A: np.ndarray, names: list[str]) -> None:
    _, R, piv = scipy.linalg.qr(A, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    tol = max(A.shape) * np.finfo(float).eps * (d[0] if len(d) else 0.0)
    rank = int((d > tol).sum())
    if rank < A.shape[1]:
        raise RankDeficiencyError([names[j] for j in sorted(piv[rank:])])


def fit_ols(design: DesignMatrix) -> LinearFit:
    """Least squares with an always-included, unpenalized intercept.

    Zero-variance columns are dropped (coefficient pinned to 0); any
    remaining collinearity raises :class:`RankDeficiencyError` naming
    the offending columns.
    """
    X, y = design.X, design.y
    n, k = X.shape
    if n < k + 1:
        raise InsufficientHistoryError(f"{n} rows cannot identify {k} coefficients")
    keep = X.std(axis=0) > 0.0
    A = np.column_stack([np.ones(n), X[:, keep]])
    names = ["intercept"] + [design.feature_names[j] for j in np.nonzero(keep)[0]]
    _check_rank(A, names)
    coef, _, _, _ = np.linalg.lstsq(A, y, rcond=None)
    beta = np.zeros(k)
    beta[keep] = coef[1:]
    intercept = float(coef[0])
    resid = y - (intercept + X @ beta)
    note = "" if keep.all() else "dropped zero-variance columns"
    return LinearFit(
        intercept=intercept,
        beta=beta,
        feature_names=list(design.feature_names),
        residuals=resid,
        df=float(keep.sum() + 1),
        note=note,
    )


def fit_augmented_ar(design: DesignMatrix) -> LinearFit:
    """OLS on the own-lags + expectation + seasonal-dummies menu."""
    return fit_ols(design)


def fit_hnkpc(design: DesignMatrix) -> LinearFit:
    """OLS on the hybrid Phillips-curve menu (own lags, expectation,
    activity, exchange-rate change; no seasonal dummies)."""
    return fit_ols(design)


# ---------------------------------------------------------------------------
# Direct-h AR with BIC order selection
# ---------------------------------------------------------------------------


def _ar_lag_matrix(series: np.ndarray, horizon: int, p: int):
    """Targets and lag columns for a direct-h AR over a window array."""
    n = len(series)
    shift = max(horizon, 1)
    i_min = shift + p - 1
    if i_min >= n:
        raise InsufficientHistoryError("window too short for requested lags")
    idx = np.arange(i_min, n)
    y = series[idx]
    X = np.column_stack([series[idx - shift - (l - 1)] for l in range(1, p + 1)])
    return y, X


def fit_ar_bic(series, horizon: int, max_p: int) -> tuple[LinearFit, int]:
    """Direct-h AR(p), p chosen by BIC over a common estimation sample.

    All candidate orders are fit on the rows admissible at max_p, so
    their BICs are comparable; k = p + 1 parameters.
    """
    s = np.asarray(series, dtype=float)
    y, X = _ar_lag_matrix(s, horizon, max_p)
    n = len(y)
    if n < max_p + 2:
        raise InsufficientHistoryError("too few rows for AR order selection")
    best = None
    for p in range(1, max_p + 1):
        A = np.column_stack([np.ones(n), X[:, :p]])
        coef, _, _, _ = np.linalg.lstsq(A, y, rcond=None)
        ssr = float(((y - A @ coef) ** 2).sum())
        score = bic_score(n, ssr, p + 1)
        if best is None or score < best[0]:
            best = (score, p, coef, ssr)
    _, p, coef, _ = best
    beta = coef[1:]
    names = [f"lag:own:{l}" for l in range(1, p + 1)]
    resid = y - (coef[0] + X[:, :p] @ beta)
    fit = LinearFit(
        intercept=float(coef[0]),
        beta=beta,
        feature_names=names,
        residuals=resid,
        df=float(p + 1),
    )
    return fit, p


def forecast_ar_bic(series, horizon: int, max_p: int) -> float:
    """Fit :func:`fit_ar_bic` on the window and forecast origin + h."""
    s = np.asarray(series, dtype=float)
    fit, p = fit_ar_bic(s, horizon, max_p)
    n = len(s)
    shift = max(horizon, 1)
    x = np.array([s[(n - 1) + horizon - shift - (l - 1)] for l in range(1, p + 1)])
    return fit.forecast(x)


# ---------------------------------------------------------------------------
# Ridge
# ---------------------------------------------------------------------------


def default_ridge_grid() -> np.ndarray:
    return np.logspace(8, -8, GRID_POINTS)


def fit_ridge(design: DesignMatrix, penalty_rule="bic") -> tuple[LinearFit, PenaltyPath | None]:
    """Ridge on standardized features with unpenalized intercept/dummies.

    Minimizes (1/n) SSR + lambda * sum(beta_j^2); lambda comes from
    ``penalty_rule``: "bic" (default grid), an explicit descending grid,
    or a fixed float. BIC uses df = trace of the smoother matrix.
    """
    ds, means, scales, zerovar = standardize(design)
    X, y = ds.X, ds.y
    n, k = X.shape
    unpen = ds.is_dummy & ~zerovar
    pen = ~ds.is_dummy & ~zerovar
    D = np.column_stack([np.ones(n)] + ([X[:, unpen]] if unpen.any() else []))
    q = D.shape[1]
    Xp = X[:, pen]

    # project out the unpenalized block, ridge the remainder (exact for
    # the partially penalized objective)
    Qd, Rd = np.linalg.qr(D)
    y_t = y - Qd @ (Qd.T @ y)
    Xp_t = Xp - Qd @ (Qd.T @ Xp)
    if Xp.shape[1] > 0:
        U, sv, Vt = np.linalg.svd(Xp_t, full_matrices=False)
        a = U.T @ y_t
    else:
        sv = np.zeros(0)
        a = np.zeros(0)
    yss = float(y_t @ y_t)

    if isinstance(penalty_rule, str) and penalty_rule == "bic":
        grid = default_ridge_grid()
    elif isinstance(penalty_rule, (int, float)):
        grid = np.array([float(penalty_rule)])
    else:
        grid = np.asarray(penalty_rule, dtype=float)

    d = sv[None, :] ** 2 / (sv[None, :] ** 2 + n * grid[:, None])  # (G, r)
    ssr = yss - ((2 * d - d * d) * a[None, :] ** 2).sum(axis=1)
    df = q + d.sum(axis=1)
    bic = np.array([bic_score(n, s, f) for s, f in zip(ssr, df)])
    chosen = int(np.argmin(bic)) if len(grid) > 1 else 0
    lam = float(grid[chosen])

    if Xp.shape[1] > 0:
        shrink = sv / (sv**2 + n * lam)
        beta_p = Vt.T @ (shrink * a)
    else:
        beta_p = np.zeros(0)
    gamma = scipy.linalg.solve_triangular(
        Rd, Qd.T @ (y - Xp @ beta_p), lower=False
    )

    beta_std = np.zeros(k)
    beta_std[pen] = beta_p
    if unpen.any():
        beta_std[unpen] = gamma[1:]
    intercept = float(gamma[0]) - float((beta_std * means / scales).sum())
    beta = beta_std / scales
    resid = design.y - (intercept + design.X @ beta)
    fit = LinearFit(
        intercept=intercept,
        beta=beta,
        feature_names=list(design.feature_names),
        residuals=resid,
        df=float(df[chosen]),
        penalty=lam,
    )
    path = None
    if len(grid) >= 2:
        path = PenaltyPath(
            penalties=grid,
            bic=bic,
            nnz=np.full(len(grid), int(pen.sum())),
            converged=np.ones(len(grid), bool),
            chosen=chosen,
        )
    return fit, path


# ---------------------------------------------------------------------------
# Lasso / adaptive lasso
# ---------------------------------------------------------------------------


def _lasso_grid(ximax: float) -> np.ndarray:
    return ximax * np.logspace(0, np.log10(GRID_SPAN), GRID_POINTS)


class _PenalizedProblem:
    """Standardized, centered Gram form of a design, reused across the
    two adaptive-lasso stages."""

    def __init__(self, design: DesignMatrix):
        ds, means, scales, zerovar = standardize(design)
        X, y = ds.X, ds.y
        n, k = X.shape
        if n < 2:
            raise InsufficientHistoryError("penalized fit needs >= 2 rows")
        self.design = design
        self.n, self.k = n, k
        self.means, self.scales = means, scales
        self.pen_mask = ds.penalize & ~zerovar
        if not self.pen_mask.any():
            raise ValueError("design has no penalizable columns")
        self.col_mean = X.mean(axis=0)
        Xc = X - self.col_mean
        self.ybar = float(y.mean())
        yc = y - self.ybar
        self.Q = Xc.T @ Xc / n
        self.c = Xc.T @ yc / n
        self.yss = float(yc @ yc / n)
        unpen = ~self.pen_mask & ~zerovar
        self.g0 = self.c.copy()
        if unpen.any():
            bu, _, _, _ = np.linalg.lstsq(Xc[:, unpen], yc, rcond=None)
            self.g0 = self.c - self.Q[:, unpen] @ bu

    def solve(self, penalty_rule, selection_cap, penalty_weights):
        n, k = self.n, self.k
        pen_mask = self.pen_mask
        w = np.zeros(k)
        if penalty_weights is None:
            w[pen_mask] = 1.0
        else:
            w[pen_mask] = np.asarray(penalty_weights, dtype=float)[pen_mask]
        ximax = float(np.max(np.abs(self.g0[pen_mask]) / w[pen_mask], initial=0.0))
        ximax = max(ximax, 1e-12)

        if isinstance(penalty_rule, (int, float)) and not isinstance(penalty_rule, bool):
            grid = np.array([float(penalty_rule)])
        elif isinstance(penalty_rule, str) and penalty_rule == "bic":
            grid = _lasso_grid(ximax)
        else:
            grid = np.asarray(penalty_rule, dtype=float)

        nnz_stop = 0 if selection_cap is None else 2 * int(selection_cap) + 10
        betas, _, conv, npts = _kernels.cd_path(
            self.Q, self.c, grid, w, pen_mask, CD_TOL, CD_MAX_SWEEPS, nnz_stop
        )
        betas = betas[:npts]
        grid_c = grid[:npts]
        conv = conv[:npts]

        ssr_n = self.yss - 2.0 * betas @ self.c + ((betas @ self.Q) * betas).sum(axis=1)
        nnz_pen = (betas[:, pen_mask] != 0.0).sum(axis=1)
        df = (betas != 0.0).sum(axis=1) + 1
        bic = np.array(
            [bic_score(n, max(s, 0.0) * n, f) for s, f in zip(ssr_n, df)]
        )
        chosen = int(np.argmin(bic)) if len(grid_c) > 1 else 0
        if selection_cap is not None:
            while chosen > 0 and nnz_pen[chosen] > selection_cap:
                chosen -= 1

        beta_std = betas[chosen]
        design = self.design
        intercept_std = self.ybar - float(beta_std @ self.col_mean)
        intercept = intercept_std - float((beta_std * self.means / self.scales).sum())
        beta = beta_std / self.scales
        resid = design.y - (intercept + design.X @ beta)
        fit = LinearFit(
            intercept=intercept,
            beta=beta,
            feature_names=list(design.feature_names),
            residuals=resid,
            df=float(df[chosen]),
            penalty=float(grid_c[chosen]),
            converged=bool(conv[chosen]),
            note="" if conv[chosen] else "coordinate descent hit the sweep limit",
        )
        path = None
        if len(grid_c) >= 2:
            path = PenaltyPath(
                penalties=grid_c,
                bic=bic,
                nnz=nnz_pen,
                converged=conv,
                chosen=chosen,
                betas=betas,
            )
        return fit, path, beta_std


def fit_lasso(
    design: DesignMatrix,
    penalty_rule="bic",
    selection_cap: int | None = None,
    penalty_weights: np.ndarray | None = None,
) -> tuple[LinearFit, PenaltyPath | None]:
    """Cyclic coordinate-descent lasso on standardized features.

    Coordinate updates soft-threshold at xi * w_j, so on orthonormal
    columns the solution is soft(<x_j, y>/n, xi) / (x_j'x_j/n); the
    mean-squared-error penalty normalization is a fixed factor folded
    into the grid. Converges when the largest coefficient update in a
    sweep drops below 1e-7 (sweep limit 10,000; hitting it flags the
    fit instead of failing). With ``selection_cap``, the BIC choice
    walks to larger penalties until at most that many penalized
    coefficients are nonzero.
    """
    fit, path, _ = _PenalizedProblem(design).solve(
        penalty_rule, selection_cap, penalty_weights
    )
    return fit, path


def fit_adalasso(
    design: DesignMatrix,
    penalty_rule="bic",
    selection_cap: int | None = None,
    zeta_override: np.ndarray | None = None,
) -> tuple[LinearFit, PenaltyPath | None]:
    """Two-stage adaptive lasso.

    Stage 1 is a plain BIC lasso; stage 2 reweights each penalized
    coordinate by zeta_j = 1 / (|beta1_j| + 1/sqrt(T)) with T the row
    count and beta1 on the standardized scale, so variables the first
    stage dropped keep a chance of entering. ``zeta_override`` replaces
    the computed weights (testing hook).
    """
    problem = _PenalizedProblem(design)
    if zeta_override is None:
        _, _, beta1_std = problem.solve(penalty_rule, selection_cap, None)
        T = design.n
        zeta = 1.0 / (np.abs(beta1_std) + 1.0 / math.sqrt(T))
    else:
        zeta = np.asarray(zeta_override, dtype=float)
    fit, path, _ = problem.solve(penalty_rule, selection_cap, zeta)
    return fit, path
