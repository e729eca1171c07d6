"""Stationarity transforms, design-matrix construction, standardization.

Alignment convention for a direct forecast of target month tau at
horizon h (both for estimation rows and for the prediction row):

* inflation lags (own and cross-component) are dated
  ``tau - max(h, 1) - (l - 1)``, l = 1..p. For h >= 1 the first lag
  re-anchors to the forecast origin; for h = 0 it is the latest release
  before the target month, which is the target itself and hence barred.
* predictor lags enter on the observed clock: lag l holds the value a
  forecaster could read at month ``tau - h - (l - 1)``, i.e. the value
  for reference month ``tau - h - availability_lag - (l - 1)`` after the
  stationarity transform.
* the expectation column holds the survey value for tau formed at
  ``tau - h``.
* 11 seasonal dummies mark February..December of tau (January omitted).

Every feature for row tau is therefore observable at tau - h, so no
estimation row ever looks past the forecast origin.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dates import MONTH_NAMES
from .panel import AGGREGATE_COMPONENT, AGGREGATE_LEVEL, DisaggregationScheme, SeriesPanel

OWN_LAGS_ONLY = "own_lags_only"
OWN_PLUS_CONTROLS = "own_plus_controls"
FULL_INFORMATION = "full_information"

DUMMY_NAMES = tuple(f"dummy:{MONTH_NAMES[m - 1]}" for m in range(2, 13))


class InsufficientHistoryError(Exception):
    """Not enough observations to build the requested design."""


class ZeroBaseError(Exception):
    """Percentage change is undefined on a zero base value."""


def apply_transform(series, code: str) -> np.ndarray:
    """Apply a stationarity transform; drops the first observation.

    ``pct_change`` returns ``100 * (x_t / x_{t-1} - 1)``; ``first_diff``
    returns ``x_t - x_{t-1}``; ``none`` returns the input unchanged
    (full length).
    """
    x = np.asarray(series, dtype=float)
    if code == "none":
        return x
    if code == "pct_change":
        base = x[:-1]
        if np.any(base == 0.0):
            raise ZeroBaseError("pct_change base value is zero")
        return 100.0 * (x[1:] / base - 1.0)
    if code == "first_diff":
        return np.diff(x)
    raise ValueError(f"unknown transform code: {code!r}")


def transform_aligned(series, code: str) -> np.ndarray:
    """Like :func:`apply_transform` but keeps the date alignment.

    The dropped first observation becomes NaN so the result lines up
    with the original date index.
    """
    x = np.asarray(series, dtype=float)
    if code == "none":
        return x.copy()
    out = np.full(len(x), np.nan)
    out[1:] = apply_transform(x, code)
    return out


@dataclass
class ObservedPredictors:
    """Predictor panel on the observed clock.

    ``matrix[i, j]`` is the transformed value of predictor ``ids[j]``
    readable at month ``dates[i]`` (reference month shifted back by the
    availability lag); NaN where history or publication is missing.
    ``first_complete`` is the first row where every column is finite.
    """

    ids: tuple[str, ...]
    matrix: np.ndarray
    first_complete: int


def observed_predictors(panel: SeriesPanel) -> ObservedPredictors:
    ids = tuple(panel.predictors)
    n = panel.n
    mat = np.full((n, len(ids)), np.nan)
    for j, pid in enumerate(ids):
        pred = panel.predictors[pid]
        vals = transform_aligned(pred.values, pred.transform)
        a = pred.availability_lag
        if a == 0:
            mat[:, j] = vals
        else:
            mat[a:, j] = vals[:-a]
    finite = np.all(np.isfinite(mat), axis=1)
    first = int(np.argmax(finite)) if finite.any() else n
    return ObservedPredictors(ids=ids, matrix=mat, first_complete=first)


@dataclass
class DesignMatrix:
    """Estimation design plus the matching prediction row.

    ``X[i]`` are the features for target month ``targets[i]``; ``y[i]``
    is the realized value. ``predict_x`` holds the same features
    evaluated for target ``origin + horizon``.
    """

    targets: np.ndarray
    y: np.ndarray
    X: np.ndarray
    feature_names: list[str]
    base_names: list[str]
    is_dummy: np.ndarray
    penalize: np.ndarray
    horizon: int
    origin: int
    predict_x: np.ndarray

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def width(self) -> int:
        return self.X.shape[1]

    def with_columns(self, names, bases, X_new, x_pred_new, penalize=True) -> "DesignMatrix":
        """Return a copy with extra (non-dummy) columns appended."""
        k = X_new.shape[1]
        return replace(
            self,
            X=np.hstack([self.X, X_new]),
            predict_x=np.concatenate([self.predict_x, x_pred_new]),
            feature_names=self.feature_names + list(names),
            base_names=self.base_names + list(bases),
            is_dummy=np.concatenate([self.is_dummy, np.zeros(k, bool)]),
            penalize=np.concatenate([self.penalize, np.full(k, bool(penalize))]),
        )


def lagged_column(values: np.ndarray, start: int, months: np.ndarray) -> np.ndarray:
    """Values of a date-aligned array at the given month indexes."""
    pos = months - start
    if pos.min() < 0 or pos.max() >= len(values):
        raise InsufficientHistoryError("lag reaches outside the panel")
    return values[pos]


def seasonal_dummies(months: np.ndarray) -> np.ndarray:
    """11 February..December indicators; January is the omitted month."""
    cal = (months - 1) % 12 + 1
    out = np.zeros((len(months), 11))
    for m in range(2, 13):
        out[:, m - 2] = cal == m
    return out


def build_design(
    panel: SeriesPanel,
    scheme: DisaggregationScheme,
    component: str,
    horizon: int,
    window_end: int,
    feature_menu: str = FULL_INFORMATION,
    lag_depth: int = 3,
    obs: ObservedPredictors | None = None,
    include_expectation: bool = True,
) -> DesignMatrix:
    """Build the expanding-window design for one component and horizon.

    Menus: ``own_lags_only`` (p own lags), ``own_plus_controls`` (own and
    cross-component lags, expectation, seasonal dummies), and
    ``full_information`` (adds p observed-clock lags of every predictor).
    """
    if feature_menu not in (OWN_LAGS_ONLY, OWN_PLUS_CONTROLS, FULL_INFORMATION):
        raise ValueError(f"unknown feature menu: {feature_menu!r}")
    h = int(horizon)
    p = int(lag_depth)
    if p < 1:
        raise ValueError("lag_depth must be >= 1")
    T = int(window_end)
    panel.pos(T)
    start = panel.start
    shift = max(h, 1)

    use_controls = feature_menu != OWN_LAGS_ONLY
    use_pred = feature_menu == FULL_INFORMATION
    use_exp = use_controls and include_expectation and panel.expectation is not None

    s_min = start + shift + (p - 1)
    if use_exp:
        s_min = max(s_min, start + h)
    if use_pred:
        if obs is None:
            obs = observed_predictors(panel)
        if obs.first_complete >= panel.n:
            raise InsufficientHistoryError("no complete predictor rows")
        s_min = max(s_min, start + obs.first_complete + h + (p - 1))
    if s_min > T:
        raise InsufficientHistoryError(
            f"window ending {T} leaves no estimation rows at horizon {h}"
        )
    targets = np.arange(s_min, T + 1, dtype=np.int64)
    pred_target = T + h
    n_rows = len(targets)

    if scheme.level_id == AGGREGATE_LEVEL:
        comp_order = [AGGREGATE_COMPONENT]
    else:
        ids = list(scheme.component_ids)
        if component not in ids:
            raise KeyError(f"component {component!r} not in level {scheme.level_id!r}")
        comp_order = [component] + [c for c in ids if c != component]

    cols: list[np.ndarray] = []
    pred_vals: list[float] = []
    names: list[str] = []
    bases: list[str] = []
    dummy_flags: list[bool] = []
    penal_flags: list[bool] = []

    def add(col, pv, name, base, dummy=False, pen=True):
        cols.append(col)
        pred_vals.append(pv)
        names.append(name)
        bases.append(base)
        dummy_flags.append(dummy)
        penal_flags.append(pen)

    for comp in comp_order if use_controls else comp_order[:1]:
        series = panel.series(scheme.level_id, comp)
        for lag in range(1, p + 1):
            months = targets - shift - (lag - 1)
            col = lagged_column(series, start, months)
            pv = float(series[pred_target - shift - (lag - 1) - start])
            add(col, pv, f"lag:{comp}:{lag}", comp)

    if use_exp:
        ecol = np.array(
            [panel.expectation_at(int(s), int(s) - h) for s in targets]
        )
        epred = panel.expectation_at(pred_target, T)
        if not (np.all(np.isfinite(ecol)) and np.isfinite(epred)):
            raise InsufficientHistoryError("expectation missing inside the window")
        add(ecol, epred, "expec", "expec")

    if use_controls:
        D = seasonal_dummies(targets)
        Dp = seasonal_dummies(np.array([pred_target]))[0]
        for k, name in enumerate(DUMMY_NAMES):
            add(D[:, k], float(Dp[k]), name, name, dummy=True, pen=False)

    if use_pred:
        P = obs.matrix
        for lag in range(1, p + 1):
            rows = targets - h - (lag - 1) - start
            block = P[rows]
            prow = P[pred_target - h - (lag - 1) - start]
            for j, pid in enumerate(obs.ids):
                add(block[:, j], float(prow[j]), f"x:{pid}:{lag}", pid)

    X = np.column_stack(cols) if cols else np.empty((n_rows, 0))
    y = lagged_column(panel.series(scheme.level_id, comp_order[0]), start, targets)
    px = np.array(pred_vals)
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y)) and np.all(np.isfinite(px))):
        raise InsufficientHistoryError("design contains non-finite values")
    return DesignMatrix(
        targets=targets,
        y=y.astype(float),
        X=X,
        feature_names=names,
        base_names=bases,
        is_dummy=np.array(dummy_flags, bool),
        penalize=np.array(penal_flags, bool),
        horizon=h,
        origin=T,
        predict_x=px,
    )


def trim_rows(design: DesignMatrix, min_target: int) -> DesignMatrix:
    """Drop estimation rows whose target month precedes ``min_target``."""
    if design.targets[0] >= min_target:
        return design
    keep = design.targets >= min_target
    if not keep.any():
        raise InsufficientHistoryError("no estimation rows left after trimming")
    return replace(
        design, targets=design.targets[keep], y=design.y[keep], X=design.X[keep]
    )


def lagged_month_columns(
    values: np.ndarray,
    first_month: int,
    design: DesignMatrix,
    p: int,
    name_fmt: str,
    base_fmt: str,
) -> DesignMatrix:
    """Append p observed-clock lags of a month-indexed column to a design.

    ``values`` must be readable at its own month (factor scores and
    idiosyncratic components extracted from observed-clock predictors
    are). Lag l for target tau picks ``values[tau - h - (l - 1)]``.
    Estimation rows that reach before the column's first month are
    dropped.
    """
    h = design.horizon
    design = trim_rows(design, first_month + h + (p - 1))
    cols = []
    preds = []
    names = []
    bases = []
    for lag in range(1, p + 1):
        months = design.targets - h - (lag - 1)
        pos = months - first_month
        if pos.max() >= len(values):
            raise InsufficientHistoryError("lagged column ahead of its window")
        cols.append(values[pos])
        ppos = design.origin - (lag - 1) - first_month
        if ppos < 0 or ppos >= len(values):
            raise InsufficientHistoryError("prediction lag outside window")
        preds.append(values[ppos])
        names.append(name_fmt.format(lag=lag))
        bases.append(base_fmt)
    return design.with_columns(names, bases, np.column_stack(cols), np.array(preds))


def lagged_month_block(
    values: np.ndarray,
    first_month: int,
    design: DesignMatrix,
    p: int,
    ids: tuple[str, ...],
    name_fmt: str,
    base_fmt: str,
) -> DesignMatrix:
    """Vectorized :func:`lagged_month_columns` for a whole month-indexed
    matrix: appends p lags of every column of ``values`` in one pass.
    Column names come from ``name_fmt.format(id=..., lag=...)``.
    """
    h = design.horizon
    design = trim_rows(design, first_month + h + (p - 1))
    J = values.shape[1]
    blocks = []
    preds = []
    names = []
    bases = []
    for lag in range(1, p + 1):
        pos = design.targets - h - (lag - 1) - first_month
        if pos.max() >= len(values):
            raise InsufficientHistoryError("lagged block ahead of its window")
        blocks.append(values[pos])
        ppos = design.origin - (lag - 1) - first_month
        if ppos < 0 or ppos >= len(values):
            raise InsufficientHistoryError("prediction lag outside window")
        preds.append(values[ppos])
        names.extend(name_fmt.format(id=i, lag=lag) for i in ids)
        bases.extend(base_fmt.format(id=i) for i in ids)
    X_new = np.hstack(blocks) if J else np.empty((design.n, 0))
    return design.with_columns(names, bases, X_new, np.concatenate(preds))


def standardize(design: DesignMatrix):
    """Scale non-dummy columns to mean 0, sd 1 (ddof=1) over the rows.

    Zero-variance columns are flagged and zeroed out; dummy columns are
    untouched. The prediction row is mapped with the same means/scales.
    Returns ``(standardized design, means, scales, zero_variance_mask)``.
    """
    X = design.X
    n, k = X.shape
    if n < 2:
        raise InsufficientHistoryError("standardize needs at least 2 rows")
    means = np.zeros(k)
    scales = np.ones(k)
    zerovar = np.zeros(k, bool)
    Xs = X.copy()
    px = design.predict_x.copy()
    active = ~design.is_dummy
    mu = X[:, active].mean(axis=0)
    sd = X[:, active].std(axis=0, ddof=1)
    zv = sd <= 1e-12 * (1.0 + np.abs(mu))  # numerically constant columns
    idx = np.nonzero(active)[0]
    means[idx] = mu
    scales[idx] = np.where(zv, 1.0, sd)
    zerovar[idx] = zv
    Xs[:, idx] = (X[:, idx] - means[idx]) / scales[idx]
    Xs[:, idx[zv]] = 0.0
    px[idx] = (px[idx] - means[idx]) / scales[idx]
    px[idx[zv]] = 0.0
    out = replace(design, X=Xs, predict_x=px)
    return out, means, scales, zerovar
