"""Expanding-window direct-forecast orchestration.

For every (origin, horizon, level, component, model) cell the runner
builds the menu-appropriate design from data observable at the origin,
fits, and stores the point forecast for the target month origin + h.
Fit failures are recorded per cell and the run continues. After the
grid completes, component forecasts are rolled up bottom-up with the
last weights published by each origin, per-level combination forecasts
are added, and (when present) the survey expectation is emitted as its
own pseudo-model.

Cells are seeded individually from the master seed and the cell
identity, so results do not depend on scheduling or worker count.
"""

from __future__ import annotations

import csv
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import ensemble, factors, linear
from .dates import format_month, parse_month
from .panel import (
    AGGREGATE_COMPONENT,
    AGGREGATE_LEVEL,
    DisaggregationScheme,
    SeriesPanel,
)
from .preprocess import (
    FULL_INFORMATION,
    OWN_PLUS_CONTROLS,
    DesignMatrix,
    ObservedPredictors,
    build_design,
    lagged_month_block,
    observed_predictors,
)

ESTIMATORS = (
    "RW", "HistMean", "AR", "AugmentedAR", "HNKPC", "Ridge", "AdaLASSO",
    "Factor", "TargetFactor", "FarmPredict", "CSR", "RandomForest",
    "Combination",
)
SELECTING_ESTIMATORS = ("AdaLASSO", "Factor", "TargetFactor", "FarmPredict")
EXPECTATION_MODEL = "Expectation"


class DuplicateRecordError(Exception):
    """A forecast for this (model, level, component, origin, horizon) exists."""


class MissingComponentError(Exception):
    """Bottom-up aggregation is missing component forecasts."""

    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__(f"missing component forecasts: {', '.join(self.missing)}")


class MissingHorizonError(Exception):
    """12-month accumulation needs forecasts for every horizon 0..11."""


@dataclass
class ModelSpec:
    """An estimator id plus its hyperparameters."""

    estimator: str
    name: str | None = None
    lag_depth: int = 3
    penalty_rule: object = "bic"
    selection_cap: object = "sqrt"      # "sqrt" = ceil(sqrt(rows)), int, or None
    factor_rule: object = "icp2"        # "icp2" or a fixed K
    k_max: int = 10
    csr_p_tilde: int = 20
    csr_p_subset: int = 4
    rf_trees: int = 500
    rf_min_leaf: int = 5
    rf_feature_fraction: float = 1.0 / 3.0
    rf_block_len: int | None = None
    preselect_alpha: float = 0.05
    hnkpc_activity: str | None = None
    hnkpc_exchange: str | None = None

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.name is None:
            self.name = self.estimator
        if self.lag_depth < 1:
            raise ValueError("lag_depth must be >= 1")
        if self.csr_p_subset > self.csr_p_tilde:
            raise ValueError("csr_p_subset must be <= csr_p_tilde")
        if not 0.0 < self.rf_feature_fraction <= 1.0:
            raise ValueError("rf_feature_fraction must be in (0, 1]")
        if self.rf_trees < 1:
            raise ValueError("rf_trees must be >= 1")

    def resolve_cap(self, n_rows: int) -> int | None:
        if self.selection_cap is None:
            return None
        if self.selection_cap == "sqrt":
            return int(math.ceil(math.sqrt(n_rows)))
        return int(self.selection_cap)


@dataclass
class ExperimentPlan:
    """What to run: origins, horizons, and per-level model lists."""

    first_origin: int
    last_origin: int
    models: object                      # list (all levels) or {level: list}
    horizons: tuple[int, ...] = tuple(range(12))
    seed: int = 0
    emit_expectation: bool = True
    subperiods: list = field(default_factory=list)

    def __post_init__(self):
        if not self.horizons:
            raise ValueError("horizon set must be nonempty")
        if self.first_origin > self.last_origin:
            raise ValueError("first_origin after last_origin")

    def models_for(self, level: str) -> list[ModelSpec]:
        if isinstance(self.models, dict):
            return list(self.models.get(level, []))
        return list(self.models)

    def origins(self) -> range:
        return range(self.first_origin, self.last_origin + 1)


class ForecastStore:
    """Append-only keyed store of point forecasts and fit metadata.

    Keys are (model, level, component, origin, horizon); writing a key
    twice raises. ``selections`` holds the base variables each
    selecting fit kept; ``flags`` and ``errors`` hold per-cell notes.
    """

    def __init__(self):
        self.records: dict[tuple, float] = {}
        self.selections: dict[tuple, tuple[str, ...]] = {}
        self.flags: dict[tuple, str] = {}
        self.errors: dict[tuple, str] = {}

    def add(self, key: tuple, value: float) -> None:
        if key in self.records:
            raise DuplicateRecordError(f"duplicate forecast key {key}")
        self.records[key] = float(value)

    def get(self, model, level, component, origin, horizon) -> float:
        return self.records[(model, level, component, origin, horizon)]

    def __len__(self) -> int:
        return len(self.records)


def cell_seed(master: int, level: str, component: str, origin: int,
              horizon: int, model: str) -> int:
    """Deterministic, order-free seed for one grid cell."""
    tag = (
        int(master) & 0xFFFFFFFF,
        zlib.crc32(level.encode()),
        zlib.crc32(component.encode()),
        int(origin),
        int(horizon),
        zlib.crc32(model.encode()),
    )
    ss = np.random.SeedSequence(tag)
    return int(ss.generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# Aggregation, combination, accumulation
# ---------------------------------------------------------------------------


def aggregate_bottom_up(
    store: ForecastStore,
    level: str,
    model: str,
    origin: int,
    horizon: int,
    scheme: DisaggregationScheme,
) -> float:
    """Weighted sum of component forecasts with last-published weights."""
    w = scheme.last_available_weights(origin)
    vals = np.empty(scheme.n_components)
    missing = []
    for j, comp in enumerate(scheme.component_ids):
        key = (model, level, comp, origin, horizon)
        if key not in store.records:
            missing.append(comp)
        else:
            vals[j] = store.records[key]
    if missing:
        raise MissingComponentError(missing)
    return float(w @ vals)


def combine_forecasts(
    store: ForecastStore,
    level: str,
    origin: int,
    horizon: int,
    expectation: float,
    model_names: list[str],
) -> tuple[float, bool]:
    """Equal-weight mean of the level's aggregated model forecasts and
    the survey expectation. Returns (value, degraded) where degraded
    marks the no-model fallback to the expectation alone."""
    vals = []
    for m in model_names:
        key = (m, level, AGGREGATE_COMPONENT, origin, horizon)
        if key in store.records:
            vals.append(store.records[key])
    degraded = not vals
    return (sum(vals) + expectation) / (len(vals) + 1), degraded


def accumulate_values(monthly, compound: bool = True) -> float:
    """Accumulate 12 monthly percentage changes into one 12-month rate."""
    v = np.asarray(monthly, dtype=float)
    if v.shape != (12,):
        raise MissingHorizonError(f"need 12 monthly values, got {v.shape}")
    if compound:
        return float(100.0 * (np.prod(1.0 + v / 100.0) - 1.0))
    return float(v.sum())


def accumulate_12m(
    store: ForecastStore, model: str, level: str, origin: int,
    component: str = AGGREGATE_COMPONENT, compound: bool = True,
) -> float:
    """12-month accumulated forecast from the horizons 0..11 at one origin."""
    vals = []
    missing = []
    for h in range(12):
        key = (model, level, component, origin, h)
        if key in store.records:
            vals.append(store.records[key])
        else:
            missing.append(h)
    if missing:
        raise MissingHorizonError(f"missing horizons {missing} at origin {origin}")
    return accumulate_values(vals, compound=compound)


# ---------------------------------------------------------------------------
# Per-cell model dispatch
# ---------------------------------------------------------------------------


class _OriginContext:
    """Caches shared across one origin's cells (designs, factor window)."""

    def __init__(self, panel, schemes, origin, obs):
        self.panel = panel
        self.schemes = {s.level_id: s for s in schemes}
        self.origin = origin
        self.obs = obs
        self._designs: dict = {}
        self._window = None
        self._k_icp2: dict[int, int] = {}
        self._dec: dict[int, factors.FactorDecomposition] = {}

    def design(self, level, comp, horizon, menu, lag_depth) -> DesignMatrix:
        key = (level, comp, horizon, menu, lag_depth)
        if key not in self._designs:
            self._designs[key] = build_design(
                self.panel, self.schemes[level], comp, horizon, self.origin,
                feature_menu=menu, lag_depth=lag_depth, obs=self.obs,
            )
        return self._designs[key]

    def factor_window(self):
        if self._window is None:
            self._window = factors.standardized_window(
                self.obs, self.panel.start, self.origin
            )
        return self._window

    def k_icp2(self, k_max: int) -> int:
        if k_max not in self._k_icp2:
            Z, _ = self.factor_window()
            self._k_icp2[k_max] = factors.select_k_icp2(
                Z, min(k_max, min(Z.shape))
            )
        return self._k_icp2[k_max]

    def decomposition(self, k: int) -> factors.FactorDecomposition:
        if k not in self._dec:
            Z, _ = self.factor_window()
            self._dec[k] = factors.extract_factors(Z, k)
        return self._dec[k]


def _own_menu_subset(design: DesignMatrix, comp: str, keep_expec=True,
                     keep_dummies=True) -> DesignMatrix:
    keep = np.zeros(design.width, bool)
    for j, base in enumerate(design.base_names):
        if base == comp:
            keep[j] = True
        elif keep_expec and base == "expec":
            keep[j] = True
        elif keep_dummies and design.is_dummy[j]:
            keep[j] = True
    idx = np.nonzero(keep)[0]
    return replace(
        design,
        X=design.X[:, idx],
        predict_x=design.predict_x[idx],
        feature_names=[design.feature_names[j] for j in idx],
        base_names=[design.base_names[j] for j in idx],
        is_dummy=design.is_dummy[idx],
        penalize=design.penalize[idx],
    )


def _selection(fit: linear.LinearFit, design: DesignMatrix) -> tuple[str, ...]:
    bases = []
    for base, b in zip(design.base_names, fit.beta):
        if b != 0.0 and base not in bases:
            bases.append(base)
    return tuple(bases)


def _forecast_cell(ctx: _OriginContext, level: str, comp: str, horizon: int,
                   m: ModelSpec, seed: int):
    """Returns (forecast, selection-or-None, flag)."""
    panel = ctx.panel
    origin = ctx.origin
    est = m.estimator
    series = panel.series(level, comp)
    pos = panel.pos(origin)

    if est == "RW":
        return linear.forecast_rw(series, pos, horizon), None, ""
    if est == "HistMean":
        return linear.forecast_hist_mean(series, pos, horizon), None, ""
    if est == "AR":
        return linear.forecast_ar_bic(series[: pos + 1], horizon, m.lag_depth), None, ""

    if est == "AugmentedAR":
        base = ctx.design(level, comp, horizon, OWN_PLUS_CONTROLS, m.lag_depth)
        d = _own_menu_subset(base, comp)
        fit = linear.fit_augmented_ar(d)
        return fit.forecast(d.predict_x), None, ""

    if est == "HNKPC":
        if not (m.hnkpc_activity and m.hnkpc_exchange):
            raise ValueError("HNKPC needs hnkpc_activity and hnkpc_exchange ids")
        base = ctx.design(level, comp, horizon, OWN_PLUS_CONTROLS, m.lag_depth)
        d = _own_menu_subset(base, comp, keep_dummies=False)
        obs = ctx.obs
        cols, preds, names = [], [], []
        for pid in (m.hnkpc_activity, m.hnkpc_exchange):
            j = obs.ids.index(pid)
            rows = d.targets - horizon - panel.start
            cols.append(obs.matrix[rows, j])
            preds.append(obs.matrix[origin - panel.start, j])
            names.append(f"x:{pid}:1")
        d = d.with_columns(names, [m.hnkpc_activity, m.hnkpc_exchange],
                           np.column_stack(cols), np.array(preds))
        fit = linear.fit_hnkpc(d)
        return fit.forecast(d.predict_x), None, ""

    if est == "Ridge":
        d = ctx.design(level, comp, horizon, OWN_PLUS_CONTROLS, m.lag_depth)
        fit, _ = linear.fit_ridge(d, m.penalty_rule)
        return fit.forecast(d.predict_x), None, ""

    if est == "AdaLASSO":
        d = ctx.design(level, comp, horizon, FULL_INFORMATION, m.lag_depth)
        fit, _ = linear.fit_adalasso(d, m.penalty_rule, m.resolve_cap(d.n))
        flag = "" if fit.converged else "cd-nonconvergence"
        return fit.forecast(d.predict_x), _selection(fit, d), flag

    if est in ("Factor", "FarmPredict"):
        controls = ctx.design(level, comp, horizon, OWN_PLUS_CONTROLS, m.lag_depth)
        Z, first_month = ctx.factor_window()
        k = (ctx.k_icp2(m.k_max) if m.factor_rule == "icp2" else int(m.factor_rule))
        d = controls
        if k > 0:
            dec = ctx.decomposition(k)
            d = lagged_month_block(
                dec.factors, first_month, d, m.lag_depth,
                tuple(str(kk + 1) for kk in range(k)),
                name_fmt="factor:{id}:{lag}", base_fmt="factor:{id}",
            )
            resid = dec.resid
        else:
            resid = Z
        if est == "FarmPredict":
            d = lagged_month_block(
                resid, first_month, d, m.lag_depth, ctx.obs.ids,
                name_fmt="u:{id}:{lag}", base_fmt="u:{id}",
            )
        fit, _ = linear.fit_adalasso(d, m.penalty_rule, m.resolve_cap(d.n))
        flag = "" if fit.converged else "cd-nonconvergence"
        return fit.forecast(d.predict_x), _selection(fit, d), flag

    if est == "TargetFactor":
        controls = ctx.design(level, comp, horizon, OWN_PLUS_CONTROLS, m.lag_depth)
        Z, first_month = ctx.factor_window()
        fit, info = factors.fit_target_factor(
            controls, Z, first_month, m.preselect_alpha, m.lag_depth,
            m.resolve_cap(controls.n),
        )
        flag = "target-factor-fallback" if info["fallback"] else ""
        d = info["design"]
        return fit.forecast(d.predict_x), _selection(fit, d), flag

    if est == "CSR":
        d = ctx.design(level, comp, horizon, FULL_INFORMATION, m.lag_depth)
        ens = ensemble.fit_csr(d, m.csr_p_tilde, m.csr_p_subset)
        return ens.predict(d.predict_x), None, ""

    if est == "RandomForest":
        d = ctx.design(level, comp, horizon, FULL_INFORMATION, m.lag_depth)
        model = ensemble.fit_forest(
            d.X, d.y, n_trees=m.rf_trees, min_leaf=m.rf_min_leaf,
            feature_fraction=m.rf_feature_fraction, block_len=m.rf_block_len,
            seed=seed,
        )
        return float(ensemble.predict_forest(model, d.predict_x)[0]), None, ""

    raise ValueError(f"estimator {est!r} is not a per-cell model")


def _run_origin(panel, schemes, plan: ExperimentPlan, origin: int,
                obs: ObservedPredictors):
    """All cells of one origin; returns (records, selections, flags, errors)."""
    ctx = _OriginContext(panel, schemes, origin, obs)
    records, selections, flags, errors = [], [], [], []
    for scheme in schemes:
        level = scheme.level_id
        specs = [m for m in plan.models_for(level) if m.estimator != "Combination"]
        if not specs:
            continue
        for comp in scheme.component_ids:
            for h in plan.horizons:
                for m in specs:
                    key = (m.name, level, comp, origin, h)
                    seed = cell_seed(plan.seed, level, comp, origin, h, m.name)
                    try:
                        value, sel, flag = _forecast_cell(ctx, level, comp, h, m, seed)
                    except Exception as exc:  # per-cell fault isolation
                        errors.append((key, f"{type(exc).__name__}: {exc}"))
                        continue
                    records.append((key, value))
                    if sel is not None:
                        selections.append((key, sel))
                    if flag:
                        flags.append((key, flag))
    return records, selections, flags, errors


_WORKER_STATE: dict = {}


def _init_worker(panel, schemes, plan, obs):
    _WORKER_STATE["args"] = (panel, schemes, plan, obs)
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(1)
    except Exception:
        pass


def _worker_task(origin: int):
    panel, schemes, plan, obs = _WORKER_STATE["args"]
    return _run_origin(panel, schemes, plan, origin, obs)


def run_expanding_window(
    plan: ExperimentPlan,
    panel: SeriesPanel,
    schemes: list[DisaggregationScheme],
    workers: int = 1,
    progress=None,
) -> ForecastStore:
    """Run the full grid, then bottom-up aggregation, combinations, and
    (optionally) the expectation pseudo-model. Deterministic for a given
    plan seed regardless of worker count."""
    panel.pos(plan.first_origin)
    panel.pos(plan.last_origin)
    run_levels = {
        s.level_id for s in schemes if plan.models_for(s.level_id)
    }
    used = [s for s in schemes if s.level_id in run_levels]
    obs = observed_predictors(panel)
    origins = list(plan.origins())

    store = ForecastStore()
    if workers > 1 and len(origins) > 1:
        with ProcessPoolExecutor(
            max_workers=workers,
            initializer=_init_worker,
            initargs=(panel, used, plan, obs),
        ) as ex:
            results = list(ex.map(_worker_task, origins, chunksize=1))
    else:
        results = [_run_origin(panel, used, plan, o, obs) for o in origins]

    done = 0
    for origin, (records, selections, flags, errors) in zip(origins, results):
        for key, value in records:
            store.add(key, value)
        for key, sel in selections:
            store.selections[key] = sel
        for key, flag in flags:
            store.flags[key] = flag
        for key, msg in errors:
            store.errors[key] = msg
        done += 1
        if progress is not None:
            progress(origin, done, len(origins))

    _post_process(store, plan, panel, used)
    return store


def _post_process(store, plan, panel, schemes):
    """Bottom-up roll-up, per-level combinations, expectation records."""
    for scheme in schemes:
        level = scheme.level_id
        specs = [m for m in plan.models_for(level) if m.estimator != "Combination"]
        combos = [m for m in plan.models_for(level) if m.estimator == "Combination"]
        if level == AGGREGATE_LEVEL:
            model_names = [m.name for m in specs]
        else:
            model_names = []
            for m in specs:
                for origin in plan.origins():
                    for h in plan.horizons:
                        key = (m.name, level, AGGREGATE_COMPONENT, origin, h)
                        try:
                            v = aggregate_bottom_up(
                                store, level, m.name, origin, h, scheme
                            )
                        except MissingComponentError as exc:
                            store.errors[key] = f"aggregation: {exc}"
                            continue
                        store.add(key, v)
                model_names.append(m.name)
        if combos and panel.expectation is not None:
            cname = combos[0].name
            for origin in plan.origins():
                for h in plan.horizons:
                    e = panel.expectation_at(origin + h, origin)
                    if not math.isfinite(e):
                        continue
                    v, degraded = combine_forecasts(
                        store, level, origin, h, e, model_names
                    )
                    key = (cname, level, AGGREGATE_COMPONENT, origin, h)
                    store.add(key, v)
                    if degraded:
                        store.flags[key] = "combination-expectation-only"
    if plan.emit_expectation and panel.expectation is not None:
        for origin in plan.origins():
            for h in plan.horizons:
                e = panel.expectation_at(origin + h, origin)
                if math.isfinite(e):
                    store.add(
                        (EXPECTATION_MODEL, AGGREGATE_LEVEL, AGGREGATE_COMPONENT,
                         origin, h),
                        e,
                    )


def refit_cell(
    panel: SeriesPanel,
    schemes: list[DisaggregationScheme],
    plan: ExperimentPlan,
    model: ModelSpec,
    level: str,
    comp: str,
    origin: int,
    horizon: int,
) -> float:
    """Recompute one grid cell from the origin-truncated panel.

    Used by the no-leakage audit: the result must reproduce the stored
    forecast bit for bit.
    """
    from .panel import truncate_panel

    tpanel, tschemes = truncate_panel(panel, schemes, origin)
    obs = observed_predictors(tpanel)
    ctx = _OriginContext(tpanel, tschemes, origin, obs)
    seed = cell_seed(plan.seed, level, comp, origin, horizon, model.name)
    value, _, _ = _forecast_cell(ctx, level, comp, horizon, model, seed)
    return value


# ---------------------------------------------------------------------------
# Store CSV round trip
# ---------------------------------------------------------------------------


def write_forecasts_csv(store: ForecastStore, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["model", "level", "component", "origin", "horizon", "value"])
        for key in sorted(store.records):
            model, level, comp, origin, h = key
            w.writerow([model, level, comp, format_month(origin), h,
                        repr(store.records[key])])


def read_forecasts_csv(path) -> ForecastStore:
    store = ForecastStore()
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            key = (row["model"], row["level"], row["component"],
                   parse_month(row["origin"]), int(row["horizon"]))
            store.add(key, float(row["value"]))
    return store


def write_selections_csv(store: ForecastStore, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["model", "level", "component", "origin", "horizon", "feature"])
        for key in sorted(store.selections):
            model, level, comp, origin, h = key
            for feat in store.selections[key]:
                w.writerow([model, level, comp, format_month(origin), h, feat])


def read_selections_csv(path, store: ForecastStore) -> None:
    rows: dict[tuple, list[str]] = {}
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            key = (row["model"], row["level"], row["component"],
                   parse_month(row["origin"]), int(row["horizon"]))
            rows.setdefault(key, []).append(row["feature"])
    for key, feats in rows.items():
        store.selections[key] = tuple(feats)
