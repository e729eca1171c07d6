"""Seedable synthetic panels that exercise every estimator end to end.

The generator builds a K-factor predictor panel with AR(1) idiosyncratic
noise, subgroup inflation series driven by seasonality, own lags, and a
sparse set of lagged factor/idiosyncratic effects, then rolls the
hierarchy up through groups and categories with slowly drifting weights
so the aggregate is the exact weighted sum at every level. Survey
expectations are the future realized values plus noise that widens with
the horizon.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dates import parse_month
from .panel import (
    DisaggregationScheme,
    Predictor,
    SeriesPanel,
    aggregate_scheme,
)

LEVEL_CATEGORIES = "categories"
LEVEL_GROUPS = "groups"
LEVEL_SUBGROUPS = "subgroups"


@dataclass
class SyntheticSpec:
    """Knobs for the synthetic data-generating process."""

    n_months: int = 220
    start: str = "2004-01"
    n_subgroups: int = 19
    n_groups: int = 9
    n_categories: int = 3
    n_predictors: int = 90
    k_factors: int = 3
    sparsity: int = 5          # true nonzero lagged effects per subgroup
    lag_depth: int = 3
    horizons: int = 12
    ar_coef: float = 0.45
    seasonal_amplitude: float = 0.35
    effect_scale: float = 0.12
    noise_scale: float = 0.22
    factor_persistence: float = 0.7
    idio_persistence: float = 0.3
    expectation_noise: float = 0.08
    weight_drift: float = 0.01
    publication_lag: int = 1
    seed: int = 0

    def validate(self) -> None:
        if self.n_months < 60:
            raise ValueError("invariant violated: n_months >= 60")
        if self.k_factors > self.n_predictors:
            raise ValueError("invariant violated: k_factors <= n_predictors")
        if self.sparsity > self.n_predictors * self.lag_depth:
            raise ValueError("invariant violated: sparsity <= n_predictors * lag_depth")
        if self.sparsity < 0:
            raise ValueError("invariant violated: sparsity >= 0")
        if not self.n_subgroups >= self.n_groups >= self.n_categories >= 1:
            raise ValueError(
                "invariant violated: n_subgroups >= n_groups >= n_categories >= 1"
            )


@dataclass
class GroundTruth:
    """Everything the DGP knows: coefficients, supports, partitions.

    ``factors``/``idio`` hold the latent driver paths (aligned to the
    panel dates) for noise-free recovery oracles; they are not part of
    the JSON payload.
    """

    spec: SyntheticSpec
    supports: dict[str, list[tuple[str, int, int]]]
    effects: dict[str, list[float]]
    ar_coefs: dict[str, float]
    intercepts: dict[str, float]
    seasonal: dict[str, list[float]]
    group_of: list[int]
    category_of: list[int]
    factors: np.ndarray | None = None
    idio: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "spec": self.spec.__dict__,
            "supports": self.supports,
            "effects": self.effects,
            "ar_coefs": self.ar_coefs,
            "intercepts": self.intercepts,
            "seasonal": self.seasonal,
            "group_of": self.group_of,
            "category_of": self.category_of,
        }
        payload.update(self.extra)
        return json.dumps(payload, indent=1, sort_keys=True)


def _partition(n_child: int, n_parent: int) -> list[int]:
    """Assign n_child items to n_parent contiguous blocks as evenly as possible."""
    base, extra = divmod(n_child, n_parent)
    out = []
    for g in range(n_parent):
        out.extend([g] * (base + (1 if g < extra else 0)))
    return out


def _roll_up(series: np.ndarray, weights: np.ndarray, members: list[int], n_parent: int):
    """Weighted child series and summed weights per parent node."""
    n = series.shape[0]
    out_s = np.zeros((n, n_parent))
    out_w = np.zeros((n, n_parent))
    for child, parent in enumerate(members):
        out_w[:, parent] += weights[:, child]
        out_s[:, parent] += weights[:, child] * series[:, child]
    with np.errstate(invalid="ignore"):
        out_s = np.where(out_w > 0, out_s / np.where(out_w > 0, out_w, 1.0), 0.0)
    return out_s, out_w


def generate(spec: SyntheticSpec) -> tuple[SeriesPanel, list[DisaggregationScheme], GroundTruth]:
    """Generate a panel, its disaggregation schemes, and the ground truth."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n = spec.n_months
    start = parse_month(spec.start)
    dates = np.arange(start, start + n, dtype=np.int64)
    J, K, p = spec.n_predictors, spec.k_factors, spec.lag_depth
    burn = 24

    # latent factors and idiosyncratic predictor noise, AR(1)
    total = n + burn
    F = np.zeros((total, K))
    for t in range(1, total):
        F[t] = spec.factor_persistence * F[t - 1] + rng.standard_normal(K)
    E = np.zeros((total, J))
    for t in range(1, total):
        E[t] = spec.idio_persistence * E[t - 1] + rng.standard_normal(J)
    loadings = rng.normal(0.0, 1.0, size=(J, K))
    X_stat = F @ loadings.T + np.sqrt(K) * E

    # raw predictor series: cycle transforms none / pct_change / first_diff
    # and availability lags 0 / 1 / 2
    predictors: dict[str, Predictor] = {}
    pids = [f"x{j + 1:02d}" for j in range(J)]
    for j, pid in enumerate(pids):
        sig = X_stat[burn:, j]
        kind = ("none", "pct_change", "first_diff")[j % 3]
        if kind == "none":
            raw = sig.copy()
        elif kind == "pct_change":
            raw = 100.0 * np.ones(n)
            for t in range(1, n):
                raw[t] = raw[t - 1] * (1.0 + sig[t] / 400.0)
        else:
            raw = np.concatenate([[0.0], np.cumsum(sig[1:])])
        predictors[pid] = Predictor(raw, availability_lag=j % 3, transform=kind)

    # subgroup inflation: seasonality + own lag + sparse lagged effects
    sgids = [f"sg{i + 1:02d}" for i in range(spec.n_subgroups)]
    seasonal = {}
    ar_coefs = {}
    supports: dict[str, list[tuple[str, int, int]]] = {}
    effects: dict[str, list[float]] = {}
    sg = np.zeros((total, spec.n_subgroups))
    base_level = rng.normal(0.3, 0.1, size=spec.n_subgroups)
    month_idx = (np.arange(total) + (start - 1) - burn) % 12  # 0 = January
    for i, sid in enumerate(sgids):
        seas = spec.seasonal_amplitude * rng.standard_normal(12)
        seasonal[sid] = [float(v) for v in seas]
        rho = spec.ar_coef * rng.uniform(0.6, 1.2)
        ar_coefs[sid] = float(rho)
        sup: list[tuple[str, int, int]] = []
        eff: list[float] = []
        if spec.sparsity:
            # distinct (source, lag) pairs so the support has exactly s entries
            codes = rng.choice((K + J) * p, size=spec.sparsity, replace=False)
            for code in codes:
                src, lag0 = divmod(int(code), p)
                kind, idx = ("f", src) if src < K else ("u", src - K)
                sup.append((kind, idx, lag0 + 1))
                eff.append(float(rng.choice([-1.0, 1.0]) * spec.effect_scale
                                 * rng.uniform(0.8, 1.6)))
        supports[sid] = sup
        effects[sid] = eff
        noise = spec.noise_scale * rng.standard_normal(total)
        for t in range(1, total):
            v = base_level[i] * (1 - rho) + seas[month_idx[t]] + rho * sg[t - 1, i]
            for (kind, idx, lag), theta in zip(sup, eff):
                if t - lag >= 0:
                    src = F[t - lag, idx] if kind == "f" else E[t - lag, idx]
                    v += theta * src
            sg[t, i] = v + noise[t]
    sg = sg[burn:]

    # drifting subgroup weights, renormalized each month
    w = rng.uniform(0.5, 1.5, size=spec.n_subgroups)
    w /= w.sum()
    W = np.zeros((n, spec.n_subgroups))
    for t in range(n):
        if t > 0:
            w = w * np.exp(spec.weight_drift * rng.standard_normal(spec.n_subgroups))
            w /= w.sum()
        W[t] = w

    aggregate = (W * sg).sum(axis=1)

    group_of = _partition(spec.n_subgroups, spec.n_groups)
    cat_of = _partition(spec.n_subgroups, spec.n_categories)
    g_series, g_weights = _roll_up(sg, W, group_of, spec.n_groups)
    c_series, c_weights = _roll_up(sg, W, cat_of, spec.n_categories)
    gids = [f"g{i + 1:02d}" for i in range(spec.n_groups)]
    cids = [f"cat{i + 1}" for i in range(spec.n_categories)]

    disagg: dict[tuple[str, str], np.ndarray] = {}
    for i, cid in enumerate(cids):
        disagg[(LEVEL_CATEGORIES, cid)] = c_series[:, i]
    for i, gid in enumerate(gids):
        disagg[(LEVEL_GROUPS, gid)] = g_series[:, i]
    for i, sid in enumerate(sgids):
        disagg[(LEVEL_SUBGROUPS, sid)] = sg[:, i]

    H = spec.horizons
    expectation = np.full((n, H), np.nan)
    for t in range(n):
        for h in range(H):
            if t + h < n:
                sd = spec.expectation_noise * (1.0 + h)
                expectation[t, h] = aggregate[t + h] + rng.normal(0.0, sd)

    panel = SeriesPanel(
        dates=dates,
        aggregate=aggregate,
        disaggregates=disagg,
        predictors=predictors,
        expectation=expectation,
    )
    lag = spec.publication_lag
    schemes = [
        aggregate_scheme(dates, lag),
        DisaggregationScheme(LEVEL_CATEGORIES, tuple(cids), dates, c_weights, lag),
        DisaggregationScheme(LEVEL_GROUPS, tuple(gids), dates, g_weights, lag),
        DisaggregationScheme(LEVEL_SUBGROUPS, tuple(sgids), dates, W, lag),
    ]
    truth = GroundTruth(
        spec=spec,
        supports=supports,
        effects=effects,
        ar_coefs=ar_coefs,
        intercepts={sid: float(base_level[i] * (1 - ar_coefs[sid]))
                    for i, sid in enumerate(sgids)},
        seasonal=seasonal,
        group_of=group_of,
        category_of=cat_of,
        factors=F[burn:],
        idio=E[burn:],
    )
    return panel, schemes, truth
