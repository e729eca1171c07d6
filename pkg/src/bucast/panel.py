"""Monthly panel and disaggregation-weight containers.

The panel holds the aggregate inflation series, every disaggregate
series per hierarchy level, predictor series with their availability
lags and stationarity-transform codes, and (optionally) survey
expectations formed at each origin for targets 0..H-1 months ahead.
All series share one gap-free monthly date index.

Everything is immutable-by-convention after construction and safe to
share read-only across worker processes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .dates import format_month, parse_month

AGGREGATE_LEVEL = "aggregate"
AGGREGATE_COMPONENT = "AGGREGATE"
AGGREGATE_SERIES_ID = "aggregate"

TRANSFORM_CODES = ("none", "pct_change", "first_diff")


class NoWeightsAvailableError(Exception):
    """No weight row is published on or before the requested origin."""


@dataclass(frozen=True)
class Predictor:
    """One predictor series: raw values, publication delay, transform."""

    values: np.ndarray
    availability_lag: int
    transform: str = "none"

    def __post_init__(self):
        if self.availability_lag < 0:
            raise ValueError("availability_lag must be >= 0")
        if self.transform not in TRANSFORM_CODES:
            raise ValueError(f"unknown transform code: {self.transform!r}")


@dataclass
class SeriesPanel:
    """Monthly observations of the aggregate, disaggregates, predictors.

    Parameters
    ----------
    dates : ndarray of int64
        Month indexes (see :mod:`bucast.dates`), strictly increasing,
        gap-free.
    aggregate : ndarray
        Monthly percentage change of the aggregate index.
    disaggregates : dict
        ``(level_id, component_id) -> ndarray`` of monthly percentage
        changes, all aligned to ``dates``.
    predictors : dict
        ``predictor_id -> Predictor``.
    expectation : ndarray or None
        ``expectation[i, h]`` is the survey expectation formed at
        ``dates[i]`` for the month ``dates[i] + h``; NaN when missing.
        ``None`` disables expectation-augmented models.
    """

    dates: np.ndarray
    aggregate: np.ndarray
    disaggregates: dict[tuple[str, str], np.ndarray] = field(default_factory=dict)
    predictors: dict[str, Predictor] = field(default_factory=dict)
    expectation: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.dates)

    @property
    def start(self) -> int:
        return int(self.dates[0])

    @property
    def end(self) -> int:
        return int(self.dates[-1])

    def pos(self, date: int) -> int:
        """Position of a month index in the panel."""
        p = int(date) - self.start
        if p < 0 or p >= self.n or int(self.dates[p]) != int(date):
            raise KeyError(f"date {format_month(int(date))} not in panel")
        return p

    def levels(self) -> list[str]:
        seen: list[str] = []
        for level, _ in self.disaggregates:
            if level not in seen:
                seen.append(level)
        return seen

    def components(self, level: str) -> list[str]:
        return [c for (lv, c) in self.disaggregates if lv == level]

    def series(self, level: str, component: str) -> np.ndarray:
        if level == AGGREGATE_LEVEL and component == AGGREGATE_COMPONENT:
            return self.aggregate
        return self.disaggregates[(level, component)]

    def expectation_at(self, target: int, origin: int) -> float:
        """Survey expectation for ``target`` formed at ``origin`` (NaN if absent)."""
        if self.expectation is None:
            return math.nan
        h = int(target) - int(origin)
        if h < 0 or h >= self.expectation.shape[1]:
            return math.nan
        i = int(origin) - self.start
        if i < 0 or i >= self.n:
            return math.nan
        return float(self.expectation[i, h])


@dataclass
class DisaggregationScheme:
    """One disaggregation level: component ids and time-varying weights.

    ``weights[i, j]`` is the share of ``component_ids[j]`` in the
    aggregate index evaluated for month ``dates[i]``. A weight row for
    month t becomes observable ``publication_lag`` months later.
    """

    level_id: str
    component_ids: tuple[str, ...]
    dates: np.ndarray
    weights: np.ndarray
    publication_lag: int = 1

    @property
    def n_components(self) -> int:
        return len(self.component_ids)

    def last_available_weights(self, origin: int) -> np.ndarray:
        return last_available_weights(self, origin)


def aggregate_scheme(dates: np.ndarray, publication_lag: int = 1) -> DisaggregationScheme:
    """Trivial one-component scheme for the aggregate level."""
    return DisaggregationScheme(
        level_id=AGGREGATE_LEVEL,
        component_ids=(AGGREGATE_COMPONENT,),
        dates=np.asarray(dates, dtype=np.int64),
        weights=np.ones((len(dates), 1)),
        publication_lag=publication_lag,
    )


def last_available_weights(scheme: DisaggregationScheme, origin: int) -> np.ndarray:
    """Latest weight row published on or before ``origin``, renormalized.

    The row for reference month m is observable from
    ``m + publication_lag`` on; the returned copy sums to exactly 1.

    Raises
    ------
    NoWeightsAvailableError
        If no weight row has been published by ``origin``.
    """
    cutoff = int(origin) - scheme.publication_lag
    dates = scheme.dates
    idx = int(np.searchsorted(dates, cutoff, side="right")) - 1
    if idx < 0:
        raise NoWeightsAvailableError(
            f"no weights for level {scheme.level_id!r} published by "
            f"{format_month(int(origin))} (lag {scheme.publication_lag})"
        )
    row = scheme.weights[idx].astype(float).copy()
    total = row.sum()
    if total <= 0:
        raise NoWeightsAvailableError(
            f"weight row for {format_month(int(dates[idx]))} sums to {total}"
        )
    return row / total


def validate_panel(panel: SeriesPanel, schemes: list[DisaggregationScheme]) -> list[str]:
    """Check panel and scheme invariants; returns violations (empty = valid).

    Pure and idempotent: inspects, never mutates.
    """
    out: list[str] = []
    dates = np.asarray(panel.dates)
    n = len(dates)
    if n == 0:
        return ["panel has no dates"]
    diffs = np.diff(dates)
    for k in np.nonzero(diffs != 1)[0]:
        if diffs[k] <= 0:
            out.append(f"dates not strictly increasing at {format_month(int(dates[k]))}")
        else:
            out.append(
                f"date gap between {format_month(int(dates[k]))} and "
                f"{format_month(int(dates[k + 1]))}"
            )

    def check_len(name, arr):
        if len(arr) != n:
            out.append(f"series {name!r} has length {len(arr)}, expected {n}")

    check_len(AGGREGATE_SERIES_ID, panel.aggregate)
    for (level, comp), arr in panel.disaggregates.items():
        check_len(f"{level}/{comp}", arr)
    for pid, pred in panel.predictors.items():
        check_len(pid, pred.values)
        if pred.availability_lag < 0:
            out.append(f"predictor {pid!r} has negative availability lag")
    if panel.expectation is not None and panel.expectation.shape[0] != n:
        out.append(
            f"expectation has {panel.expectation.shape[0]} rows, expected {n}"
        )

    by_level: dict[str, DisaggregationScheme] = {s.level_id: s for s in schemes}
    panel_levels = panel.levels()
    for level in panel_levels:
        if level not in by_level:
            out.append(f"no scheme for level {level!r}")
    for scheme in schemes:
        w = np.asarray(scheme.weights, dtype=float)
        if w.shape != (len(scheme.dates), scheme.n_components):
            out.append(
                f"level {scheme.level_id!r}: weights shape {w.shape} does not "
                f"match {len(scheme.dates)} dates x {scheme.n_components} components"
            )
            continue
        if scheme.n_components < 1:
            out.append(f"level {scheme.level_id!r} has no components")
        neg = np.nonzero((w < 0).any(axis=1))[0]
        for i in neg:
            out.append(
                f"level {scheme.level_id!r}: negative weight at "
                f"{format_month(int(scheme.dates[i]))}"
            )
        bad = np.nonzero(np.abs(w.sum(axis=1) - 1.0) > 1e-8)[0]
        for i in bad:
            out.append(
                f"level {scheme.level_id!r}: weight row at "
                f"{format_month(int(scheme.dates[i]))} sums to {w[i].sum():.10f}"
            )
        if scheme.level_id == AGGREGATE_LEVEL:
            if scheme.n_components != 1 or not np.all(w == 1.0):
                out.append("aggregate scheme must have one component with weight 1")
            continue
        comps = panel.components(scheme.level_id)
        if comps and list(scheme.component_ids) != comps:
            out.append(
                f"level {scheme.level_id!r}: scheme components do not match panel"
            )
        # every panel date with disaggregate data needs a weight row
        if comps:
            missing = np.setdiff1d(dates, scheme.dates)
            for d in missing:
                out.append(
                    f"level {scheme.level_id!r}: no weight row for "
                    f"{format_month(int(d))}"
                )
    return out


def truncate_panel(
    panel: SeriesPanel, schemes: list[DisaggregationScheme], origin: int
) -> tuple[SeriesPanel, list[DisaggregationScheme]]:
    """Restrict panel and schemes to the information set of ``origin``.

    Inflation series keep reference months <= origin; predictor values
    published after the origin (reference > origin - availability_lag)
    are masked to NaN; expectations formed after the origin are dropped;
    weight rows published after the origin are dropped.
    """
    keep = panel.pos(origin) + 1
    dates = panel.dates[:keep].copy()
    preds: dict[str, Predictor] = {}
    for pid, p in panel.predictors.items():
        vals = p.values[:keep].copy()
        if p.availability_lag > 0:
            vals[max(0, keep - p.availability_lag):] = np.nan
        preds[pid] = Predictor(vals, p.availability_lag, p.transform)
    exp = None
    if panel.expectation is not None:
        exp = panel.expectation[:keep].copy()
    trunc = SeriesPanel(
        dates=dates,
        aggregate=panel.aggregate[:keep].copy(),
        disaggregates={k: v[:keep].copy() for k, v in panel.disaggregates.items()},
        predictors=preds,
        expectation=exp,
    )
    cut_schemes = []
    for s in schemes:
        k = int(np.searchsorted(s.dates, int(origin) - s.publication_lag, side="right"))
        cut_schemes.append(
            DisaggregationScheme(
                level_id=s.level_id,
                component_ids=s.component_ids,
                dates=s.dates[:k].copy(),
                weights=s.weights[:k].copy(),
                publication_lag=s.publication_lag,
            )
        )
    return trunc, cut_schemes


# ---------------------------------------------------------------------------
# CSV schemas: panel.csv (date,series_id,value), weights.csv
# (date,level_id,component_id,weight), meta.csv
# (series_id,kind,availability_lag,transform_code). Dates as YYYY-MM.
# ---------------------------------------------------------------------------

EXPECTATION_PREFIX = "expec_h"


def _fmt(x: float) -> str:
    return repr(float(x))


def write_panel_csv(
    panel: SeriesPanel,
    schemes: list[DisaggregationScheme],
    panel_path,
    weights_path,
    meta_path,
) -> None:
    with open(panel_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["date", "series_id", "value"])
        for i, d in enumerate(panel.dates):
            ds = format_month(int(d))
            w.writerow([ds, AGGREGATE_SERIES_ID, _fmt(panel.aggregate[i])])
            for (_, comp), arr in panel.disaggregates.items():
                w.writerow([ds, comp, _fmt(arr[i])])
            for pid, pred in panel.predictors.items():
                w.writerow([ds, pid, _fmt(pred.values[i])])
            if panel.expectation is not None:
                for h in range(panel.expectation.shape[1]):
                    v = panel.expectation[i, h]
                    if not math.isnan(v):
                        w.writerow([ds, f"{EXPECTATION_PREFIX}{h}", _fmt(v)])

    with open(weights_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["date", "level_id", "component_id", "weight"])
        for s in schemes:
            for i, d in enumerate(s.dates):
                ds = format_month(int(d))
                for j, comp in enumerate(s.component_ids):
                    w.writerow([ds, s.level_id, comp, _fmt(s.weights[i, j])])

    with open(meta_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["series_id", "kind", "availability_lag", "transform_code"])
        w.writerow([AGGREGATE_SERIES_ID, "aggregate", 0, "none"])
        for (level, comp) in panel.disaggregates:
            w.writerow([comp, f"disaggregate:{level}", 0, "none"])
        for pid, pred in panel.predictors.items():
            w.writerow([pid, "predictor", pred.availability_lag, pred.transform])
        if panel.expectation is not None:
            for h in range(panel.expectation.shape[1]):
                w.writerow([f"{EXPECTATION_PREFIX}{h}", "expectation", 0, "none"])


def read_panel_csv(
    panel_path, weights_path, meta_path, publication_lag: int = 1
) -> tuple[SeriesPanel, list[DisaggregationScheme]]:
    """Load panel, weights, and metadata CSVs written by :func:`write_panel_csv`."""
    kinds: dict[str, str] = {}
    lags: dict[str, int] = {}
    transforms: dict[str, str] = {}
    with open(meta_path, newline="") as f:
        for row in csv.DictReader(f):
            sid = row["series_id"]
            kinds[sid] = row["kind"]
            lags[sid] = int(row["availability_lag"])
            transforms[sid] = row["transform_code"]

    values: dict[str, dict[int, float]] = {}
    all_dates: set[int] = set()
    with open(panel_path, newline="") as f:
        for row in csv.DictReader(f):
            d = parse_month(row["date"])
            all_dates.add(d)
            values.setdefault(row["series_id"], {})[d] = float(row["value"])
    if not all_dates:
        raise ValueError("panel.csv contains no rows")
    dates = np.array(sorted(all_dates), dtype=np.int64)
    pos = {int(d): i for i, d in enumerate(dates)}
    n = len(dates)

    def to_array(sid: str) -> np.ndarray:
        arr = np.full(n, np.nan)
        for d, v in values.get(sid, {}).items():
            arr[pos[d]] = v
        return arr

    aggregate = None
    disagg: dict[tuple[str, str], np.ndarray] = {}
    predictors: dict[str, Predictor] = {}
    exp_cols: dict[int, np.ndarray] = {}
    for sid, kind in kinds.items():
        if kind == "aggregate":
            aggregate = to_array(sid)
        elif kind.startswith("disaggregate:"):
            level = kind.split(":", 1)[1]
            disagg[(level, sid)] = to_array(sid)
        elif kind == "predictor":
            predictors[sid] = Predictor(to_array(sid), lags[sid], transforms[sid])
        elif kind == "expectation":
            h = int(sid[len(EXPECTATION_PREFIX):])
            exp_cols[h] = to_array(sid)
        else:
            raise ValueError(f"unknown kind {kind!r} for series {sid!r}")
    if aggregate is None:
        raise ValueError("meta.csv declares no aggregate series")
    expectation = None
    if exp_cols:
        hmax = max(exp_cols) + 1
        expectation = np.full((n, hmax), np.nan)
        for h, col in exp_cols.items():
            expectation[:, h] = col

    panel = SeriesPanel(
        dates=dates,
        aggregate=aggregate,
        disaggregates=disagg,
        predictors=predictors,
        expectation=expectation,
    )

    rows: dict[str, dict[int, dict[str, float]]] = {}
    with open(weights_path, newline="") as f:
        for row in csv.DictReader(f):
            d = parse_month(row["date"])
            lv = rows.setdefault(row["level_id"], {})
            lv.setdefault(d, {})[row["component_id"]] = float(row["weight"])
    schemes = []
    for level, per_date in rows.items():
        wdates = np.array(sorted(per_date), dtype=np.int64)
        comps = panel.components(level)
        if not comps:  # level present only in weights (e.g. aggregate)
            comps = sorted(per_date[int(wdates[0])])
        W = np.zeros((len(wdates), len(comps)))
        for i, d in enumerate(wdates):
            for j, c in enumerate(comps):
                W[i, j] = per_date[int(d)].get(c, 0.0)
        schemes.append(
            DisaggregationScheme(
                level_id=level,
                component_ids=tuple(comps),
                dates=wdates,
                weights=W,
                publication_lag=publication_lag,
            )
        )
    schemes.sort(key=lambda s: (s.level_id != AGGREGATE_LEVEL, s.n_components))
    return panel, schemes
