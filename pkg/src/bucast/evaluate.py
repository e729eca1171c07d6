"""Forecast evaluation: RMSE, RMSE ratios vs. a benchmark, one-tailed
Diebold-Mariano tests with a Newey-West long-run variance, sub-period
slicing by forecast origin, and variable-selection frequency tables.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .dates import format_month
from .harness import AGGREGATE_COMPONENT, ForecastStore, accumulate_values
from .panel import SeriesPanel

ACC12 = "acc12"


def rmse(errors) -> float:
    """Root mean squared error of a nonempty error vector."""
    e = np.asarray(errors, dtype=float)
    if e.size == 0:
        raise ValueError("rmse of an empty error vector")
    return float(np.sqrt(np.mean(e * e)))


@dataclass
class DMResult:
    stat: float
    pvalue: float
    degenerate: bool = False


def dm_test(errors_m, errors_b, horizon: int = 0, hac: bool = True, g=None) -> DMResult:
    """One-tailed Diebold-Mariano test of equal predictive accuracy.

    The loss differential d_t = g(e_m) - g(e_b) (g defaults to squared
    error) is averaged and self-normalized by a Bartlett-kernel
    Newey-West long-run variance with lag = horizon (plain sample
    variance at h = 0 or with ``hac=False``). The p-value is
    Phi(statistic): small statistics mean the first model is better.
    Zero long-run variance (e.g. identical forecasts) yields the
    degenerate result (0, 0.5).
    """
    em = np.asarray(errors_m, dtype=float)
    eb = np.asarray(errors_b, dtype=float)
    if em.shape != eb.shape:
        raise ValueError("error vectors must have equal length")
    T = len(em)
    if T < 10:
        raise ValueError(f"need at least 10 aligned errors, got {T}")
    if g is None:
        d = em * em - eb * eb
    else:
        d = np.asarray([g(v) for v in em]) - np.asarray([g(v) for v in eb])
    dbar = float(d.mean())
    dc = d - dbar
    lrv = float(dc @ dc) / T
    if hac:
        L = int(horizon)
        for j in range(1, min(L, T - 1) + 1):
            gamma = float(dc[j:] @ dc[:-j]) / T
            lrv += 2.0 * (1.0 - j / (L + 1.0)) * gamma
    scale = float(np.mean(d * d)) + 1e-300
    if lrv <= 1e-14 * scale:
        return DMResult(stat=0.0, pvalue=0.5, degenerate=True)
    stat = dbar / math.sqrt(lrv / T)
    return DMResult(stat=stat, pvalue=float(norm.cdf(stat)), degenerate=False)


# ---------------------------------------------------------------------------
# Report over a forecast store
# ---------------------------------------------------------------------------


@dataclass
class ReportRow:
    model: str
    level: str
    horizon: object  # int or "acc12"
    subperiod: str
    n: int
    rmse: float
    ratio: float
    dm_stat: float
    dm_p: float
    flag: str = ""


FULL_PERIOD = ("full", None, None)


def _origin_in(origin: int, lo, hi) -> bool:
    if lo is not None and origin < lo:
        return False
    if hi is not None and origin > hi:
        return False
    return True


def _aggregate_forecasts(store: ForecastStore):
    """(model, level) -> {(origin, horizon) -> forecast} over AGGREGATE rows."""
    out: dict[tuple[str, str], dict[tuple[int, int], float]] = {}
    for (model, level, comp, origin, h), v in store.records.items():
        if comp != AGGREGATE_COMPONENT:
            continue
        out.setdefault((model, level), {})[(origin, h)] = v
    return out


def build_report(
    store: ForecastStore,
    panel: SeriesPanel,
    benchmark: tuple[str, str] | str,
    subperiods: list[tuple[str, object, object]] | None = None,
    horizons: tuple[int, ...] | None = None,
    include_acc12: bool = True,
    hac: bool = True,
) -> list[ReportRow]:
    """RMSE, RMSE ratio, and DM test vs. the benchmark per
    (model, level, horizon, subperiod), over forecast origins where both
    the model and the benchmark produced an aggregate-level forecast.

    ``benchmark`` is a model id (looked up at the aggregate level) or an
    explicit (model, level) pair. Sub-periods slice by origin date.
    """
    if isinstance(benchmark, str):
        benchmark = (benchmark, "aggregate")
    subperiods = subperiods or [FULL_PERIOD]
    agg = _aggregate_forecasts(store)
    if benchmark not in agg:
        raise KeyError(f"benchmark {benchmark} has no aggregate forecasts")
    bench = agg[benchmark]
    if horizons is None:
        horizons = tuple(sorted({h for cells in agg.values() for (_, h) in cells}))
    realized = {}
    for i, d in enumerate(panel.dates):
        realized[int(d)] = float(panel.aggregate[i])

    rows: list[ReportRow] = []
    for (model, level), cells in sorted(agg.items()):
        for h in horizons:
            for name, lo, hi in subperiods:
                origins = sorted(
                    o
                    for (o, hh) in cells
                    if hh == h and (o, h) in bench and (o + h) in realized
                    and _origin_in(o, lo, hi)
                )
                if not origins:
                    continue
                em = np.array([realized[o + h] - cells[(o, h)] for o in origins])
                eb = np.array([realized[o + h] - bench[(o, h)] for o in origins])
                rows.append(_score(model, level, h, name, em, eb, h, hac))
        if include_acc12:
            full_h = tuple(range(12))
            for name, lo, hi in subperiods:
                origins = sorted(
                    {
                        o
                        for (o, _) in cells
                        if _origin_in(o, lo, hi)
                        and all((o, hh) in cells and (o, hh) in bench for hh in full_h)
                        and (o + 11) in realized
                    }
                )
                if not origins:
                    continue
                em, eb = [], []
                for o in origins:
                    real = accumulate_values([realized[o + hh] for hh in full_h])
                    em.append(real - accumulate_values([cells[(o, hh)] for hh in full_h]))
                    eb.append(real - accumulate_values([bench[(o, hh)] for hh in full_h]))
                rows.append(
                    _score(model, level, ACC12, name, np.array(em), np.array(eb), 11, hac)
                )
    return rows


def _score(model, level, h, subperiod, em, eb, dm_lag, hac) -> ReportRow:
    r_m = rmse(em)
    r_b = rmse(eb)
    flag = ""
    if r_b == 0.0:
        ratio = math.inf if r_m > 0 else 1.0
        flag = "zero-benchmark-rmse"
    else:
        ratio = r_m / r_b
    if len(em) >= 10:
        dm = dm_test(em, eb, horizon=dm_lag, hac=hac)
        if dm.degenerate:
            flag = (flag + ";" if flag else "") + "degenerate-dm"
        stat, p = dm.stat, dm.pvalue
    else:
        stat, p = math.nan, math.nan
        flag = (flag + ";" if flag else "") + "too-few-for-dm"
    return ReportRow(
        model=model, level=level, horizon=h, subperiod=subperiod,
        n=len(em), rmse=r_m, ratio=ratio, dm_stat=stat, dm_p=p, flag=flag,
    )


# ---------------------------------------------------------------------------
# Selection frequencies
# ---------------------------------------------------------------------------


def selection_frequencies(store: ForecastStore) -> dict[tuple, float]:
    """Share of expanding windows in which each base variable was kept.

    Keys are (model, level, component, horizon, feature); lags of the
    same underlying variable count as that variable (any-lag rule —
    the selection records already store base names).
    """
    windows: dict[tuple, int] = {}
    hits: dict[tuple, dict[str, int]] = {}
    for (model, level, comp, _origin, h), feats in store.selections.items():
        key = (model, level, comp, h)
        windows[key] = windows.get(key, 0) + 1
        bucket = hits.setdefault(key, {})
        for f in set(feats):
            bucket[f] = bucket.get(f, 0) + 1
    out: dict[tuple, float] = {}
    for key, total in windows.items():
        for f, c in hits.get(key, {}).items():
            out[key[:3] + (key[3], f)] = c / total
    return out


# ---------------------------------------------------------------------------
# CSV output and plain-text table
# ---------------------------------------------------------------------------


def write_report_csv(rows: list[ReportRow], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["model", "level", "horizon", "subperiod", "n", "rmse",
                    "ratio", "dm_stat", "dm_p", "flag"])
        for r in rows:
            w.writerow([
                r.model, r.level, r.horizon, r.subperiod, r.n,
                repr(r.rmse), repr(r.ratio), repr(r.dm_stat), repr(r.dm_p),
                r.flag,
            ])


def write_selection_csv(freqs: dict[tuple, float], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["model", "level", "component", "horizon", "feature", "frequency"])
        for (model, level, comp, h, feat), v in sorted(freqs.items()):
            w.writerow([model, level, comp, h, feat, repr(v)])


def stars(p: float) -> str:
    if not math.isfinite(p):
        return ""
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.10:
        return "*"
    return ""


def format_report_table(rows: list[ReportRow], subperiod: str = "full") -> str:
    """Ratio-to-benchmark table, one row per (model, level), one column
    per horizon plus the 12-month accumulation; stars mark one-tailed
    DM significance at 10/5/1%."""
    horizons = sorted({r.horizon for r in rows if isinstance(r.horizon, int)})
    cols = horizons + [ACC12]
    cells: dict[tuple[str, str], dict] = {}
    for r in rows:
        if r.subperiod != subperiod:
            continue
        cells.setdefault((r.level, r.model), {})[r.horizon] = r
    head = f"{'model':<28}" + "".join(
        f"{('h=' + str(c) if isinstance(c, int) else c):>10}" for c in cols
    )
    lines = [f"RMSE ratio to benchmark ({subperiod})", head, "-" * len(head)]
    for (level, model), per_h in sorted(cells.items()):
        label = f"{model} [{level}]"
        line = f"{label:<28}"
        for c in cols:
            r = per_h.get(c)
            if r is None:
                line += f"{'-':>10}"
            else:
                line += f"{r.ratio:.3f}{stars(r.dm_p):<3}".rjust(10)
        lines.append(line)
    return "\n".join(lines)


def format_origin(origin: int) -> str:
    return format_month(origin)
