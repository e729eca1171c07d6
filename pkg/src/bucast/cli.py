"""Command-line entry points: generate, validate, run, evaluate.

Configuration is a flat INI file (sections of ``key = value`` pairs);
see the annotated example shipped in ``demos/experiment.ini``. Exit
codes: 0 success, 2 configuration error, 3 data validation error,
4 missing artifacts.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from pathlib import Path

from . import evaluate as ev
from . import harness, panel as panel_mod, synthetic
from .dates import format_month, parse_month

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_MISSING = 4


class ConfigError(Exception):
    pass


def _load_config(path: str) -> configparser.ConfigParser:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    return cp


def _parse_horizons(text: str) -> tuple[int, ...]:
    text = text.strip()
    if "-" in text and "," not in text:
        lo, hi = text.split("-")
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(t) for t in text.split(",") if t.strip())


def _parse_subperiods(text: str):
    """``name:YYYY-MM..YYYY-MM`` items, comma separated; ``*`` is open."""
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        name, _, span = item.partition(":")
        lo_s, _, hi_s = span.partition("..")
        lo = None if lo_s.strip() in ("", "*") else parse_month(lo_s)
        hi = None if hi_s.strip() in ("", "*") else parse_month(hi_s)
        out.append((name.strip(), lo, hi))
    return out


_MODEL_FIELD_TYPES = {
    "lag_depth": int, "k_max": int, "csr_p_tilde": int, "csr_p_subset": int,
    "rf_trees": int, "rf_min_leaf": int, "rf_block_len": int,
    "rf_feature_fraction": float, "preselect_alpha": float,
    "hnkpc_activity": str, "hnkpc_exchange": str, "name": str,
}


def _model_spec(cp: configparser.ConfigParser, estimator: str) -> harness.ModelSpec:
    kwargs = {}
    section = f"model.{estimator}"
    if cp.has_section(section):
        for key, raw in cp.items(section):
            if key == "selection_cap":
                kwargs[key] = None if raw == "none" else (
                    raw if raw == "sqrt" else int(raw))
            elif key == "penalty_rule":
                kwargs[key] = raw if raw == "bic" else float(raw)
            elif key == "factor_rule":
                kwargs[key] = raw if raw == "icp2" else int(raw)
            elif key in _MODEL_FIELD_TYPES:
                kwargs[key] = _MODEL_FIELD_TYPES[key](raw)
            else:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
    try:
        return harness.ModelSpec(estimator, **kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _build_plan(cp: configparser.ConfigParser, seed_override=None):
    try:
        plan_sec = cp["plan"]
        first = parse_month(plan_sec["first_origin"])
        last = parse_month(plan_sec["last_origin"])
    except KeyError as exc:
        raise ConfigError(f"missing [plan] key: {exc}") from exc
    horizons = _parse_horizons(plan_sec.get("horizons", "0-11"))
    seed = int(plan_sec.get("seed", "0"))
    if seed_override is not None:
        seed = seed_override
    levels = [s.strip() for s in plan_sec.get(
        "levels", "aggregate,categories,groups,subgroups").split(",") if s.strip()]

    if not cp.has_section("models"):
        raise ConfigError("missing [models] section")
    models: dict[str, list[harness.ModelSpec]] = {}
    default = cp["models"].get("all")
    for level in levels:
        raw = cp["models"].get(level, default)
        if raw is None:
            continue
        specs = []
        for name in (t.strip() for t in raw.split(",")):
            if not name:
                continue
            if name not in harness.ESTIMATORS:
                raise ConfigError(f"unknown estimator {name!r} in [models]")
            specs.append(_model_spec(cp, name))
        models[level] = specs
    subperiods = []
    if cp.has_section("evaluation") and cp["evaluation"].get("subperiods"):
        subperiods = _parse_subperiods(cp["evaluation"]["subperiods"])
    return harness.ExperimentPlan(
        first_origin=first, last_origin=last, models=models,
        horizons=horizons, seed=seed, subperiods=subperiods,
    ), levels


def _load_data(cp: configparser.ConfigParser):
    try:
        data = cp["data"]
        paths = (data["panel"], data["weights"], data["meta"])
    except KeyError as exc:
        raise ConfigError(f"missing [data] key: {exc}") from exc
    for p in paths:
        if not os.path.exists(p):
            raise FileNotFoundError(p)
    pub_lag = int(cp["data"].get("weight_publication_lag", "1"))
    return panel_mod.read_panel_csv(*paths, publication_lag=pub_lag)


def _out_dir(cp, override=None) -> Path:
    if override:
        d = Path(override)
    elif cp is not None and cp.has_section("output"):
        d = Path(cp["output"].get("dir", "."))
    else:
        d = Path(".")
    d.mkdir(parents=True, exist_ok=True)
    return d


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    spec = synthetic.SyntheticSpec(
        n_months=args.months,
        start=args.start,
        n_subgroups=args.subgroups,
        n_groups=args.groups,
        n_categories=args.categories,
        n_predictors=args.predictors,
        k_factors=args.factors,
        sparsity=args.sparsity,
        noise_scale=args.noise,
        seed=args.seed if args.seed is not None else 0,
    )
    try:
        spec.validate()
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    panel, schemes, truth = synthetic.generate(spec)
    out = _out_dir(None, args.out)
    try:
        panel_mod.write_panel_csv(
            panel, schemes, out / "panel.csv", out / "weights.csv", out / "meta.csv"
        )
        truth_path = out / "ground_truth.json"
        truth_path.write_text(truth.to_json())
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"wrote {out / 'panel.csv'}, {out / 'weights.csv'}, {out / 'meta.csv'}")
    print(f"ground truth: {truth_path}")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        cp = _load_config(args.config)
        panel, schemes = _load_data(cp)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"data error: missing file {exc}", file=sys.stderr)
        return EXIT_DATA
    violations = panel_mod.validate_panel(panel, schemes)
    if violations:
        for v in violations:
            print(f"violation: {v}")
        return EXIT_DATA
    print(f"panel ok: {panel.n} months, {len(panel.disaggregates)} disaggregates, "
          f"{len(panel.predictors)} predictors")
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        cp = _load_config(args.config)
        plan, _levels = _build_plan(cp, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        panel, schemes = _load_data(cp)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"data error: missing file {exc}", file=sys.stderr)
        return EXIT_DATA
    violations = panel_mod.validate_panel(panel, schemes)
    if violations:
        for v in violations:
            print(f"violation: {v}", file=sys.stderr)
        return EXIT_DATA
    workers = 1 if args.deterministic else (args.workers or os.cpu_count() or 1)

    def progress(origin, done, total):
        print(f"origin {format_month(origin)} done ({done}/{total})", flush=True)

    store = harness.run_expanding_window(
        plan, panel, schemes, workers=workers, progress=progress
    )
    out = _out_dir(cp, args.out)
    harness.write_forecasts_csv(store, out / "forecasts.csv")
    harness.write_selections_csv(store, out / "fit_selections.csv")
    if store.errors:
        with open(out / "fit_errors.csv", "w") as f:
            f.write("model,level,component,origin,horizon,error\n")
            for key in sorted(store.errors):
                model, level, comp, origin, h = key
                msg = store.errors[key].replace('"', "'")
                f.write(f'{model},{level},{comp},{format_month(origin)},{h},"{msg}"\n')
    print(f"{len(store.records)} forecasts, {len(store.errors)} failed cells "
          f"-> {out / 'forecasts.csv'}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    try:
        cp = _load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = _out_dir(cp, args.out)
    fpath = out / "forecasts.csv"
    if not fpath.exists():
        print(f"missing artifacts: {fpath} (run `bucast run` first)", file=sys.stderr)
        return EXIT_MISSING
    try:
        panel, _schemes = _load_data(cp)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"data error: missing file {exc}", file=sys.stderr)
        return EXIT_DATA
    store = harness.read_forecasts_csv(fpath)
    sel_path = out / "fit_selections.csv"
    if sel_path.exists():
        harness.read_selections_csv(sel_path, store)
    benchmark = "RW"
    hac = True
    subperiods = [ev.FULL_PERIOD]
    if cp.has_section("evaluation"):
        benchmark = cp["evaluation"].get("benchmark", benchmark)
        hac = cp["evaluation"].get("hac", "true").lower() != "false"
        extra = cp["evaluation"].get("subperiods")
        if extra:
            subperiods = [ev.FULL_PERIOD] + _parse_subperiods(extra)
    try:
        rows = ev.build_report(store, panel, benchmark, subperiods, hac=hac)
    except KeyError as exc:
        print(f"missing artifacts: {exc}", file=sys.stderr)
        return EXIT_MISSING
    ev.write_report_csv(rows, out / "report.csv")
    freqs = ev.selection_frequencies(store)
    ev.write_selection_csv(freqs, out / "selection.csv")
    print(ev.format_report_table(rows))
    print(f"\nreport -> {out / 'report.csv'}; selection -> {out / 'selection.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="bucast",
        description="Hierarchical bottom-up inflation forecasting engine",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic panel as CSVs")
    g.add_argument("--out", default="out")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--months", type=int, default=220)
    g.add_argument("--start", default="2004-01")
    g.add_argument("--subgroups", type=int, default=19)
    g.add_argument("--groups", type=int, default=9)
    g.add_argument("--categories", type=int, default=3)
    g.add_argument("--predictors", type=int, default=90)
    g.add_argument("--factors", type=int, default=3)
    g.add_argument("--sparsity", type=int, default=5)
    g.add_argument("--noise", type=float, default=0.22)
    g.set_defaults(func=cmd_generate)

    v = sub.add_parser("validate", help="check panel/weights/meta invariants")
    v.add_argument("--config", required=True)
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("run", help="run the expanding-window forecast grid")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--out", default=None)
    r.add_argument("--workers", type=int, default=None)
    r.add_argument("--deterministic", action="store_true",
                   help="force the canonical serial cell ordering")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("evaluate", help="build report.csv and selection.csv")
    e.add_argument("--config", required=True)
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_evaluate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
