"""Command-line front end.

Subcommands::

    designfx fit      --config cfg.yaml [--out DIR]
    designfx placebo  --config cfg.yaml [--seed N] [--threads N] [--out DIR]
    designfx trends   --config cfg.yaml [--out DIR]
    designfx simulate --config cfg.yaml [--seed N] [--out DIR]
    designfx concord  --config cfg.yaml [--out DIR]

Every command reads one YAML config (see :mod:`designfx.config`), writes
its artifacts into the output directory, prints the paths written, and
exits 0 only if all requested artifacts were produced. Outputs are
deterministic given config and seeds; wall-clock timestamps appear only
inside the JSON ``meta`` field.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .config import RunConfig, load_config
from .errors import DesignFxError
from .randomization import export_density, run_placebo, two_tailed_p
from .regression import RegressionSpec, estimate_spec
from .survey_time import TREATED_FRACTION, cohort_compare
from .synthetic import generate
from .treatment import resolve_rollout_year

logger = logging.getLogger(__name__)


def _meta(config_path: str) -> dict:
    return {
        "tool": f"designfx {__version__}",
        "config": str(config_path),
        "generated_at": dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
    }


def _write_json(path: Path, payload: dict) -> Path:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _print_written(paths: list[Path]) -> None:
    for p in paths:
        print(f"wrote {p}")


def _fit_all(config: RunConfig) -> dict:
    table = config.load_table()
    schedule = config.load_schedule()
    concordance = config.load_concordance()
    cpi = config.load_cpi()
    extra = config.treatment_params()
    results = {}
    for name, spec in config.specs():
        fit = estimate_spec(table, spec, schedule, concordance, cpi, **extra)
        results[name] = fit
    return results


def _fit_text_table(results: dict) -> str:
    header = f"{'spec':<24} {'estimate':>10} {'se':>10} {'n':>8} {'clusters':>9}  options"
    lines = [header, "-" * len(header)]
    for name, fit in results.items():
        opts = []
        if fit.k_design > 1:
            opts.append(f"{fit.k_design - 1} extra column(s)")
        lines.append(
            f"{name:<24} {fit.delta:>10.4f} {fit.se_delta:>10.4f} "
            f"{fit.n_used:>8d} {fit.n_clusters:>9d}  {', '.join(opts) or '-'}"
        )
    return "\n".join(lines) + "\n"


def cmd_fit(args) -> int:
    config = load_config(args.config)
    out_dir = config.output_dir(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = _fit_all(config)
    payload = {
        "meta": _meta(args.config),
        "results": {name: fit.to_dict() for name, fit in results.items()},
    }
    written = [_write_json(out_dir / "fit_results.json", payload)]
    text_path = out_dir / "fit_results.txt"
    text_path.write_text(_fit_text_table(results), encoding="utf-8")
    written.append(text_path)
    _print_written(written)
    return 0


def cmd_placebo(args) -> int:
    config = load_config(args.config)
    out_dir = config.output_dir(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = config.load_table()
    schedule = config.load_schedule()
    concordance = config.load_concordance()
    cpi = config.load_cpi()
    extra = config.treatment_params()
    params = config.placebo_params()
    if args.seed is not None:
        params["master_seed"] = args.seed
    if args.threads is not None:
        params["threads"] = args.threads

    all_specs = config.specs()
    if params["spec"] is not None:
        all_specs = [(n, s) for n, s in all_specs if n == params["spec"]]
        if not all_specs:
            raise DesignFxError(f"placebo.spec {params['spec']!r} matches no spec")

    written = []
    for name, spec in all_specs:
        observed = estimate_spec(table, spec, schedule, concordance, cpi, **extra)
        dist = run_placebo(
            table,
            spec,
            schedule,
            concordance,
            K=params["K"],
            master_seed=params["master_seed"],
            threads=params["threads"],
            **extra,
        )
        p = two_tailed_p(dist, observed.delta)
        density = export_density(dist, observed=observed.delta)
        payload = {
            "meta": _meta(args.config),
            "spec": name,
            "observed": observed.delta,
            "observed_se": observed.se_delta,
            "p_two_tailed": p,
            **dist.to_dict(),
            "density_markers": density.markers(),
        }
        written.append(_write_json(out_dir / f"placebo_{name}.json", payload))
        density_path = out_dir / f"placebo_{name}_density.csv"
        density.to_csv(density_path)
        written.append(density_path)
        print(
            f"{name}: observed {observed.delta:+.4f}, design effect "
            f"{dist.design_effect:+.4f}, p = {p:.4f} ({dist.K} replications)"
        )
    _print_written(written)
    return 0


def cmd_trends(args) -> int:
    config = load_config(args.config)
    out_dir = config.output_dir(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = config.load_table()
    schedule = config.load_schedule()
    concordance = config.load_concordance()
    params = config.trend_params()
    comp = cohort_compare(
        table,
        params["cohorts"],
        schedule,
        concordance,
        variables=params["variables"],
        bandwidth_days=params["bandwidth_days"],
        **config.treatment_params(),
    )
    no_fit = {
        "slope_per_window": math.nan,
        "intercept": math.nan,
        "stderr_per_window": math.nan,
        "n": 0,
    }
    written = []
    fits = {}
    for (cohort, variable), curve in comp.curves.items():
        stem = f"trend_{cohort}_{variable}"
        curve_path = out_dir / f"{stem}.csv"
        curve.to_csv(curve_path)
        written.append(curve_path)
        fit_dict = curve.fit.to_dict() if curve.fit is not None else dict(no_fit)
        fit_path = out_dir / f"{stem}_fit.csv"
        pd.DataFrame([fit_dict]).to_csv(fit_path, index=False)
        written.append(fit_path)
        fits[f"{cohort}/{variable}"] = fit_dict
    summary = {
        "meta": _meta(args.config),
        "cohorts": {k: list(v) for k, v in comp.cohorts.items()},
        "fits": fits,
        "slope_deltas": comp.slope_deltas,
    }
    written.append(_write_json(out_dir / "trends_summary.json", summary))
    _print_written(written)
    return 0


def _mechanism_report(config: RunConfig, table, schedule, concordance, seed: int) -> dict:
    """Estimate the key specs on one synthetic draw and flag the mechanism.

    The cohort-FE spec identifies the treatment across districts within
    birth cohorts. The age-cell spec absorbs district-by-age cells, where
    the reported birth year (interview year minus age) jumps at the
    calendar boundary; any survey-time drift then loads onto the
    treatment coefficient, which survey-month dummies should absorb.
    """
    extra = config.treatment_params()
    spec_cohort = RegressionSpec(outcome="log_wage", absorb=("district", "birth_year"))
    spec_age_cell = RegressionSpec(outcome="log_wage", absorb=("district^age_years",))
    spec_age_cell_md = RegressionSpec(
        outcome="log_wage", absorb=("district^age_years",), month_dummies=True
    )

    fits = {
        "cohort_fe": estimate_spec(table, spec_cohort, schedule, concordance, **extra),
        "age_cell_fe": estimate_spec(table, spec_age_cell, schedule, concordance, **extra),
        "age_cell_fe_month_dummies": estimate_spec(
            table, spec_age_cell_md, schedule, concordance, **extra
        ),
    }
    dist = run_placebo(
        table,
        spec_age_cell,
        schedule,
        concordance,
        K=config.simulate_placebo_k(),
        master_seed=seed,
        **extra,
    )
    md = fits["age_cell_fe_month_dummies"]
    report = {
        "fits": {name: fit.to_dict() for name, fit in fits.items()},
        "design_effect": dist.design_effect,
        "p_design_effect_vs_zero": two_tailed_p(dist, 0.0),
        "placebo_K": dist.K,
        "flags": {
            "positive_design_effect": bool(
                dist.design_effect > 0 and two_tailed_p(dist, 0.0) < 0.05
            ),
            "month_dummy_nullification": bool(abs(md.delta) < 2.0 * md.se_delta),
        },
    }
    return report


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    out_dir = config.output_dir(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    dgp = config.dgp(seed_override=args.seed)
    table, schedule, concordance = generate(dgp)

    written = []
    obs_path = out_dir / "observations.csv"
    table.to_csv(obs_path)
    written.append(obs_path)
    sched_path = out_dir / "schedule.csv"
    schedule.to_csv(sched_path)
    written.append(sched_path)
    conc_path = out_dir / "concordance.csv"
    concordance.to_csv(conc_path)
    written.append(conc_path)
    print(f"generated {len(table)} rows across {len(schedule)} districts (seed {dgp.seed})")

    if config.simulate_report():
        report = _mechanism_report(config, table, schedule, concordance, dgp.seed)
        report["meta"] = _meta(args.config)
        report["dgp"] = {
            "n_districts": dgp.n_districts,
            "n_per_district": dgp.n_per_district,
            "true_effect": dgp.true_effect,
            "drift": dgp.drift,
            "seed": dgp.seed,
        }
        written.append(_write_json(out_dir / "mechanism_report.json", report))
        flags = report["flags"]
        print(
            "mechanism report: design effect "
            f"{report['design_effect']:+.4f} (p vs 0: {report['p_design_effect_vs_zero']:.4f}), "
            f"positive_design_effect={flags['positive_design_effect']}, "
            f"month_dummy_nullification={flags['month_dummy_nullification']}"
        )
    _print_written(written)
    return 0


def cmd_concord(args) -> int:
    config = load_config(args.config)
    out_dir = config.output_dir(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    schedule = config.load_schedule()
    concordance = config.load_concordance()
    if concordance is None:
        raise DesignFxError("data.concordance is required for `concord`")
    sd_threshold = config.treatment_params().get("sd_threshold", 0.1)
    year_map = schedule.year_map()

    rows = []
    for district in concordance.districts():
        parents, _ = concordance.parents(district)
        if any(p not in year_map for p in parents):
            status, year = "unscheduled-parent", ""
        else:
            resolved = resolve_rollout_year(district, concordance, schedule, sd_threshold)
            if resolved is None:
                status, year = "mixed-parentage", ""
            else:
                status, year = "resolved", resolved
        rows.append({"district": district, "rollout_year": year, "status": status})

    frame = pd.DataFrame(rows)
    report_path = out_dir / "concordance_report.csv"
    frame.to_csv(report_path, index=False)
    counts = frame["status"].value_counts().to_dict()
    total = len(frame)
    resolved = counts.get("resolved", 0)
    print(
        f"{resolved}/{total} districts resolved; "
        + ", ".join(f"{k}: {v}" for k, v in sorted(counts.items()))
    )
    _print_written([report_path])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="designfx",
        description=(
            "Diagnostics for staggered-rollout cross-sectional designs: "
            "fixed-effects estimation, placebo-rollout design effects, and "
            "survey-time trend decomposition."
        ),
    )
    parser.add_argument("--version", action="version", version=f"designfx {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, seed=False, threads=False):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        if seed:
            p.add_argument("--seed", type=int, default=None, help="override the master seed")
        if threads:
            p.add_argument("--threads", type=int, default=None, help="worker threads")
        p.set_defaults(func=func)
        return p

    add("fit", cmd_fit, "estimate the configured specifications")
    add("placebo", cmd_placebo, "placebo-rollout distribution and design effects",
        seed=True, threads=True)
    add("trends", cmd_trends, "per-cohort survey-time trajectories")
    add("simulate", cmd_simulate, "generate synthetic data (and optional mechanism report)",
        seed=True)
    add("concord", cmd_concord, "resolve rollout years through the concordance")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DesignFxError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
