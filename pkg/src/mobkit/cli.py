"""Configuration-driven pipeline runner.

Subcommands: ``estimate``, ``lw``, ``calibrate``, ``decompose``,
``synth``, and ``pipeline`` (all selected stages in order). Every run
writes plot-ready TSVs plus ``manifest.json`` recording the resolved
configuration, its hash, the master seed and library versions; the
manifest is written even when a stage fails, with the failure point
marked. Identical (config, seed) runs produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd

import mobkit
from mobkit import calibration, decomposition, estimators, lw, population, ranking
from mobkit.config import (
    PipelineConfig,
    apply_setting,
    parse_config_file,
    stage_seed,
)
from mobkit.model import ModelParams, fit_quantile_map
from mobkit.synthetic import default_maps, generate_synthetic, load_params_table

SPEC_FILTERS = {
    # spec label -> (child sex or None, parent column)
    "all": (None, "parent_income"),
    "son-parent": ("M", "parent_income"),
    "daughter-parent": ("F", "parent_income"),
    "son-father": ("M", "father_income"),
    "son-mother": ("M", "mother_income"),
    "daughter-father": ("F", "father_income"),
    "daughter-mother": ("F", "mother_income"),
}


def _load_pairs(config: PipelineConfig):
    if not config.input:
        raise ValueError("no input file configured (key: input)")
    persons = population.load_microdata(config.input)
    child_window = population.IncomeWindow(
        "own_age", config.child_age_center, config.child_age_halfwidth)
    parent_window = population.IncomeWindow(
        "child_age", config.parent_age_center, config.parent_age_halfwidth)
    pairs, report = population.build_pairs(
        persons, child_window=child_window, parent_window=parent_window)
    if pairs.empty:
        raise ValueError("no parent-child pairs could be built from the input")
    cohorts = config.cohort_range(pairs["cohort"].unique())
    pairs = pairs[pairs["cohort"].isin(cohorts)].reset_index(drop=True)
    if config.participation_scope != "none":
        pairs = estimators.participation_filter(
            pairs, config.participation_threshold, config.participation_scope)
        if pairs.empty:
            raise ValueError("participation filter removed every pair")
    return pairs, cohorts, report


def _spec_sample(pairs, spec: str):
    sex, parent_col = SPEC_FILTERS[spec]
    sample = pairs if sex is None else pairs[pairs["child_sex"] == sex]
    return sample[sample[parent_col].notna() & sample["child_income"].notna()], parent_col


def run_estimate(config: PipelineConfig, pairs, cohorts):
    """Per-cohort IRA (and IGE) estimates plus linear trends, per spec."""
    estimates, iges = [], []
    for spec in config.specs:
        if spec not in SPEC_FILTERS:
            raise ValueError(f"unknown estimator spec {spec!r}")
        sample, parent_col = _spec_sample(pairs, spec)
        for cohort in cohorts:
            sub = sample[sample["cohort"] == cohort]
            if len(sub) < 3:
                continue
            child_groups = (
                sub["child_sex"].to_numpy() if config.gender_rerank else None)
            child_rank = ranking.percentile_ranks(
                sub["child_income"].to_numpy(), child_groups)
            parent_rank = ranking.percentile_ranks(sub[parent_col].to_numpy())
            try:
                estimates.append(estimators.ira(
                    child_rank, parent_rank, cohort=cohort, spec_label=spec))
            except ValueError:
                continue
            if config.include_ige and spec == "all":
                try:
                    iges.append(estimators.ige(
                        sub["child_income"].to_numpy(), sub[parent_col].to_numpy(),
                        cohort=cohort, spec_label="ige-all"))
                except ValueError:
                    pass

    trends = []
    for spec in list(config.specs) + (["ige-all"] if iges else []):
        series = [e for e in estimates + iges if e.spec_label == spec]
        if len(series) >= 2:
            trends.append(estimators.trend_fit(series))
    return estimates + iges, trends


def _lw_cohort(sub, spec: str, cohort: int, config: PipelineConfig):
    flipped = spec == "daughter-father"
    if flipped:
        # proxy the daughter's status; the father's income rank is the outcome
        outcome_income = sub["father_income"].to_numpy()
        proxy_income = sub["child_income"].to_numpy()
        proxy_edu = sub["child_edu"].to_numpy(dtype=float)
        proxy_occ = sub["child_occ"].to_numpy()
    else:
        parent = spec.split("-")[1]
        outcome_income = sub["child_income"].to_numpy()
        proxy_income = sub[f"{parent}_income"].to_numpy()
        proxy_edu = sub[f"{parent}_edu"].to_numpy(dtype=float)
        proxy_occ = sub[f"{parent}_occ"].to_numpy()

    outcome_log = lw.token_log_income(
        outcome_income, config.participation_threshold, config.token_divisor)
    proxies = lw.build_proxy_matrix(
        proxy_income, proxy_edu, proxy_occ,
        config.participation_threshold, config.token_divisor)
    fit = lw.lw_weights(outcome_log, proxies)
    index_ranks = lw.lw_index_ranks(fit, proxies)
    outcome_ranks = ranking.percentile_ranks(outcome_income)
    record = lw.lw_rank_association(
        outcome_ranks, index_ranks, cohort=cohort, spec_label=f"lw-{spec}")
    contribs = lw.proxy_contributions(fit)
    return {
        "cohort": cohort,
        "spec": spec,
        "beta_lw": fit.beta_lw,
        "slope": record.slope,
        "se": record.se_slope,
        "n": record.n,
        "contrib_income": contribs.get(lw.ANCHOR_LABEL, np.nan),
        "contrib_education": contribs.get(lw.EDUCATION_LABEL, np.nan),
        "contrib_occupation": contribs.get("occupation", np.nan),
    }


def run_lw(config: PipelineConfig, pairs, cohorts) -> pd.DataFrame:
    """Proxy-index rank associations per cohort and spec."""
    rows = []
    for spec in config.lw_specs:
        sex, parent_col = SPEC_FILTERS[spec]
        sample = pairs[pairs["child_sex"] == sex]
        sample = sample[sample[parent_col].notna() & sample["child_income"].notna()]
        edu_col = "child_edu" if spec == "daughter-father" else f"{spec.split('-')[1]}_edu"
        sample = sample[sample[edu_col].notna()]
        for cohort in cohorts:
            sub = sample[sample["cohort"] == cohort]
            if len(sub) < 20:
                continue
            try:
                rows.append(_lw_cohort(sub, spec, cohort, config))
            except ValueError:
                continue
    return pd.DataFrame(rows, columns=[
        "cohort", "spec", "beta_lw", "slope", "se", "n",
        "contrib_income", "contrib_education", "contrib_occupation"])


def _maps_from_pairs(sub) -> dict:
    samples = {
        "F": sub["father_income"].dropna().to_numpy(),
        "M": sub["mother_income"].dropna().to_numpy(),
        "S": sub.loc[sub["child_sex"] == "M", "child_income"].dropna().to_numpy(),
        "D": sub.loc[sub["child_sex"] == "F", "child_income"].dropna().to_numpy(),
    }
    for role, sample in samples.items():
        if sample.size == 0:
            raise ValueError(f"no earnings observations to fit the {role} map")
    return {role: fit_quantile_map(sample) for role, sample in samples.items()}


def run_calibrate(config: PipelineConfig, pairs, cohorts):
    """Per-cohort moment targets, data-fitted maps, warm-started chain."""
    targets, maps_by_cohort = {}, {}
    for cohort in cohorts:
        sub = pairs[pairs["cohort"] == cohort]
        try:
            targets[cohort] = calibration.moment_vector_from_pairs(sub)
            maps_by_cohort[cohort] = _maps_from_pairs(sub)
        except ValueError:
            continue
    if not targets:
        raise ValueError("no cohort offers all five moment samples")
    settings = calibration.CalibrationSettings(
        n_sim=config.calib_n_sim,
        max_iters=config.calib_max_iters,
        tolerance=config.calib_tolerance,
        fd_step=config.calib_fd_step,
        patience=config.calib_patience,
        seed=stage_seed(config.seed, "calibrate"),
    )
    result = calibration.calibrate_sequence(targets, settings, maps_by_cohort)
    return result, maps_by_cohort


def run_decompose(config: PipelineConfig, estimates, chain, maps_by_cohort):
    """Counterfactual attribution over the calibrated chain's range."""
    observed = [e for e in estimates if e.spec_label == "all" and e.cohort in chain]
    if len(observed) < 2:
        raise ValueError("decomposition needs >= 2 cohorts of 'all' estimates")
    cohorts = sorted(chain)
    baseline = cohorts[0] if config.decomp_baseline == "first" else int(config.decomp_baseline)
    return decomposition.decompose(
        observed,
        chain,
        maps_by_cohort,
        year_range=(cohorts[0], cohorts[-1]),
        baseline_cohort=baseline,
        n=config.decomp_n,
        seed=stage_seed(config.seed, "decompose"),
    )


def _write_tsv(frame: pd.DataFrame, path: Path) -> None:
    frame.to_csv(path, sep="\t", index=False)


def run_pipeline(config: PipelineConfig) -> int:
    """Execute the configured stages in order; returns the exit code.

    Stage products feed forward in memory (calibrate consumes the pair
    table, decompose consumes the calibrated chain). The manifest is
    written even on failure, with the failing stage marked.
    """
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "config": dict(config.as_items()),
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "versions": {
            "mobkit": mobkit.__version__,
            "numpy": np.__version__,
            "pandas": pd.__version__,
        },
        "stages": {},
        "outputs": [],
        "status": "ok",
    }
    order = [s for s in ("estimate", "lw", "calibrate", "decompose") if s in config.stages]
    estimates = []
    chain, maps_by_cohort = None, None
    exit_code = 0
    try:
        pairs, cohorts, report = _load_pairs(config)
        manifest["exclusions"] = report
        for stage in order:
            try:
                if stage == "estimate":
                    estimates, trends = run_estimate(config, pairs, cohorts)
                    _write_tsv(estimators.estimates_to_frame(estimates),
                               out_dir / "estimates.tsv")
                    _write_tsv(estimators.trends_to_frame(trends), out_dir / "trends.tsv")
                    manifest["outputs"] += ["estimates.tsv", "trends.tsv"]
                elif stage == "lw":
                    _write_tsv(run_lw(config, pairs, cohorts), out_dir / "lw.tsv")
                    manifest["outputs"].append("lw.tsv")
                elif stage == "calibrate":
                    result, maps_by_cohort = run_calibrate(config, pairs, cohorts)
                    chain = result.params_chain()
                    _write_tsv(result.to_frame(), out_dir / "calibration.tsv")
                    manifest["outputs"].append("calibration.tsv")
                    if result.failures:
                        manifest["calibration_failures"] = {
                            str(k): v for k, v in result.failures.items()}
                elif stage == "decompose":
                    if chain is None:
                        raise ValueError("decompose requires the calibrate stage")
                    if not estimates:
                        raise ValueError("decompose requires the estimate stage")
                    result = run_decompose(config, estimates, chain, maps_by_cohort)
                    _write_tsv(result.to_frame(), out_dir / "decomposition.tsv")
                    manifest["outputs"].append("decomposition.tsv")
                manifest["stages"][stage] = "ok"
            except Exception as exc:
                manifest["stages"][stage] = f"failed: {exc}"
                manifest["status"] = "failed"
                print(f"stage {stage} failed: {exc}", file=sys.stderr)
                exit_code = 1
                break
    except Exception as exc:
        manifest["status"] = "failed"
        manifest["stages"]["load"] = f"failed: {exc}"
        print(f"input loading failed: {exc}", file=sys.stderr)
        exit_code = 1
    finally:
        with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
    return exit_code


def run_synth(config: PipelineConfig, params_path: str, n: int, out_path: str) -> int:
    """Generate planted microdata in the population CSV schema."""
    params_by_cohort = load_params_table(params_path)
    maps = default_maps()
    generate_synthetic(
        params_by_cohort, maps, n,
        seed=stage_seed(config.seed, "synth"),
        out_path=out_path,
    )
    print(f"wrote {out_path} and {out_path}.truth.json")
    return 0


def _build_config(args) -> PipelineConfig:
    config = PipelineConfig()
    if args.config:
        config = parse_config_file(args.config, config)
    for key, flag in (("input", "input"), ("output_dir", "output_dir"), ("seed", "seed")):
        value = getattr(args, flag, None)
        if value is not None:
            apply_setting(config, key, str(value))
    for item in args.set or []:
        if "=" not in item:
            raise SystemExit(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        apply_setting(config, key.strip(), raw.strip())
    return config


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mobkit",
        description="Intergenerational mobility estimation, calibration and decomposition.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--input", help="input microdata CSV")
        p.add_argument("--output-dir", dest="output_dir", help="output directory")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override any configuration key (repeatable)")

    for name in ("estimate", "lw", "calibrate", "decompose", "pipeline"):
        p = sub.add_parser(name, help=f"run the {name} stage" if name != "pipeline"
                           else "run all configured stages")
        add_common(p)

    p = sub.add_parser("synth", help="generate planted synthetic microdata")
    add_common(p)
    p.add_argument("--params", required=True,
                   help="TSV of per-cohort parameters (cohort, psi, kappa, alpha, phi_m, phi_d)")
    p.add_argument("--n", type=int, default=5_000, help="families per cohort")
    p.add_argument("--out", required=True, help="output CSV path")

    args = parser.parse_args(argv)
    config = _build_config(args)

    if args.command == "synth":
        return run_synth(config, args.params, args.n, args.out)
    if args.command == "pipeline":
        return run_pipeline(config)
    stage_set = (args.command,)
    if args.command == "decompose":
        # decompose depends on estimates and a calibrated chain
        stage_set = ("estimate", "calibrate", "decompose")
    elif args.command == "calibrate":
        stage_set = ("calibrate",)
    config.stages = stage_set
    return run_pipeline(config)


if __name__ == "__main__":
    raise SystemExit(main())
