"""Synthetic microdata with planted ground truth.

Writes a CSV in the population schema whose generating process is fully
known: families are simulated from given model parameters per cohort,
parents' earnings land in the years around the child's 18th birthday,
children's earnings in the years around their own 36th, and a sidecar
JSON records the parameters, seed, and sample size. Every estimator in
the package can be checked against the planted truth by loading such a
file.
"""

from __future__ import annotations

import json

import numpy as np
import pandas as pd

from mobkit.model import ModelParams, QuantileMap, simulate_population

CHILD_AGES = (35, 36, 37)
PARENT_AGES = (17, 18, 19)  # ages of the child at parent income measurement


def default_maps(seed: int = 7, size: int = 50_000) -> dict[str, QuantileMap]:
    """Earnings maps shaped like register data: lognormal with a zero floor.

    Mothers carry a substantial share of zero earners and a lower scale
    than fathers, daughters a smaller gap to sons; the exact shares and
    scales are stylized, not estimates.
    """
    rng = np.random.default_rng(seed)
    shapes = {
        "F": (0.06, 10.4, 0.55),  # (zero share, log-scale, log-sd)
        "M": (0.25, 9.4, 0.60),
        "S": (0.02, 10.5, 0.55),
        "D": (0.04, 10.0, 0.55),
    }
    maps = {}
    for role, (zero_share, mu, sigma) in shapes.items():
        sample = np.exp(mu + sigma * rng.standard_normal(size))
        zeros = rng.random(size) < zero_share
        sample[zeros] = 0.0
        maps[role] = QuantileMap(sample)
    return maps


def _education(rng, skills) -> np.ndarray:
    years = np.rint(11.0 + 2.2 * skills + 1.2 * rng.standard_normal(skills.size))
    return np.clip(years, 5, 22)


def _occupation(rng, skills, earnings) -> np.ndarray:
    # decile of a noisy skill signal; zero earners report no occupation
    signal = skills + 0.8 * rng.standard_normal(skills.size)
    order = signal.argsort().argsort()
    group = (order * 10) // skills.size
    group = np.clip(group, 0, 9)
    group[earnings == 0] = 10
    return group.astype(int)


def generate_synthetic(
    params_by_cohort: dict[int, ModelParams],
    maps: dict[str, QuantileMap],
    n: int,
    seed: int,
    out_path,
) -> dict:
    """Write planted microdata to ``out_path`` plus a truth sidecar.

    Each cohort contributes ``n`` families of four persons (father,
    mother, son, daughter). Returns the sidecar dictionary, which is
    also written to ``<out_path>.truth.json``.
    """
    cohorts = sorted(params_by_cohort)
    if not cohorts:
        raise ValueError("no cohorts to generate")
    year_lo = cohorts[0] + PARENT_AGES[0]
    year_hi = cohorts[-1] + CHILD_AGES[-1]
    income_years = list(range(year_lo, year_hi + 1))

    frames = []
    for cohort in cohorts:
        cohort_seed = int(np.random.SeedSequence([seed, cohort]).generate_state(1)[0])
        pop = simulate_population(params_by_cohort[cohort], maps, n, cohort_seed)
        rng = np.random.default_rng(cohort_seed + 1)
        parent_years = [cohort + a for a in PARENT_AGES]
        child_years = [cohort + a for a in CHILD_AGES]

        ids = np.arange(n)
        spec = [
            ("F", "M", cohort - 29, parent_years),
            ("M", "F", cohort - 27, parent_years),
            ("S", "M", cohort, child_years),
            ("D", "F", cohort, child_years),
        ]
        persons = {}
        for role, sex, birth, years in spec:
            earnings = np.round(pop.earnings[role], 2)
            frame = pd.DataFrame({
                "person_id": [f"{cohort}{role}{i}" for i in ids],
                "birth_year": birth,
                "sex": sex,
                "edu_years": _education(rng, pop.skills[role]),
                "occ_group": _occupation(rng, pop.skills[role], earnings),
            })
            for year in years:
                frame[f"inc_{year}"] = earnings
            persons[role] = frame
        persons["S"]["father_id"] = persons["F"]["person_id"].to_numpy()
        persons["S"]["mother_id"] = persons["M"]["person_id"].to_numpy()
        persons["D"]["father_id"] = persons["F"]["person_id"].to_numpy()
        persons["D"]["mother_id"] = persons["M"]["person_id"].to_numpy()
        frames.extend(persons.values())

    table = pd.concat(frames, ignore_index=True)
    columns = ["person_id", "birth_year", "sex", "edu_years", "occ_group",
               "father_id", "mother_id"] + [f"inc_{y}" for y in income_years]
    table = table.reindex(columns=columns)
    table.to_csv(out_path, index=False)

    sidecar = {
        "n_families_per_cohort": n,
        "seed": seed,
        "cohorts": {
            str(cohort): {
                "psi": p.psi, "kappa": p.kappa, "alpha": p.alpha,
                "phi_m": p.phi_m, "phi_d": p.phi_d,
            }
            for cohort, p in params_by_cohort.items()
        },
        "child_ages": list(CHILD_AGES),
        "parent_ages": list(PARENT_AGES),
    }
    with open(f"{out_path}.truth.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
    return sidecar


def load_params_table(path) -> dict[int, ModelParams]:
    """Read a per-cohort parameter table (TSV: cohort + five parameters)."""
    frame = pd.read_csv(path, sep="\t")
    required = {"cohort", "psi", "kappa", "alpha", "phi_m", "phi_d"}
    missing = required - set(frame.columns)
    if missing:
        raise ValueError(f"parameter table missing columns: {sorted(missing)}")
    return {
        int(row.cohort): ModelParams(
            psi=row.psi, kappa=row.kappa, alpha=row.alpha,
            phi_m=row.phi_m, phi_d=row.phi_d,
        )
        for row in frame.itertuples()
    }
