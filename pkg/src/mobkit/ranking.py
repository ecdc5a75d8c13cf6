"""Percentile-rank and ventile transforms within declared groups.

Ranks are midranks on a 0-100 scale: ``rank = 100 * (midrank - 0.5) / n``
with tied observations sharing the average of their ordinal positions.
This keeps the group mean at exactly 50 for every group size and makes
the transform deterministic in the presence of the large ties that zero
incomes create.
"""

from __future__ import annotations

import numpy as np
import pandas as pd
from scipy.stats import rankdata


def percentile_ranks(values, groups=None) -> np.ndarray:
    """Midrank percentile ranks in [0, 100], computed within each group.

    Parameters
    ----------
    values : array-like of float
        Quantities to rank. Must be finite.
    groups : array-like, optional
        Partition labels; ranks are computed within each label. ``None``
        ranks the whole array as one group.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("cannot rank an empty group")
    if not np.all(np.isfinite(values)):
        raise ValueError("values to rank must be finite")
    out = np.empty(values.shape, dtype=float)
    if groups is None:
        mid = rankdata(values, method="average")
        return 100.0 * (mid - 0.5) / values.size
    groups = np.asarray(groups)
    for key in np.unique(groups):
        mask = groups == key
        mid = rankdata(values[mask], method="average")
        out[mask] = 100.0 * (mid - 0.5) / mask.sum()
    return out


def ventiles(values, groups=None) -> np.ndarray:
    """Ventile (1..20) of each value's percentile rank within its group."""
    ranks = percentile_ranks(values, groups)
    return ventile_of_rank(ranks)


def ventile_of_rank(ranks) -> np.ndarray:
    """Map ranks in [0, 100] to ventile bins 1..20."""
    v = np.ceil(np.asarray(ranks, dtype=float) / 5.0).astype(int)
    return np.clip(v, 1, 20)


def ventile_midrank(ventile) -> np.ndarray:
    """Midpoint rank of a ventile bin: bin v covers (5v-5, 5v], midpoint 5v-2.5."""
    return 5.0 * np.asarray(ventile, dtype=float) - 2.5


def rank_pairs(
    pairs: pd.DataFrame,
    child_col: str = "child_income",
    parent_col: str = "parent_income",
    child_by_gender: bool = False,
) -> pd.DataFrame:
    """Attach within-cohort percentile ranks to a pair table.

    Child ranks are computed within birth cohort, optionally within
    cohort x gender cells (``child_by_gender``). Parent ranks are
    computed within the child's cohort, i.e. among the parents of all
    children born that year. Rows with a missing value on either side
    are dropped before ranking.

    Returns a copy with ``child_rank``, ``parent_rank`` and ``group_key``
    columns added.
    """
    keep = pairs[child_col].notna() & pairs[parent_col].notna()
    out = pairs.loc[keep].copy()
    if out.empty:
        raise ValueError("no complete rows to rank")
    cohort = out["cohort"].to_numpy()
    if child_by_gender:
        sex = out["child_sex"].astype(str).to_numpy()
        child_groups = np.char.add(cohort.astype(str), np.char.add("|", sex))
        out["group_key"] = child_groups
    else:
        child_groups = cohort
        out["group_key"] = cohort.astype(str)
    out["child_rank"] = percentile_ranks(out[child_col].to_numpy(), child_groups)
    out["parent_rank"] = percentile_ranks(out[parent_col].to_numpy(), cohort)
    return out


def rerank_by_gender(
    pairs: pd.DataFrame,
    dimension: str,
    value_col: str | None = None,
) -> tuple[pd.DataFrame, dict[str, int]]:
    """Recompute one dimension's ranks within cohort x gender cells.

    ``dimension`` is ``"child"`` or ``"parent"``. The child dimension
    groups on ``child_sex``; the parent dimension requires a
    ``parent_sex`` column (constant ``"M"``/``"F"`` when the parent
    income column holds fathers or mothers only). Rows with a missing
    sex are excluded and counted in the returned report.
    """
    if dimension not in ("child", "parent"):
        raise ValueError("dimension must be 'child' or 'parent'")
    sex_col = "child_sex" if dimension == "child" else "parent_sex"
    if sex_col not in pairs.columns:
        raise ValueError(f"column {sex_col!r} required for gender re-ranking")
    if value_col is None:
        value_col = "child_income" if dimension == "child" else "parent_income"

    known = pairs[sex_col].isin(["M", "F"]) & pairs[value_col].notna()
    report = {"rows": int(len(pairs)), "excluded_missing_sex": int((~known).sum())}
    out = pairs.loc[known].copy()
    if out.empty:
        raise ValueError("no rows with known sex to re-rank")
    cohort = out["cohort"].astype(str).to_numpy()
    sex = out[sex_col].astype(str).to_numpy()
    groups = np.char.add(cohort, np.char.add("|", sex))
    rank_col = "child_rank" if dimension == "child" else "parent_rank"
    out[rank_col] = percentile_ranks(out[value_col].to_numpy(), groups)
    out["group_key"] = groups
    return out, report
