"""Proxy-variable estimator of latent economic status.

Several observables (log income, years of education, occupation-group
indicators) proxy one latent status variable. Each proxy j gets the
Wald-type weight

    rho_j = cov(child, x_j) / cov(child, parent log income),

so the parent-income weight is one by construction, and the aggregate
coefficient is beta = sum_j rho_j * b_j with b_j the multiple-OLS
coefficients of child log income on all proxies. A status index
(1/beta) * sum_j x_j * b_j is percentile-ranked and used in place of
the parent income rank, which strips the attenuation that measurement
error in one income margin puts on rank-rank slopes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mobkit import ranking
from mobkit._ols import ols
from mobkit.estimators import EstimateRecord, ira

ANCHOR_LABEL = "log_income"
EDUCATION_LABEL = "education"
OCC_PREFIX = "occ_"
OCC_MISSING_LABEL = "occ_missing"
N_OCC_GROUPS = 10


class ProxyMatrixError(ValueError):
    pass


@dataclass(frozen=True)
class ProxyMatrix:
    """Per-parent proxy columns; column 0 is always parent log income."""

    values: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ProxyMatrixError("proxy matrix must be 2-dimensional")
        if len(self.labels) != self.values.shape[1]:
            raise ProxyMatrixError("one label per column required")
        if len(set(self.labels)) != len(self.labels):
            raise ProxyMatrixError("duplicate proxy column labels")
        if self.labels[0] != ANCHOR_LABEL:
            raise ProxyMatrixError(f"first column must be {ANCHOR_LABEL!r}")
        if not np.all(np.isfinite(self.values)):
            raise ProxyMatrixError("proxy values must be finite")
        occ_cols = [j for j, lab in enumerate(self.labels) if lab.startswith(OCC_PREFIX)]
        if occ_cols:
            sums = self.values[:, occ_cols].sum(axis=1)
            if not np.allclose(sums, 1.0, rtol=0, atol=1e-12):
                raise ProxyMatrixError("occupation indicators must sum to 1 per row")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def occupation_columns(self) -> list[int]:
        return [j for j, lab in enumerate(self.labels) if lab.startswith(OCC_PREFIX)]


def token_log_income(income, threshold: float = 10_000.0, divisor: float = 100.0) -> np.ndarray:
    """Log income with zero earners set to a token low level.

    Zeros map to log(threshold / divisor); positive amounts map to their
    own log. The token level is configurable because only its rough
    magnitude matters for the rank-based results.
    """
    income = np.asarray(income, dtype=float)
    if np.any(income < 0):
        raise ValueError("incomes must be >= 0")
    token = np.log(threshold / divisor)
    out = np.full(income.shape, token)
    pos = income > 0
    out[pos] = np.log(income[pos])
    return out


def occupation_dummies(codes) -> tuple[np.ndarray, list[str]]:
    """Indicator block for occupation groups 0..9 plus a missing column."""
    codes = np.asarray(codes)
    block = np.zeros((codes.size, N_OCC_GROUPS + 1))
    labels = [f"{OCC_PREFIX}{g}" for g in range(N_OCC_GROUPS)] + [OCC_MISSING_LABEL]
    for j in range(N_OCC_GROUPS):
        block[:, j] = codes == j
    block[:, N_OCC_GROUPS] = ~np.isin(codes, np.arange(N_OCC_GROUPS))
    return block, labels


def build_proxy_matrix(
    parent_income,
    education=None,
    occupation=None,
    threshold: float = 10_000.0,
    token_divisor: float = 100.0,
) -> ProxyMatrix:
    """Assemble the standard proxy matrix for one cohort of parents."""
    cols = [token_log_income(parent_income, threshold, token_divisor)]
    labels = [ANCHOR_LABEL]
    if education is not None:
        cols.append(np.asarray(education, dtype=float))
        labels.append(EDUCATION_LABEL)
    if occupation is not None:
        block, occ_labels = occupation_dummies(occupation)
        cols.append(block)
        labels.extend(occ_labels)
    values = np.column_stack(cols)
    return ProxyMatrix(values=values, labels=tuple(labels))


@dataclass(frozen=True)
class LWFit:
    """Weights, coefficients and the aggregate proxy estimate."""

    rho: np.ndarray
    b: np.ndarray
    beta_lw: float
    labels: tuple[str, ...]
    n: int

    def contribution(self, j: int) -> float:
        return float(self.rho[j] * self.b[j] / self.beta_lw)


def _collinear_columns(design: np.ndarray, labels) -> list[str]:
    # QR with pivoting: trailing pivots with tiny |R_jj| are the dependent columns.
    from scipy.linalg import qr

    _, r, piv = qr(design, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = design.shape[0] * np.finfo(float).eps * (diag.max() if diag.size else 1.0)
    bad = [piv[j] for j in range(len(diag)) if diag[j] <= tol]
    return [labels[j] for j in sorted(bad)]


def lw_weights(
    child_log_income,
    proxies: ProxyMatrix,
    reference: str = OCC_MISSING_LABEL,
) -> LWFit:
    """Compute per-proxy weights and multiple-OLS coefficients.

    ``rho_j`` is the covariance of child log income with proxy j scaled
    by its covariance with the anchor column (parent log income), which
    makes the anchor weight exactly one. ``b`` comes from one multiple
    regression of child log income on all proxies with an intercept; the
    ``reference`` column (the missing-occupation indicator when present)
    is dropped from that regression and keeps a zero coefficient.
    """
    child = np.asarray(child_log_income, dtype=float)
    if child.size != proxies.n:
        raise ValueError("child income and proxies must have equal length")
    k = len(proxies.labels)
    if child.size <= k + 1:
        raise ValueError("need more observations than proxy columns")

    child_c = child - child.mean()
    cols_c = proxies.values - proxies.values.mean(axis=0)
    covs = cols_c.T @ child_c / (child.size - 1)
    anchor_cov = covs[0]
    if anchor_cov == 0.0:
        raise ValueError("uninformative anchor proxy: cov(child, parent income) is zero")
    rho = covs / anchor_cov
    rho[0] = 1.0

    included = [j for j, lab in enumerate(proxies.labels) if lab != reference]
    design = proxies.values[:, included]
    rank = np.linalg.matrix_rank(np.column_stack([np.ones(proxies.n), design]))
    if rank < len(included) + 1:
        bad = _collinear_columns(
            np.column_stack([np.ones(proxies.n), design]),
            ["intercept"] + [proxies.labels[j] for j in included],
        )
        raise ValueError(f"collinear proxies: {', '.join(bad)}")
    fit = ols(child, design)
    b = np.zeros(k)
    for pos, j in enumerate(included):
        b[j] = fit.coef[pos + 1]

    beta = float(rho @ b)
    return LWFit(rho=rho, b=b, beta_lw=beta, labels=proxies.labels, n=child.size)


def lw_beta(fit: LWFit) -> float:
    """Aggregate proxy coefficient: sum of rho_j * b_j."""
    return float(fit.rho @ fit.b)


def lw_index(fit: LWFit, proxies: ProxyMatrix) -> np.ndarray:
    """Status index (1/beta) * sum_j x_j * b_j for each parent."""
    if fit.beta_lw == 0.0:
        raise ValueError("index undefined: aggregate coefficient is zero")
    if proxies.labels != fit.labels:
        raise ValueError("proxy matrix does not match the fit")
    return proxies.values @ fit.b / fit.beta_lw


def lw_index_ranks(fit: LWFit, proxies: ProxyMatrix) -> np.ndarray:
    """Percentile ranks of the status index within the cohort."""
    return ranking.percentile_ranks(lw_index(fit, proxies))


def lw_rank_association(
    child_income_ranks,
    index_ranks,
    cohort: int = 0,
    spec_label: str = "lw",
) -> EstimateRecord:
    """Regress child income ranks on the parental status-index ranks."""
    return ira(child_income_ranks, index_ranks, cohort=cohort, spec_label=spec_label)


def flip_regression(
    parent_ranks,
    child_ranks,
    cohort: int = 0,
    spec_label: str = "flipped",
) -> EstimateRecord:
    """Rank regression with the generations swapped.

    Puts the parent rank on the left so that a mismeasured child margin
    (daughters) sits on the right-hand side, where the proxy index can
    replace it.
    """
    return ira(parent_ranks, child_ranks, cohort=cohort, spec_label=spec_label)


def proxy_contributions(fit: LWFit) -> dict[str, float]:
    """Per-proxy share rho_j b_j / beta, occupation block summed.

    The shares sum to one by construction.
    """
    if fit.beta_lw == 0.0:
        raise ValueError("contributions undefined: aggregate coefficient is zero")
    shares = fit.rho * fit.b / fit.beta_lw
    out: dict[str, float] = {}
    occ_total = 0.0
    has_occ = False
    for j, lab in enumerate(fit.labels):
        if lab.startswith(OCC_PREFIX) or lab == OCC_MISSING_LABEL:
            occ_total += shares[j]
            has_occ = True
        else:
            out[lab] = float(shares[j])
    if has_occ:
        out["occupation"] = float(occ_total)
    return out
