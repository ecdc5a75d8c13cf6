"""Small OLS core shared by the estimator modules.

One code path serves empirical and simulated inputs alike, which keeps
slope conventions identical on both sides of the calibration. Standard
errors are heteroskedasticity-robust (HC1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class OLSResult:
    """Coefficients and HC1 standard errors of one least-squares fit.

    ``coef[0]`` is the intercept; remaining entries follow the column
    order of the design matrix passed to :func:`ols`.
    """

    coef: np.ndarray
    se: np.ndarray
    n: int

    def pvalue(self, j: int) -> float:
        """Two-sided normal p-value for coefficient ``j``."""
        from scipy.stats import norm

        if self.se[j] == 0.0:
            return 0.0 if self.coef[j] != 0.0 else 1.0
        z = self.coef[j] / self.se[j]
        return float(2.0 * norm.sf(abs(z)))


def ols(y: np.ndarray, x: np.ndarray) -> OLSResult:
    """OLS of ``y`` on ``x`` columns plus an intercept, with HC1 errors.

    Parameters
    ----------
    y : (n,) array
    x : (n, k) array of regressors, intercept not included.

    Raises
    ------
    ValueError
        If fewer observations than parameters or the design is singular.
    """
    y = np.asarray(y, dtype=float)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[0] != y.shape[0]:
        x = x.T
    n, k = x.shape
    if n <= k + 1:
        raise ValueError(f"need more than {k + 1} observations, got {n}")
    design = np.column_stack([np.ones(n), x])

    xtx = design.T @ design
    try:
        xtx_inv = np.linalg.inv(xtx)
    except np.linalg.LinAlgError as exc:
        raise ValueError("singular design matrix") from exc
    # Guard against numerically singular designs that inv() lets through.
    if np.linalg.matrix_rank(xtx) < k + 1:
        raise ValueError("singular design matrix")

    coef = xtx_inv @ (design.T @ y)
    resid = y - design @ coef

    # HC1 sandwich: (X'X)^-1 X' diag(e^2) X (X'X)^-1 * n/(n-k-1)
    meat = (design * resid[:, None] ** 2).T @ design
    cov = xtx_inv @ meat @ xtx_inv * (n / (n - k - 1))
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return OLSResult(coef=coef, se=se, n=n)


def slope_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float, int]:
    """Bivariate OLS of ``y`` on ``x``.

    Returns ``(slope, intercept, hc1_se_slope, n)``. Raises ``ValueError``
    on a zero-variance regressor, which every caller maps to its own
    "degenerate regressor" error.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if n < 2:
        raise ValueError("need at least 2 observations")
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx == 0.0:
        raise ValueError("degenerate regressor")
    slope = float(xc @ (y - y.mean())) / sxx
    intercept = float(y.mean() - slope * x.mean())
    resid = y - intercept - slope * x
    dof = max(n - 2, 1)
    se = float(np.sqrt((xc**2 @ resid**2)) / sxx * np.sqrt(n / dof))
    return slope, intercept, se, n
