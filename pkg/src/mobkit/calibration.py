"""Moment system and simulated-method-of-moments calibration.

Five within-cohort rank-association slopes identify the five free model
parameters: father rank on mother rank (estimated at ventile
granularity), and father/mother rank on son/daughter rank. The same
code path produces the moment vector from empirical pair tables and
from simulated populations, so the calibration compares like with like.

Calibration repeatedly re-simulates under common random numbers (the
same families are drawn at every iteration, so the loss is a
deterministic function of the parameters) and minimizes the sum of
squared moment gaps with damped least-squares steps built from
central-difference moment Jacobians, projected into the parameter
boxes, with patience-based early stopping. Cohorts are chained by
warm-starting each one from the previous cohort's solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from mobkit import ranking
from mobkit._ols import slope_fit
from mobkit.model import (
    FREE_PARAMS,
    BaseDraws,
    ModelParams,
    QuantileMap,
    SimPopulation,
    draw_base,
    simulate_from_draws,
)

MOMENT_NAMES = ("beta1", "beta2", "beta3", "beta4", "beta5")
DEFAULT_BOUNDS = ((0.0, 1.0), (0.0, 1.0), (0.0, 1.0), (0.0, 2.0), (0.0, 2.0))


class CalibrationError(RuntimeError):
    """Raised when a calibration run cannot proceed; carries the trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


@dataclass(frozen=True)
class MomentVector:
    """Slopes of the five identifying rank regressions."""

    beta1: float  # father rank on mother ventile midrank
    beta2: float  # father rank on son rank
    beta3: float  # father rank on daughter rank
    beta4: float  # mother rank on son rank
    beta5: float  # mother rank on daughter rank

    def __post_init__(self):
        if not all(np.isfinite(self.as_array())):
            raise ValueError("moments must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.beta1, self.beta2, self.beta3, self.beta4, self.beta5])

    @classmethod
    def from_array(cls, values) -> "MomentVector":
        return cls(*(float(v) for v in values))


def _pair_slope(lhs_values, rhs_values, equation: str, ventile_rhs: bool = False) -> float:
    """Rank both sides within the estimation sample and regress LHS on RHS."""
    lhs_rank = ranking.percentile_ranks(lhs_values)
    rhs_rank = ranking.percentile_ranks(rhs_values)
    if ventile_rhs:
        rhs_rank = ranking.ventile_midrank(ranking.ventile_of_rank(rhs_rank))
    try:
        slope, _, _, _ = slope_fit(rhs_rank, lhs_rank)
    except ValueError as exc:
        raise ValueError(f"degenerate regressor in {equation}") from exc
    return slope


def moment_vector_from_samples(
    fm: tuple[np.ndarray, np.ndarray],
    fs: tuple[np.ndarray, np.ndarray],
    fd: tuple[np.ndarray, np.ndarray],
    ms: tuple[np.ndarray, np.ndarray],
    md: tuple[np.ndarray, np.ndarray],
) -> MomentVector:
    """Moments from five (LHS earnings, RHS earnings) samples.

    Ranks are computed within each equation's estimation sample, which
    is the convention shared by the empirical and simulated paths.
    """
    return MomentVector(
        beta1=_pair_slope(fm[0], fm[1], "father-mother", ventile_rhs=True),
        beta2=_pair_slope(fs[0], fs[1], "father-son"),
        beta3=_pair_slope(fd[0], fd[1], "father-daughter"),
        beta4=_pair_slope(ms[0], ms[1], "mother-son"),
        beta5=_pair_slope(md[0], md[1], "mother-daughter"),
    )


def moment_vector_from_population(pop: SimPopulation) -> MomentVector:
    """Moments of a simulated population (every family has all four roles).

    All five estimation samples coincide with the full population, so
    each role is ranked once and the slopes are read off directly;
    the result matches :func:`moment_vector_from_samples` exactly.
    """
    rank = {role: ranking.percentile_ranks(pop.earnings[role]) for role in "FMSD"}
    mother_mid = ranking.ventile_midrank(ranking.ventile_of_rank(rank["M"]))

    def slope(y, x, equation):
        try:
            s, _, _, _ = slope_fit(x, y)
        except ValueError as exc:
            raise ValueError(f"degenerate regressor in {equation}") from exc
        return s

    return MomentVector(
        beta1=slope(rank["F"], mother_mid, "father-mother"),
        beta2=slope(rank["F"], rank["S"], "father-son"),
        beta3=slope(rank["F"], rank["D"], "father-daughter"),
        beta4=slope(rank["M"], rank["S"], "mother-son"),
        beta5=slope(rank["M"], rank["D"], "mother-daughter"),
    )


def moment_vector_from_pairs(pairs: pd.DataFrame) -> MomentVector:
    """Moments of one cohort's empirical pair table.

    The father-mother sample holds one row per parent couple (pairs are
    deduplicated on the parent ids); the four parent-child samples hold
    sons' and daughters' rows with the respective parent present.
    """
    both = pairs[pairs["father_income"].notna() & pairs["mother_income"].notna()]
    if {"father_id", "mother_id"}.issubset(both.columns):
        both = both.drop_duplicates(subset=["father_id", "mother_id"])
    sons = pairs[pairs["child_sex"] == "M"]
    daughters = pairs[pairs["child_sex"] == "F"]

    def sample(frame, parent, equation):
        sub = frame[frame[f"{parent}_income"].notna() & frame["child_income"].notna()]
        if sub.empty:
            raise ValueError(f"no pairs for the {equation} equation")
        return sub[f"{parent}_income"].to_numpy(), sub["child_income"].to_numpy()

    fs = sample(sons, "father", "father-son")
    fd = sample(daughters, "father", "father-daughter")
    ms = sample(sons, "mother", "mother-son")
    md = sample(daughters, "mother", "mother-daughter")
    if both.empty:
        raise ValueError("no couples for the father-mother equation")
    fm = (both["father_income"].to_numpy(), both["mother_income"].to_numpy())
    return moment_vector_from_samples(fm, fs, fd, ms, md)


def moment_distance(simulated: MomentVector, targets: MomentVector) -> float:
    """Equally weighted sum of squared moment gaps."""
    gap = simulated.as_array() - targets.as_array()
    return float(gap @ gap)


@dataclass(frozen=True)
class CalibrationSettings:
    """Knobs of one calibration run."""

    n_sim: int = 100_000
    max_iters: int = 150
    damping_init: float = 1e-3
    damping_grow: float = 4.0
    damping_shrink: float = 3.0
    max_step_tries: int = 12
    fd_step: float = 1e-3
    tolerance: float = 1e-6
    patience: int = 15
    n_screen: int = 32
    seed: int = 0
    bounds: tuple = DEFAULT_BOUNDS

    def __post_init__(self):
        if self.n_sim < 1_000:
            raise ValueError("n_sim must be at least 1,000")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if len(self.bounds) != len(FREE_PARAMS):
            raise ValueError("one (lo, hi) bound per free parameter")


@dataclass
class CalibratedParams:
    """Result of one cohort's calibration."""

    params: ModelParams
    fit_distance: float
    iterations: int
    converged: bool
    trace: list[tuple[ModelParams, float]] = field(default_factory=list)


def _project(theta: np.ndarray, bounds) -> np.ndarray:
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    return np.clip(theta, lo, hi)


def make_moments_fn(
    maps: dict[str, QuantileMap],
    draws: BaseDraws,
):
    """Map free-parameter vectors to simulated moments over fixed draws."""

    def moments(theta: np.ndarray) -> np.ndarray:
        params = ModelParams.from_free_values(theta)
        pop = simulate_from_draws(params, maps, draws)
        return moment_vector_from_population(pop).as_array()

    return moments


def make_loss(
    targets: MomentVector,
    maps: dict[str, QuantileMap],
    draws: BaseDraws,
):
    """Loss closure over fixed base draws (the common-random-numbers contract)."""
    moments = make_moments_fn(maps, draws)
    target = targets.as_array()

    def loss(theta: np.ndarray) -> float:
        gap = moments(theta) - target
        return float(gap @ gap)

    return loss


def _residual_jacobian(moments_fn, theta, bounds, h):
    """Central-difference Jacobian of the moment vector, clipped at the box."""
    jac = np.zeros((len(MOMENT_NAMES), theta.size))
    for i in range(theta.size):
        lo, hi = bounds[i]
        up = min(theta[i] + h, hi)
        dn = max(theta[i] - h, lo)
        if up == dn:
            continue
        tp = theta.copy(); tp[i] = up
        tm = theta.copy(); tm[i] = dn
        jac[:, i] = (moments_fn(tp) - moments_fn(tm)) / (up - dn)
    return jac


def _screen_init(loss, init_theta, settings) -> tuple[np.ndarray, float]:
    """Evaluate the given start plus seeded random points; keep the best.

    The given start wins ties, so a warm start that already fits (or a
    fixed-point target) is never displaced.
    """
    best_theta = init_theta.copy()
    best_f = loss(init_theta)
    if settings.n_screen <= 0:
        return best_theta, best_f
    rng = np.random.default_rng(np.random.SeedSequence([settings.seed, 91]))
    lo = np.array([b[0] for b in settings.bounds])
    hi = np.array([b[1] for b in settings.bounds])
    for _ in range(settings.n_screen):
        theta = rng.uniform(lo, hi)
        f = loss(theta)
        if f < best_f:
            best_theta, best_f = theta, f
    return best_theta, best_f


def calibrate_cohort(
    targets: MomentVector,
    init: ModelParams,
    settings: CalibrationSettings,
    maps: dict[str, QuantileMap],
    draws: BaseDraws | None = None,
) -> CalibratedParams:
    """Fit the five free parameters to one cohort's target moments.

    The same simulated families are reused at every evaluation, so
    re-evaluating at identical parameters is bit-identical and finite
    differences are not polluted by resampling noise. The search first
    screens ``n_screen`` seeded random points against the given start
    (the start wins ties), then iterates damped least-squares steps on
    the moment residuals: the residual Jacobian comes from central
    differences under the shared draws, and each step solves

        (J'J + damping * diag(J'J)) delta = -J'gap,

    projecting the update into the parameter boxes. The damping factor
    shrinks after an accepted step and grows after a rejected one, which
    plays the role of a line search and degrades gracefully to small
    gradient steps on hostile stretches of the surface. The run stops
    when the distance falls below ``settings.tolerance``, after
    ``settings.patience`` iterations without improving the best seen
    distance, or at ``settings.max_iters``; the best-seen point is
    returned either way.
    """
    if draws is None:
        draws = draw_base(settings.n_sim, settings.seed)
    moments_fn = make_moments_fn(maps, draws)
    target = targets.as_array()
    bounds = settings.bounds

    def loss_of(gap: np.ndarray) -> float:
        return float(gap @ gap)

    theta, f = _screen_init(
        lambda t: loss_of(moments_fn(t) - target),
        _project(init.free_values(), bounds),
        settings,
    )
    gap = moments_fn(theta) - target
    trace: list[tuple[ModelParams, float]] = [(ModelParams.from_free_values(theta), f)]
    if not np.isfinite(f):
        raise CalibrationError("non-finite loss at the initial point", trace)

    best_theta, best_f = theta.copy(), f
    damping = settings.damping_init
    stall = 0
    iterations = 0

    while (iterations < settings.max_iters
           and best_f >= settings.tolerance
           and stall < settings.patience):
        iterations += 1
        jac = _residual_jacobian(moments_fn, theta, bounds, settings.fd_step)
        if not np.all(np.isfinite(jac)):
            raise CalibrationError("non-finite moment Jacobian", trace)
        jtj = jac.T @ jac
        jtg = jac.T @ gap
        if np.all(jtg == 0.0):
            break

        improved = False
        for _ in range(settings.max_step_tries):
            lhs = jtj + damping * np.diag(np.clip(np.diag(jtj), 1e-12, None))
            try:
                delta = np.linalg.solve(lhs, -jtg)
            except np.linalg.LinAlgError:
                damping *= settings.damping_grow
                continue
            cand = _project(theta + delta, bounds)
            if np.array_equal(cand, theta):
                damping *= settings.damping_grow
                continue
            cand_gap = moments_fn(cand) - target
            fc = loss_of(cand_gap)
            if not np.isfinite(fc):
                raise CalibrationError("non-finite loss during step search", trace)
            if fc < f:
                theta, f, gap = cand, fc, cand_gap
                damping = max(damping / settings.damping_shrink, 1e-10)
                improved = True
                break
            damping *= settings.damping_grow

        if improved and f < best_f:
            best_theta, best_f = theta.copy(), f
            stall = 0
        else:
            stall += 1
        trace.append((ModelParams.from_free_values(theta), f))

    converged = best_f < settings.tolerance
    return CalibratedParams(
        params=ModelParams.from_free_values(best_theta),
        fit_distance=best_f,
        iterations=iterations,
        converged=converged,
        trace=trace,
    )


def random_init(settings: CalibrationSettings, rng=None) -> ModelParams:
    """Uniform draw of the free parameters inside their boxes."""
    if rng is None:
        rng = np.random.default_rng(settings.seed)
    theta = np.array([rng.uniform(lo, hi) for lo, hi in settings.bounds])
    return ModelParams.from_free_values(theta)


@dataclass
class SequenceResult:
    """Per-cohort calibrations of a warm-started chain."""

    results: dict[int, CalibratedParams]
    failures: dict[int, str]

    def params_chain(self) -> dict[int, ModelParams]:
        return {cohort: r.params for cohort, r in self.results.items()}

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for cohort, r in sorted(self.results.items()):
            row = {"cohort": cohort}
            row.update({name: getattr(r.params, name) for name in FREE_PARAMS})
            row.update({
                "fit_distance": r.fit_distance,
                "iterations": r.iterations,
                "converged": r.converged,
            })
            rows.append(row)
        return pd.DataFrame(rows)


def calibrate_sequence(
    targets_by_cohort: dict[int, MomentVector],
    settings: CalibrationSettings,
    maps_by_cohort: dict[int, dict[str, QuantileMap]],
    init: ModelParams | None = None,
) -> SequenceResult:
    """Calibrate an ordered chain of cohorts with warm starts.

    The first cohort starts from ``init`` (or a seeded random draw); each
    later cohort starts from the previous solution. A failing cohort is
    recorded and the chain continues from the last good parameters. The
    same base draws serve every cohort, so identical targets yield
    identical calibrated parameters.
    """
    import dataclasses

    cohorts = sorted(targets_by_cohort)
    if not cohorts:
        raise ValueError("no cohorts to calibrate")
    draws = draw_base(settings.n_sim, settings.seed)
    current = init if init is not None else random_init(settings)
    warm_settings = dataclasses.replace(settings, n_screen=0)
    results: dict[int, CalibratedParams] = {}
    failures: dict[int, str] = {}
    for i, cohort in enumerate(cohorts):
        try:
            fitted = calibrate_cohort(
                targets_by_cohort[cohort], current,
                settings if i == 0 else warm_settings,
                maps_by_cohort[cohort], draws=draws,
            )
        except (CalibrationError, ValueError) as exc:
            failures[cohort] = str(exc)
            continue
        results[cohort] = fitted
        current = fitted.params
    return SequenceResult(results=results, failures=failures)
