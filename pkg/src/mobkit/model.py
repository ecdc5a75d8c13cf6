"""Latent-skill family simulator with empirical earnings mappings.

Families are drawn from a Gaussian factor structure. Father skill is
standard normal; mother skill mixes the father's with an independent
draw under assortative-mating weight ``psi``:

    x_F ~ N(0,1),   x_M = (psi * x_F + (1 - psi) * u0) / Gamma0

Children mix the parents' skills with transmission weight ``kappa`` and
a same-gender tilt ``alpha`` (sons weight the father, daughters the
mother), sharing one family-level shock u1:

    x_S = (kappa * [alpha * x_F + (1-alpha) * x_M] + (1-kappa) * u1) / Gamma1
    x_D = (kappa * [alpha * x_M + (1-alpha) * x_F] + (1-kappa) * u1) / Gamma1

Gamma0 and Gamma1 rescale each margin to unit variance; Gamma1 uses the
model-implied parent-skill correlation psi/Gamma0 rather than its sample
value so that the parameter-to-moment map stays deterministic and
smooth for the calibration optimizer.

Earnings are a monotone transform of a linear skill/noise index,

    y_k = F_k( w_k * x_k + (1 - w_k) * eps_k ),

where the skill weight w_k normalizes each generation's phi pair by its
maximum (phi_f = phi_s = 1 fixes the scale) and F_k is an empirical
quantile map estimated from observed earnings. Joint parental earnings
are the sum of the two mapped parent earnings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

ROLES = ("F", "M", "S", "D")
FREE_PARAMS = ("psi", "kappa", "alpha", "phi_m", "phi_d")


@dataclass(frozen=True)
class ModelParams:
    """The seven-parameter vector; phi_f and phi_s are pinned to 1."""

    psi: float
    kappa: float
    alpha: float
    phi_m: float
    phi_d: float
    phi_f: float = 1.0
    phi_s: float = 1.0

    def __post_init__(self):
        for name in ("psi", "kappa", "alpha"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        for name in ("phi_m", "phi_d", "phi_f", "phi_s"):
            v = getattr(self, name)
            if v < 0.0:
                raise ValueError(f"{name}={v} must be >= 0")

    @property
    def gamma0(self) -> float:
        """Parental rescaler: sqrt(psi^2 + (1-psi)^2)."""
        return float(np.hypot(self.psi, 1.0 - self.psi))

    @property
    def rho_parents(self) -> float:
        """Model-implied corr(x_F, x_M) = psi / Gamma0."""
        return self.psi / self.gamma0

    @property
    def mix_variance(self) -> float:
        """Variance of the gender-weighted parental skill mix."""
        a = self.alpha
        return a * a + (1 - a) ** 2 + 2 * a * (1 - a) * self.rho_parents

    @property
    def gamma1(self) -> float:
        """Child rescaler: sqrt(kappa^2 * mix_variance + (1-kappa)^2)."""
        g1 = float(np.sqrt(self.kappa**2 * self.mix_variance + (1 - self.kappa) ** 2))
        assert g1 > 0.0, "gamma1 must be positive for valid parameters"
        return g1

    def skill_weight(self, role: str) -> float:
        """Normalized skill weight in the earnings index for one role."""
        if role in ("F", "M"):
            top = max(self.phi_f, self.phi_m)
        elif role in ("S", "D"):
            top = max(self.phi_s, self.phi_d)
        else:
            raise ValueError(f"unknown role {role!r}")
        if top == 0.0:
            raise ValueError("both phis of a generation are zero")
        phi = {"F": self.phi_f, "M": self.phi_m, "S": self.phi_s, "D": self.phi_d}[role]
        return phi / top

    def free_values(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FREE_PARAMS], dtype=float)

    @classmethod
    def from_free_values(cls, values) -> "ModelParams":
        psi, kappa, alpha, phi_m, phi_d = (float(v) for v in values)
        return cls(psi=psi, kappa=kappa, alpha=alpha, phi_m=phi_m, phi_d=phi_d)

    def replace(self, **kwargs) -> "ModelParams":
        fields = {name: getattr(self, name) for name in FREE_PARAMS}
        fields.update(kwargs)
        return ModelParams(**fields)


class QuantileMap:
    """Empirical monotone map from a standard-normal index to earnings.

    ``map(z)`` returns the earnings quantile at probability Phi(z): the
    fitted sample's order statistic i sits at the normal quantile of
    (i + 0.5) / n, with linear interpolation between adjacent order
    statistics and clamping to the sample range. A mass of identical
    values (e.g. zero earners) reproduces as a flat step.
    """

    def __init__(self, sample):
        sample = np.asarray(sample, dtype=float)
        if sample.size == 0:
            raise ValueError("empty earnings sample")
        if not np.all(np.isfinite(sample)):
            raise ValueError("earnings sample must be finite")
        self._sorted = np.sort(sample)
        n = self._sorted.size
        self._grid = (np.arange(n) + 0.5) / n
        self._equispaced = True

    def __call__(self, z) -> np.ndarray:
        p = ndtr(np.asarray(z, dtype=float))
        if not self._equispaced:
            return np.interp(p, self._grid, self._sorted)
        # the grid is (i + 0.5) / n, so the bracketing order statistics
        # follow from arithmetic instead of a binary search
        n = self._sorted.size
        t = np.clip(p * n - 0.5, 0.0, n - 1.0)
        lo = np.minimum(t.astype(np.intp), n - 2) if n > 1 else np.zeros(t.shape, np.intp)
        frac = t - lo
        left = self._sorted[lo]
        right = self._sorted[np.minimum(lo + 1, n - 1)]
        return left + frac * (right - left)

    @property
    def sample_min(self) -> float:
        return float(self._sorted[0])

    @property
    def sample_max(self) -> float:
        return float(self._sorted[-1])

    def to_tsv(self, path) -> None:
        """Write (probability, earnings) pairs for fixture reuse."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("probability\tearnings\n")
            for p, v in zip(self._grid, self._sorted):
                fh.write(f"{float(p)!r}\t{float(v)!r}\n")

    @classmethod
    def from_tsv(cls, path) -> "QuantileMap":
        data = np.loadtxt(path, skiprows=1)
        qm = cls.__new__(cls)
        qm._grid = data[:, 0]
        qm._sorted = data[:, 1]
        n = qm._grid.size
        qm._equispaced = bool(np.allclose(qm._grid, (np.arange(n) + 0.5) / n))
        return qm


def fit_quantile_map(earnings) -> QuantileMap:
    """Fit the empirical index-to-earnings map from an observed sample."""
    return QuantileMap(earnings)


@dataclass(frozen=True)
class BaseDraws:
    """The raw normal draws behind one simulated population.

    Drawing these once and reusing them across parameter values is the
    common-random-numbers device that makes the calibration loss a
    deterministic function of the parameters.
    """

    zf: np.ndarray   # father skill
    u0: np.ndarray   # mother mixing shock
    u1: np.ndarray   # family child shock, shared by son and daughter
    eps: dict[str, np.ndarray]  # non-inheritable earnings draws per role
    seed: int

    @property
    def n(self) -> int:
        return self.zf.size


def draw_base(n: int, seed: int) -> BaseDraws:
    """Draw all raw randomness for ``n`` families in a fixed order."""
    if n < 1:
        raise ValueError("need at least one family")
    rng = np.random.default_rng(seed)
    zf = rng.standard_normal(n)
    u0 = rng.standard_normal(n)
    u1 = rng.standard_normal(n)
    eps = {role: rng.standard_normal(n) for role in ROLES}
    return BaseDraws(zf=zf, u0=u0, u1=u1, eps=eps, seed=seed)


def parental_skills(params: ModelParams, zf: np.ndarray, u0: np.ndarray):
    """Father and mother skills from raw draws."""
    xf = zf
    xm = (params.psi * zf + (1.0 - params.psi) * u0) / params.gamma0
    return xf, xm


def child_skills(params: ModelParams, xf: np.ndarray, xm: np.ndarray, u1: np.ndarray):
    """Son and daughter skills; one u1 per family, shared by the siblings."""
    k, a = params.kappa, params.alpha
    g1 = params.gamma1
    xs = (k * (a * xf + (1 - a) * xm) + (1 - k) * u1) / g1
    xd = (k * (a * xm + (1 - a) * xf) + (1 - k) * u1) / g1
    return xs, xd


def draw_parental_skills(params: ModelParams, n: int, seed: int):
    """Draw (x_F, x_M) for ``n`` couples."""
    rng = np.random.default_rng(seed)
    return parental_skills(params, rng.standard_normal(n), rng.standard_normal(n))


def transmit_skills(params: ModelParams, xf, xm, seed: int):
    """Draw (x_S, x_D) given parental skills, sharing one u1 per family."""
    rng = np.random.default_rng(seed)
    u1 = rng.standard_normal(np.asarray(xf).size)
    return child_skills(params, np.asarray(xf, float), np.asarray(xm, float), u1)


def earnings_index(params: ModelParams, skills, noise, role: str) -> np.ndarray:
    """Linear skill/noise index entering the earnings map for one role."""
    w = params.skill_weight(role)
    return w * np.asarray(skills, float) + (1.0 - w) * np.asarray(noise, float)


@dataclass
class SimPopulation:
    """Simulated families: skills, noises, indices, and mapped earnings."""

    params: ModelParams
    skills: dict[str, np.ndarray]
    noises: dict[str, np.ndarray]
    indices: dict[str, np.ndarray]
    earnings: dict[str, np.ndarray]
    joint_parent_earnings: np.ndarray
    seed: int

    @property
    def n(self) -> int:
        return self.joint_parent_earnings.size


def simulate_from_draws(
    params: ModelParams,
    maps: dict[str, QuantileMap],
    draws: BaseDraws,
) -> SimPopulation:
    """Deterministically transform raw draws into a population."""
    xf, xm = parental_skills(params, draws.zf, draws.u0)
    xs, xd = child_skills(params, xf, xm, draws.u1)
    skills = {"F": xf, "M": xm, "S": xs, "D": xd}
    indices = {role: earnings_index(params, skills[role], draws.eps[role], role)
               for role in ROLES}
    earnings = {role: maps[role](indices[role]) for role in ROLES}
    return SimPopulation(
        params=params,
        skills=skills,
        noises=dict(draws.eps),
        indices=indices,
        earnings=earnings,
        joint_parent_earnings=earnings["F"] + earnings["M"],
        seed=draws.seed,
    )


def simulate_population(
    params: ModelParams,
    maps: dict[str, QuantileMap],
    n: int,
    seed: int,
) -> SimPopulation:
    """Simulate ``n`` families; bit-identical for identical (params, seed)."""
    return simulate_from_draws(params, maps, draw_base(n, seed))
