"""Shared fixtures: earnings maps and reference parameter values."""

import numpy as np
import pytest

from mobkit.model import ModelParams, QuantileMap, ROLES

# Calibrated Sweden 1951 values used as the standard planted truth.
SWEDEN_1951 = ModelParams(psi=0.131, kappa=0.301, alpha=0.580, phi_m=0.286, phi_d=0.511)


def lognormal_maps(seed: int = 10, size: int = 50_000, mu: float = 10.0,
                   sigma: float = 0.6) -> dict:
    """Strictly increasing earnings maps (no zero mass)."""
    return {
        role: QuantileMap(np.random.default_rng(seed + i).lognormal(mu, sigma, size))
        for i, role in enumerate(ROLES)
    }


def register_maps(seed: int = 5, size: int = 60_000, zero_shares=None) -> dict:
    """Earnings maps with a zero-earner mass, shaped like register data."""
    if zero_shares is None:
        zero_shares = {"F": 0.07, "M": 0.16, "S": 0.02, "D": 0.06}
    scales = {"F": 10.4, "M": 9.4, "S": 10.5, "D": 10.0}
    rng = np.random.default_rng(seed)
    maps = {}
    for role in ROLES:
        sample = np.exp(scales[role] + 0.57 * rng.standard_normal(size))
        sample[rng.random(size) < zero_shares[role]] = 0.0
        maps[role] = QuantileMap(sample)
    return maps


@pytest.fixture(scope="session")
def smooth_maps():
    return lognormal_maps()


@pytest.fixture(scope="session")
def zero_mass_maps():
    return register_maps()
