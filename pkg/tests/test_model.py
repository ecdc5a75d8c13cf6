import numpy as np
import pytest

from conftest import SWEDEN_1951, lognormal_maps, register_maps
from mobkit import ranking
from mobkit.calibration import moment_vector_from_population
from mobkit.decomposition import pooled_rank_slope
from mobkit.model import (
    ModelParams,
    QuantileMap,
    draw_base,
    draw_parental_skills,
    earnings_index,
    fit_quantile_map,
    simulate_from_draws,
    simulate_population,
    transmit_skills,
)


class TestModelParams:
    def test_bounds_validated(self):
        with pytest.raises(ValueError):
            ModelParams(psi=1.2, kappa=0.3, alpha=0.5, phi_m=0.3, phi_d=0.5)
        with pytest.raises(ValueError):
            ModelParams(psi=0.2, kappa=0.3, alpha=0.5, phi_m=-0.1, phi_d=0.5)

    def test_normalizers(self):
        p = ModelParams(psi=0.5, kappa=0.3, alpha=0.58, phi_m=0.4, phi_d=0.6)
        assert p.gamma0 == pytest.approx(np.sqrt(0.5))
        assert p.rho_parents == pytest.approx(0.5 / np.sqrt(0.5))
        w = 0.58**2 + 0.42**2 + 2 * 0.58 * 0.42 * p.rho_parents
        assert p.gamma1 == pytest.approx(np.sqrt(0.09 * w + 0.49))

    def test_skill_weight_normalized_by_generation_max(self):
        p = ModelParams(psi=0.2, kappa=0.3, alpha=0.5, phi_m=0.5, phi_d=1.25)
        assert p.skill_weight("F") == 1.0
        assert p.skill_weight("M") == 0.5
        assert p.skill_weight("D") == 1.0
        assert p.skill_weight("S") == pytest.approx(0.8)

    def test_both_phis_zero_rejected(self):
        p = ModelParams(psi=0.2, kappa=0.3, alpha=0.5, phi_m=0.0, phi_d=0.5,
                        phi_f=0.0)
        with pytest.raises(ValueError, match="zero"):
            p.skill_weight("F")


class TestParentalSkills:
    def test_independent_when_psi_zero(self):
        p = ModelParams(psi=0.0, kappa=0.3, alpha=0.5, phi_m=0.3, phi_d=0.5)
        xf, xm = draw_parental_skills(p, 100_000, seed=1)
        assert abs(np.corrcoef(xf, xm)[0, 1]) < 0.01

    def test_identical_when_psi_one(self):
        p = ModelParams(psi=1.0, kappa=0.3, alpha=0.5, phi_m=0.3, phi_d=0.5)
        xf, xm = draw_parental_skills(p, 1_000, seed=2)
        assert np.array_equal(xf, xm)

    def test_analytic_correlation_at_half(self):
        p = ModelParams(psi=0.5, kappa=0.3, alpha=0.5, phi_m=0.3, phi_d=0.5)
        xf, xm = draw_parental_skills(p, 100_000, seed=3)
        assert np.corrcoef(xf, xm)[0, 1] == pytest.approx(0.5 / np.sqrt(0.5), abs=0.01)


class TestTransmitSkills:
    def test_no_transmission_when_kappa_zero(self):
        p = ModelParams(psi=0.3, kappa=0.0, alpha=0.5, phi_m=0.3, phi_d=0.5)
        xf, xm = draw_parental_skills(p, 100_000, seed=4)
        xs, _ = transmit_skills(p, xf, xm, seed=5)
        assert abs(np.corrcoef(xs, xf)[0, 1]) < 0.01

    def test_son_copies_father_at_full_weight(self):
        p = ModelParams(psi=0.0, kappa=1.0, alpha=1.0, phi_m=0.3, phi_d=0.5)
        xf, xm = draw_parental_skills(p, 1_000, seed=6)
        xs, _ = transmit_skills(p, xf, xm, seed=7)
        assert np.array_equal(xs, xf)

    def test_father_son_correlation_closed_form(self):
        # Gaussian algebra oracle at the Sweden 1951 parameter values
        p = SWEDEN_1951
        xf, xm = draw_parental_skills(p, 100_000, seed=8)
        xs, _ = transmit_skills(p, xf, xm, seed=9)
        expected = p.kappa * (p.alpha + (1 - p.alpha) * p.rho_parents) / p.gamma1
        assert np.corrcoef(xs, xf)[0, 1] == pytest.approx(expected, abs=0.01)

    def test_sibling_correlation_from_shared_shock(self):
        p = ModelParams(psi=0.3, kappa=0.4, alpha=0.6, phi_m=0.3, phi_d=0.5)
        xf, xm = draw_parental_skills(p, 200_000, seed=10)
        xs, xd = transmit_skills(p, xf, xm, seed=11)
        a, k, rho = p.alpha, p.kappa, p.rho_parents
        cov_mix = (a**2 + (1 - a) ** 2) * rho + 2 * a * (1 - a)
        expected = (k**2 * cov_mix + (1 - k) ** 2) / p.gamma1**2
        assert np.corrcoef(xs, xd)[0, 1] == pytest.approx(expected, abs=0.01)


class TestEarningsIndex:
    def test_pure_skill_weight(self):
        p = ModelParams(psi=0.2, kappa=0.3, alpha=0.5, phi_m=0.4, phi_d=0.5)
        skills = np.arange(5.0)
        idx = earnings_index(p, skills, np.zeros(5), "F")
        assert np.array_equal(idx, skills)

    def test_pure_noise_weight(self):
        p = ModelParams(psi=0.2, kappa=0.3, alpha=0.5, phi_m=0.0, phi_d=0.5)
        rng = np.random.default_rng(12)
        skills, noise = rng.standard_normal((2, 50_000))
        idx = earnings_index(p, skills, noise, "M")
        assert abs(np.corrcoef(idx, skills)[0, 1]) < 0.01

    def test_mother_index_skill_correlation(self):
        p = ModelParams(psi=0.2, kappa=0.3, alpha=0.5, phi_m=0.286, phi_d=0.5)
        rng = np.random.default_rng(13)
        skills, noise = rng.standard_normal((2, 100_000))
        idx = earnings_index(p, skills, noise, "M")
        expected = 0.286 / np.hypot(0.286, 0.714)
        assert np.corrcoef(idx, skills)[0, 1] == pytest.approx(expected, abs=0.01)


class TestQuantileMap:
    def test_constant_sample(self):
        qm = QuantileMap([7.5] * 10)
        assert np.all(qm(np.array([-3.0, 0.0, 3.0])) == 7.5)

    def test_clamps_to_sample_range(self):
        qm = fit_quantile_map([1.0, 2.0, 3.0, 4.0])
        assert qm(np.array([-30.0]))[0] == 1.0
        assert qm(np.array([30.0]))[0] == 4.0

    def test_lognormal_quantile_oracle(self):
        sample = np.random.default_rng(14).lognormal(0, 1, 100_000)
        qm = fit_quantile_map(sample)
        assert qm(np.array([1.0]))[0] == pytest.approx(np.e, rel=0.03)

    def test_zero_mass_reproduces(self):
        sample = np.concatenate([np.zeros(3_000), np.exp(np.random.default_rng(15).normal(1, 0.5, 7_000))])
        qm = fit_quantile_map(sample)
        # 30% zeros: indices below the 30th normal percentile map to zero
        assert qm(np.array([-1.0]))[0] == 0.0
        assert qm(np.array([0.5]))[0] > 0.0

    def test_monotone(self):
        sample = np.random.default_rng(16).lognormal(10, 0.7, 5_000)
        qm = fit_quantile_map(sample)
        z = np.linspace(-4, 4, 501)
        y = qm(z)
        assert np.all(np.diff(y) >= 0)

    def test_tsv_round_trip(self, tmp_path):
        sample = np.random.default_rng(17).lognormal(10, 0.7, 500)
        qm = fit_quantile_map(sample)
        path = tmp_path / "map.tsv"
        qm.to_tsv(path)
        back = QuantileMap.from_tsv(path)
        z = np.linspace(-3, 3, 101)
        assert np.allclose(qm(z), back(z), rtol=0, atol=0)


class TestSimulatePopulation:
    def test_same_seed_bit_identical(self, smooth_maps):
        p = SWEDEN_1951
        a = simulate_population(p, smooth_maps, 5_000, seed=42)
        b = simulate_population(p, smooth_maps, 5_000, seed=42)
        for role in "FMSD":
            assert np.array_equal(a.earnings[role], b.earnings[role])
        assert np.array_equal(a.joint_parent_earnings, b.joint_parent_earnings)

    def test_skill_margins_standardized(self, smooth_maps):
        pop = simulate_population(SWEDEN_1951, smooth_maps, 100_000, seed=43)
        for role in "FMSD":
            assert pop.skills[role].mean() == pytest.approx(0.0, abs=0.01)
            assert pop.skills[role].var() == pytest.approx(1.0, abs=0.02)

    def test_joint_parent_earnings_is_sum(self, smooth_maps):
        pop = simulate_population(SWEDEN_1951, smooth_maps, 2_000, seed=44)
        assert np.array_equal(pop.joint_parent_earnings,
                              pop.earnings["F"] + pop.earnings["M"])

    def test_pooled_ranking_matches_index_ranking_when_children_symmetric(self):
        # same child maps and phi_s = phi_d = 1: ranking pooled earnings
        # must reproduce the gender-blind ranking of the indices
        maps = lognormal_maps(seed=18)
        maps["D"] = maps["S"]
        p = ModelParams(psi=0.3, kappa=0.4, alpha=0.6, phi_m=0.5, phi_d=1.0)
        pop = simulate_population(p, maps, 20_000, seed=45)
        pooled_earnings = np.concatenate([pop.earnings["S"], pop.earnings["D"]])
        pooled_indices = np.concatenate([pop.indices["S"], pop.indices["D"]])
        assert np.array_equal(ranking.percentile_ranks(pooled_earnings),
                              ranking.percentile_ranks(pooled_indices))


class TestMapInvariance:
    """Which moments may depend on the earnings maps, and which must not."""

    PARAMS = ModelParams(psi=0.25, kappa=0.35, alpha=0.6, phi_m=0.45, phi_d=0.65)

    def test_gender_specific_moments_absorb_strictly_increasing_maps(self):
        draws = draw_base(30_000, seed=46)
        a = moment_vector_from_population(
            simulate_from_draws(self.PARAMS, lognormal_maps(seed=19), draws))
        b = moment_vector_from_population(
            simulate_from_draws(self.PARAMS, lognormal_maps(seed=77, mu=3.0, sigma=1.4), draws))
        assert a.as_array()[1:] == pytest.approx(b.as_array()[1:], abs=1e-12)

    def test_zero_mass_map_shifts_ventile_moment(self):
        draws = draw_base(30_000, seed=47)
        smooth = moment_vector_from_population(
            simulate_from_draws(self.PARAMS, lognormal_maps(seed=19), draws))
        lumpy = moment_vector_from_population(
            simulate_from_draws(self.PARAMS, register_maps(seed=20, zero_shares={
                "F": 0.0, "M": 0.35, "S": 0.0, "D": 0.0}), draws))
        assert abs(smooth.beta1 - lumpy.beta1) > 1e-3

    def test_pooled_slope_depends_on_child_maps(self):
        draws = draw_base(30_000, seed=48)
        maps_a = lognormal_maps(seed=19)
        maps_b = dict(maps_a)
        maps_b["D"] = QuantileMap(
            np.random.default_rng(21).lognormal(9.0, 1.1, 50_000))
        a = pooled_rank_slope(simulate_from_draws(self.PARAMS, maps_a, draws))
        b = pooled_rank_slope(simulate_from_draws(self.PARAMS, maps_b, draws))
        assert abs(a - b) > 1e-3
