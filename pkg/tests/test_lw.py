import numpy as np
import pytest

from mobkit import lw, ranking
from mobkit._ols import slope_fit
from mobkit.estimators import ira
from mobkit.lw import (
    ProxyMatrix,
    ProxyMatrixError,
    build_proxy_matrix,
    flip_regression,
    lw_beta,
    lw_index,
    lw_index_ranks,
    lw_rank_association,
    lw_weights,
    occupation_dummies,
    proxy_contributions,
    token_log_income,
)


def planted_proxy_data(n, seed, income_noise_var=2 / 3, edu_noise_var=0.25,
                       child_coef=0.35):
    """Latent status with noisy income and education proxies.

    Income reliability is var(s) / (var(s) + income_noise_var); with the
    default noise variance 2/3 it equals 0.6.
    """
    rng = np.random.default_rng(seed)
    status = rng.standard_normal(n)
    parent_log_income = status + np.sqrt(income_noise_var) * rng.standard_normal(n)
    education = status + np.sqrt(edu_noise_var) * rng.standard_normal(n)
    child_log_income = child_coef * status + rng.standard_normal(n)
    return status, parent_log_income, education, child_log_income


def analytic_lw_beta(income_noise_var, edu_noise_var, child_coef):
    """Population value of the aggregate proxy coefficient.

    Straight covariance algebra on the planted structure: rho = (1, 1)
    and b solves the two-proxy normal equations.
    """
    sxx = np.array([[1 + income_noise_var, 1.0], [1.0, 1 + edu_noise_var]])
    sxy = np.array([child_coef, child_coef])
    b = np.linalg.solve(sxx, sxy)
    return float(b.sum())


def simple_matrix(parent_log_income, education=None):
    cols = [np.asarray(parent_log_income, dtype=float)]
    labels = [lw.ANCHOR_LABEL]
    if education is not None:
        cols.append(np.asarray(education, dtype=float))
        labels.append(lw.EDUCATION_LABEL)
    return ProxyMatrix(values=np.column_stack(cols), labels=tuple(labels))


class TestProxyMatrix:
    def test_occupation_indicators_sum_to_one(self):
        block, labels = occupation_dummies([0, 3, 9, 10, 10])
        assert block.shape == (5, 11)
        assert np.all(block.sum(axis=1) == 1.0)
        assert labels[-1] == lw.OCC_MISSING_LABEL

    def test_duplicate_labels_rejected(self):
        with pytest.raises(ProxyMatrixError, match="duplicate"):
            ProxyMatrix(values=np.ones((5, 2)),
                        labels=(lw.ANCHOR_LABEL, lw.ANCHOR_LABEL))

    def test_anchor_must_come_first(self):
        with pytest.raises(ProxyMatrixError, match="first column"):
            ProxyMatrix(values=np.ones((5, 2)),
                        labels=(lw.EDUCATION_LABEL, lw.ANCHOR_LABEL))

    def test_broken_indicator_rows_rejected(self):
        values = np.column_stack([np.ones(4), np.zeros((4, 11))])
        labels = tuple([lw.ANCHOR_LABEL] + [f"occ_{g}" for g in range(10)]
                       + [lw.OCC_MISSING_LABEL])
        with pytest.raises(ProxyMatrixError, match="sum to 1"):
            ProxyMatrix(values=values, labels=labels)


class TestTokenLogIncome:
    def test_zero_earners_get_token_level(self):
        out = token_log_income([0.0, 100.0], threshold=10_000.0, divisor=100.0)
        assert out[0] == pytest.approx(np.log(100.0))
        assert out[1] == pytest.approx(np.log(100.0))
        out2 = token_log_income([0.0, 150.0], threshold=10_000.0, divisor=50.0)
        assert out2[0] == pytest.approx(np.log(200.0))
        assert out2[1] == pytest.approx(np.log(150.0))

    def test_negative_income_rejected(self):
        with pytest.raises(ValueError):
            token_log_income([-1.0])


class TestLWWeights:
    def test_single_proxy_collapses_to_ols(self):
        rng = np.random.default_rng(30)
        parent = rng.standard_normal(5_000)
        child = 0.4 * parent + rng.standard_normal(5_000)
        fit = lw_weights(child, simple_matrix(parent))
        expected_slope, _, _, _ = slope_fit(parent, child)
        assert np.array_equal(fit.rho, np.array([1.0]))
        assert fit.b[0] == pytest.approx(expected_slope)
        assert fit.beta_lw == pytest.approx(expected_slope)

    def test_anchor_weight_is_exactly_one(self):
        _, parent, edu, child = planted_proxy_data(10_000, seed=31)
        fit = lw_weights(child, simple_matrix(parent, edu))
        assert fit.rho[0] == 1.0

    def test_uninformative_proxy_gets_zero_weight(self):
        rng = np.random.default_rng(32)
        parent = rng.standard_normal(100_000)
        child = 0.4 * parent + rng.standard_normal(100_000)
        noise = rng.standard_normal(100_000)
        fit = lw_weights(child, simple_matrix(parent, noise))
        assert abs(fit.rho[1]) < 0.02
        assert abs(proxy_contributions(fit)[lw.EDUCATION_LABEL]) < 0.02

    def test_planted_model_attenuation_oracle(self):
        _, parent, edu, child = planted_proxy_data(100_000, seed=33)
        fit = lw_weights(child, simple_matrix(parent, edu))
        income_only, _, _, _ = slope_fit(parent, child)
        expected = analytic_lw_beta(2 / 3, 0.25, 0.35)
        assert fit.beta_lw == pytest.approx(expected, abs=0.02)
        # strictly between the attenuated slope and the true coefficient
        assert income_only < fit.beta_lw < 0.35

    def test_uninformative_anchor_rejected(self):
        child = np.array([1.0, 1.0, 1.0, 1.0, 1.0, 1.0])
        parent = np.array([1.0, 2.0, 3.0, 1.0, 2.0, 3.0])
        with pytest.raises(ValueError, match="uninformative anchor"):
            lw_weights(child, simple_matrix(parent))

    def test_collinear_proxies_named(self):
        rng = np.random.default_rng(34)
        parent = rng.standard_normal(500)
        child = parent + rng.standard_normal(500)
        dup = ProxyMatrix(
            values=np.column_stack([parent, 2.0 * parent]),
            labels=(lw.ANCHOR_LABEL, "education"),
        )
        with pytest.raises(ValueError, match="collinear"):
            lw_weights(child, dup)

    def test_beta_invariant_to_affine_rescale_of_non_anchor(self):
        _, parent, edu, child = planted_proxy_data(20_000, seed=35)
        base = lw_weights(child, simple_matrix(parent, edu))
        rescaled = lw_weights(child, simple_matrix(parent, 7.0 * edu + 3.0))
        assert rescaled.beta_lw == pytest.approx(base.beta_lw, rel=1e-6)
        assert rescaled.rho[1] == pytest.approx(7.0 * base.rho[1], rel=1e-9)
        assert rescaled.b[1] == pytest.approx(base.b[1] / 7.0, rel=1e-9)

    def test_occupation_block_with_reference_drop(self):
        rng = np.random.default_rng(36)
        status, parent, edu, child = planted_proxy_data(20_000, seed=36)
        occ = np.clip((status * 2 + 5).astype(int), 0, 9)
        occ[rng.random(20_000) < 0.1] = 10
        proxies = build_proxy_matrix(np.exp(parent + 10), edu, occ)
        fit = lw_weights(child, proxies)
        assert fit.b[fit.labels.index(lw.OCC_MISSING_LABEL)] == 0.0
        shares = proxy_contributions(fit)
        assert sum(shares.values()) == pytest.approx(1.0, abs=1e-9)


class TestLWBetaAndContributions:
    def test_single_proxy_contribution_is_one(self):
        rng = np.random.default_rng(37)
        parent = rng.standard_normal(2_000)
        child = 0.3 * parent + rng.standard_normal(2_000)
        fit = lw_weights(child, simple_matrix(parent))
        assert lw_beta(fit) == fit.beta_lw
        assert proxy_contributions(fit) == {lw.ANCHOR_LABEL: 1.0}

    def test_zero_coefficient_zero_contribution(self):
        fit = lw.LWFit(rho=np.array([1.0, 0.5]), b=np.array([0.4, 0.0]),
                       beta_lw=0.4, labels=(lw.ANCHOR_LABEL, lw.EDUCATION_LABEL),
                       n=100)
        assert proxy_contributions(fit)[lw.EDUCATION_LABEL] == 0.0

    def test_contributions_sum_to_one(self):
        _, parent, edu, child = planted_proxy_data(30_000, seed=38)
        fit = lw_weights(child, simple_matrix(parent, edu))
        assert sum(proxy_contributions(fit).values()) == pytest.approx(1.0, abs=1e-9)

    def test_equally_informative_proxies_split_evenly(self):
        _, parent, edu, child = planted_proxy_data(
            100_000, seed=39, income_noise_var=0.5, edu_noise_var=0.5)
        fit = lw_weights(child, simple_matrix(parent, edu))
        shares = proxy_contributions(fit)
        assert shares[lw.ANCHOR_LABEL] == pytest.approx(0.5, abs=0.05)
        assert shares[lw.EDUCATION_LABEL] == pytest.approx(0.5, abs=0.05)


class TestLWIndex:
    def test_single_proxy_index_ranks_equal_income_ranks(self):
        rng = np.random.default_rng(40)
        parent = rng.standard_normal(3_000)
        child = 0.4 * parent + rng.standard_normal(3_000)
        fit = lw_weights(child, simple_matrix(parent))
        idx_ranks = lw_index_ranks(fit, simple_matrix(parent))
        assert np.array_equal(idx_ranks, ranking.percentile_ranks(parent))

    def test_common_rescale_leaves_index_ranks_unchanged(self):
        _, parent, edu, child = planted_proxy_data(5_000, seed=41)
        base_m = simple_matrix(parent, edu)
        scaled_m = ProxyMatrix(values=2.0 * base_m.values, labels=base_m.labels)
        base_ranks = lw_index_ranks(lw_weights(child, base_m), base_m)
        scaled_ranks = lw_index_ranks(lw_weights(child, scaled_m), scaled_m)
        assert np.array_equal(base_ranks, scaled_ranks)

    def test_index_tracks_latent_status_better_than_income(self):
        status, parent, edu, child = planted_proxy_data(100_000, seed=42)
        m = simple_matrix(parent, edu)
        fit = lw_weights(child, m)
        idx = lw_index(fit, m)
        assert (np.corrcoef(idx, status)[0, 1]
                > np.corrcoef(parent, status)[0, 1] + 0.01)

    def test_zero_beta_rejected(self):
        fit = lw.LWFit(rho=np.array([1.0]), b=np.array([0.0]), beta_lw=0.0,
                       labels=(lw.ANCHOR_LABEL,), n=10)
        with pytest.raises(ValueError, match="index undefined"):
            lw_index(fit, simple_matrix(np.arange(10.0)))


class TestRankAssociationAndFlip:
    def test_identical_ranks_slope_one(self):
        ranks = np.linspace(0.5, 99.5, 200)
        assert lw_rank_association(ranks, ranks).slope == pytest.approx(1.0)

    def test_independent_ranks_slope_zero(self):
        rng = np.random.default_rng(43)
        a = ranking.percentile_ranks(rng.standard_normal(50_000))
        b = ranking.percentile_ranks(rng.standard_normal(50_000))
        assert abs(lw_rank_association(a, b).slope) < 0.015

    def test_flip_equals_forward_for_rank_margins(self):
        rng = np.random.default_rng(44)
        x = rng.standard_normal(100_000)
        y = 0.3 * x + np.sqrt(1 - 0.09) * rng.standard_normal(100_000)
        child = ranking.percentile_ranks(y)
        parent = ranking.percentile_ranks(x)
        forward = ira(child, parent).slope
        flipped = flip_regression(parent, child).slope
        assert flipped == pytest.approx(forward, abs=0.01)

    def test_identity_slope_both_directions(self):
        r = np.linspace(0.5, 99.5, 100)
        assert flip_regression(r, r).slope == pytest.approx(1.0)

    def test_noise_proxies_collapse_to_ira(self):
        # with uninformative education and occupation, the index rank
        # slope must match the plain income rank slope
        rng = np.random.default_rng(45)
        n = 100_000
        status = rng.standard_normal(n)
        parent_income = np.exp(10 + status + 0.6 * rng.standard_normal(n))
        child_income = np.exp(10 + 0.35 * status + rng.standard_normal(n))
        edu = rng.standard_normal(n)
        occ = rng.integers(0, 11, n)
        proxies = build_proxy_matrix(parent_income, edu, occ)
        child_log = token_log_income(child_income)
        fit = lw_weights(child_log, proxies)
        idx_ranks = lw_index_ranks(fit, proxies)
        child_ranks = ranking.percentile_ranks(child_income)
        lw_slope = lw_rank_association(child_ranks, idx_ranks).slope
        ira_slope = ira(child_ranks, ranking.percentile_ranks(parent_income)).slope
        assert abs(lw_slope - ira_slope) < 0.01

    def test_token_level_insensitivity(self):
        # the exact token assigned to zero earners barely moves the
        # rank-association slope
        rng = np.random.default_rng(46)
        n = 50_000
        status = rng.standard_normal(n)
        parent_income = np.exp(10 + status + 0.8 * rng.standard_normal(n))
        parent_income[rng.random(n) < 0.2] = 0.0
        child_income = np.exp(10 + 0.35 * status + rng.standard_normal(n))
        child_ranks = ranking.percentile_ranks(child_income)
        slopes = []
        for divisor in (10.0, 100.0, 1000.0):
            proxies = build_proxy_matrix(parent_income, token_divisor=divisor)
            fit = lw_weights(token_log_income(child_income), proxies)
            slopes.append(lw_rank_association(
                child_ranks, lw_index_ranks(fit, proxies)).slope)
        assert max(slopes) - min(slopes) < 0.01
