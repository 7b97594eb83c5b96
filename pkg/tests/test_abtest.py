import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import logsumexp

from oracles import ab_shannon_bruteforce, ab_sibson_bruteforce, ab_tilted_pmf_bruteforce, binom_power_moment
from robust_bed import abtest
from robust_bed.abtest import ABModel, Allocation
from robust_bed.errors import CapacityError, InvalidArgumentError
from robust_bed.renyi import BetaDist

PINNED = ((2.0, 3.0), (0.7, 1.4))


def pinned_model(total):
    return ABModel(BetaDist(*PINNED[0]), BetaDist(*PINNED[1]), total)


shapes = st.floats(0.3, 8.0)


class TestModel:
    def test_budget_validated(self):
        with pytest.raises(InvalidArgumentError):
            ABModel.uniform(0)
        with pytest.raises(InvalidArgumentError):
            Allocation(-1, 3)

    def test_allocation_must_spend_budget(self):
        with pytest.raises(InvalidArgumentError):
            abtest.sibson_mi(ABModel.uniform(5), Allocation(2, 2), 0.5)

    def test_allocations_cover_budget(self):
        assert [a.sizes for a in ABModel.uniform(2).allocations()] == [(0, 2), (1, 1), (2, 0)]


class TestMarginal:
    def test_empty_groups(self):
        empty = Allocation(0, 0)
        assert abtest.log_predictive_pmf(ABModel.uniform(1), (BetaDist(1, 1), BetaDist(2, 3)), empty, (0, 0)) == 0.0

    def test_uniform_single_subject(self):
        model = ABModel.uniform(1)
        for x in (0, 1):
            assert math.exp(abtest.marginal_log_pmf(model, Allocation(1, 0), (x, 0))) == pytest.approx(0.5, abs=1e-15)

    def test_grid_sums_to_one(self):
        pmf = abtest.nominal_marginal_pmf(pinned_model(5), Allocation(3, 2))
        assert pmf.shape == (4, 3)
        assert pmf.sum() == pytest.approx(1.0, abs=1e-12)

    def test_outcome_range(self):
        with pytest.raises(InvalidArgumentError):
            abtest.marginal_log_pmf(ABModel.uniform(3), Allocation(2, 1), (3, 0))


class TestPosterior:
    def test_conjugate_update(self):
        model = ABModel.uniform(10)
        qa, qb = abtest.posterior(model, Allocation(10, 0), (7, 0))
        assert qa == BetaDist(8, 4)
        assert qb == BetaDist(1, 1)

    def test_importance_sampling_mean(self):
        model, alloc, x = pinned_model(9), Allocation(4, 5), (3, 1)
        rng = np.random.default_rng(11)
        qa, qb = abtest.posterior(model, alloc, x)
        for prior, n, k, q in ((model.prior_a, 4, 3, qa), (model.prior_b, 5, 1, qb)):
            t = rng.beta(prior.delta, prior.gamma, 200_000)
            w = t**k * (1 - t) ** (n - k)
            assert np.sum(w * t) / np.sum(w) == pytest.approx(q.mean(), abs=5e-3)

    def test_tilted(self):
        model = ABModel.uniform(10)
        assert abtest.tilted_posterior(model, Allocation(10, 0), (3, 0), 0.5)[0] == BetaDist(2.5, 4.5)
        assert (abtest.tilted_posterior(model, Allocation(6, 4), (3, 1), 1.0)
                == abtest.posterior(model, Allocation(6, 4), (3, 1)))
        qa, _ = abtest.tilted_posterior(pinned_model(9), Allocation(4, 5), (3, 1), 1e-9)
        assert qa.delta == pytest.approx(2.0, abs=1e-6)
        assert qa.gamma == pytest.approx(3.0, abs=1e-6)


class TestLogZ:
    def test_empty(self):
        assert abtest.log_Z_alpha(BetaDist(2, 3), 0, 0, 0.5) == 0.0

    def test_alpha_one_is_marginal(self):
        model = pinned_model(4)
        value = abtest.log_Z_alpha(model.prior_a, 4, 2, 1.0)
        assert value == pytest.approx(abtest.marginal_log_pmf(model, Allocation(4, 0), (2, 0)), abs=1e-13)

    def test_hand_value(self):
        value = abtest.log_Z_alpha(BetaDist(1, 1), 2, 1, 0.5)
        assert value == pytest.approx(0.5 * math.log(2) + math.log(math.pi / 8), abs=1e-14)
        assert value == pytest.approx(-0.5881380655504631, abs=1e-13)
        assert value == pytest.approx(math.log(binom_power_moment(1, 1, 2, 1, 0.5)), abs=1e-9)

    def test_range_checked(self):
        with pytest.raises(InvalidArgumentError):
            abtest.log_Z_alpha(BetaDist(1, 1), 2, 3, 0.5)


class TestTiltedMarginal:
    def test_alpha_one_is_nominal(self):
        model, alloc = pinned_model(7), Allocation(3, 4)
        np.testing.assert_allclose(abtest.tilted_marginal_pmf(model, alloc, 1.0),
                                   abtest.nominal_marginal_pmf(model, alloc), atol=1e-15)

    def test_symmetry(self):
        model = ABModel(BetaDist(2, 5), BetaDist(2, 5), 6)
        pmf = abtest.tilted_marginal_pmf(model, Allocation(3, 3), 0.4)
        np.testing.assert_allclose(pmf, pmf.T, atol=1e-15)

    def test_pinned_grid(self):
        expected = [
            [0.17468424521137135, 0.1313768592687842, 0.06656163042357874, 0.020195142258699166],
            [0.1971588257372139, 0.1482795845219736, 0.07512533759176653, 0.022793415219004083],
            [0.07285218190809153, 0.054790807484567355, 0.027759572718479224, 0.008422397656470303],
        ]
        pmf = abtest.tilted_marginal_pmf(pinned_model(5), Allocation(2, 3), 0.3)
        np.testing.assert_allclose(pmf, expected, atol=1e-9)

    def test_quadrature_budget_five(self):
        priors = ((1.5, 2.5), (3.0, 0.9))
        model = ABModel(BetaDist(*priors[0]), BetaDist(*priors[1]), 5)
        for n_a in (0, 2, 5):
            pmf = abtest.tilted_marginal_pmf(model, model.allocation(n_a), 0.6)
            np.testing.assert_allclose(pmf, ab_tilted_pmf_bruteforce(priors, n_a, 5 - n_a, 0.6), atol=1e-6)


class TestSibson:
    def test_empty_groups(self):
        assert abtest.group_sibson_mi(BetaDist(1, 1), 0, 0.5) == 0.0
        assert abtest.sibson_mi(ABModel.uniform(3), Allocation(3, 0), 0.5) == pytest.approx(
            abtest.group_sibson_mi(BetaDist(1, 1), 3, 0.5))

    def test_single_subject_shannon(self):
        value = abtest.group_sibson_mi(BetaDist(1, 1), 1, 1.0)
        assert value == pytest.approx(math.log(2) - 0.5, abs=1e-14)
        assert abtest.sibson_mi(ABModel.uniform(2), Allocation(1, 1), 1.0) == pytest.approx(
            0.3862943611198905, abs=1e-14)

    @pytest.mark.parametrize("alpha, expected", [
        (0.1, 0.1593821312342936), (0.5, 0.563600508860701), (0.9, 0.8047637030359869),
    ])
    def test_pinned_instance(self, alpha, expected):
        assert abtest.sibson_mi(pinned_model(9), Allocation(4, 5), alpha) == pytest.approx(expected, abs=1e-6)

    def test_matches_bruteforce_small(self):
        priors = ((0.8, 1.7), (2.2, 1.1))
        model = ABModel(BetaDist(*priors[0]), BetaDist(*priors[1]), 4)
        for alpha in (0.2, 0.7):
            assert abtest.sibson_mi(model, Allocation(1, 3), alpha) == pytest.approx(
                ab_sibson_bruteforce(priors, 1, 3, alpha), abs=1e-6)

    def test_shannon_pinned(self):
        assert abtest.sibson_mi(pinned_model(9), Allocation(4, 5), 1.0) == pytest.approx(
            0.8520809949329338, abs=1e-10)
        assert ab_shannon_bruteforce(PINNED, 4, 5) == pytest.approx(0.8520809949329338, abs=1e-7)

    def test_vanishing(self):
        assert abtest.sibson_mi(pinned_model(9), Allocation(4, 5), 1e-6) < 1e-5

    def test_curve_and_best(self):
        model = pinned_model(8)
        curve = abtest.sibson_curve(model, 0.5)
        assert curve.shape == (9,)
        for n_a in range(9):
            assert curve[n_a] == pytest.approx(abtest.sibson_mi(model, model.allocation(n_a), 0.5), abs=1e-14)
        assert abtest.best_allocation(model, 0.5).n_a == int(np.argmax(curve))

    def test_best_ties_go_to_smallest(self):
        # symmetric priors, odd budget: n_a = 1 and n_a = 2 tie
        assert abtest.best_allocation(ABModel.uniform(3), 0.5).n_a == 1

    @settings(max_examples=30)
    @given(shapes, shapes, shapes, shapes, st.integers(1, 12), st.floats(0.01, 1.0), st.floats(0.01, 1.0))
    def test_monotone_in_alpha(self, da, ga, db, gb, total, a1, a2):
        model = ABModel(BetaDist(da, ga), BetaDist(db, gb), total)
        alloc = model.allocation(total // 2)
        lo, hi = sorted((a1, a2))
        assert abtest.sibson_mi(model, alloc, lo) <= abtest.sibson_mi(model, alloc, hi) + 1e-10

    @settings(max_examples=30)
    @given(shapes, shapes, shapes, shapes, st.integers(1, 12), st.floats(0.05, 1.0))
    def test_swap_symmetry(self, da, ga, db, gb, total, a):
        model = ABModel(BetaDist(da, ga), BetaDist(db, gb), total)
        swapped = ABModel(BetaDist(db, gb), BetaDist(da, ga), total)
        n_a = total // 3
        assert abtest.sibson_mi(model, Allocation(n_a, total - n_a), a) == pytest.approx(
            abtest.sibson_mi(swapped, Allocation(total - n_a, n_a), a), abs=1e-12)


class TestSampling:
    def test_frequencies_match_tilted(self):
        model, alloc, a = pinned_model(5), Allocation(2, 3), 0.3
        count = 100_000
        _, x = abtest.sample_worst_case(model, alloc, a, count, np.random.default_rng(6))
        freq = np.zeros((3, 4))
        np.add.at(freq, (x[:, 0], x[:, 1]), 1.0)
        freq /= count
        pmf = abtest.tilted_marginal_pmf(model, alloc, a)
        se = np.sqrt(pmf * (1 - pmf) / count)
        assert np.all(np.abs(freq - pmf) < 3.5 * se)

    def test_near_one_matches_nominal_moments(self):
        model, alloc = pinned_model(9), Allocation(4, 5)
        _, xw = abtest.sample_worst_case(model, alloc, 1.0 - 1e-9, 100_000, np.random.default_rng(7))
        _, xn = abtest.sample_nominal(model, alloc, 100_000, np.random.default_rng(8))
        se = np.sqrt(xw.var(0) / 100_000 + xn.var(0) / 100_000)
        assert np.all(np.abs(xw.mean(0) - xn.mean(0)) < 4 * se)
        np.testing.assert_allclose(xw.var(0), xn.var(0), rtol=0.03)

    def test_conditional_theta_mean(self):
        model, alloc, a = pinned_model(5), Allocation(2, 3), 0.3
        theta, x = abtest.sample_worst_case(model, alloc, a, 200_000, np.random.default_rng(9))
        mask = (x[:, 0] == 1) & (x[:, 1] == 2)
        qa, qb = abtest.tilted_posterior(model, alloc, (1, 2), a)
        sel = theta[mask]
        se = sel.std(0) / math.sqrt(mask.sum())
        assert abs(sel[:, 0].mean() - qa.mean()) < 4 * se[0]
        assert abs(sel[:, 1].mean() - qb.mean()) < 4 * se[1]

    def test_capacity(self):
        model = ABModel.uniform(201)
        with pytest.raises(CapacityError):
            abtest.sample_worst_case(model, model.allocation(100), 0.5, 1, np.random.default_rng(0))

    def test_count_validated(self):
        with pytest.raises(InvalidArgumentError):
            abtest.sample_worst_case(ABModel.uniform(2), Allocation(1, 1), 0.5, 0, np.random.default_rng(0))


class TestConditionalGain:
    def test_empty_group_contributes_nothing(self):
        from robust_bed.renyi import renyi_beta
        model = pinned_model(4)
        qb = abtest.posterior(model, Allocation(0, 4), (0, 3))[1]
        assert abtest.conditional_gain(model, Allocation(0, 4), (0, 3), 0.4) == pytest.approx(
            renyi_beta(qb, model.prior_b, 0.4), abs=1e-15)

    def test_empty_allocation_gain_zero(self):
        # posterior of an empty group equals its prior
        model = pinned_model(4)
        post = abtest.posterior(model, Allocation(0, 4), (0, 2))
        assert post[0] == model.prior_a

    @pytest.mark.parametrize("alpha", [0.1, 0.3, 0.5, 0.8])
    def test_risk_sensitive_aggregation_exact(self, alpha):
        model, alloc = pinned_model(9), Allocation(4, 5)
        log_p = np.log(abtest.nominal_marginal_pmf(model, alloc))
        gains = np.array([[abtest.conditional_gain(model, alloc, (i, j), alpha) for j in range(6)]
                          for i in range(5)])
        value = alpha / (alpha - 1) * logsumexp(log_p + (alpha - 1) / alpha * gains)
        assert value == pytest.approx(abtest.sibson_mi(model, alloc, alpha), abs=1e-8)

    def test_swap_covariance(self):
        model = pinned_model(5)
        swapped = ABModel(model.prior_b, model.prior_a, 5)
        assert abtest.conditional_gain(model, Allocation(2, 3), (1, 2), 0.4) == pytest.approx(
            abtest.conditional_gain(swapped, Allocation(3, 2), (2, 1), 0.4), abs=1e-14)


class TestLogPredictive:
    def test_prior_reduces_to_marginal(self):
        model, alloc = pinned_model(5), Allocation(2, 3)
        assert abtest.log_predictive_pmf(model, model.priors, alloc, (1, 1)) == pytest.approx(
            abtest.marginal_log_pmf(model, alloc, (1, 1)), abs=1e-14)

    def test_concentrated_beats_diffuse(self):
        model, alloc = ABModel.uniform(10), Allocation(5, 5)
        sharp = (BetaDist(1000, 1000), BetaDist(1000, 1000))
        flat = (BetaDist(1, 1), BetaDist(1, 1))
        assert (abtest.log_predictive_pmf(model, sharp, alloc, (2, 3))
                > abtest.log_predictive_pmf(model, flat, alloc, (2, 3)))


class TestGenerative:
    def test_log_likelihood(self):
        gen = abtest.ABGenerative(pinned_model(5))
        theta = np.array([0.3, 0.6])
        x = np.array([1, 2])
        expected = (math.log(2 * 0.3 * 0.7) + math.log(3 * 0.6**2 * 0.4))
        assert gen.log_likelihood(x, theta, np.int64(2)) == pytest.approx(expected, abs=1e-13)

    def test_boundary_theta(self):
        gen = abtest.ABGenerative(ABModel.uniform(2))
        assert gen.log_likelihood(np.array([0, 1]), np.array([0.0, 1.0]), np.int64(1)) == 0.0

    def test_log_marginal(self):
        model = pinned_model(5)
        gen = abtest.ABGenerative(model)
        value = gen.log_marginal(np.array([1, 2]), np.int64(2))
        assert value == pytest.approx(abtest.marginal_log_pmf(model, Allocation(2, 3), (1, 2)), abs=1e-13)

    def test_prepare(self):
        gen = abtest.ABGenerative(ABModel.uniform(4))
        assert gen.prepare(Allocation(1, 3)) == 1
        with pytest.raises(InvalidArgumentError):
            gen.prepare(5)
