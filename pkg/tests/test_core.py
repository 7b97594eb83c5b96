import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import logsumexp_direct
from robust_bed.core import (
    Order,
    RegularityConstants,
    Seed,
    alpha_from_beta,
    as_alpha,
    beta_from_alpha,
    calibrate_beta,
    derive_rng,
    log_sum_exp,
)
from robust_bed.errors import InvalidArgumentError, LimitUndefinedError
from robust_bed import linreg

finite = st.floats(-50, 50, allow_nan=False)


class TestOrder:
    @pytest.mark.parametrize("alpha", [0.0, -0.1, 1.0000001, 1.5, float("nan"), float("inf")])
    def test_rejects_outside_unit_interval(self, alpha):
        with pytest.raises(InvalidArgumentError):
            Order(alpha)

    def test_beta_finite_below_one_infinite_at_one(self):
        assert Order(0.5).beta() == 1.0
        assert math.isinf(Order(1.0).beta())
        assert Order(1.0).is_shannon

    def test_from_beta_round_trip(self):
        assert Order.from_beta(9.0).alpha == pytest.approx(0.9, abs=1e-15)
        assert Order.from_beta(math.inf).alpha == 1.0

    def test_as_alpha_accepts_float_or_order(self):
        assert as_alpha(0.3) == as_alpha(Order(0.3)) == 0.3


class TestRegularityConstants:
    def test_defaults_are_unit(self):
        c = RegularityConstants()
        assert (c.L_f, c.C_h, c.tau) == (1.0, 1.0, 1.0)

    def test_negative_rejected(self):
        with pytest.raises(InvalidArgumentError):
            RegularityConstants(L_h=-1.0)

    def test_tau_positive(self):
        with pytest.raises(InvalidArgumentError):
            RegularityConstants(tau=0.0)


class TestLogSumExp:
    def test_two_equal_terms(self):
        assert log_sum_exp([0.0, 0.0]) == pytest.approx(math.log(2), abs=1e-15)

    def test_no_underflow(self):
        assert log_sum_exp([-1000.0, -1000.0]) == pytest.approx(-1000.0 + math.log(2), abs=1e-12)

    def test_direct_summation(self):
        assert log_sum_exp([1.0, 2.0, 3.0]) == pytest.approx(logsumexp_direct([1, 2, 3]), abs=1e-14)
        assert log_sum_exp([1.0, 2.0, 3.0]) == pytest.approx(3.40760596444438, abs=1e-13)

    def test_no_overflow(self):
        assert log_sum_exp([1000.0, 1000.0]) == pytest.approx(1000.0 + math.log(2))

    def test_negative_infinity_entries(self):
        assert log_sum_exp([-np.inf, 0.0]) == 0.0
        assert log_sum_exp([-np.inf, -np.inf]) == -np.inf

    def test_empty_rejected(self):
        with pytest.raises(InvalidArgumentError):
            log_sum_exp([])

    def test_nan_rejected(self):
        with pytest.raises(InvalidArgumentError):
            log_sum_exp([0.0, np.nan])

    @given(st.lists(finite, min_size=1, max_size=20), finite)
    def test_shift_equivariance(self, values, c):
        v = np.array(values)
        assert log_sum_exp(v + c) == pytest.approx(log_sum_exp(v) + c, abs=1e-9)

    @given(st.lists(finite, min_size=1, max_size=20), st.randoms())
    def test_permutation_invariance(self, values, rnd):
        shuffled = list(values)
        rnd.shuffle(shuffled)
        assert log_sum_exp(shuffled) == pytest.approx(log_sum_exp(values), abs=1e-12)


class TestBetaAlpha:
    def test_examples(self):
        assert beta_from_alpha(0.5) == 1.0
        assert beta_from_alpha(Order(0.9)) == pytest.approx(9.0, rel=1e-14)
        assert alpha_from_beta(beta_from_alpha(0.123)) == pytest.approx(0.123, abs=1e-12)

    def test_alpha_one_undefined(self):
        with pytest.raises(LimitUndefinedError):
            beta_from_alpha(1.0)

    def test_nonpositive_beta_rejected(self):
        with pytest.raises(InvalidArgumentError):
            alpha_from_beta(0.0)

    @given(st.floats(1e-6, 1 - 1e-6), st.floats(1e-6, 1 - 1e-6))
    def test_strictly_increasing(self, a, b):
        if a < b:
            assert beta_from_alpha(a) < beta_from_alpha(b)

    @given(st.floats(1e-6, 1 - 1e-6))
    def test_round_trip(self, a):
        assert alpha_from_beta(beta_from_alpha(a)) == pytest.approx(a, abs=1e-12)


class TestCalibrateBeta:
    grid = list(np.round(np.linspace(0.1, 10.0, 100), 10))

    def test_constant_objective_picks_smallest(self):
        beta, value = calibrate_beta(lambda b: 2.0, 0.3, self.grid)
        assert beta == self.grid[0]
        assert value == pytest.approx(2.0 - 0.3 * self.grid[0])

    def test_vanishing_penalty_picks_largest(self):
        beta, _ = calibrate_beta(lambda b: math.log1p(b), 1e-12, self.grid)
        assert beta == self.grid[-1]

    def test_matches_exhaustive_scan_linreg(self):
        model = linreg.LinRegModel.default()
        mi = lambda b: linreg.sibson_mi(model, [1.0], Order.from_beta(b))
        beta, value = calibrate_beta(mi, 0.1, self.grid)
        scan = [mi(b) - 0.1 * b for b in self.grid]
        k = int(np.argmax(scan))
        assert beta == self.grid[k]
        assert value == scan[k]

    def test_ties_go_to_smallest(self):
        # objective 0.5, 1.5, 1.5, 0.0 over the grid
        table = {1.0: 1.5, 2.0: 3.5, 3.0: 4.5, 4.0: 4.0}
        beta, value = calibrate_beta(table.__getitem__, 1.0, list(table))
        assert (beta, value) == (2.0, 1.5)

    @pytest.mark.parametrize("grid", [[], [0.0, 1.0], [-1.0, 2.0], [2.0, 1.0], [1.0, 1.0]])
    def test_invalid_grid(self, grid):
        with pytest.raises(InvalidArgumentError):
            calibrate_beta(lambda b: 0.0, 0.1, grid)

    def test_rho_positive(self):
        with pytest.raises(InvalidArgumentError):
            calibrate_beta(lambda b: 0.0, 0.0, [1.0])

    @settings(max_examples=30)
    @given(st.lists(st.floats(-5, 5), min_size=1, max_size=8), st.floats(0.01, 3.0))
    def test_value_is_grid_max(self, values, rho):
        grid = list(range(1, len(values) + 1))
        table = dict(zip(grid, values))
        _, value = calibrate_beta(lambda b: table[int(b)], rho, [float(g) for g in grid])
        assert value == max(v - rho * g for g, v in table.items())


class TestSeeds:
    def test_derived_streams_are_pure(self):
        a = derive_rng(7, 3).random(5)
        b = derive_rng(7, 3).random(5)
        np.testing.assert_array_equal(a, b)

    def test_order_of_requests_irrelevant(self):
        first = [derive_rng(1, i).random() for i in range(5)]
        second = [derive_rng(1, i).random() for i in reversed(range(5))][::-1]
        assert first == second

    def test_distinct_keys_distinct_streams(self):
        assert derive_rng(1, 0).random() != derive_rng(1, 1).random()
        assert derive_rng(1).random() != derive_rng(2).random()

    def test_seed_object(self):
        np.testing.assert_array_equal(Seed(5).rng(2).random(3), derive_rng(5, 2).random(3))
        with pytest.raises(InvalidArgumentError):
            Seed(-1)
