import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import power_marginal, enum_bridge
from qsd.kernels import (
    Generator,
    SubStochasticKernel,
    as_distribution,
    bridge_marginals,
    conditioned_evolve,
    conditioned_marginal_given_T,
    log_survival_vector,
    read_kernel,
    survival_probability,
    survival_vector,
    tv_distance,
    uniformize,
    write_kernel,
)


class TestConstruction:
    def test_rejects_negative_entries(self):
        with pytest.raises(ValueError, match="negative"):
            SubStochasticKernel([[0.5, -0.1], [0.2, 0.3]])

    def test_rejects_nan(self):
        with pytest.raises(ValueError, match="finite"):
            SubStochasticKernel([[np.nan, 0.1], [0.2, 0.3]])

    def test_rejects_row_sum_above_one(self):
        with pytest.raises(ValueError, match="sums to"):
            SubStochasticKernel([[0.8, 0.3], [0.2, 0.3]])

    def test_rejects_no_absorption(self):
        with pytest.raises(ValueError, match="no absorption"):
            SubStochasticKernel([[0.5, 0.5], [0.5, 0.5]])

    def test_rejects_reducible_with_diagnostic(self):
        with pytest.raises(ValueError, match="reducible or periodic"):
            SubStochasticKernel([[0.5, 0.0], [0.2, 0.3]])

    def test_rejects_periodic(self):
        # strict two-cycle: irreducible but period 2
        with pytest.raises(ValueError, match="reducible or periodic"):
            SubStochasticKernel([[0.0, 0.9], [0.9, 0.0]])

    def test_rejects_bad_time_unit(self):
        with pytest.raises(ValueError, match="time_unit"):
            SubStochasticKernel([[0.5]], time_unit=0.0)

    def test_entries_read_only(self, w3):
        with pytest.raises(ValueError):
            w3.entries[0, 0] = 0.9

    def test_absorption_probabilities(self, w3):
        np.testing.assert_allclose(
            w3.absorption_probabilities, [0.3, 0.1, 0.1], atol=1e-15
        )


class TestDistribution:
    def test_normalized_check(self):
        with pytest.raises(ValueError, match="sum"):
            as_distribution([0.5, 0.4])

    def test_negative_rejected(self):
        with pytest.raises(ValueError, match="negative"):
            as_distribution([1.2, -0.2])

    def test_unnormalized_allowed_when_flagged(self):
        v = as_distribution([2.0, 1.0], normalized=False)
        assert v.tolist() == [2.0, 1.0]


class TestSurvival:
    def test_single_state_three_steps(self, single):
        np.testing.assert_allclose(survival_vector(single, 3), [0.125], rtol=0, atol=1e-15)

    def test_t_zero_is_ones(self, w3):
        assert survival_vector(w3, 0).tolist() == [1.0, 1.0, 1.0]

    def test_t3_constant_rows(self, t3):
        np.testing.assert_allclose(survival_vector(t3, 2), [0.49, 0.49], atol=1e-15)

    def test_markov_decomposition(self, w3):
        # (K^(t+s) 1)(x) = sum_y K^t(x,y) (K^s 1)(y)
        for t, s in [(1, 1), (3, 2), (5, 7)]:
            lhs = survival_vector(w3, t + s)
            rhs = np.linalg.matrix_power(w3.entries, t) @ survival_vector(w3, s)
            np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_log_survival_matches_direct(self, w3):
        np.testing.assert_allclose(
            np.exp(log_survival_vector(w3, 20)), survival_vector(w3, 20), rtol=1e-12
        )

    def test_log_survival_deep_horizon(self, w3):
        ls = log_survival_vector(w3, 5000)
        assert np.all(np.isfinite(ls))
        assert ls.max() < -700  # far beyond double range

    def test_survival_probability_from_mixture(self, t3):
        p = survival_probability(t3, [0.5, 0.5], 5)
        assert p == pytest.approx(0.7**5, rel=1e-12)


class TestConditionedEvolve:
    def test_single_state_fixed(self, single):
        np.testing.assert_allclose(conditioned_evolve(single, [1.0], 7), [1.0])

    def test_t3_one_step(self, t3):
        np.testing.assert_allclose(
            conditioned_evolve(t3, [1.0, 0.0], 1), [4 / 7, 3 / 7], atol=1e-15
        )

    def test_t_zero_identity(self, w3):
        mu = [0.2, 0.5, 0.3]
        np.testing.assert_allclose(conditioned_evolve(w3, mu, 0), mu)

    def test_w3_matches_power_oracle(self, w3):
        got = conditioned_evolve(w3, [1.0, 0.0, 0.0], 5)
        want = power_marginal(w3.entries, [1.0, 0.0, 0.0], 5)
        np.testing.assert_allclose(got, want, atol=1e-13)

    def test_semigroup_property(self, w3):
        mu = np.array([0.1, 0.6, 0.3])
        for t, s in [(2, 3), (4, 9), (1, 17)]:
            two_step = conditioned_evolve(w3, conditioned_evolve(w3, mu, t), s)
            direct = conditioned_evolve(w3, mu, t + s)
            np.testing.assert_allclose(two_step, direct, atol=1e-10)

    def test_deep_horizon_never_underflows(self, w3):
        # stepwise renormalization keeps three thousand steps finite
        law = conditioned_evolve(w3, [1.0, 0.0, 0.0], 3000)
        assert law.sum() == pytest.approx(1.0, abs=1e-12)

    def test_dead_mass_signals_horizon_too_large(self):
        from qsd.kernels import HorizonTooLarge

        K = SubStochasticKernel([[1e-320]])
        with pytest.raises(HorizonTooLarge):
            conditioned_evolve(K, [1.0], 1)


class TestBridgeMarginal:
    def test_t_zero_is_point_mass(self, w3):
        np.testing.assert_allclose(
            conditioned_marginal_given_T(w3, 1, 0, 6), [0.0, 1.0, 0.0]
        )

    def test_t_equals_T_reduces_to_evolve(self, w3):
        got = conditioned_marginal_given_T(w3, 2, 4, 4)
        want = conditioned_evolve(w3, [0.0, 0.0, 1.0], 4)
        np.testing.assert_array_equal(got, want)

    def test_t3_reweighting_is_uniform(self, t3):
        # constant row sums: conditioning on the future adds nothing
        for t, T in [(1, 4), (2, 9), (3, 3)]:
            got = conditioned_marginal_given_T(t3, 0, t, T)
            want = conditioned_evolve(t3, [1.0, 0.0], t)
            np.testing.assert_allclose(got, want, atol=1e-14)

    def test_w3_matches_path_enumeration(self, w3):
        got = conditioned_marginal_given_T(w3, 1, 2, 6)
        want = enum_bridge(w3.entries, 1, 2, 6)
        np.testing.assert_allclose(got, want, atol=1e-12)

    def test_bridge_marginals_consistent(self, w3):
        M = bridge_marginals(w3, 3, 11)
        for x in range(3):
            np.testing.assert_allclose(
                M[x], conditioned_marginal_given_T(w3, x, 3, 11), atol=1e-14
            )

    def test_rejects_bad_times(self, w3):
        with pytest.raises(ValueError):
            conditioned_marginal_given_T(w3, 0, 5, 3)


class TestTV:
    def test_equal_is_zero(self):
        assert tv_distance([0.3, 0.7], [0.3, 0.7]) == 0.0

    def test_disjoint_is_one(self):
        assert tv_distance([1.0, 0.0], [0.0, 1.0]) == 1.0

    def test_half_l1(self):
        assert tv_distance([0.75, 0.25], [0.25, 0.75]) == pytest.approx(0.5)

    @given(st.integers(2, 6), st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_triangle_inequality(self, n, seed):
        rng = np.random.default_rng(seed)
        u, v, w = (rng.dirichlet(np.ones(n)) for _ in range(3))
        assert tv_distance(u, w) <= tv_distance(u, v) + tv_distance(v, w) + 1e-12

    @given(st.integers(2, 6), st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_symmetry_and_range(self, n, seed):
        rng = np.random.default_rng(seed)
        u, v = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))
        d = tv_distance(u, v)
        assert d == tv_distance(v, u)
        assert 0.0 <= d <= 1.0


class TestUniformize:
    def test_single_rate(self):
        K = uniformize(Generator([[-1.0]]), 2.0)
        assert K.entries[0, 0] == 0.5
        assert K.time_unit == 0.5

    def test_two_state_arithmetic(self):
        K = uniformize(Generator([[-2.0, 1.0], [1.0, -2.0]]), 2.5)
        np.testing.assert_allclose(K.entries, [[0.2, 0.4], [0.4, 0.2]])
        assert K.time_unit == 0.4

    def test_two_state_at_exact_clock_is_periodic(self):
        # theta equal to the diagonal rate zeroes every diagonal entry here,
        # producing a two-cycle, which the construction invariant rejects
        with pytest.raises(ValueError, match="reducible or periodic"):
            uniformize(Generator([[-2.0, 1.0], [1.0, -2.0]]), 2.0)

    def test_rejects_small_theta(self):
        with pytest.raises(ValueError, match="diagonal"):
            uniformize(Generator([[-2.0, 1.0], [1.0, -2.0]]), 1.5)

    def test_generator_validation(self):
        with pytest.raises(ValueError, match="off-diagonal"):
            Generator([[-1.0, -0.1], [0.2, -0.3]])
        with pytest.raises(ValueError, match="row sums"):
            Generator([[-1.0, 1.5], [0.2, -0.3]])


class TestKernelFile:
    def test_roundtrip(self, w3, tmp_path):
        p = tmp_path / "k.txt"
        write_kernel(w3, p)
        back = read_kernel(p)
        np.testing.assert_array_equal(back.entries, w3.entries)
        assert back.time_unit == w3.time_unit

    def test_rejects_negative_with_line_number(self, tmp_path):
        p = tmp_path / "k.txt"
        p.write_text("n 2 time_unit 1\n0.5 0.2\n-0.1 0.5\n")
        with pytest.raises(ValueError, match=":3"):
            read_kernel(p)

    def test_rejects_nan(self, tmp_path):
        p = tmp_path / "k.txt"
        p.write_text("n 2 time_unit 1\n0.5 nan\n0.1 0.5\n")
        with pytest.raises(ValueError, match="NaN"):
            read_kernel(p)

    def test_rejects_bad_header(self, tmp_path):
        p = tmp_path / "k.txt"
        p.write_text("size 2\n0.5 0.2\n0.1 0.5\n")
        with pytest.raises(ValueError, match="expected 'n"):
            read_kernel(p)

    def test_rejects_wrong_row_count(self, tmp_path):
        p = tmp_path / "k.txt"
        p.write_text("n 3 time_unit 1\n0.5 0.2 0\n0.1 0.5 0.1\n")
        with pytest.raises(ValueError, match="expected 3 rows"):
            read_kernel(p)
