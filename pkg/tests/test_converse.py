import math

import numpy as np
import pytest

from oracles import enum_pair_tv
from qsd.converse import certify_converse, dobrushin_coeff, hypothesis_check
from qsd.kernels import bridge_marginals, tv_distance
from qsd.qprocess import build_q_kernel
from qsd.spectral import compute_spectral, fit_decay


class TestDobrushin:
    def test_one_state_zero(self, single):
        assert dobrushin_coeff(single, 1, 5) == 0.0

    def test_t3_one_seventh_any_T(self, t3):
        for T in (1, 3, 9, 40):
            assert dobrushin_coeff(t3, 1, T) == pytest.approx(1 / 7, abs=1e-13)

    def test_w3_matches_path_enumeration(self, w3):
        got = dobrushin_coeff(w3, 2, 10)
        want = enum_pair_tv(w3.entries, 2, 10)
        assert got == pytest.approx(want, abs=1e-11)

    def test_range(self, w3):
        for t, T in [(1, 1), (1, 8), (3, 12)]:
            assert 0.0 <= dobrushin_coeff(w3, t, T) <= 1.0

    def test_submultiplicative_composition(self, w3):
        # coefficient of a composed bridge is at most the product of the
        # two block coefficients
        for t, s, T in [(1, 1, 10), (2, 1, 12), (2, 3, 16)]:
            whole = dobrushin_coeff(w3, t + s, T)
            assert whole <= dobrushin_coeff(w3, t, T) * dobrushin_coeff(w3, s, T - t) + 1e-12

    def test_bridge_semigroup_property(self, w3):
        # law(X_{t+s} | T) factors through law(X_t | T) and the shifted bridge
        for t, s, T in [(1, 2, 9), (3, 2, 11), (2, 2, 8)]:
            left = bridge_marginals(w3, t + s, T)
            step1 = bridge_marginals(w3, t, T)
            step2 = bridge_marginals(w3, s, T - t)
            np.testing.assert_allclose(left, step1 @ step2, atol=1e-10)


class TestCertifyConverse:
    def test_single_state(self, single):
        rep = certify_converse(single, T_max=50)
        assert rep.certified
        assert rep.t1 == 1
        assert rep.delta == 0.0

    def test_t3(self, t3):
        rep = certify_converse(t3, T_max=100)
        assert rep.certified
        assert rep.t1 == 1
        assert rep.delta == pytest.approx(1 / 7, abs=1e-12)

    def test_w3_needs_lag_two(self, w3):
        # the one-step bridge coefficient climbs to ~0.585 > 1/2 as T grows
        rep = certify_converse(w3, T_max=200)
        assert rep.certified
        assert rep.t1 == 2
        assert rep.delta <= 0.5
        assert rep.details["envelope_ok"]

    def test_w3_decay_curve_respects_envelope(self, w3):
        rep = certify_converse(w3, T_max=200)
        for T, v in rep.decay_curve:
            assert v <= rep.envelope(T) * (1 + 1e-9)

    def test_not_certified_reports_frontier(self, w3):
        rep = certify_converse(w3, t1_max=1, T_max=50)
        assert not rep.certified
        assert 1 in rep.probed
        assert math.isnan(rep.delta)

    def test_random_kernels_certify(self, random_kernels):
        for K in random_kernels[:8]:
            rep = certify_converse(K, T_max=64)
            assert rep.certified, f"n={K.n} failed"
            assert rep.delta <= 0.5

    def test_certified_rate_implies_gamma_floor(self, w3, w3_triple):
        # fitted conditioned-TV rate must clear ln2 / t1 (up to fit slack)
        rep = certify_converse(w3, T_max=200)
        series = []
        rows = np.eye(3)
        for t in range(1, 26):
            rows = rows @ w3.entries
            rows /= rows.sum(axis=1, keepdims=True)
            series.append(
                (t, max(tv_distance(rows[i], w3_triple.alpha) for i in range(3)))
            )
        gamma = fit_decay(series).gamma
        assert gamma >= 0.9 * math.log(2.0) / rep.t1


class TestHypothesisCheck:
    def test_t3_first_curve_zero_second_closed_form(self, t3, t3_triple):
        Q = build_q_kernel(t3, t3_triple)
        rep = hypothesis_check(t3, Q, range(1, 11), range(5, 51, 5))
        assert all(v == 0.0 for _, v in rep.marginal_curve)
        for t, v in rep.coupling_curve:
            assert v == pytest.approx(7.0 ** (-t), rel=1e-9)
        assert rep.marginal_decays and rep.coupling_decays
        assert rep.coupling_rate == pytest.approx(math.log(7.0), rel=1e-6)

    def test_single_state_both_zero(self, single):
        S = compute_spectral(single)
        Q = build_q_kernel(single, S)
        rep = hypothesis_check(single, Q, range(1, 6), range(2, 21, 2))
        assert all(v == 0.0 for _, v in rep.marginal_curve)
        assert all(v == 0.0 for _, v in rep.coupling_curve)

    def test_w3_rates_match_fitted_pair(self, w3, w3_triple):
        from qsd.qprocess import fitted_rates

        Q = build_q_kernel(w3, w3_triple)
        rep = hypothesis_check(w3, Q, range(1, 9), range(12, 61, 4))
        gamma, gamma_prime = fitted_rates(w3, w3_triple)
        assert rep.marginal_decays and rep.coupling_decays
        assert rep.marginal_rate == pytest.approx(gamma, rel=0.05)
        assert rep.coupling_rate == pytest.approx(gamma_prime, rel=0.05)


class TestEndToEnd:
    def test_certified_random_kernels_rate_floor(self, random_kernels):
        # whenever certification succeeds, the conditioned-TV decay rate
        # clears the rate the contraction argument yields
        for K in random_kernels[:6]:
            rep = certify_converse(K, T_max=64)
            assert rep.certified
            S = compute_spectral(K)
            rows = np.eye(K.n)
            series = []
            for t in range(1, 21):
                rows = rows @ K.entries
                rows /= rows.sum(axis=1, keepdims=True)
                worst = max(tv_distance(rows[i], S.alpha) for i in range(K.n))
                if worst > 1e-13:
                    series.append((t, worst))
            gamma = fit_decay(series).gamma
            assert gamma >= 0.9 * math.log(2.0) / rep.t1