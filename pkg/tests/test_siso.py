import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from bdris.netcore import Architecture
from bdris.siso import (AlignmentError, PowerBudget, SisoChannel, amp_factor_equal, asymptotic_snr,
                        crossover_elements, gamma_half, group_gain_factor, optimal_snr_active, passive_snr,
                        radiated_power_siso, snr, solve_bdris_nonreciprocal, solve_bdris_reciprocal, solve_drs,
                        symmetric_unitary_map, unitary_with_first_column)

from conftest import crandn, random_unitary

REF_PB = PowerBudget(1.9, 0.1, 2.0, 1e-12, 1e-12)


def _random_channel(rng, n, scale=1e-3):
    return SisoChannel(0.0, scale * crandn(rng, n), scale * crandn(rng, n))


class TestSnr:
    def test_direct_only(self):
        ch = SisoChannel(1.0, np.ones(2), np.ones(2))
        assert snr(np.zeros((2, 2)), ch, PowerBudget(1, 0, 0, 1, 1)) == pytest.approx(1.0)

    def test_nothing(self):
        ch = SisoChannel(0.0, np.ones(2), np.ones(2))
        assert snr(np.zeros((2, 2)), ch, REF_PB) == 0.0

    def test_first_principles(self, rng):
        ch = SisoChannel(0.3 - 0.2j, crandn(rng, 3), crandn(rng, 3))
        theta = crandn(rng, 3, 3)
        pb = PowerBudget(2.0, 0.5, 0, 0.3, 0.7)
        num = 2.0 * abs(ch.h_RT + sum(ch.h_RI[i] * theta[i, j] * ch.h_IT[j] for i in range(3) for j in range(3))) ** 2
        den = 0.3 * sum(abs(sum(ch.h_RI[i] * theta[i, j] for i in range(3))) ** 2 for j in range(3)) + 0.7
        assert snr(theta, ch, pb) == pytest.approx(num / den, rel=1e-13)

    def test_passive(self):
        ch = SisoChannel(0.0, np.ones(2), np.ones(2))
        assert passive_snr(np.eye(2), ch, PowerBudget(1, 0, 2.0, 1, 0.5)) == pytest.approx(2.0 * 4 / 0.5)


class TestRadiatedPower:
    def test_zero_theta(self, rng):
        assert radiated_power_siso(np.zeros((3, 3)), _random_channel(rng, 3), REF_PB) == 0.0

    def test_identity_unit_vector(self):
        ch = SisoChannel(0.0, [1, 0, 0], [1, 1, 1])
        pb = PowerBudget(1.0, 1.0, 0, 1e-300, 1.0)
        assert radiated_power_siso(np.eye(3), ch, pb) == pytest.approx(1.0)

    def test_monte_carlo_expectation(self, rng):
        ch = _random_channel(rng, 4, 1.0)
        theta = crandn(rng, 4, 4)
        pb = PowerBudget(1.5, 1.0, 0, 0.2, 1.0)
        m = 1_000_000
        s = crandn(rng, m)
        noise = math.sqrt(0.2) * crandn(rng, 4, m)
        out = theta @ (math.sqrt(1.5) * ch.h_IT[:, None] * s[None, :] + noise)
        assert radiated_power_siso(theta, ch, pb) == pytest.approx(np.mean(np.sum(np.abs(out) ** 2, 0)), rel=0.01)


class TestAmpFactor:
    def test_no_budget(self):
        assert amp_factor_equal(PowerBudget(1, 0, 0, 1, 1), np.ones(3), 3) == 0.0

    def test_noise_only(self):
        assert amp_factor_equal(PowerBudget(0, 4, 0, 1, 1), np.ones(4), 4) == pytest.approx(1.0)

    def test_reference_values(self):
        h = np.full(100, math.sqrt(1e-7))
        assert amp_factor_equal(REF_PB, h, 100) == pytest.approx(72.547, abs=1e-3)


class TestUnitaryBuilders:
    @pytest.mark.parametrize("n", [1, 2, 5])
    def test_first_column(self, rng, n):
        v = crandn(rng, n)
        v /= np.linalg.norm(v)
        U = unitary_with_first_column(v)
        np.testing.assert_allclose(U[:, 0], v, atol=1e-14)
        np.testing.assert_allclose(U.conj().T @ U, np.eye(n), atol=1e-13)

    @pytest.mark.parametrize("n", [1, 2, 3, 6])
    def test_symmetric_map(self, rng, n):
        u, v = crandn(rng, n), crandn(rng, n)
        u, v = u / np.linalg.norm(u), v / np.linalg.norm(v)
        T = symmetric_unitary_map(u, v)
        np.testing.assert_allclose(T @ u, v, atol=1e-13)
        np.testing.assert_allclose(T, T.T, atol=1e-14)
        np.testing.assert_allclose(T.conj().T @ T, np.eye(n), atol=1e-13)

    def test_conjugate_pair(self, rng):
        u = crandn(rng, 4)
        u /= np.linalg.norm(u)
        T = symmetric_unitary_map(u, u.conj())
        np.testing.assert_allclose(T @ u, u.conj(), atol=1e-13)
        # bilinear form v^H T u attains the Cauchy-Schwarz bound, which identity only reaches for real u
        assert abs(u @ T @ u) == pytest.approx(1.0)
        assert abs(u @ u) <= 1.0 + 1e-15


class TestSolvers:
    def test_single_element(self):
        ch = SisoChannel(0.0, [1.0], [1.0])
        pb = PowerBudget(2.0, 0.5, 0, 0.1, 0.3)
        sol = solve_drs(ch, pb)
        assert np.angle(sol.theta.theta[0, 0]) == pytest.approx(0.0)
        expected = 2.0 * 0.5 / (0.1 * 0.5 + 0.3 * (2.0 + 0.1))
        assert sol.snr_linear == pytest.approx(expected, rel=1e-12)

    def test_real_positive_channels(self, rng):
        ch = SisoChannel(0.0, rng.uniform(0.1, 1, 5), rng.uniform(0.1, 1, 5))
        sol = solve_drs(ch, REF_PB)
        np.testing.assert_allclose(sol.theta.theta / sol.amp_factor, np.eye(5), atol=1e-15)

    def test_drs_beats_random_phases(self, rng):
        ch = _random_channel(rng, 6)
        best = solve_drs(ch, REF_PB)
        phases = rng.uniform(0, 2 * math.pi, (10_000, 6))
        amp = best.amp_factor
        rand = [snr(amp * np.diag(np.exp(1j * p)), ch, REF_PB) for p in phases]
        assert best.snr_linear >= max(rand)

    def test_drs_needs_blocked_direct(self):
        with pytest.raises(ValueError):
            solve_drs(SisoChannel(1.0, [1.0], [1.0]), REF_PB)

    def test_group_of_one_matches_drs(self, rng):
        ch = _random_channel(rng, 4)
        a = solve_bdris_nonreciprocal(ch, REF_PB, Architecture.single(4, False))
        b = solve_drs(ch, REF_PB)
        np.testing.assert_allclose(a.theta.theta, b.theta.theta, atol=1e-12 * b.amp_factor)

    def test_aligned_fully_connected(self, rng):
        h = crandn(rng, 4)
        ch = SisoChannel(0.0, h, h.conj())
        sol = solve_bdris_nonreciprocal(ch, REF_PB, Architecture.fully(4, False))
        theta_bar = sol.theta.theta / sol.amp_factor
        assert ch.h_RI @ theta_bar @ ch.h_IT == pytest.approx(np.vdot(h, h).real)

    def test_nonreciprocal_formula_and_search(self, rng):
        ch = _random_channel(rng, 8)
        arch = Architecture.grouped(8, 4, False)
        sol = solve_bdris_nonreciprocal(ch, REF_PB, arch)
        assert sol.snr_linear == pytest.approx(optimal_snr_active(ch, REF_PB, arch), rel=1e-12)
        for _ in range(10_000 // 50):
            blocks = [random_unitary(rng, 4) for _ in range(2)]
            assert snr(sol.amp_factor * sla.block_diag(*blocks), ch, REF_PB) <= sol.snr_linear * (1 + 1e-12)

    def test_reciprocal_matches_nonreciprocal(self, rng):
        ch = _random_channel(rng, 4)
        r = solve_bdris_reciprocal(ch, REF_PB, Architecture.fully(4, True))
        n = solve_bdris_nonreciprocal(ch, REF_PB, Architecture.fully(4, False))
        theta = r.theta.theta / r.amp_factor
        np.testing.assert_allclose(theta, theta.T, atol=1e-13)
        np.testing.assert_allclose(theta.conj().T @ theta, np.eye(4), atol=1e-12)
        assert r.snr_linear == pytest.approx(n.snr_linear, rel=1e-9)

    def test_radiated_power_is_budget(self, rng):
        ch = _random_channel(rng, 6)
        sol = solve_bdris_reciprocal(ch, REF_PB, Architecture.grouped(6, 3))
        assert radiated_power_siso(sol.theta.theta, ch, REF_PB) == pytest.approx(REF_PB.P_A, rel=1e-9)

    def test_zero_group_channel(self):
        ch = SisoChannel(0.0, [1, 1, 0, 0], [1, 1, 1, 1])
        with pytest.raises(AlignmentError):
            solve_bdris_nonreciprocal(ch, REF_PB, Architecture.grouped(4, 2))

    @settings(max_examples=100, deadline=None)
    @given(st.sampled_from([1, 2, 4]), st.integers(1, 4), st.integers(0, 2 ** 32 - 1))
    def test_reciprocal_equivalence_property(self, ng, groups, seed):
        ch = _random_channel(np.random.default_rng(seed), ng * groups)
        a = solve_bdris_reciprocal(ch, REF_PB, Architecture.grouped(ng * groups, ng))
        b = solve_bdris_nonreciprocal(ch, REF_PB, Architecture.grouped(ng * groups, ng, False))
        assert a.snr_linear == pytest.approx(b.snr_linear, rel=1e-9)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_dominance_in_group_size(self, seed):
        ch = _random_channel(np.random.default_rng(seed), 8)
        snrs = [solve_bdris_nonreciprocal(ch, REF_PB, Architecture.grouped(8, k, False)).snr_linear
                for k in (1, 2, 4, 8)]
        assert all(b >= a * (1 - 1e-9) for a, b in zip(snrs, snrs[1:]))

    def test_scaling_leaves_argmax(self, rng):
        ch = _random_channel(rng, 4)
        big = SisoChannel(0.0, 7 * ch.h_IT, 7 * ch.h_RI)
        a, b = solve_drs(ch, REF_PB), solve_drs(big, REF_PB)
        np.testing.assert_allclose(a.theta.theta / a.amp_factor, b.theta.theta / b.amp_factor, atol=1e-14)


# Gamma^4(N + 1/2) / (N^2 Gamma^4(N)) from mpmath at 30 digits
GROUP_FACTOR = {
    1: 0.616850275068084913677155687492,
    2: 0.780701129383044968872650166983,
    3: 0.847114940736810947127441587438,
    4: 0.882779068016095088564664605659,
    8: 0.939451111299799647068958111405,
}


class TestScaling:
    @pytest.mark.parametrize("n", list(GROUP_FACTOR))
    def test_group_factor(self, n):
        assert group_gain_factor(n) == pytest.approx(GROUP_FACTOR[n], rel=1e-14)

    def test_group_two_closed_form(self):
        assert group_gain_factor(2) == pytest.approx(81 * math.pi ** 2 / 1024, rel=1e-15)

    @pytest.mark.parametrize("n", [0, 1, 2, 5])
    def test_gamma_half(self, n):
        assert gamma_half(n) == pytest.approx(math.gamma(n + 0.5), rel=1e-14)

    def test_group_one_equals_drs(self):
        a = asymptotic_snr("active-BD-group", 64, 1, REF_PB, 1e-7, 1e-7)
        b = asymptotic_snr("active-D", 64, 1, REF_PB, 1e-7, 1e-7)
        assert a == b

    @pytest.mark.parametrize("n", [16, 100, 1000])
    def test_full_over_drs(self, n):
        ratio = asymptotic_snr("active-BD-full", n, n, REF_PB, 1e-7, 1e-7) / \
            asymptotic_snr("active-D", n, 1, REF_PB, 1e-7, 1e-7)
        assert ratio == pytest.approx(16 / math.pi ** 2, rel=1e-14)

    def test_passive_quadratic(self):
        a = asymptotic_snr("passive-BD-full", 10, 10, REF_PB, 1e-7, 1e-7)
        b = asymptotic_snr("passive-BD-full", 20, 20, REF_PB, 1e-7, 1e-7)
        assert b / a == pytest.approx(4.0)

    def test_invalid_kind(self):
        with pytest.raises(ValueError):
            asymptotic_snr("hybrid", 4, 1, REF_PB, 1, 1)

    def test_crossover_reference(self):
        n_bar, n_tilde = crossover_elements(REF_PB, 1e-7, 1e-7)
        assert n_bar == pytest.approx(4.75e5, rel=0.01)
        assert n_tilde == pytest.approx(7.70e5, rel=0.01)
        # mpmath evaluation of the same expression
        assert n_bar == pytest.approx(474997.625011874940625, rel=1e-12)

    def test_crossover_strong_ri(self):
        n_bar, _ = crossover_elements(REF_PB, 1e6, 1e-7)
        assert n_bar < 1e-3

    def test_crossover_needs_positive(self):
        with pytest.raises(ValueError):
            crossover_elements(PowerBudget(1, 0, 1, 1, 1), 1, 1)
