from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from polyuct.bandit import BernoulliArms, DeterministicArms, UcbParams
from polyuct.diagnostics import (
    InstanceInfo,
    a_threshold,
    bandit_tail,
    bias_curve,
    convergence_bound,
    estimate_tail,
    fit_power_law,
    suboptimal_play_bound,
    phi,
    r0,
    concentration_constants,
)

TOY = UcbParams(alpha=2, beta=1, xi=4, eta=0.5, strict=False)
STD = UcbParams(alpha=10, beta=math.e, xi=40, eta=0.5)


class TestFormulas:
    def test_phi(self):
        assert phi(1, 1.0, UcbParams(3, 1, 5, 0.7, strict=False)) == pytest.approx(1.0)
        assert phi(1, 0.5, TOY) == pytest.approx(2 ** 0.25)
        assert phi(4, 1.0, TOY) == pytest.approx(2.0)

    def test_a_threshold(self):
        assert a_threshold(1.0, 4, TOY) == 16
        assert a_threshold(2.0, 1, UcbParams(3, 1, 7, 0.5, strict=False)) == 1
        with pytest.raises(ValueError):
            a_threshold(0.0, 4, TOY)

    @given(st.floats(0.01, 2), st.integers(1, 10 ** 6), st.integers(0, 10 ** 6))
    def test_a_threshold_monotone(self, gap, t, dt):
        assert a_threshold(gap, t, STD) <= a_threshold(gap, t + dt, STD)

    @given(
        st.floats(0.5, 0.9), st.floats(5, 100), st.floats(1.01, 5), st.floats(0.05, 2), st.integers(1, 10 ** 5)
    )
    def test_phi_threshold_consistency(self, eta, xi, beta, gap, t):
        alpha = xi * eta * (1 - eta) * 1.2
        assume(alpha < xi * (1 - eta))
        p = UcbParams(alpha, beta, xi, eta, strict=False)
        s = a_threshold(gap, t, p)
        assert phi(s, t ** -alpha, p) / s <= gap / 2 * (1 + 1e-9)

    def test_suboptimal_play_bound(self):
        p = UcbParams(2.5, 1, 4, 0.5, strict=False)
        assert suboptimal_play_bound(2.0, 16, p) == pytest.approx(37.0)
        assert suboptimal_play_bound(2.0, 1, p) == pytest.approx(1 + 4 + 1)
        with pytest.raises(ValueError):
            suboptimal_play_bound(2.0, 16, TOY)

    def test_convergence_bound_and_r0(self):
        info = InstanceInfo.from_process(BernoulliArms([0.6, 0.4]))
        assert convergence_bound(info, STD, 10_000) == pytest.approx(2 * suboptimal_play_bound(0.2, 10_000, STD) / 10_000)
        assert r0(info, STD, 100) == pytest.approx(10 + 2 * (3 + a_threshold(0.2, 100, STD)))


class TestConstants:
    def test_exponents(self):
        c = concentration_constants(InstanceInfo.from_process(BernoulliArms([0.6, 0.4])), STD)
        assert c.eta_prime == pytest.approx(0.5)
        assert c.xi_prime == pytest.approx(9)
        assert c.beta_prime > 1
        assert 1 <= c.N_p <= c.N_p_prime

    def test_c1(self):
        info = InstanceInfo(R=1.0, mu=[1.0, 0.5])
        c = concentration_constants(info, UcbParams(2.5, 1, 6, 0.5, strict=False))
        assert c.c1 == pytest.approx(64.0)

    def test_search_points_are_minimal(self):
        info = InstanceInfo.from_process(BernoulliArms([0.6, 0.4]))
        c = concentration_constants(info, STD)
        A = lambda t: a_threshold(0.2, t, STD)
        assert c.N_p >= A(c.N_p) and c.N_p - 1 < A(c.N_p - 1)

    @given(st.floats(0.5, 0.6), st.floats(20, 80))
    def test_leaf_choice_reproduces_eta(self, eta, xi):
        alpha = xi * eta * (1 - eta)
        assume(alpha > 2.05)
        c = concentration_constants(InstanceInfo(1.0, [0.9, 0.1]), UcbParams(alpha, 2.0, xi, eta))
        assert c.eta_prime == pytest.approx(eta, rel=1e-12)
        assert c.beta_prime > 1

    def test_search_cap(self):
        from polyuct.errors import ResourceError
        with pytest.raises(ResourceError):
            concentration_constants(InstanceInfo(1.0, [0.7, 0.2]), UcbParams(3.75, 2.0, 20, 0.75), cap=10 ** 6)

    def test_needs_positive_gap(self):
        with pytest.raises(ValueError):
            InstanceInfo(1.0, [0.5, 0.5]).delta_min


class TestTails:
    def test_deterministic_arm_has_no_tail(self):
        te = bandit_tail(DeterministicArms([0.3]), STD, 500, 100, 1, [1, 2, 3])
        assert np.all(te.p_upper == 0) and np.all(te.p_lower == 0)

    def test_monotone_in_z(self):
        te = bandit_tail(BernoulliArms([0.6, 0.4]), STD, 2000, 300, 2, np.linspace(1, 5, 17))
        assert np.all(np.diff(te.p_upper) <= 0) and np.all(np.diff(te.p_lower) <= 0)
        assert np.all((te.se_lower >= 0) & (te.se_lower <= 0.5))

    def test_needs_mu_star(self):
        with pytest.raises(ValueError):
            estimate_tail([0.5], 10, None, 0.5, [1.0])

    def test_grid_validated(self):
        with pytest.raises(ValueError):
            estimate_tail([0.5], 10, 0.5, 0.5, [0.5, 1.0])

    def test_hand_counts(self):
        # deviations (n*xbar - n*mu)/n**0.5 with n=4: -1, 1, 2, 3
        xbar = 0.5 + np.array([-1, 1, 2, 3]) * 2 / 4
        te = estimate_tail(xbar, 4, 0.5, 0.5, [1, 2, 3])
        assert te.p_upper.tolist() == [0.75, 0.5, 0.25]
        assert te.p_lower.tolist() == [0.25, 0, 0]

    def test_fit_window(self):
        z = np.arange(1, 11, dtype=float)
        te = estimate_tail(np.zeros(1), 1, 0.0, 0.5, [1])
        te = type(te)(z, z ** -2.0, np.zeros(10), 10_000, 100, 0.5)
        f = te.fit("upper", min_count=20)
        assert f.window == (1.0, 10.0)
        assert f.fit.slope == pytest.approx(-2.0)
        assert te.fit("lower") is None


class TestPowerLaw:
    def test_exact(self):
        f = fit_power_law([1, 2, 4, 8], [1, 0.25, 1 / 16, 1 / 64])
        assert f.slope == pytest.approx(-2.0) and f.r2 == pytest.approx(1.0)

    def test_constant(self):
        assert fit_power_law([1, 2, 3], [5, 5, 5]).slope == pytest.approx(0.0, abs=1e-12)

    def test_noisy(self):
        x = np.geomspace(1, 1000, 30)
        u = np.random.default_rng(0).uniform(-0.01, 0.01, 30)
        assert -0.55 <= fit_power_law(x, 3 * x ** -0.5 * (1 + u)).slope <= -0.45

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            fit_power_law([1, 2, 3], [1, 0, 1])
        with pytest.raises(ValueError):
            fit_power_law([1, 2], [1, 1])


def test_bias_curve():
    pts = bias_curve({10: np.array([1.0, 3.0]), 5: np.array([2.0, 2.0])}, 1.5)
    assert [p.n for p in pts] == [5, 10]
    assert pts[1].abs_bias == pytest.approx(0.5)
    assert pts[1].se == pytest.approx(1.0)
