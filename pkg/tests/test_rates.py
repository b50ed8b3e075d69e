import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from qkdsec import rates
from qkdsec.rates import (
    binary_entropy,
    coin_statistics_relations,
    key_gain_basis_dependent,
    key_gain_basis_independent,
    key_gain_sp,
    phase_error_bound_m1,
    phase_error_bound_m2,
    positive_gain_threshold,
    reconciliation_cost,
    secrecy_bound,
)

# frozen from 30-digit mpmath evaluations of the defining formulas
H_005 = 0.286396957115956
M2_001_005 = 0.274266894391925
M1_0_002 = 0.255736432448745
M1_THRESHOLD = 0.0559805557771350
M2_THRESHOLD = (1 - 1 / math.sqrt(2)) / 2


def _h(y):
    if y <= 0 or y >= 1:
        return 0.0
    return -y * math.log2(y) - (1 - y) * math.log2(1 - y)


def _m1_value(d1, x):
    # independent transcription of the coin-entropy constraint
    a = (d1 + x) / 2 * (_h(d1 / (d1 + x)) if d1 + x > 0 else 0.0)
    b = (2 - d1 - x) / 2 * (_h((1 - x) / (2 - d1 - x)) if 2 - d1 - x > 0 else 0.0)
    return a + b


def _grid_oracle(g, step=1e-5):
    """Largest x with g(x) >= 0 on a dense grid, refined with brentq."""
    xs = np.arange(0, 1 + step / 2, step)
    vals = np.array([g(x) for x in xs])
    last = np.nonzero(vals >= 0)[0][-1]
    if last == len(xs) - 1:
        return 1.0
    return brentq(g, xs[last], xs[last + 1], xtol=1e-14)


class TestBinaryEntropy:
    def test_values(self):
        assert binary_entropy(0.5) == 1.0
        assert binary_entropy(0.0) == 0.0
        assert binary_entropy(1.0) == 0.0
        assert binary_entropy(0.05) == pytest.approx(H_005, abs=1e-12)
        assert abs(binary_entropy(0.05) - 0.28640) < 1e-5

    @pytest.mark.parametrize("y", [-0.1, 1.1])
    def test_domain(self, y):
        with pytest.raises(ValueError):
            binary_entropy(y)

    @given(st.floats(0, 1))
    def test_symmetric_and_bounded(self, y):
        assert 0 <= binary_entropy(y) <= 1
        assert binary_entropy(y) == pytest.approx(binary_entropy(1 - y), abs=1e-12)


class TestGains:
    def test_sp(self):
        assert key_gain_sp(0, 0).gain_per_bit == 1
        assert key_gain_sp(0.05, 0.05).gain_per_bit == pytest.approx(1 - 2 * H_005, abs=1e-12)
        res = key_gain_sp(0.5, 0)
        assert res.cost_ec == 1 and res.gain_per_bit == 0 and not res.feasible

    def test_basis_independent(self):
        assert key_gain_basis_independent(0, 0).gain_per_bit == 1
        res = key_gain_basis_independent(0.11, 0.11)
        assert res.feasible
        assert res.gain_per_bit == pytest.approx(1.68083670944009e-4, abs=1e-10)
        bad = key_gain_basis_independent(0.12, 0.12)
        assert bad.gain_per_bit < 0 and not bad.feasible

    def test_cost_identity(self):
        for args in [(0.01, 0.02, 0.03, "m1"), (0.05, 0.0, 0.1, "m2")]:
            r = key_gain_basis_dependent(*args)
            assert r.gain_per_bit == pytest.approx(1 - r.cost_ec - r.cost_pa, abs=0)

    def test_rates_above_half_clamp(self):
        assert key_gain_sp(0.8, 0).cost_ec == 1.0


class TestPhaseErrorBounds:
    @pytest.mark.parametrize("d1", [0.0, 0.05, 0.1])
    @pytest.mark.parametrize("bound", [phase_error_bound_m1, phase_error_bound_m2])
    def test_no_basis_dependence(self, bound, d1):
        assert bound(d1, 0.0) == d1

    def test_m1_at_threshold(self):
        assert abs(phase_error_bound_m1(0, 0.0557) - 0.5) < 2e-3

    def test_m1_against_grid_oracle(self):
        target = 1 - _h(0.02)
        oracle = _grid_oracle(lambda x: _m1_value(0.0, x) - target)
        assert oracle == pytest.approx(M1_0_002, abs=1e-9)
        assert phase_error_bound_m1(0, 0.02) == pytest.approx(oracle, abs=1e-6)

    def test_m2_closed_form(self):
        assert phase_error_bound_m2(0, 0.05) == pytest.approx(0.19, abs=1e-6)
        for D in np.linspace(0.01, 0.49, 13):
            assert phase_error_bound_m2(0, D) == pytest.approx(min(1, 1 - (1 - 2 * D) ** 2), abs=1e-9)

    def test_m2_against_grid_oracle(self):
        g = lambda x: math.sqrt(0.99 * (1 - x)) + math.sqrt(0.01 * x) - 0.9
        oracle = _grid_oracle(g)
        assert oracle == pytest.approx(M2_001_005, abs=1e-9)
        assert phase_error_bound_m2(0.01, 0.05) == pytest.approx(M2_001_005, abs=1e-9)
        assert abs(phase_error_bound_m2(0.01, 0.05) - 0.2743) < 1e-3

    def test_m2_saturates_at_one(self):
        assert phase_error_bound_m2(0.3, 0.4) == 1.0

    def test_bad_args(self):
        with pytest.raises(ValueError):
            phase_error_bound_m2(0.1, 0.6)
        with pytest.raises(ValueError):
            rates.phase_error_bound(0.1, 0.1, "m3")


GRID = [(d1, D) for d1 in np.linspace(0, 0.3, 7) for D in np.linspace(0, 0.3, 7)]


class TestBoundProperties:
    def test_m2_not_below_delta1(self):
        for d1 in np.linspace(0, 0.5, 50):
            for D in np.linspace(0, 0.5, 50):
                f = phase_error_bound_m2(d1, D)
                assert f >= d1 - 1e-9
        for d1 in np.linspace(0, 0.5, 50):
            assert abs(phase_error_bound_m2(d1, 0) - d1) < 1e-9

    @pytest.mark.parametrize("d1,D", [g for g in GRID if g[1] > 0])
    def test_boundary_attained(self, d1, D):
        f2 = phase_error_bound_m2(d1, D)
        c2 = lambda x: rates.m2_constraint(d1, x) - (1 - 2 * D)
        if f2 < 1:
            assert abs(c2(f2)) < 1e-8
            assert c2(f2 + 1e-6) < 0
        f1 = phase_error_bound_m1(d1, D)
        c1 = lambda x: rates.m1_constraint(d1, x) - (1 - binary_entropy(D))
        if f1 < 1:
            assert abs(c1(f1)) < 1e-8
            assert c1(f1 + 1e-6) < 0

    @pytest.mark.parametrize("d1,D", GRID)
    def test_entropy_chain(self, d1, D):
        f1 = phase_error_bound_m1(d1, D)
        assert rates.m1_constraint(d1, f1) <= rates.m1_upper(d1, f1) + 1e-9

    @pytest.mark.parametrize("d1,D", GRID)
    def test_method2_gain_at_least_method1(self, d1, D):
        g1 = key_gain_basis_dependent(0.0, d1, D, "m1")
        g2 = key_gain_basis_dependent(0.0, d1, D, "m2")
        if g1.feasible and g2.feasible:
            assert g2.gain_per_bit >= g1.gain_per_bit - 1e-9

    def test_delta_zero_reduction(self):
        rng = np.random.default_rng(1)
        for d0, d1 in rng.uniform(0, 0.5, size=(100, 2)):
            a = key_gain_basis_dependent(d0, d1, 0, "m2").gain_per_bit
            b = key_gain_basis_independent(d0, d1).gain_per_bit
            assert abs(a - b) < 1e-9


class TestBasisDependentGain:
    def test_examples(self):
        dep = key_gain_basis_dependent(0.03, 0.04, 0, "m2")
        ind = key_gain_basis_independent(0.03, 0.04)
        assert (dep.gain_per_bit, dep.cost_ec, dep.cost_pa) == (ind.gain_per_bit, ind.cost_ec, ind.cost_pa)
        assert not key_gain_basis_dependent(0, 0, 0.15, "m2").feasible
        r = key_gain_basis_dependent(0, 0, 0.10, "m2")
        assert r.gain_per_bit == pytest.approx(1 - binary_entropy(0.36), abs=1e-6)
        assert r.gain_per_bit == pytest.approx(0.0573168107445078, abs=1e-9)
        assert r.f_value == pytest.approx(0.36, abs=1e-9)

    def test_saturation_not_revived(self):
        # f above 1/2 must not give a positive rate through h(f) < 1
        r = key_gain_basis_dependent(0, 0, 0.3, "m2")
        assert r.f_value > 0.5 and r.cost_pa == 1.0 and not r.feasible


class TestThresholds:
    def test_m2(self):
        assert positive_gain_threshold("m2") == pytest.approx(M2_THRESHOLD, abs=1e-6)
        assert abs(positive_gain_threshold("m2") - 0.146447) < 1e-4

    def test_m1(self):
        assert positive_gain_threshold("m1") == pytest.approx(M1_THRESHOLD, abs=1e-6)
        assert abs(positive_gain_threshold("m1") - 0.0557) < 1e-3

    def test_gllp_constant_is_smaller(self):
        assert rates.GLLP_THRESHOLD < positive_gain_threshold("m1") < positive_gain_threshold("m2")

    def test_nonzero_errors_shrink_threshold(self):
        assert positive_gain_threshold("m2", 0.02, 0.02) < positive_gain_threshold("m2")

    def test_hopeless(self):
        assert positive_gain_threshold("m2", 0.2, 0.2) == 0.0


class TestAccounting:
    def test_reconciliation_cost(self):
        assert reconciliation_cost(0, 0, 50) == 0
        assert reconciliation_cost(0.05, 0, 1000) == 287
        assert reconciliation_cost(0.5, 0, 100) == 100
        assert reconciliation_cost(1 / 16, 0.2, 16) == 9

    def test_secrecy_bound(self):
        v = secrecy_bound(0, 1, 40)
        assert v < 1e-9
        assert v == pytest.approx(_h(2**-40) + 40 * 2**-40, rel=1e-12)
        assert secrecy_bound(0, math.inf, 20) == 0

    @given(st.floats(0, 0.4), st.floats(0, 0.1), st.floats(0.01, 1), st.integers(1, 64))
    @settings(max_examples=200)
    def test_secrecy_monotone(self, eta, d_eta, eps, n):
        assert secrecy_bound(eta, eps, n) <= secrecy_bound(min(1.0, eta + d_eta), eps, n) + 1e-12

    def test_coin_relations(self):
        r = coin_statistics_relations(0.1, 0.1)
        assert (r.r_t1, r.r_a1_given_t1, r.r_a0_given_t0) == pytest.approx((0.1, 0.5, 0.5))
        assert coin_statistics_relations(0, 0.2).r_a1_given_t1 == 0
        assert coin_statistics_relations(0, 0).r_a1_given_t1 is None

    @given(st.floats(0.001, 1), st.floats(0.001, 1))
    def test_coin_relations_swap(self, d1, dph):
        a = coin_statistics_relations(d1, dph).r_a1_given_t1
        b = coin_statistics_relations(dph, d1).r_a1_given_t1
        assert a == pytest.approx(1 - b, abs=1e-12)
