import itertools
import math
from fractions import Fraction
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infoperc import fourier_rule as fr
from infoperc.errors import FourierInfeasibleError, ParameterError, ShapeError


def test_series_leading_coefficients():
    b = fr.series_coeffs_exact(5)
    assert b[0] == Fraction(1, 2) and b[1] == Fraction(1, 2)
    assert b[2] == 0 and b[4] == 0
    assert b[3] == Fraction(-1, 6)
    assert b[5] == Fraction(1, 15)  # tanh: 2x^5/15, halved


def test_series_matches_float_taylor():
    x = 0.3
    b = fr.series_coeffs(40)
    assert abs(sum(c * x**k for k, c in enumerate(b)) - fr.heat_bath_plus(x)) < 1e-15


def test_series_abs_sum_constant():
    b = fr.series_coeffs_exact(60)
    assert abs(float(sum(abs(c) for c in b)) - fr.SERIES_ABS_SUM) < 1e-11


@pytest.mark.parametrize("l_max", [0, 61])
def test_series_horizon(l_max):
    with pytest.raises(ParameterError):
        fr.series_coeffs_exact(l_max)


def _brute_expansion(l, r):
    # coefficient of the monomial prod_{i<k} sigma_i in (sum sigma)^l, by enumeration
    out = []
    for k in range(min(l, r) + 1):
        tot = 0
        for s in itertools.product((-1, 1), repeat=r):
            tot += sum(s) ** l * np.prod(s[:k])
        out.append(tot // 2**r)
    return out


@pytest.mark.parametrize("l,r", [(1, 1), (2, 2), (3, 2), (4, 3), (5, 4), (6, 3), (3, 5)])
def test_symmetric_expansion_oracle(l, r):
    c = fr.symmetric_expansion(l, r)
    assert list(c[: min(l, r) + 1]) == _brute_expansion(l, r)


def test_symmetric_expansion_examples():
    assert fr.symmetric_expansion(1, 1)[1] == 1
    c = fr.symmetric_expansion(2, 2)
    assert (c[0], c[1], c[2]) == (2, 0, 2)


@given(st.integers(0, 10), st.integers(1, 6))
def test_symmetric_expansion_all_ones(l, r):
    c = fr.symmetric_expansion(l, r)
    assert sum(comb(r, k) * c[k] for k in range(min(l, r) + 1)) == r**l


def test_table_bounds_beta_001():
    t = fr.build_rule_table(0.01, 4)
    for r in range(1, 5):
        p1 = t.P[r][1]
        assert 0.01 / 8 <= p1 <= 4 * t.B_abs_sum * 0.01
        assert abs(sum(comb(r, k) * t.P[r][k] for k in range(r + 1)) - 1) < 1e-12
    assert fr.multilinear_coeffs(0.01, 3, t.l_max)[1] >= 0.01 / 4


def test_linear_coefficient_is_b1_beta_at_first_order():
    # the l = 1 term alone contributes B_1 * beta * c[1, 1] with c[1, 1] = 1
    t = fr.build_rule_table(1e-4, 2)
    assert abs(t.C[1][1] - 0.5e-4) < 1e-11
    assert abs(t.C[2][1] - 0.5e-4) < 1e-11


def test_phi_examples():
    assert fr.phi_eval(0, []) == 0.5
    assert fr.phi_eval(1, [1]) == 1.0
    assert fr.phi_eval(1, [-1]) == 0.0
    assert fr.phi_eval(2, [1, 1], 1) == pytest.approx(1.0)
    with pytest.raises(ShapeError):
        fr.phi_eval(2, [1])


@settings(max_examples=200)
@given(st.integers(0, 8).flatmap(lambda k: st.tuples(st.just(k), st.lists(st.sampled_from((-1, 1)), min_size=k, max_size=k))),
       st.sampled_from((-1, 1)), st.randoms())
def test_phi_range_symmetric_monotone(ks, sign, rnd):
    k, spins = ks
    v = fr.phi_eval(k, spins, sign)
    assert -1e-15 <= v <= 1 + 1e-15
    perm = list(spins)
    rnd.shuffle(perm)
    assert fr.phi_eval(k, perm, sign) == pytest.approx(v)
    for i in range(k):
        if spins[i] == -1:
            up = list(spins)
            up[i] = 1
            assert fr.phi_eval(k, up, sign) >= v - 1e-15


def test_coupling_identity_examples():
    t = fr.build_rule_table(0.05, 3)
    assert abs(fr.expected_phi(t, 3, 3) - fr.heat_bath_plus(0.15)) < 1e-10
    t5 = fr.build_rule_table(0.02, 5)
    assert fr.coupling_identity_check(t5, 5) < 1e-10


def _brute_identity(table, r):
    # direct sum over all 2^r neighborhoods and all subsets A
    worst = 0.0
    for sigma in itertools.product((-1, 1), repeat=r):
        lhs = 0.0
        for k in range(r + 1):
            for A in itertools.combinations(range(r), k):
                lhs += table.P[r][k] * fr.phi_eval(k, [sigma[i] for i in A], int(table.sign[r, k]))
        worst = max(worst, abs(lhs - fr.heat_bath_plus(table.beta * sum(sigma))))
    return worst


@pytest.mark.parametrize("beta,r", [(0.02, 4), (0.05, 3), (0.01, 6)])
def test_coupling_identity_against_subset_enumeration(beta, r):
    t = fr.build_rule_table(beta, r)
    assert _brute_identity(t, r) < 1e-10
    assert abs(_brute_identity(t, r) - fr.coupling_identity_check(t, r)) < 1e-12


def test_balanced_neighborhood_is_half():
    t = fr.build_rule_table(0.03, 4)
    assert fr.expected_phi(t, 4, 2) == pytest.approx(0.5, abs=1e-15)


def test_truncation_consistency():
    coarse = fr.build_rule_table(0.05, 4, tol=1e-4)
    fine = fr.build_rule_table(0.05, 4, tol=1e-14)
    assert fr.coupling_identity_check(fine, 4) <= fr.coupling_identity_check(coarse, 4) + 1e-16


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 0.04), st.integers(1, 6))
def test_table_invariants(beta, d):
    t = fr.build_rule_table(beta, d)
    for r in range(1, d + 1):
        sp = t.size_probs(r)
        assert np.all(t.P[r] >= 0) and np.all(t.P[r] <= 1)
        assert np.all(sp <= t.D0 * (2 * beta * r) ** np.arange(r + 1) + 1e-15)
        assert sp[1:].sum() <= 4 * beta * r * t.D0 + 1e-15
        assert sp[1:].sum() < t.epsilon
        assert abs(sp.sum() - 1) < 1e-12


def test_infeasible_beta():
    with pytest.raises(FourierInfeasibleError):
        fr.build_rule_table(0.2, 4)


def test_sample_support_r1():
    t = fr.build_rule_table(0.05, 1)
    draws = fr.sample_update_support(t, 1, np.random.default_rng(0), size=20000)
    assert set(draws) <= {(), (0,)}
    freq = sum(1 for a in draws if a) / len(draws)
    p1 = t.P[1][1]
    assert abs(freq - p1) < 4 * math.sqrt(p1 * (1 - p1) / len(draws))


def test_sample_support_moments():
    t = fr.build_rule_table(0.04, 4)
    r, n = 4, 200000
    draws = fr.sample_update_support(t, r, np.random.default_rng(1), size=n)
    sizes = np.array([len(a) for a in draws])
    sp = t.size_probs(r)
    p0 = sp[0]
    assert abs((sizes == 0).mean() - p0) < 3.5 * math.sqrt(p0 * (1 - p0) / n)
    mean = float((np.arange(r + 1) * sp).sum())
    var = float((np.arange(r + 1) ** 2 * sp).sum()) - mean**2
    assert abs(sizes.mean() - mean) < 3.5 * math.sqrt(var / n)
    assert all(list(a) == sorted(set(a)) and all(0 <= i < r for i in a) for a in draws)
