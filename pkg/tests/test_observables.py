import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from infoperc import dynamics as dyn
from infoperc import graphs
from infoperc import observables as ob
from infoperc.errors import GridTooShort, SampleSizeError, ShapeError, SizeError, UndefinedMetricError


def _generator_expm(g, beta, x0, t):
    """Law at time t via the dense rate matrix (independent of uniformization)."""
    n = g.n
    N = 1 << n
    states = ob.state_spins(n)
    Q = np.zeros((N, N))
    for i in range(N):
        for v in range(n):
            S = int(states[i, g.neighbors(v)].sum())
            p = 0.5 * (1 + math.tanh(beta * S))
            up, down = i | (1 << v), i & ~(1 << v)
            Q[i, up] += p
            Q[i, down] += 1 - p
        Q[i, i] -= n
    p0 = np.zeros(N)
    p0[ob.config_index(x0)] = 1
    return p0 @ expm(Q * t)


@pytest.mark.parametrize("g,beta,t", [(graphs.path(2), 0.3, 0.7), (graphs.cycle(4), 0.2, 1.3),
                                      (graphs.path(3), 0.5, 2.0), (graphs.Graph.from_edges(3, [(0, 1)]), 0.4, 0.9)])
def test_exact_evolve_matches_matrix_exponential(g, beta, t):
    x0 = dyn.all_plus(g.n)
    law = ob.exact_evolve(g, beta, x0, t)
    assert np.max(np.abs(law.probs - _generator_expm(g, beta, x0, t))) < 1e-12


def test_exact_evolve_examples():
    g = graphs.Graph.from_edges(1, [])
    law = ob.exact_evolve(g, 0.7, [-1], 0.8)
    assert law.probs[1] == pytest.approx((1 - math.exp(-0.8)) / 2, abs=1e-13)
    p2 = graphs.path(2)
    assert np.array_equal(ob.exact_evolve(p2, 0.3, [1, -1], 0.0).probs, [0, 1, 0, 0])
    d = ob.exact_distances(ob.exact_evolve(p2, 0.3, [1, 1], 50.0), ob.gibbs(p2, 0.3))
    assert d.tv < 1e-10


def test_gibbs_path2():
    pi = ob.gibbs(graphs.path(2), 0.3).probs
    e = math.exp(0.3)
    z = 2 * e + 2 / e
    assert np.allclose(pi, [e / z, 1 / (e * z), 1 / (e * z), e / z])


def test_distances_examples():
    u = ob.uniform_table(3)
    assert ob.exact_distances(u, u) == ob.Distances(0.0, 0.0)
    a = ob.DistributionTable(1, np.array([1.0, 0.0]))
    b = ob.DistributionTable(1, np.array([0.0, 1.0]))
    assert ob.exact_distances(a, ob.DistributionTable(1, np.array([0.5, 0.5]))).tv == 0.5
    with pytest.raises(UndefinedMetricError):
        ob.exact_distances(a, b)
    assert 0.5 * np.abs(a.probs - b.probs).sum() == 1.0


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
def test_hypercube_l2_law(t):
    g = graphs.Graph.from_edges(4, [])
    law = ob.exact_evolve(g, 0.0, dyn.all_plus(4), t)
    assert ob.exact_l2_squared(law, ob.uniform_table(4)) == pytest.approx(ob.l2_hypercube_beta0(4, t), abs=1e-10)
    assert ob.l2_hypercube_beta0(4, 1.0) == pytest.approx((1 + math.exp(-2)) ** 4 - 1)


def test_exact_size_cap():
    with pytest.raises(SizeError):
        ob.gibbs(graphs.cycle(13), 0.1)


def test_magnetization_at_zero_and_beta_zero():
    g = graphs.cycle(16)
    grid = np.array([0.0, 0.5, 1.0, 2.0])
    prof = ob.magnetization_profile(g, 0.0, grid, 2000, seed=1)
    assert np.all(prof.m_hat[0] == 1) and np.all(prof.stderr[0] == 0)
    for i, t in enumerate(grid[1:], start=1):
        z = (prof.m_hat[i] - math.exp(-t)) / np.maximum(prof.stderr[i], 1e-12)
        assert np.all(np.abs(z) < 4.5)
        pooled = prof.m_hat[i].mean()
        assert abs(pooled - math.exp(-t)) < 3 * math.sqrt(math.exp(-t) * (1 - math.exp(-t)) / (2000 * 16)) * 2


def test_plain_and_antithetic_agree():
    g = graphs.cycle(8)
    grid = np.array([0.5, 1.0])
    a = ob.magnetization_profile(g, 0.1, grid, 3000, seed=2)
    b = ob.magnetization_profile(g, 0.1, grid, 3000, seed=3, antithetic=False)
    se = np.sqrt(a.stderr**2 + b.stderr**2)
    assert np.all(np.abs(a.m_hat - b.m_hat) < 4.5 * se)


def test_profile_matches_exact_marginals():
    g = graphs.cycle(6)
    grid = np.array([0.4, 1.2])
    prof = ob.magnetization_profile(g, 0.2, grid, 4000, seed=5)
    for i, t in enumerate(grid):
        exact = ob.exact_evolve(g, 0.2, dyn.all_plus(6), t).marginal_means()
        assert np.all(np.abs(prof.m_hat[i] - exact) < 4 * prof.stderr[i] + 1e-12)


@pytest.mark.parametrize("n", [16, 64])
def test_t_m_beta_zero(n):
    g = graphs.Graph.from_edges(n, [])
    grid = np.arange(0.0, 3.01, 0.1)
    prof = ob.magnetization_profile(g, 0.0, grid, 3000, seed=n)
    tm = ob.locate_t_m(prof)
    assert abs(tm.point - 0.5 * math.log(n)) < 0.05
    assert tm.lo <= tm.point <= tm.hi


def test_t_m_single_vertex_and_short_grid():
    prof = ob.magnetization_profile(graphs.Graph.from_edges(1, []), 0.0, [0.0, 0.5], 10, seed=0)
    assert ob.locate_t_m(prof).point == 0.0
    prof = ob.magnetization_profile(graphs.cycle(50), 0.0, [0.0, 0.1], 10, seed=0)
    with pytest.raises(GridTooShort):
        ob.locate_t_m(prof)


def test_grid_validation():
    with pytest.raises(ShapeError):
        ob.magnetization_profile(graphs.cycle(4), 0.0, [1.0, 0.5], 10, seed=0)
    with pytest.raises(SampleSizeError):
        ob.magnetization_profile(graphs.cycle(4), 0.0, [0.5], 0, seed=0)


def test_coupling_upper_beta_zero():
    n = 10
    g = graphs.cycle(n)
    grid = np.array([0.0, 0.5, 1.5, 3.0])
    curve = ob.coupling_tv_upper(g, 0.0, grid, 4000, seed=3)
    assert curve.value[0] == 1.0
    for i, t in enumerate(grid[1:], start=1):
        p = 1 - (1 - math.exp(-t)) ** n
        assert curve.lo[i] - 0.01 <= p <= curve.hi[i] + 0.01
    assert np.all(np.diff(curve.value) <= 0)


def test_tv_sandwich_small():
    g = graphs.cycle(6)
    grid = np.arange(0.0, 4.01, 0.5)
    prof = ob.magnetization_profile(g, 0.1, grid, 2000, seed=1)
    up = ob.coupling_tv_upper(g, 0.1, grid, 2000, seed=1)
    pi = ob.gibbs(g, 0.1)
    for i, t in enumerate(grid):
        lo = ob.tv_lower_bound(g, 0.1, t, prof, 2000, seed=1)
        exact = ob.exact_distances(ob.exact_evolve(g, 0.1, dyn.all_plus(6), t), pi).tv
        # the statistic is nearly optimal here, so compare at three standard errors
        assert lo.value - 3 * lo.stderr <= exact + 1e-12
        up_se = math.sqrt(up.value[i] * (1 - up.value[i]) / up.replicas)
        assert exact <= up.value[i] + 3 * up_se + 1e-12


def test_tv_lower_bound_at_zero():
    g = graphs.cycle(12)
    prof = ob.magnetization_profile(g, 0.05, [0.0, 1.0], 200, seed=0)
    assert ob.tv_lower_bound(g, 0.05, 0.0, prof, 200, seed=0).value > 0.9


def test_correlation_sum_beta_zero():
    g = graphs.cycle(10)
    for t in (0.3, 1.0):
        est = ob.correlation_sum(g, 0.0, t, 0, 6000, seed=2)
        want = 1 - math.exp(-2 * t)
        assert abs(est.value - want) < 4 * est.stderr
    assert ob.correlation_sum(g, 0.2, 0.0, 3, 50, seed=2).value == 0.0


def test_correlation_jackknife_closed_form():
    g = graphs.cycle(6)
    rng = np.random.default_rng(0)
    est = ob.correlation_sum(g, 0.3, 0.8, 2, 40, seed=9)
    # recompute with explicit leave-one-out loops
    M, X = [], []
    for r in range(40):
        f = ob.replica_field(g, 9, r, None, stream=3)
        x = dyn.evolve(g, 0.3, dyn.all_plus(6), f.window(0.0, 0.8))
        M.append(x.sum())
        X.append(x[2])
    M, X = np.array(M, float), np.array(X, float)
    loo = np.array([np.cov(np.delete(M, i), np.delete(X, i))[0, 1] for i in range(40)])
    se = math.sqrt(39 / 40 * np.sum((loo - loo.mean()) ** 2))
    assert est.value == pytest.approx(np.cov(M, X)[0, 1])
    assert est.stderr == pytest.approx(se)
    del rng


def test_mp_moment_degenerate():
    assert ob.mp_exponential_moment([[], [], []]).value == 0.0
    assert ob.mp_exponential_moment([[1, 2, 3]] * 5).value == pytest.approx(7.0)
    with pytest.raises(SampleSizeError):
        ob.mp_exponential_moment([[1]])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.frozensets(st.integers(0, 6), max_size=5), min_size=2, max_size=12))
def test_mp_moment_matches_pairwise_average(sets):
    want = np.mean([2.0 ** len(a & b) - 1 for i, a in enumerate(sets) for b in sets[i + 1:]])
    assert ob.mp_exponential_moment(sets).value == pytest.approx(want)


def test_mp_moment_beta_zero_law():
    rng = np.random.default_rng(4)
    n, t = 4, 1.0
    sets = [np.flatnonzero(rng.random(n) < math.exp(-t)) for _ in range(20000)]
    est = ob.mp_exponential_moment(sets)
    assert abs(est.value - ob.l2_hypercube_beta0(n, t)) < 3 * (est.hi - est.lo)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 7), st.floats(0.0, 3.0), st.floats(0.0, 0.5))
def test_exact_evolve_is_a_distribution(n, t, beta):
    g = graphs.path(n)
    law = ob.exact_evolve(g, beta, dyn.all_minus(n), t)
    assert abs(law.probs.sum() - 1) < 1e-12 and np.all(law.probs >= -1e-15)
    # magnetization is odd under the global flip
    flipped = ob.exact_evolve(g, beta, dyn.all_plus(n), t)
    assert np.allclose(law.marginal_means(), -flipped.marginal_means(), atol=1e-12)


def test_tv_lower_curve_matches_pointwise():
    g = graphs.cycle(6)
    grid = np.arange(0.0, 3.01, 0.5)
    prof = ob.magnetization_profile(g, 0.1, grid, 500, seed=1)
    curve = ob.tv_lower_curve(g, 0.1, grid, prof, 500, seed=1)
    point = [ob.tv_lower_bound(g, 0.1, t, prof, 500, seed=1).value for t in grid]
    assert np.allclose(curve.value, point)
