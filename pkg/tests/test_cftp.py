import math

import numpy as np
import pytest
from scipy import stats

from infoperc import cftp
from infoperc import dynamics as dyn
from infoperc import fourier_rule as fr
from infoperc import graphs
from infoperc import observables as ob
from infoperc.errors import NoCoalescence, UnsupportedRuleError


def _empirical(spins):
    n = spins.shape[1]
    idx = ((spins > 0).astype(np.int64) << np.arange(n)).sum(axis=1)
    return np.bincount(idx, minlength=1 << n) / len(spins)


def _levels_nest(levels):
    """Each deeper window, cut back to the previous horizon, equals the previous window."""
    prev = None
    for seq in levels:
        if prev is not None:
            cut = seq.slice_time(prev.t0, 0.0)
            if not (np.array_equal(cut.time, prev.time) and np.array_equal(cut.u, prev.u)
                    and np.array_equal(cut.vertex, prev.vertex)):
                return False
        prev = seq
    return True


@pytest.mark.parametrize("seed", range(5))
def test_honest_levels_reuse_randomness(seed):
    g = graphs.cycle(5)
    assert _levels_nest(cftp.level_windows(dyn.UpdateField(g, seed), max_depth=16))


@pytest.mark.parametrize("seed", range(5))
def test_broken_levels_detected(seed):
    g = graphs.cycle(5)
    assert not _levels_nest(cftp.fresh_level_windows(g, seed, max_depth=16))
    assert not _levels_nest(cftp.start_keyed_level_windows(dyn.UpdateField(g, seed), max_depth=16))


def test_perfect_sample_path2_matches_gibbs():
    g = graphs.path(2)
    spins, depths = cftp.sample_many(g, 0.3, 40000, seed=11)
    tv = 0.5 * np.abs(_empirical(spins) - ob.gibbs(g, 0.3).probs).sum()
    assert tv < 0.01
    assert np.all(depths >= 1) and np.all((depths & (depths - 1)) == 0)


def test_beta_zero_uniform_chi_square():
    g = graphs.cycle(4)
    spins, _ = cftp.sample_many(g, 0.0, 100000, seed=5)
    counts = _empirical(spins) * len(spins)
    assert stats.chisquare(counts).pvalue > 0.01


def test_generalized_rule_sampler():
    g = graphs.cycle(4)
    t = fr.build_rule_table(0.1, 2)
    spins, _ = cftp.sample_many(g, 0.1, 20000, seed=2, table=t)
    tv = 0.5 * np.abs(_empirical(spins) - ob.gibbs(g, 0.1).probs).sum()
    assert tv < 0.02


def test_sample_deterministic():
    g = graphs.cycle(6)
    a = cftp.perfect_sample(g, 0.2, 99)
    b = cftp.perfect_sample(g, 0.2, 99)
    assert np.array_equal(a.spins, b.spins) and a.depth == b.depth


def test_sandwich_during_run():
    g = graphs.cycle(8)
    for seed in range(30):
        field = dyn.UpdateField(g, seed)
        s = cftp.perfect_sample_from_field(g, 0.3, field)
        seq = field.window(-float(s.depth), 0.0)
        rng = np.random.default_rng(seed)
        x = rng.choice([-1, 1], size=8).astype(np.int8)
        spins = np.stack([dyn.all_plus(8), x, dyn.all_minus(8)])
        runner = dyn.ChainRunner(g, 0.3, seq)
        for t in np.linspace(-s.depth, 0, 9)[1:]:
            runner.advance(spins, t)
            assert np.all(spins[0] >= spins[1]) and np.all(spins[1] >= spins[2])
        assert np.array_equal(spins[1], s.spins)


def test_depth_increases_with_beta():
    g = graphs.cycle(32)
    med = []
    for beta in (0.0, 0.2, 0.4):
        _, d = cftp.sample_many(g, beta, 300, seed=3)
        med.append(np.mean(np.log2(d)))
    assert med[0] <= med[1] <= med[2]
    assert med[0] < med[2]


def test_rule_errors():
    g = graphs.cycle(4)
    with pytest.raises(UnsupportedRuleError):
        cftp.perfect_sample(g, 0.1, 0, rule="metropolis")
    with pytest.raises(UnsupportedRuleError):
        cftp.perfect_sample(g, 0.1, 0, rule="generalized")


def test_no_coalescence():
    g = graphs.cycle(20)
    with pytest.raises(NoCoalescence):
        cftp.perfect_sample(g, 2.0, 0, max_depth=2)


def test_annealed_beta_zero_per_vertex():
    g = graphs.cycle(20)
    grid = np.array([0.0, 0.5, 1.0, 2.0])
    ann = cftp.annealed_compare(g, 0.0, grid, 1500, seed=4)
    for i, t in enumerate(grid):
        p = 0.5 * math.exp(-t)
        se = math.sqrt(p * (1 - p) / (1500 * 20))
        assert abs(ann.per_vertex[i].mean() - p) < 4 * se
    assert ann.curve.value[0] > 0.99


def test_annealed_zero_after_coalescence():
    g = graphs.cycle(10)
    beta = 0.2
    for r in range(40):
        field = ob.replica_field(g, 8, r, None, stream=4)
        y0 = cftp.perfect_sample_from_field(g, beta, field)
        x0 = cftp.uniform_start(g.n, field.seed)
        seq = field.window(0.0, 3.0)
        hi, lo, x, y = dyn.grand_coupling_evolve(
            g, beta, [dyn.all_plus(10), dyn.all_minus(10), x0, y0.spins], seq)
        if np.array_equal(hi, lo):
            assert np.array_equal(x, y)


def test_quenched_examples():
    g = graphs.cycle(40)
    x0 = cftp.uniform_start(40, 3)
    q = cftp.quenched_statistic(g, 0.0, [0.0, 0.7, 1.5], x0, 2000, seed=1)
    assert q.mean[0] == 40 and q.stderr[0] == 0
    for i, t in enumerate(q.grid[1:], start=1):
        assert abs(q.mean[i] - 40 * math.exp(-t)) < 4 * q.stderr[i]


def test_quenched_threshold_value():
    assert cftp.quenched_threshold(64) == pytest.approx(4 * math.exp(2))


def test_quenched_cycle64_above_threshold():
    g = graphs.cycle(64)
    t = 0.5 * math.log(64) - 2
    x0 = cftp.uniform_start(64, 1)
    q = cftp.quenched_statistic(g, 0.05, [t], x0, 500, seed=2)
    assert q.at(t).lo > cftp.quenched_threshold(64)
