import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infoperc import graphs
from infoperc.errors import ParameterError, ParseError


def _check_invariants(g):
    adj = [set(g.neighbors(v).tolist()) for v in range(g.n)]
    for v in range(g.n):
        assert v not in adj[v]
        assert len(adj[v]) == len(g.neighbors(v))
        assert list(g.neighbors(v)) == sorted(g.neighbors(v))
        for u in adj[v]:
            assert v in adj[u]
    assert g.d_max == max((len(a) for a in adj), default=0)


def test_cycle_structure():
    g = graphs.cycle(4)
    assert g.n == 4 and g.d_max == 2
    assert set(g.degrees.tolist()) == {2}


def test_hypercube_edges_differ_in_one_coordinate():
    g = graphs.hypercube(3)
    assert g.n == 8 and set(g.degrees.tolist()) == {3}
    for u, v in g.edges():
        assert bin(u ^ v).count("1") == 1


def test_random_regular_deterministic():
    a = graphs.random_regular(10, 3, seed=7)
    b = graphs.random_regular(10, 3, seed=7)
    assert a == b
    assert set(a.degrees.tolist()) == {3}


def test_random_regular_never_loops_or_multi_edges():
    for seed in range(1000):
        g = graphs.random_regular(10, 3, seed=seed)
        assert g.n_edges == 15
        assert set(g.degrees.tolist()) == {3}
        _check_invariants(g)


@pytest.mark.parametrize("n,d,p", [(5, 3, None), (10, 0, None), (10, 3, None)])
def test_random_regular_parameters(n, d, p):
    if n * d % 2 or d == 0:
        with pytest.raises(ParameterError):
            graphs.random_regular(n, d, seed=1)
    else:
        graphs.random_regular(n, d, seed=1)


@pytest.mark.parametrize("p", [-0.1, 1.5])
def test_erdos_renyi_bad_p(p):
    with pytest.raises(ParameterError):
        graphs.erdos_renyi(10, p, seed=1)


def test_degree_stats():
    d, hist = graphs.degree_stats(graphs.binary_tree(2))
    assert d == 3 and hist == {1: 4, 2: 1, 3: 2}
    assert graphs.degree_stats(graphs.hypercube(4)) == (4, {4: 16})
    _, hist = graphs.degree_stats(graphs.erdos_renyi(50, 0.5, seed=3))
    assert sum(hist.values()) == 50


@pytest.mark.parametrize("kind,params", [
    ("cycle", {"n": 7}), ("path", {"n": 5}), ("torus", {"dim": 2, "side": 4}),
    ("binary_tree", {"depth": 3}), ("hypercube", {"dim": 4}),
])
def test_deterministic_families_connected(kind, params):
    g = graphs.generate_graph(kind, **params)
    _check_invariants(g)
    assert g.is_connected()


def test_torus_degree():
    g = graphs.torus(2, 5)
    assert g.n == 25 and set(g.degrees.tolist()) == {4}


def test_unknown_kind():
    with pytest.raises(ParameterError):
        graphs.generate_graph("moebius", n=3)


def test_edge_list_examples():
    g = graphs.load_edge_list("0 1\n1 2")
    assert g.n == 3 and g.d_max == 2
    assert graphs.save_edge_list(graphs.cycle(3)) == "0 1\n0 2\n1 2"
    rr = graphs.random_regular(10, 3, seed=7)
    assert graphs.load_edge_list(graphs.save_edge_list(rr)) == rr


@pytest.mark.parametrize("text,line", [("0 1\n1 x", 2), ("0 1\n\n2 2", 3), ("# n = 3\n0 5", 2), ("0 1 2", 1)])
def test_edge_list_errors_name_line(text, line):
    with pytest.raises(ParseError) as exc:
        graphs.load_edge_list(text)
    assert exc.value.line == line


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 30), st.floats(0.0, 1.0), st.integers(0, 2**32))
def test_erdos_renyi_roundtrip_and_invariants(n, p, seed):
    g = graphs.erdos_renyi(n, p, seed=seed)
    _check_invariants(g)
    assert graphs.load_edge_list(graphs.save_edge_list(g)) == g
    assert g == graphs.erdos_renyi(n, p, seed=seed)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 20).map(lambda k: 2 * k), st.integers(1, 4), st.integers(0, 2**32))
def test_random_regular_property(n, d, seed):
    if d >= n:
        return
    g = graphs.random_regular(n, d, seed=seed)
    _check_invariants(g)
    assert np.all(g.degrees == d)
