"""Bounded-degree graphs: immutable CSR adjacency, generators and edge-list I/O."""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import ParameterError, ParseError
from .seeding import TAG_GRAPH, substream


@dataclass(frozen=True, eq=False)
class Graph:
    """Simple undirected graph on vertices ``0..n-1``.

    ``indptr``/``indices`` hold the sorted neighbor lists in CSR form; the
    arrays are made read-only on construction.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    d_max: int = field(init=False)

    def __post_init__(self):
        indptr = np.ascontiguousarray(self.indptr, dtype=np.int64)
        indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        if indptr.shape != (self.n + 1,) or indptr[0] != 0 or indptr[-1] != len(indices):
            raise ParameterError("malformed CSR arrays")
        deg = np.diff(indptr)
        src = np.repeat(np.arange(self.n), deg)
        if len(indices) and (indices.min() < 0 or indices.max() >= self.n):
            raise ParameterError("neighbor id out of range")
        loops = np.flatnonzero(indices == src)
        if len(loops):
            raise ParameterError(f"self-loop at {src[loops[0]]}")
        same_row = src[1:] == src[:-1]
        bad = np.flatnonzero(same_row & (np.diff(indices) <= 0))
        if len(bad):
            raise ParameterError(f"neighbor list of {src[bad[0]]} unsorted or duplicated")
        # symmetry: the multiset of (u, v) equals that of (v, u)
        fwd = np.sort(src * self.n + indices)
        bwd = np.sort(indices * self.n + src)
        if not np.array_equal(fwd, bwd):
            raise ParameterError("adjacency is not symmetric")
        indptr.setflags(write=False)
        indices.setflags(write=False)
        object.__setattr__(self, "indptr", indptr)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "d_max", int(deg.max()) if self.n else 0)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "Graph":
        if n < 0:
            raise ParameterError("n must be nonnegative")
        adj: list[set[int]] = [set() for _ in range(n)]
        for u, v in edges:
            u, v = int(u), int(v)
            if not (0 <= u < n and 0 <= v < n):
                raise ParameterError(f"edge ({u}, {v}) out of range for n={n}")
            if u == v:
                raise ParameterError(f"self-loop at {u}")
            if v in adj[u]:
                raise ParameterError(f"duplicate edge ({u}, {v})")
            adj[u].add(v)
            adj[v].add(u)
        indptr = np.zeros(n + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(a) for a in adj])
        indices = np.fromiter(
            itertools.chain.from_iterable(sorted(a) for a in adj),
            dtype=np.int64,
            count=int(indptr[-1]),
        )
        return cls(n, indptr, indices)

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def degree(self, v: int) -> int:
        return int(self.indptr[v + 1] - self.indptr[v])

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    @property
    def adjacency(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(int(w) for w in self.neighbors(v)) for v in range(self.n))

    def edges(self) -> list[tuple[int, int]]:
        """Edges as ``(min, max)`` pairs in lexicographic order."""
        return [(v, int(w)) for v in range(self.n) for w in self.neighbors(v) if w > v]

    @property
    def n_edges(self) -> int:
        return len(self.indices) // 2

    def is_connected(self) -> bool:
        if self.n == 0:
            return True
        seen = np.zeros(self.n, dtype=bool)
        seen[0] = True
        stack = [0]
        while stack:
            v = stack.pop()
            for w in self.neighbors(v):
                if not seen[w]:
                    seen[w] = True
                    stack.append(int(w))
        return bool(seen.all())

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
        )

    def __hash__(self):
        return hash((self.n, self.indices.tobytes()))

    def __repr__(self):
        return f"Graph(n={self.n}, edges={self.n_edges}, d_max={self.d_max})"


# --- generators -----------------------------------------------------------


def _positive(name: str, value: int, minimum: int = 1) -> int:
    if int(value) != value or value < minimum:
        raise ParameterError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def path(n: int) -> Graph:
    n = _positive("n", n)
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def cycle(n: int) -> Graph:
    n = _positive("n", n, 3)
    return Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def torus(dim: int, side: int) -> Graph:
    dim = _positive("dim", dim)
    side = _positive("side", side, 3)
    n = side**dim
    edges = []
    for v in range(n):
        for axis in range(dim):
            stride = side**axis
            coord = (v // stride) % side
            w = v - coord * stride + ((coord + 1) % side) * stride
            edges.append((v, w))
    return Graph.from_edges(n, edges)


def binary_tree(depth: int) -> Graph:
    """Complete binary tree with ``depth`` levels below the root (heap order)."""
    depth = _positive("depth", depth, 0)
    n = 2 ** (depth + 1) - 1
    return Graph.from_edges(n, [((v - 1) // 2, v) for v in range(1, n)])


def hypercube(dim: int) -> Graph:
    dim = _positive("dim", dim)
    n = 1 << dim
    return Graph.from_edges(n, [(v, v ^ (1 << i)) for v in range(n) for i in range(dim) if v < v ^ (1 << i)])


def random_regular(n: int, d: int, seed: int = 0, max_tries: int = 100_000) -> Graph:
    """Uniform simple d-regular graph via the pairing model.

    A perfect matching of the ``n*d`` half-edges is drawn; if it contains a
    loop or a repeated pair the whole matching is discarded and redrawn.
    """
    n = _positive("n", n)
    d = _positive("d", d)
    if (n * d) % 2:
        raise ParameterError(f"n*d must be even (n={n}, d={d})")
    if d >= n:
        raise ParameterError(f"need d < n (n={n}, d={d})")
    rng = substream(seed, TAG_GRAPH, n, d)
    stubs = np.repeat(np.arange(n), d)
    for _ in range(max_tries):
        perm = rng.permutation(stubs)
        a, b = perm[0::2], perm[1::2]
        if np.any(a == b):
            continue
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        keys = lo * n + hi
        if len(np.unique(keys)) != len(keys):
            continue
        return Graph.from_edges(n, zip(lo.tolist(), hi.tolist()))
    raise ParameterError(f"pairing model failed {max_tries} times for n={n}, d={d}")


def erdos_renyi(n: int, p: float, seed: int = 0) -> Graph:
    n = _positive("n", n)
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"p must lie in [0, 1], got {p}")
    rng = substream(seed, TAG_GRAPH, n, int(round(p * 2**32)))
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p
    return Graph.from_edges(n, zip(iu[keep].tolist(), ju[keep].tolist()))


GENERATORS = {
    "path": path,
    "cycle": cycle,
    "torus": torus,
    "binary_tree": binary_tree,
    "hypercube": hypercube,
    "random_regular": random_regular,
    "erdos_renyi": erdos_renyi,
}

_SEEDED = {"random_regular", "erdos_renyi"}


def generate_graph(kind: str, seed: int = 0, **params) -> Graph:
    """Build a graph by family name, e.g. ``generate_graph("torus", dim=2, side=8)``."""
    try:
        gen = GENERATORS[kind]
    except KeyError:
        raise ParameterError(f"unknown graph kind {kind!r}") from None
    if kind in _SEEDED:
        params["seed"] = seed
    try:
        return gen(**params)
    except TypeError as exc:
        raise ParameterError(f"bad parameters for {kind}: {exc}") from None


def degree_stats(graph: Graph) -> tuple[int, dict[int, int]]:
    hist = Counter(int(k) for k in graph.degrees)
    return graph.d_max, dict(sorted(hist.items()))


# --- edge-list text format ------------------------------------------------


def save_edge_list(graph: Graph) -> str:
    """Canonical text: one ``u v`` line per edge, ``u < v``, sorted.

    A ``# n = K`` header is emitted only when trailing isolated vertices
    would otherwise be lost.
    """
    edges = graph.edges()
    implied = max((v for e in edges for v in e), default=-1) + 1
    lines = [f"# n = {graph.n}"] if implied != graph.n else []
    lines += [f"{u} {v}" for u, v in edges]
    return "\n".join(lines)


def load_edge_list(text: str) -> Graph:
    edges: list[tuple[int, int]] = []
    n_decl = None
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].replace(" ", "")
            if body.startswith("n="):
                try:
                    n_decl = int(body[2:])
                except ValueError:
                    raise ParseError(f"bad vertex-count header {raw!r}", lineno) from None
            continue
        tokens = line.split()
        if len(tokens) != 2:
            raise ParseError(f"expected two vertex ids, got {raw!r}", lineno)
        try:
            u, v = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise ParseError(f"non-integer token in {raw!r}", lineno) from None
        if u < 0 or v < 0:
            raise ParseError(f"negative vertex id in {raw!r}", lineno)
        if n_decl is not None and max(u, v) >= n_decl:
            raise ParseError(f"vertex id out of range (n = {n_decl}) in {raw!r}", lineno)
        if u == v:
            raise ParseError(f"self-loop at vertex {u}", lineno)
        key = (min(u, v), max(u, v))
        if key in seen:
            raise ParseError(f"duplicate edge {key}", lineno)
        seen.add(key)
        edges.append(key)
    n = max((v for e in edges for v in e), default=-1) + 1
    if n_decl is not None:
        n = n_decl
    return Graph.from_edges(n, edges)
