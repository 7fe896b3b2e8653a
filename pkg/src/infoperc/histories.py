"""Backward update histories, space-time clusters and their classification.

The history of a vertex ``v`` is developed by scanning the updates in reverse
time order.  An update at ``J`` matters only while ``J`` is in the history;
an oblivious one removes ``J`` and a non-oblivious one replaces it by the
vertices it reads (all neighbors for the plain rule, the exposed subset ``A``
for the generalized rule).  Each vertex occupies the history over half-open
segments ``[a, b)``; the root's segment is closed at ``t_star``.

Three development modes are supported:

``standard``
    floor at time 0.
``modified``
    every vertex gets an extra update at ``t_star`` and nothing is removed
    during ``(t_star - 1, t_star]``: there an oblivious update is ignored and
    a non-oblivious one adds the read vertices while keeping ``J``.
``annealed``
    no floor; development continues into negative time until the history
    dies out, extending the update field block by block.
"""

from __future__ import annotations

import copy
import heapq
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .dynamics import UpdateField, UpdateSequence, concat, grand_coupling_evolve, oblivious_threshold
from .errors import ConfigurationError, HistoryOverflow, ModeError, UnsupportedRuleError
from .graphs import Graph

MODES = ("standard", "modified", "annealed")
RULE_MODES = ("plain", "generalized")
RED, BLUE, GREEN = "red", "blue", "green"

ANNEALED_DEPTH_FACTOR = 50.0


@dataclass(frozen=True)
class HistoryTrace:
    """History of ``root`` from ``t_star`` backward.

    ``segments`` holds ``(vertex, a, b)`` triples; ``events`` the ``(vertex,
    time)`` pairs of the updates that changed the history.
    """

    root: int
    t_star: float
    mode: str
    rule_mode: str
    floor: float
    segments: tuple[tuple[int, float, float], ...]
    events: tuple[tuple[int, float], ...] = ()

    def at(self, t: float) -> set[int]:
        """``H(t)``: vertices whose segment covers ``t``."""
        out = {w for w, a, b in self.segments if a <= t < b}
        if t == self.t_star:
            out.add(self.root)
        return out

    @property
    def vertices(self) -> set[int]:
        return {w for w, _, _ in self.segments}

    @property
    def survives_to_zero(self) -> bool:
        return any(a <= 0.0 < b for _, a, b in self.segments)

    @property
    def length(self) -> float:
        return sum(b - max(a, 0.0) for _, a, b in self.segments if b > 0.0)


class _EventIndex:
    """Per-vertex time-sorted event positions of one update sequence."""

    def __init__(self, seq: UpdateSequence, n: int):
        self.seq = seq
        order = np.argsort(seq.vertex, kind="stable")
        ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(seq.vertex, minlength=n)[:n], out=ptr[1:])
        self.events = [order[ptr[v]:ptr[v + 1]] for v in range(n)]
        self.times = [seq.time[e] for e in self.events]

    def latest_before(self, w: int, b: float, inclusive: bool) -> int:
        """Position (within ``w``'s list) of the last event ``< b`` (``<= b`` if inclusive), or -1."""
        side = "right" if inclusive else "left"
        return int(np.searchsorted(self.times[w], b, side=side)) - 1


def _terminal_for(graph: Graph, updates, t_star: float) -> UpdateSequence:
    if isinstance(updates, UpdateField):
        return updates.terminal(t_star)
    return UpdateField(graph, updates.seed, updates.table).terminal(t_star)


def _reads(graph: Graph, seq: UpdateSequence, e: int, generalized: bool, theta: float):
    """Vertices read by event ``e``; empty for oblivious updates."""
    v = int(seq.vertex[e])
    nb = graph.neighbors(v)
    if generalized:
        return [int(x) for x in nb[seq.subset(e)]]
    if seq.u[e] < theta:
        return []
    return [int(x) for x in nb]


def _develop(graph: Graph, index: _EventIndex, root: int, t_star: float, floor: float,
             modified: bool, generalized: bool, theta: float, terminal: UpdateSequence | None):
    seq = index.seq
    entry: dict[int, float] = {}
    heap: list[tuple[float, int, int]] = []
    segments: list[tuple[int, float, float]] = []
    events: list[tuple[int, float]] = []

    def schedule(w: int, pos: int):
        if pos >= 0:
            e = int(index.events[w][pos])
            t = float(seq.time[e])
            if t > floor:
                heapq.heappush(heap, (-t, w, pos))

    def add(w: int, t: float):
        if w not in entry:
            entry[w] = t
            schedule(w, index.latest_before(w, t, inclusive=False))

    entry[root] = t_star
    if modified:
        reads = _reads(graph, terminal, root, generalized, theta)
        events.append((root, t_star))
        for x in reads:
            add(x, t_star)
    schedule(root, index.latest_before(root, t_star, inclusive=True))

    while heap:
        negt, w, pos = heapq.heappop(heap)
        t = -negt
        e = int(index.events[w][pos])
        reads = _reads(graph, seq, e, generalized, theta)
        if modified and t > t_star - 1.0:
            if reads:
                events.append((w, t))
            for x in reads:
                add(x, t)
            schedule(w, pos - 1)
            continue
        events.append((w, t))
        segments.append((w, t, entry.pop(w)))
        for x in reads:
            add(x, t)
    alive = sorted(entry.items())
    for w, b in alive:
        segments.append((w, floor, b))
    segments.sort(key=lambda s: (s[0], s[1]))
    return tuple(segments), tuple(events), bool(alive)


def _check_mode(mode: str, rule_mode: str):
    if mode not in MODES:
        raise ConfigurationError(f"unknown history mode {mode!r}", key="mode")
    if rule_mode not in RULE_MODES:
        raise ConfigurationError(f"unknown rule mode {rule_mode!r}", key="rule_mode")


def _theta(graph: Graph, beta: float | None, rule_mode: str) -> float:
    if rule_mode == "generalized":
        return 0.0
    if beta is None:
        raise ConfigurationError("plain histories need beta for the oblivious threshold", key="beta")
    return oblivious_threshold(beta, graph.d_max)


class HistoryBuilder:
    """Develops histories of many roots against one shared update source."""

    def __init__(self, graph: Graph, updates: UpdateSequence | UpdateField, t_star: float,
                 mode: str = "standard", rule_mode: str = "plain", beta: float | None = None,
                 depth_cap: float | None = None):
        _check_mode(mode, rule_mode)
        if t_star <= 0:
            raise ConfigurationError("t_star must be positive", key="t_star")
        if (updates.mode == "generalized") != (rule_mode == "generalized"):
            raise ConfigurationError(
                f"update source is {updates.mode} but rule_mode is {rule_mode}", key="rule_mode")
        self.graph = graph
        self.t_star = float(t_star)
        self.mode = mode
        self.rule_mode = rule_mode
        self.theta = _theta(graph, beta, rule_mode)
        self.updates = updates
        self.depth_cap = ANNEALED_DEPTH_FACTOR * self.t_star if depth_cap is None else float(depth_cap)
        self._terminal = _terminal_for(graph, updates, self.t_star) if mode == "modified" else None
        self._indexes: dict[float, _EventIndex] = {}
        if mode == "annealed":
            if not isinstance(updates, UpdateField):
                raise ModeError("annealed development needs an UpdateField to extend backward")
        else:
            seq = updates.window(0.0, self.t_star) if isinstance(updates, UpdateField) else updates
            if seq.t0 > 0.0 or seq.t1 < self.t_star:
                raise ConfigurationError(
                    f"updates cover ({seq.t0}, {seq.t1}], need (0, {self.t_star}]", key="updates")
            if seq.t0 < 0.0 or seq.t1 > self.t_star:
                seq = seq.slice_time(0.0, self.t_star)
            self._indexes[0.0] = _EventIndex(seq, graph.n)

    def _index(self, lo: float) -> _EventIndex:
        idx = self._indexes.get(lo)
        if idx is None:
            idx = _EventIndex(self.updates.window(lo, self.t_star), self.graph.n)
            self._indexes[lo] = idx
        return idx

    def develop(self, root: int) -> HistoryTrace:
        if not 0 <= root < self.graph.n:
            raise ConfigurationError(f"root {root} out of range", key="root")
        generalized = self.rule_mode == "generalized"
        if self.mode != "annealed":
            segs, evs, _ = _develop(self.graph, self._indexes[0.0], root, self.t_star, 0.0,
                                    self.mode == "modified", generalized, self.theta, self._terminal)
            return HistoryTrace(root, self.t_star, self.mode, self.rule_mode, 0.0, segs, evs)
        lo = -1.0
        while True:
            segs, evs, alive = _develop(self.graph, self._index(lo), root, self.t_star, lo,
                                        False, generalized, self.theta, None)
            if not alive:
                return HistoryTrace(root, self.t_star, "annealed", self.rule_mode, -math.inf, segs, evs)
            if -lo >= self.depth_cap:
                partial = HistoryTrace(root, self.t_star, "annealed", self.rule_mode, lo, segs, evs)
                raise HistoryOverflow(
                    f"history of {root} still alive at time {lo} (cap {self.depth_cap})", partial)
            lo = max(2.0 * lo, -math.ceil(self.depth_cap))

    def develop_all(self) -> list[HistoryTrace]:
        return [self.develop(v) for v in range(self.graph.n)]


def develop_history(graph: Graph, updates: UpdateSequence | UpdateField, root_vertex: int,
                    t_star: float, mode: str = "standard", rule_mode: str = "plain",
                    beta: float | None = None, depth_cap: float | None = None) -> HistoryTrace:
    """History of ``root_vertex`` at ``t_star``; ``beta`` is needed for the plain rule."""
    return HistoryBuilder(graph, updates, t_star, mode, rule_mode, beta, depth_cap).develop(root_vertex)


# --- clusters -------------------------------------------------------------


def _merge_intervals(intervals: list[tuple[float, float]]) -> list[tuple[float, float]]:
    out: list[list[float]] = []
    for a, b in sorted(intervals):
        if out and a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return [(a, b) for a, b in out]


def union_segments(traces: Iterable[HistoryTrace]) -> dict[int, list[tuple[float, float]]]:
    """Per-vertex union of the segments of several traces."""
    per: dict[int, list[tuple[float, float]]] = {}
    for tr in traces:
        for w, a, b in tr.segments:
            per.setdefault(w, []).append((a, b))
    return {w: _merge_intervals(iv) for w, iv in sorted(per.items())}


def strand_count(union: dict[int, list[tuple[float, float]]]):
    """Piecewise-constant ``|H(t)|`` as breakpoints ``ts`` and values ``cs`` on ``[ts[i], ts[i+1])``."""
    deltas: dict[float, int] = {}
    for iv in union.values():
        for a, b in iv:
            deltas[a] = deltas.get(a, 0) + 1
            deltas[b] = deltas.get(b, 0) - 1
    ts = sorted(deltas)
    cs = np.cumsum([deltas[t] for t in ts]) if ts else np.zeros(0, dtype=int)
    return np.array(ts, dtype=float), np.asarray(cs, dtype=int)


@dataclass(frozen=True)
class SpaceTimeCluster:
    """A connected component of histories, with its summary measures."""

    cluster_id: int
    members: tuple[int, ...]
    traces: tuple[HistoryTrace, ...]
    mode: str
    t_star: float
    length_L: float
    support_size: int
    survives_to_zero: bool
    branches_at_zero: int
    tau_hat: float | None = None
    coalescence_vertex: int | None = None
    classification: str | None = None

    @property
    def size(self) -> int:
        return len(self.members)

    def union(self) -> dict[int, list[tuple[float, float]]]:
        return union_segments(self.traces)


def cluster_measures(cluster: SpaceTimeCluster | Sequence[HistoryTrace]):
    """``(length_L, support_size, survives_to_zero, branches_at_zero)`` from raw segments.

    Length counts each space-time point once and only over ``[0, t_star]``.
    """
    traces = cluster.traces if isinstance(cluster, SpaceTimeCluster) else tuple(cluster)
    if len(traces) == 1:
        # segments of one history never overlap, so no merging is needed
        segs = traces[0].segments
        length = sum(b - max(a, 0.0) for _, a, b in segs if b > 0.0)
        at_zero = len({w for w, a, b in segs if a <= 0.0 < b})
        return float(length), len({w for w, _, _ in segs}), at_zero > 0, at_zero
    union = union_segments(traces)
    length = sum(b - max(a, 0.0) for iv in union.values() for a, b in iv if b > 0.0)
    at_zero = sum(1 for iv in union.values() if any(a <= 0.0 < b for a, b in iv))
    return float(length), len(union), at_zero > 0, at_zero


def _tau_hat(union, members, t_star: float):
    if len(members) == 1:
        return min(1.0, t_star), members[0]
    ts, cs = strand_count(union)
    best = None
    for i in range(len(ts) - 1):
        if cs[i] == 1 and ts[i] <= t_star - 1.0:
            best = (ts[i], min(ts[i + 1], t_star - 1.0))
    if best is None:
        return t_star, None
    lo, b = best
    # the set is constant between breakpoints, so probing at lo finds the lone vertex
    alone = [w for w, iv in union.items() if any(a <= lo < c for a, c in iv)]
    return t_star - b, alone[0]


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def build_clusters(graph: Graph, traces: Sequence[HistoryTrace]) -> list[SpaceTimeCluster]:
    """Partition roots into clusters: two roots join when their histories share a space-time point."""
    if not traces:
        return []
    modes = {(tr.mode, tr.rule_mode, tr.t_star) for tr in traces}
    if len(modes) != 1:
        raise ModeError(f"traces developed inconsistently: {sorted(modes, key=str)}")
    mode, _, t_star = modes.pop()
    by_root = {tr.root: tr for tr in traces}
    if len(by_root) != len(traces):
        raise ModeError("duplicate roots among traces")
    roots = sorted(by_root)
    pos = {r: i for i, r in enumerate(roots)}
    uf = _UnionFind(len(roots))
    per_vertex: dict[int, list[tuple[float, float, int]]] = {}
    for tr in traces:
        for w, a, b in tr.segments:
            per_vertex.setdefault(w, []).append((a, b, pos[tr.root]))
    for items in per_vertex.values():
        items.sort()
        reach_end, reach_owner = -math.inf, -1
        for a, b, owner in items:
            if a < reach_end:
                uf.union(owner, reach_owner)
            if b > reach_end:
                reach_end, reach_owner = b, owner
    groups: dict[int, list[int]] = {}
    for r in roots:
        groups.setdefault(uf.find(pos[r]), []).append(r)
    out = []
    for cid, members in enumerate(sorted(groups.values())):
        tr = tuple(by_root[r] for r in members)
        length, support, survives, at_zero = cluster_measures(tr)
        tau = cvert = None
        if mode == "modified":
            tau, cvert = _tau_hat(union_segments(tr), members, t_star)
        out.append(SpaceTimeCluster(cid, tuple(members), tr, mode, t_star, length, support,
                                    survives, at_zero, tau, cvert))
    return out


def coalescence_time(cluster: SpaceTimeCluster) -> float:
    """``min{s >= 1 : |H(t_star - s)| = 1}``, capped at ``t_star``, on the cluster's union history."""
    if cluster.mode != "modified":
        raise ModeError("coalescence time is defined for modified-mode clusters only")
    return cluster.tau_hat


def coupled_extremes(graph: Graph, beta: float, updates: UpdateSequence | UpdateField, t_star: float,
                     rule: str = "heat_bath", modified: bool = False):
    """Plus- and minus-started configurations at ``t_star`` under the shared updates."""
    seq = updates.window(0.0, t_star) if isinstance(updates, UpdateField) else updates.slice_time(0.0, t_star)
    if modified:
        seq = concat(seq, _terminal_for(graph, updates, t_star))
    n = graph.n
    plus, minus = grand_coupling_evolve(
        graph, beta, [np.ones(n, dtype=np.int8), -np.ones(n, dtype=np.int8)], seq, rule)
    return plus, minus


def classify_clusters(clusters: Sequence[SpaceTimeCluster], graph: Graph, beta: float,
                      updates: UpdateSequence | UpdateField, rule: str | None = None
                      ) -> list[SpaceTimeCluster]:
    """Red if the plus and minus chains disagree on the members, Blue for dead singletons, else Green."""
    if not clusters:
        return []
    c0 = clusters[0]
    expected = "generalized" if c0.traces[0].rule_mode == "generalized" else "heat_bath"
    rule = expected if rule is None else rule
    if rule not in ("heat_bath", "generalized"):
        raise UnsupportedRuleError(f"classification needs a monotone rule, got {rule!r}")
    if rule != expected:
        raise ModeError(f"clusters developed for {expected}, asked to classify under {rule}")
    if c0.mode == "annealed":
        raise ModeError("use annealed_classify for annealed clusters")
    plus, minus = coupled_extremes(graph, beta, updates, c0.t_star, rule, c0.mode == "modified")
    out = []
    for c in clusters:
        m = list(c.members)
        if np.any(plus[m] != minus[m]):
            label = RED
        elif c.size == 1 and not c.survives_to_zero:
            label = BLUE
        else:
            label = GREEN
        out.append(_labelled(c, label))
    return out


def _labelled(c: SpaceTimeCluster, label: str) -> SpaceTimeCluster:
    out = copy.copy(c)
    object.__setattr__(out, "classification", label)
    return out


def annealed_classify(clusters: Sequence[SpaceTimeCluster], t_m: float | None = None
                      ) -> list[SpaceTimeCluster]:
    """Red iff the cluster's union history holds at least two strands throughout ``[0, t_m]``."""
    out = []
    for c in clusters:
        if c.mode != "annealed":
            raise ModeError("annealed classification needs histories developed past time 0")
        horizon = c.t_star if t_m is None else float(t_m)
        ts, cs = strand_count(c.union())
        red = c.size >= 2
        if red:
            for i in range(len(ts) - 1):
                lo, hi = ts[i], ts[i + 1]
                if hi > 0.0 and lo <= horizon and cs[i] < 2:
                    red = False
                    break
        if red:
            label = RED
        elif c.size == 1 and not c.survives_to_zero:
            label = BLUE
        else:
            label = GREEN
        out.append(_labelled(c, label))
    return out


def decompose(graph: Graph, beta: float, updates: UpdateSequence | UpdateField, t_star: float,
              mode: str = "standard", rule_mode: str = "plain", classify: bool = True
              ) -> list[SpaceTimeCluster]:
    """Develop every root, build clusters and (optionally) classify them."""
    builder = HistoryBuilder(graph, updates, t_star, mode, rule_mode, beta)
    clusters = build_clusters(graph, builder.develop_all())
    if not classify:
        return clusters
    if mode == "annealed":
        return annealed_classify(clusters)
    return classify_clusters(clusters, graph, beta, updates)


def red_vertices(clusters: Iterable[SpaceTimeCluster]) -> frozenset[int]:
    return frozenset(v for c in clusters if c.classification == RED for v in c.members)


CLUSTER_FIELDS = ("cluster_id", "class", "members", "tau_hat", "length_L", "support_size",
                  "survives_to_zero", "branches_at_zero")


def cluster_rows(clusters: Iterable[SpaceTimeCluster]):
    """Rows of the cluster dump; members are space-separated vertex ids."""
    for c in clusters:
        yield (c.cluster_id, c.classification or "", " ".join(map(str, c.members)),
               "" if c.tau_hat is None else repr(float(c.tau_hat)), repr(float(c.length_L)),
               c.support_size, int(c.survives_to_zero), c.branches_at_zero)
