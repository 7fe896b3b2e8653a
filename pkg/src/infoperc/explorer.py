"""Lazy exploration of the space-time cluster through a point, and the dominating branching chain.

Each vertex's time line on ``[0, t_star]`` is cut by its updates into
*pieces*; in modified mode the updates in ``(t_star - 1, t_star]`` do not cut.
A non-oblivious update of ``J`` at time ``tau`` links the piece of ``J`` it
belongs to with the pieces of the vertices it reads that contain ``tau``.
The extra update at ``t_star`` links top pieces the same way.

Which pieces actually lie in some history is decided afterwards, top-down:
every top piece is a root, and a link out of a piece ``Q`` at time ``tau``
is realized when ``Q`` is already in a history above ``tau``.  Only the
undirected piece component of the starting point is ever built.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import UpdateField, UpdateSequence, oblivious_threshold
from .errors import ExplorationOverflow, ParameterError, SampleSizeError
from .fourier_rule import SERIES_ABS_SUM, RuleTable
from .graphs import Graph
from .histories import _merge_intervals, _tau_hat
from .observables import Z95
from .seeding import TAG_REPLICA, TAG_START, derive_seed, substream

MAX_PIECES = 200_000


@dataclass(frozen=True)
class ExploredCluster:
    """Cluster of the space-time point ``(w0, t0)``.

    ``pieces`` lists ``(vertex, bottom, top)`` for the portions lying in some
    history; ``members`` are the vertices whose root piece belongs to the
    cluster.  A point outside every history gives an empty cluster.
    """

    w0: int
    t0: float
    t_star: float
    mode: str
    members: tuple[int, ...]
    pieces: tuple[tuple[int, float, float], ...]
    length_L: float
    support_size: int
    tau_hat: float | None
    explored: int

    @property
    def dormant(self) -> bool:
        return not self.pieces


class _PieceGraph:
    def __init__(self, graph: Graph, seq: UpdateSequence, terminal: UpdateSequence | None,
                 t_star: float, modified: bool, generalized: bool, theta: float):
        self.graph = graph
        self.seq = seq
        self.terminal = terminal
        self.t_star = t_star
        self.modified = modified
        self.generalized = generalized
        self.theta = theta
        order = np.argsort(seq.vertex, kind="stable")
        ptr = np.zeros(graph.n + 1, dtype=np.int64)
        np.cumsum(np.bincount(seq.vertex, minlength=graph.n), out=ptr[1:])
        self._order, self._ptr = order, ptr
        self._cache: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        self.cut_limit = t_star - 1.0 if modified else math.inf

    def vertex_events(self, w: int):
        """``(events, times, cuts)`` of ``w``; ``cuts`` are the times that split its line."""
        hit = self._cache.get(w)
        if hit is None:
            ev = self._order[self._ptr[w]:self._ptr[w + 1]]
            times = self.seq.time[ev]
            cuts = times[times <= self.cut_limit]
            hit = (ev, times, cuts)
            self._cache[w] = hit
        return hit

    def n_pieces(self, w: int) -> int:
        return len(self.vertex_events(w)[2]) + 1

    def bounds(self, piece: tuple[int, int]) -> tuple[float, float]:
        w, j = piece
        cuts = self.vertex_events(w)[2]
        bot = 0.0 if j == 0 else float(cuts[j - 1])
        top = self.t_star if j == len(cuts) else float(cuts[j])
        return bot, top

    def is_root(self, piece: tuple[int, int]) -> bool:
        return piece[1] == self.n_pieces(piece[0]) - 1

    def piece_at(self, x: int, tau: float) -> tuple[int, int]:
        cuts = self.vertex_events(x)[2]
        return (x, int(np.searchsorted(cuts, tau, side="left")))

    def reads(self, seq: UpdateSequence, e: int) -> np.ndarray:
        nb = self.graph.neighbors(int(seq.vertex[e]))
        if self.generalized:
            return nb[seq.subset(e)]
        return nb if seq.u[e] >= self.theta else nb[:0]

    def _own_events(self, piece):
        """Link-producing events of a piece: ``(seq, index, tau)`` triples."""
        w, j = piece
        ev, times, cuts = self.vertex_events(w)
        out = []
        if j >= 1:
            out.append((self.seq, int(ev[j - 1]), float(times[j - 1])))
        if j == len(cuts):
            for k in range(len(cuts), len(ev)):
                out.append((self.seq, int(ev[k]), float(times[k])))
            if self.modified:
                out.append((self.terminal, w, self.t_star))
        return out

    def out_links(self, piece):
        links = []
        for seq, e, tau in self._own_events(piece):
            for x in self.reads(seq, e):
                links.append((piece, self.piece_at(int(x), tau), tau))
        return links

    def in_links(self, piece):
        x, j = piece
        bot, top = self.bounds(piece)
        root = self.is_root(piece)
        links = []
        for y in self.graph.neighbors(x):
            y = int(y)
            ev, times, cuts = self.vertex_events(y)
            lo = int(np.searchsorted(times, bot, side="right"))
            hi = int(np.searchsorted(times, top, side="right" if root else "left"))
            for k in range(lo, hi):
                e = int(ev[k])
                if x in self.reads(self.seq, e):
                    src = (y, k + 1) if k < len(cuts) else (y, len(cuts))
                    links.append((src, piece, float(times[k])))
            if root and self.modified and x in self.reads(self.terminal, y):
                links.append(((y, len(cuts)), piece, self.t_star))
        return links


def _explore(pg: _PieceGraph, start, max_pieces: int):
    seen = {start}
    stack = [start]
    links = set()
    while stack:
        p = stack.pop()
        for link in pg.out_links(p) + pg.in_links(p):
            links.add(link)
            for q in (link[0], link[1]):
                if q not in seen:
                    seen.add(q)
                    stack.append(q)
                    if len(seen) > max_pieces:
                        raise ExplorationOverflow(
                            f"piece component exceeded {max_pieces} pieces",
                            partial={"pieces": len(seen), "links": len(links)})
    return seen, links


def explore_space_time_cluster(graph: Graph, beta: float, w0: int, t0: float, t_star: float,
                               seed: int, rule_mode: str = "plain", table: RuleTable | None = None,
                               mode: str = "modified", max_pieces: int = MAX_PIECES,
                               field: UpdateField | None = None) -> ExploredCluster:
    """Cluster containing ``(w0, t0)``, built only from the pieces its component touches."""
    if not 0 < t0 <= t_star:
        raise ParameterError(f"need 0 < t0 <= t_star, got t0={t0}, t_star={t_star}")
    if mode not in ("standard", "modified"):
        raise ParameterError(f"exploration supports standard and modified modes, not {mode!r}")
    generalized = rule_mode == "generalized"
    if generalized and table is None:
        raise ParameterError("the generalized rule needs a rule table")
    if field is None:
        field = UpdateField(graph, seed, table if generalized else None)
    seq = field.window(0.0, t_star)
    terminal = field.terminal(t_star) if mode == "modified" else None
    theta = 0.0 if generalized else oblivious_threshold(beta, graph.d_max)
    pg = _PieceGraph(graph, seq, terminal, float(t_star), mode == "modified", generalized, theta)

    start = pg.piece_at(w0, t0) if t0 < t_star else (w0, pg.n_pieces(w0) - 1)
    pieces, links = _explore(pg, start, max_pieces)

    top = {p: (math.inf if pg.is_root(p) else -math.inf) for p in pieces}
    realized = []
    for src, dst, tau in sorted(links, key=lambda l: -l[2]):
        if tau < top[src]:
            if tau > top[dst]:
                top[dst] = tau
            realized.append((src, dst))

    def portion(p):
        bot, t = pg.bounds(p)
        return bot, min(top[p], pg.t_star)

    s_bot, s_top = portion(start)
    inside = pg.is_root(start) or (top[start] > -math.inf and s_bot <= t0 < s_top)
    if not inside:
        return ExploredCluster(w0, float(t0), float(t_star), mode, (), (), 0.0, 0, None, len(pieces))

    adj: dict = {}
    for a, b in realized:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    comp = {start}
    stack = [start]
    while stack:
        p = stack.pop()
        for q in adj.get(p, ()):
            if q not in comp:
                comp.add(q)
                stack.append(q)

    active = sorted((p[0], *portion(p)) for p in comp)
    members = tuple(sorted(p[0] for p in comp if pg.is_root(p)))
    per_vertex: dict[int, list[tuple[float, float]]] = {}
    for w, a, b in active:
        per_vertex.setdefault(w, []).append((a, b))
    union = {w: _merge_intervals(iv) for w, iv in per_vertex.items()}
    length = float(sum(b - a for iv in union.values() for a, b in iv))
    tau = None
    if mode == "modified" and members:
        tau = float(_tau_hat(union, list(members), float(t_star))[0])
    return ExploredCluster(w0, float(t0), float(t_star), mode, members, tuple(active), length,
                           len(union), tau, len(pieces))


# --- exponential moments ------------------------------------------------


@dataclass(frozen=True)
class MomentEstimate:
    """Empirical ``E exp(eta L + lam |H|)`` with per-sample measures kept for tail analysis."""

    mean: float
    stderr: float
    lo: float
    hi: float
    log_moment: float
    quantiles: dict[float, float]
    length_L: np.ndarray
    support: np.ndarray
    tau_hat: np.ndarray
    members: np.ndarray


def exp_moment_estimate(graph: Graph, beta: float, eta: float, lam: float, samples: int, seed: int,
                        t_star: float = 5.0, rule_mode: str = "plain", table: RuleTable | None = None,
                        max_pieces: int = MAX_PIECES) -> MomentEstimate:
    """i.i.d. clusters through root points ``(w0, t_star)`` with ``w0`` uniform."""
    if not 0 < eta < 1:
        raise ParameterError("eta must lie in (0, 1)")
    if lam <= 0:
        raise ParameterError("lambda must be positive")
    if samples < 2:
        raise SampleSizeError("need at least two samples")
    L = np.empty(samples)
    H = np.empty(samples, dtype=np.int64)
    tau = np.empty(samples)
    C = np.empty(samples, dtype=np.int64)
    for i in range(samples):
        s = derive_seed(seed, TAG_REPLICA, i)
        w0 = int(substream(s, TAG_START).integers(graph.n))
        c = explore_space_time_cluster(graph, beta, w0, t_star, t_star, s, rule_mode, table,
                                       max_pieces=max_pieces)
        L[i], H[i], tau[i], C[i] = c.length_L, c.support_size, c.tau_hat, len(c.members)
    x = np.exp(eta * L + lam * H)
    mean = float(x.mean())
    se = float(x.std(ddof=1) / math.sqrt(samples))
    qs = {q: float(np.quantile(x, q)) for q in (0.5, 0.9, 0.99, 0.999)}
    return MomentEstimate(mean, se, mean - Z95 * se, mean + Z95 * se, math.log(mean), qs, L, H, tau, C)


def beta0_moment(eta: float, lam: float, t_star: float) -> float:
    """Closed form of ``E exp(eta L + lam |H|)`` at ``beta = 0`` for a root point.

    The root's strand is frozen on ``(t_star - 1, t_star]`` and then lives an
    exponential time, cut off at time 0.
    """
    T = t_star - 1.0
    a = 1.0 - eta
    return math.exp(lam + eta) * ((1.0 - math.exp(-a * T)) / a + math.exp(-a * T))


@dataclass(frozen=True)
class TailFit:
    slope: float
    stderr: float
    ks: np.ndarray
    log_p: np.ndarray


def tail_slope(values, k_max: int = 30, min_count: int = 10) -> TailFit:
    """Weighted least-squares slope of ``log P(X >= k)`` against ``k``.

    Only ``k`` with at least ``min_count`` exceedances enter; weights are the
    inverse delta-method variances ``(1 - p) / (N p)``.
    """
    values = np.asarray(values)
    N = len(values)
    ks, lp, w = [], [], []
    for k in range(1, k_max + 1):
        c = int(np.sum(values >= k))
        if c < min_count:
            break
        p = c / N
        ks.append(k)
        lp.append(math.log(p))
        w.append(N * p / max(1.0 - p, 1.0 / N))
    if len(ks) < 2:
        raise SampleSizeError("too few populated tail points for a slope fit")
    ks_a, lp_a, w_a = np.array(ks, float), np.array(lp), np.array(w)
    X = np.column_stack([np.ones_like(ks_a), ks_a])
    A = X.T @ (w_a[:, None] * X)
    coef = np.linalg.solve(A, X.T @ (w_a * lp_a))
    resid = lp_a - X @ coef
    dof = max(len(ks) - 2, 1)
    scale = max(float(np.sum(w_a * resid**2)) / dof, 1.0)
    cov = np.linalg.inv(A) * scale
    return TailFit(float(coef[1]), float(math.sqrt(cov[1, 1])), ks_a, lp_a)


# --- dominating branching chain -------------------------------------------


@dataclass(frozen=True)
class DominatingSample:
    """Per-sample ``(Y_tau, Z_tau, tau)``; censored runs carry ``inf``."""

    Y: np.ndarray
    Z: np.ndarray
    tau: np.ndarray
    censored: np.ndarray
    W_mean: float
    moment: float
    feasible: bool


def dominating_feasible(d: int, beta: float, epsilon: float, eta: float, lam: float,
                        D0: float = 4.0 * SERIES_ABS_SUM) -> bool:
    return 12.0 * D0 * beta * d * math.exp(lam) < 1.0 - 2.0 * epsilon - eta


def dominating_process(d: int, beta: float, epsilon: float, eta: float, lam: float, samples: int,
                       seed: int, check_feasibility: bool = True, table: RuleTable | None = None,
                       y_cap: int = 2000, max_steps: int = 100_000) -> DominatingSample:
    """Simulate the dominating chain ``(Y_m, Z_m)`` until ``Y_m <= m``.

    Step ``m`` draws ``W ~ 1 + Gamma(2, rate 1 - eps)``, adds ``W`` to ``Z`` and
    ``U = sum_k k Po(2 D0 (3 beta d)^k W) + Vhat_0 + sum_k Vhat_k`` to ``Y``,
    with ``P(Vhat_0 = j) = D0 (2 beta d)^j`` and ``P(Vhat_k = j) = D0 (3 beta d)^j / d``
    for ``j >= 1``.  Runs whose ``Y`` passes ``y_cap`` are censored at ``inf``.
    """
    if not 0 < epsilon < 1:
        raise ParameterError("epsilon must lie in (0, 1)")
    if d < 1:
        raise ParameterError("d must be at least 1")
    D0 = table.D0 if table is not None else 4.0 * SERIES_ABS_SUM
    feasible = dominating_feasible(d, beta, epsilon, eta, lam, D0)
    if check_feasibility and not feasible:
        raise ParameterError(
            f"dominating chain infeasible: 12 D0 beta d e^lambda = "
            f"{12 * D0 * beta * d * math.exp(lam):.4g} >= 1 - 2 epsilon - eta = {1 - 2 * epsilon - eta:.4g}")
    x = beta * d
    q0, q1 = 2.0 * x, 3.0 * x
    hat0 = D0 * q0 / (1 - q0) if q0 < 1 else math.inf
    hatk = D0 * q1 / (1 - q1) / d if q1 < 1 else math.inf
    if hat0 > 1 or hatk > 1:
        raise ParameterError(f"offspring laws undefined at beta*d = {x:g} (mass above 1)")
    rng = substream(seed, TAG_REPLICA, 99)
    ks = np.arange(1, d + 1)
    rates = 2.0 * D0 * q1**ks

    Y = np.ones(samples)
    Z = np.zeros(samples)
    tau = np.zeros(samples, dtype=np.int64)
    censored = np.zeros(samples, dtype=bool)
    alive = np.arange(samples)
    W_sum, W_cnt = 0.0, 0
    m = 0
    while len(alive) and m < max_steps:
        m += 1
        a = len(alive)
        W = 1.0 + rng.gamma(2.0, 1.0 / (1.0 - epsilon), a)
        W_sum += W.sum()
        W_cnt += a
        U = (rng.poisson(rates[None, :] * W[:, None]) * ks[None, :]).sum(axis=1).astype(float)
        if beta > 0:
            hit0 = rng.random(a) < hat0
            U += np.where(hit0, rng.geometric(1 - q0, a), 0)
            hitk = rng.random((a, d)) < hatk
            U += np.where(hitk, rng.geometric(1 - q1, (a, d)), 0).sum(axis=1)
        Z[alive] += W
        Y[alive] += U
        done = Y[alive] <= m
        tau[alive[done]] = m
        over = ~done & (Y[alive] > y_cap)
        censored[alive[over]] = True
        alive = alive[~done & ~over]
    censored[alive] = True
    Y[censored] = math.inf
    Z[censored] = math.inf
    tau = tau.astype(float)
    tau[censored] = math.inf
    with np.errstate(over="ignore"):
        moment = float(np.mean(np.exp(lam * Y + eta * Z)))
    return DominatingSample(Y, Z, tau, censored, W_sum / max(W_cnt, 1), moment, feasible)


@dataclass(frozen=True)
class OrderRow:
    k: int
    p_explored: float
    p_dominating: float
    margin: float
    passed: bool


def stochastic_order_test(explored, dominating, ks) -> list[OrderRow]:
    """Check ``P(X > k) <= P(Y > k)`` up to a one-sided 95% two-sample margin at each ``k``."""
    x = np.asarray(explored, dtype=float)
    y = np.asarray(dominating, dtype=float)
    rows = []
    for k in ks:
        p1 = float(np.mean(x > k))
        p2 = float(np.mean(y > k))
        margin = 1.6448536269514722 * math.sqrt(p1 * (1 - p1) / len(x) + p2 * (1 - p2) / len(y))
        rows.append(OrderRow(int(k), p1, p2, margin, p1 <= p2 + margin))
    return rows
