"""Magnetization profiles, the cutoff location, exact small-system laws and distance estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .dynamics import ChainRunner, UpdateField, all_minus, all_plus
from .errors import GridTooShort, SampleSizeError, ShapeError, SizeError, UndefinedMetricError
from .fourier_rule import RuleTable
from .graphs import Graph
from .seeding import TAG_AUX, TAG_REPLICA, TAG_START, derive_seed, substream

Z95 = 1.959963984540054
N_CAP = 12


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    lo: float
    hi: float


def _rule_for(table: RuleTable | None) -> str:
    return "heat_bath" if table is None else "generalized"


def replica_field(graph: Graph, seed: int, r: int, table: RuleTable | None = None,
                  stream: int = 0) -> UpdateField:
    """Update field of replica ``r``; ``stream`` separates independent experiments on one seed."""
    return UpdateField(graph, derive_seed(seed, TAG_REPLICA, stream, r), table)


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) == 0:
        raise ShapeError("grid must be a nonempty 1-d sequence of times")
    if grid[0] < 0 or np.any(np.diff(grid) <= 0):
        raise ShapeError("grid must be increasing and start at a nonnegative time")
    return grid


def _run_grid(graph: Graph, beta: float, field: UpdateField, grid: np.ndarray, starts: np.ndarray,
              rule: str, callback):
    """Drive ``starts`` (chains x n) through ``field`` and call ``callback(i, spins)`` at each grid time."""
    spins = starts.copy()
    if grid[-1] > 0:
        runner = ChainRunner(graph, beta, field.window(0.0, float(grid[-1])), rule)
    else:
        runner = None
    for i, t in enumerate(grid):
        if runner is not None:
            runner.advance(spins, float(t))
        callback(i, spins)


# --- magnetization ---------------------------------------------------------


@dataclass(frozen=True)
class MagnetizationProfile:
    """Per-time, per-vertex estimates of ``m_t(v) = E X_t^+(v)``.

    ``sum_sq`` is the bias-corrected estimate of ``sum_v m_t(v)^2`` and
    ``sum_sq_se`` its delta-method standard error.
    """

    grid: np.ndarray
    m_hat: np.ndarray
    stderr: np.ndarray
    sum_sq: np.ndarray
    sum_sq_se: np.ndarray
    replicas: int
    beta: float
    seed: int
    antithetic: bool = True

    @property
    def n(self) -> int:
        return self.m_hat.shape[1]

    def at(self, t: float) -> np.ndarray:
        """Per-vertex magnetization, linearly interpolated between grid times."""
        if not self.grid[0] <= t <= self.grid[-1]:
            raise ShapeError(f"t={t} outside profile grid [{self.grid[0]}, {self.grid[-1]}]")
        return np.array([np.interp(t, self.grid, self.m_hat[:, v]) for v in range(self.n)])

    def sum_sq_at(self, t: float) -> float:
        return float(np.interp(t, self.grid, self.sum_sq))

    def rows(self):
        for i, t in enumerate(self.grid):
            for v in range(self.n):
                yield repr(float(t)), v, repr(float(self.m_hat[i, v])), repr(float(self.stderr[i, v]))


def magnetization_profile(graph: Graph, beta: float, grid, replicas: int, seed: int,
                          table: RuleTable | None = None, antithetic: bool = True
                          ) -> MagnetizationProfile:
    """Monte Carlo magnetization from the all-plus start.

    With ``antithetic`` the minus chain runs on the same updates and the
    replica contributes ``1{X^+ != X^-}``, whose mean is also ``m_t(v)`` by
    spin-flip symmetry but with smaller variance.
    """
    grid = _check_grid(grid)
    if replicas < 1:
        raise SampleSizeError("need at least one replica")
    n, T = graph.n, len(grid)
    rule = _rule_for(table)
    bits = np.zeros((replicas, T, (n + 7) // 8), dtype=np.uint8)
    total = np.zeros((T, n))
    total_sq = np.zeros((T, n))
    starts = np.stack([all_plus(n), all_minus(n)]) if antithetic else all_plus(n)[None, :]

    for r in range(replicas):
        field = replica_field(graph, seed, r, table)

        def record(i, spins, r=r):
            if antithetic:
                b = spins[0] != spins[1]
                x = b.astype(float)
            else:
                b = spins[0] > 0
                x = spins[0].astype(float)
            total[i] += x
            total_sq[i] += x * x
            bits[r, i] = np.packbits(b)

        _run_grid(graph, beta, field, grid, starts, rule, record)

    m_hat = total / replicas
    if replicas > 1:
        var = np.maximum(total_sq - replicas * m_hat**2, 0.0) / (replicas - 1)
    else:
        var = np.zeros_like(m_hat)
    se2 = var / replicas
    sum_sq = np.sum(m_hat**2 - se2, axis=1)
    sum_sq_se = np.zeros(T)
    if replicas > 1:
        for i in range(T):
            d = np.unpackbits(bits[:, i], axis=1, count=n).astype(float)
            if not antithetic:
                d = 2.0 * d - 1.0
            y = d @ m_hat[i]
            sum_sq_se[i] = 2.0 * np.std(y, ddof=1) / math.sqrt(replicas)
    return MagnetizationProfile(grid, m_hat, np.sqrt(se2), sum_sq, sum_sq_se, replicas,
                                float(beta), int(seed), antithetic)


@dataclass(frozen=True)
class TmEstimate:
    point: float
    lo: float
    hi: float


def _first_crossing(grid: np.ndarray, s: np.ndarray) -> float | None:
    below = np.flatnonzero(s <= 1.0)
    if not len(below):
        return None
    i = int(below[0])
    if i == 0:
        return float(grid[0])
    s0, s1 = s[i - 1], s[i]
    if s1 <= 0:
        frac = (s0 - 1.0) / (s0 - s1)
    else:
        # geometric decay between grid points: interpolate log S linearly
        frac = math.log(s0) / (math.log(s0) - math.log(s1))
    return float(grid[i - 1] + frac * (grid[i] - grid[i - 1]))


def locate_t_m(profile: MagnetizationProfile) -> TmEstimate:
    """First time the sum of squared magnetizations reaches 1, with a 95% band.

    Returns 0 when the sum is already at most 1 at time 0 (a single vertex).
    """
    grid, s, se = profile.grid, profile.sum_sq, profile.sum_sq_se
    if grid[0] == 0.0 and s[0] <= 1.0:
        return TmEstimate(0.0, 0.0, 0.0)
    point = _first_crossing(grid, s)
    if point is None:
        raise GridTooShort(float(s[0]), float(s[-1]))
    lo = _first_crossing(grid, s - Z95 * se)
    hi = _first_crossing(grid, s + Z95 * se)
    return TmEstimate(point, point if lo is None else min(lo, point),
                      float(grid[-1]) if hi is None else max(hi, point))


# --- exact small-system laws ----------------------------------------------


@dataclass(frozen=True)
class DistributionTable:
    """Law on ``{-1, 1}^n``; state ``i`` has spin ``+1`` at ``v`` iff bit ``v`` of ``i`` is set."""

    n: int
    probs: np.ndarray
    t: float | None = None
    x0: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.probs.shape != (1 << self.n,):
            raise ShapeError(f"need {1 << self.n} probabilities, got {self.probs.shape}")

    def marginal_means(self) -> np.ndarray:
        return state_spins(self.n).T.astype(float) @ self.probs

    def prob_of(self, spins) -> float:
        return float(self.probs[config_index(spins)])


def state_spins(n: int) -> np.ndarray:
    """``(2^n, n)`` array of all configurations in table order."""
    idx = np.arange(1 << n)[:, None]
    return np.where((idx >> np.arange(n)[None, :]) & 1, 1, -1).astype(np.int8)


def config_index(spins) -> int:
    s = np.asarray(spins)
    return int(np.sum((s > 0).astype(np.int64) << np.arange(len(s))))


def _check_size(graph: Graph, n_cap: int):
    if graph.n > n_cap:
        raise SizeError(f"n={graph.n} exceeds the exact-computation cap {n_cap}")


def _neighbor_sums(graph: Graph, states: np.ndarray) -> np.ndarray:
    S = np.zeros(states.shape, dtype=np.int64)
    for v in range(graph.n):
        nb = graph.neighbors(v)
        if len(nb):
            S[:, v] = states[:, nb].sum(axis=1)
    return S


def gibbs(graph: Graph, beta: float, n_cap: int = N_CAP) -> DistributionTable:
    """Ising measure ``pi(s) ~ exp(beta sum_{uv in E} s_u s_v)`` by enumeration."""
    _check_size(graph, n_cap)
    states = state_spins(graph.n).astype(np.int64)
    energy = np.zeros(len(states))
    for u, v in graph.edges():
        energy += states[:, u] * states[:, v]
    w = np.exp(beta * (energy - energy.max()))
    return DistributionTable(graph.n, w / w.sum())


def uniform_table(n: int) -> DistributionTable:
    return DistributionTable(n, np.full(1 << n, 1.0 / (1 << n)))


def exact_evolve(graph: Graph, beta: float, x0, t: float, n_cap: int = N_CAP,
                 tol: float = 1e-13) -> DistributionTable:
    """Law of the heat-bath chain at time ``t`` from ``x0``, by uniformization at rate ``n``.

    The jump chain picks a uniform vertex and resamples it; the Poisson
    series is cut once the remaining tail mass is below ``tol``.
    """
    _check_size(graph, n_cap)
    n = graph.n
    x0 = np.asarray(x0)
    if x0.shape != (n,):
        raise ShapeError(f"x0 has shape {x0.shape}, graph has n={n}")
    p = np.zeros(1 << n)
    p[config_index(x0)] = 1.0
    if t == 0 or n == 0:
        return DistributionTable(n, p, float(t), tuple(int(s) for s in x0))
    states = state_spins(n)
    fplus = 0.5 * (1.0 + np.tanh(beta * _neighbor_sums(graph, states)))
    idx = np.arange(1 << n)
    up = [idx | (1 << v) for v in range(n)]
    down = [idx & ~(1 << v) for v in range(n)]

    def step(q):
        out = np.zeros_like(q)
        for v in range(n):
            # resampling v only depends on the other coordinates: pool q over the v-pair
            pooled = q[up[v]] + q[down[v]]
            plus = idx == up[v]
            out += np.where(plus, pooled * fplus[:, v], pooled * (1.0 - fplus[:, v]))
        return out / n

    rate = n * float(t)
    k_max = int(stats.poisson.isf(tol, rate)) + 2
    weights = stats.poisson.pmf(np.arange(k_max + 1), rate)
    acc = weights[0] * p
    for k in range(1, k_max + 1):
        p = step(p)
        acc += weights[k] * p
    acc /= acc.sum()
    return DistributionTable(n, acc, float(t), tuple(int(s) for s in x0))


@dataclass(frozen=True)
class Distances:
    tv: float
    l2: float


def exact_distances(p: DistributionTable, q: DistributionTable) -> Distances:
    """Total variation and ``L^2(q)`` distance ``sqrt(sum p^2/q - 1)``."""
    if p.n != q.n:
        raise ShapeError("distributions live on different state spaces")
    tv = 0.5 * float(np.abs(p.probs - q.probs).sum())
    if np.any(q.probs <= 0):
        raise UndefinedMetricError("L2 distance needs q to charge every state")
    l2_sq = float(np.sum(p.probs**2 / q.probs)) - 1.0
    return Distances(tv, math.sqrt(max(l2_sq, 0.0)))


def exact_l2_squared(p: DistributionTable, q: DistributionTable) -> float:
    return exact_distances(p, q).l2 ** 2


# --- bounds on the distance to equilibrium -------------------------------


def _proportion(k: int, m: int) -> Estimate:
    p = k / m
    se = math.sqrt(p * (1 - p) / m)
    lo, hi = _wilson(k, m)
    return Estimate(p, se, lo, hi)


def _wilson(k: int, m: int, z: float = Z95) -> tuple[float, float]:
    p = k / m
    denom = 1 + z * z / m
    centre = (p + z * z / (2 * m)) / denom
    half = z * math.sqrt(p * (1 - p) / m + z * z / (4 * m * m)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def stationary_samples(graph: Graph, beta: float, count: int, seed: int,
                       table: RuleTable | None = None) -> np.ndarray:
    """``count`` independent perfect samples (rows)."""
    from .cftp import perfect_sample

    return np.stack([
        perfect_sample(graph, beta, derive_seed(seed, TAG_AUX, 7, i), table=table).spins
        for i in range(count)
    ])


def tv_lower_bound(graph: Graph, beta: float, t: float, profile: MagnetizationProfile,
                   replicas: int, seed: int, table: RuleTable | None = None,
                   n_cap: int = N_CAP) -> Estimate:
    """Distinguishing-statistic lower bound on ``d_TV(P_+(X_t in .), pi)``.

    With weights ``m = m_t`` from the profile, ``Y = sum m(v) X_t^+(v)`` and
    ``Y' = sum m(v) sigma(v)`` for ``sigma ~ pi``; the bound is
    ``P(Y >= 2/3 EY) - P(Y' >= 2/3 EY)`` with ``EY`` the profile's sum of
    squares.  ``Y'`` is exact when ``n <= n_cap`` and uses perfect samples
    otherwise.  Randomness is independent of the profile's.
    """
    if replicas < 1:
        raise SampleSizeError("need at least one replica")
    m = profile.at(t)
    thr = (2.0 / 3.0) * max(profile.sum_sq_at(t), 0.0)
    rule = _rule_for(table)
    start = all_plus(graph.n)[None, :]
    hits = 0
    for r in range(replicas):
        field = replica_field(graph, seed, r, table, stream=1)
        out = []
        _run_grid(graph, beta, field, np.array([t]), start, rule, lambda i, s: out.append(s[0].copy()))
        hits += float(m @ out[0]) >= thr
    p1 = hits / replicas
    var = p1 * (1 - p1) / replicas
    if graph.n <= n_cap:
        pi = gibbs(graph, beta, n_cap)
        y2 = state_spins(graph.n).astype(float) @ m
        p2 = float(pi.probs[y2 >= thr].sum())
    else:
        samples = stationary_samples(graph, beta, replicas, seed, table)
        p2 = float(np.mean(samples.astype(float) @ m >= thr))
        var += p2 * (1 - p2) / replicas
    val = max(0.0, p1 - p2)
    se = math.sqrt(var)
    return Estimate(val, se, max(0.0, p1 - p2 - Z95 * se), min(1.0, p1 - p2 + Z95 * se))


def tv_lower_curve(graph: Graph, beta: float, grid, profile: MagnetizationProfile, replicas: int,
                   seed: int, table: RuleTable | None = None, n_cap: int = N_CAP,
                   stationary: np.ndarray | None = None) -> "CurveEstimate":
    """:func:`tv_lower_bound` on a whole grid, one chain per replica and one stationary batch.

    Bands are normal-approximation 95% intervals clipped to ``[0, 1]``;
    ``stationary`` supplies precomputed stationary samples (rows) when
    ``n > n_cap``.
    """
    grid = _check_grid(np.atleast_1d(grid))
    if replicas < 1:
        raise SampleSizeError("need at least one replica")
    weights = np.stack([profile.at(float(t)) for t in grid])
    thr = (2.0 / 3.0) * np.maximum([profile.sum_sq_at(float(t)) for t in grid], 0.0)
    hits = np.zeros(len(grid))
    start = all_plus(graph.n)[None, :]
    for r in range(replicas):
        field = replica_field(graph, seed, r, table, stream=1)

        def record(i, spins):
            hits[i] += float(weights[i] @ spins[0]) >= thr[i]

        _run_grid(graph, beta, field, grid, start, _rule_for(table), record)
    p1 = hits / replicas
    var = p1 * (1 - p1) / replicas
    if graph.n <= n_cap:
        pi = gibbs(graph, beta, n_cap)
        y2 = state_spins(graph.n).astype(float) @ weights.T
        p2 = np.array([float(pi.probs[y2[:, i] >= thr[i]].sum()) for i in range(len(grid))])
    else:
        if stationary is None:
            stationary = stationary_samples(graph, beta, replicas, seed, table)
        y2 = stationary.astype(float) @ weights.T
        p2 = np.mean(y2 >= thr[None, :], axis=0)
        var = var + p2 * (1 - p2) / len(stationary)
    diff = p1 - p2
    se = np.sqrt(var)
    return CurveEstimate(grid, np.maximum(diff, 0.0), np.clip(diff - Z95 * se, 0.0, 1.0),
                         np.clip(diff + Z95 * se, 0.0, 1.0), replicas, se)


@dataclass(frozen=True)
class CurveEstimate:
    """A proportion estimated on a time grid, with Wilson 95% bands."""

    grid: np.ndarray
    value: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    replicas: int
    stderr: np.ndarray | None = None

    def crossing(self, level: float, band: str = "value") -> float | None:
        """First time the curve (or its ``"lo"``/``"hi"`` band) falls to ``level``."""
        values = {"value": self.value, "lo": self.lo, "hi": self.hi}[band]
        return _level_crossing(self.grid, values, level)

    def at(self, t: float) -> Estimate:
        i = int(np.argmin(np.abs(self.grid - t)))
        v = float(self.value[i])
        if self.stderr is not None:
            se = float(self.stderr[i])
        else:
            se = math.sqrt(v * (1 - v) / self.replicas)
        return Estimate(v, se, float(self.lo[i]), float(self.hi[i]))


def _level_crossing(grid: np.ndarray, values: np.ndarray, level: float) -> float | None:
    below = np.flatnonzero(values <= level)
    if not len(below):
        return None
    i = int(below[0])
    if i == 0:
        return float(grid[0])
    v0, v1 = values[i - 1], values[i]
    return float(grid[i - 1] + (v0 - level) / (v0 - v1) * (grid[i] - grid[i - 1]))


def _curve(grid, counts, replicas) -> CurveEstimate:
    bands = [_wilson(int(k), replicas) for k in counts]
    return CurveEstimate(grid, counts / replicas, np.array([b[0] for b in bands]),
                         np.array([b[1] for b in bands]), replicas)


def coupling_tv_upper(graph: Graph, beta: float, grid, replicas: int, seed: int,
                      table: RuleTable | None = None) -> CurveEstimate:
    """``P(X_t^+ != X_t^-)`` on a grid; bounds the worst-case distance by the coupling inequality."""
    grid = _check_grid(np.atleast_1d(grid))
    counts = np.zeros(len(grid))
    starts = np.stack([all_plus(graph.n), all_minus(graph.n)])
    for r in range(replicas):
        field = replica_field(graph, seed, r, table, stream=2)

        def record(i, spins):
            counts[i] += bool(np.any(spins[0] != spins[1]))

        _run_grid(graph, beta, field, grid, starts, _rule_for(table), record)
    return _curve(grid, counts, replicas)


def _start_config(graph: Graph, start, seed: int) -> np.ndarray:
    if isinstance(start, str):
        if start == "plus":
            return all_plus(graph.n)
        if start == "minus":
            return all_minus(graph.n)
        if start == "uniform":
            return np.where(substream(seed, TAG_START).random(graph.n) < 0.5, 1, -1).astype(np.int8)
        raise ShapeError(f"unknown start {start!r}")
    x = np.asarray(start)
    if x.shape != (graph.n,):
        raise ShapeError(f"start has shape {x.shape}, graph has n={graph.n}")
    return x.astype(np.int8)


def correlation_sum(graph: Graph, beta: float, t: float, v: int, replicas: int, seed: int,
                    start="plus", table: RuleTable | None = None) -> Estimate:
    """``sum_u Cov(X_t(u), X_t(v)) = Cov(M_t, X_t(v))`` with a delete-one jackknife interval."""
    if replicas < 2:
        raise SampleSizeError("need at least two replicas")
    M = np.zeros(replicas)
    X = np.zeros(replicas)
    for r in range(replicas):
        field = replica_field(graph, seed, r, table, stream=3)
        x0 = _start_config(graph, start, derive_seed(seed, TAG_START, r))
        out = []
        _run_grid(graph, beta, field, np.array([float(t)]), x0[None, :], _rule_for(table),
                  lambda i, s: out.append(s[0].copy()))
        M[r] = out[0].sum()
        X[r] = out[0][v]
    R = replicas
    value = float(np.cov(M, X, ddof=1)[0, 1])
    sM, sX, sMX = M.sum(), X.sum(), (M * X).sum()
    # leave-one-out covariances in closed form
    k = R - 1
    mM, mX = (sM - M) / k, (sX - X) / k
    loo = ((sMX - M * X) - k * mM * mX) / (k - 1) if k > 1 else np.zeros(R)
    jk_mean = loo.mean()
    se = math.sqrt((R - 1) / R * np.sum((loo - jk_mean) ** 2))
    return Estimate(value, se, value - Z95 * se, value + Z95 * se)


# --- red-set exponential moment --------------------------------------------


def _as_mask(s) -> int:
    mask = 0
    for v in s:
        mask |= 1 << int(v)
    return mask


def mp_exponential_moment(red_set_samples: Sequence[Iterable[int]]) -> Estimate:
    """U-statistic for ``E[2^{|R cap R'|}] - 1`` over unordered pairs of i.i.d. sets.

    Identical sets are pooled so the cost is quadratic in the number of
    distinct sets; the standard error is the first-order Hoeffding term.
    """
    N = len(red_set_samples)
    if N < 2:
        raise SampleSizeError("need at least two red-set samples")
    counts: dict[int, int] = {}
    for s in red_set_samples:
        key = _as_mask(s)
        counts[key] = counts.get(key, 0) + 1
    keys = list(counts)
    c = np.array([counts[k] for k in keys], dtype=float)
    K = len(keys)
    h = np.empty((K, K))
    for i, a in enumerate(keys):
        for j in range(i, K):
            val = 2.0 ** (a & keys[j]).bit_count() - 1.0
            h[i, j] = h[j, i] = val
    diag = np.diag(h)
    pair_sum = 0.5 * (c @ h @ c - np.sum(c * diag))
    U = pair_sum / (N * (N - 1) / 2)
    h1 = (h @ c - diag) / (N - 1)
    zeta1 = float(np.sum(c * (h1 - U) ** 2) / N)
    se = math.sqrt(4.0 * zeta1 / N)
    return Estimate(float(U), se, float(U) - Z95 * se, float(U) + Z95 * se)


def l2_hypercube_beta0(n: int, t: float) -> float:
    """Squared ``L^2`` distance to uniform of the free chain from a fixed start."""
    return (1.0 + math.exp(-2.0 * t)) ** n - 1.0
