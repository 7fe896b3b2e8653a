"""Perfect sampling by monotone coupling from the past, and start-state comparisons.

The plus and minus chains are started at ``-T`` for ``T = 1, 2, 4, ...`` and
run to time 0 on the window ``(-T, 0]`` of one :class:`UpdateField`.  Because
the field is keyed by unit block, a deeper start reuses exactly the updates
already seen on ``(-T/2, 0]``; this reuse is what makes the output exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .dynamics import ChainRunner, UpdateField, UpdateSequence, all_minus, all_plus
from .errors import NoCoalescence, UnsupportedRuleError
from .fourier_rule import RuleTable
from .graphs import Graph
from .observables import CurveEstimate, Estimate, Z95, _check_grid, _curve, _run_grid, replica_field
from .seeding import TAG_AUX, TAG_START, derive_seed, substream

MAX_DEPTH = 2**20


@dataclass(frozen=True)
class CFTPSample:
    spins: np.ndarray
    depth: int


def level_windows(field: UpdateField, max_depth: int = MAX_DEPTH) -> Iterator[UpdateSequence]:
    """Update windows ``(-T, 0]`` for ``T = 1, 2, 4, ...``, all cut from one field."""
    T = 1
    while T <= max_depth:
        yield field.window(-float(T), 0.0)
        T *= 2


def fresh_level_windows(graph: Graph, seed: int, max_depth: int = MAX_DEPTH) -> Iterator[UpdateSequence]:
    """Broken schedule: every depth draws brand-new updates (negative control)."""
    T, level = 1, 0
    while T <= max_depth:
        yield UpdateField(graph, derive_seed(seed, TAG_AUX, 11, level)).window(-float(T), 0.0)
        T *= 2
        level += 1


def start_keyed_level_windows(field: UpdateField, max_depth: int = MAX_DEPTH) -> Iterator[UpdateSequence]:
    """Broken schedule: the level started at ``-T`` reads the field's ``(0, T]`` shifted back by ``T``.

    The updates seen on a fixed interval then change from one depth to the
    next (negative control).
    """
    T = 1
    while T <= max_depth:
        w = field.window(0.0, float(T))
        yield UpdateSequence(w.vertex, w.time - T, w.u, -float(T), 0.0, w.seed, w.sub_ptr, w.sub_idx, w.table)
        T *= 2


def _run_levels(graph: Graph, beta: float, levels: Iterable[UpdateSequence], rule: str,
                max_depth: int) -> CFTPSample:
    for seq in levels:
        spins = np.stack([all_plus(graph.n), all_minus(graph.n)])
        ChainRunner(graph, beta, seq, rule).advance(spins)
        if np.array_equal(spins[0], spins[1]):
            return CFTPSample(spins[0].copy(), int(round(-seq.t0)))
    raise NoCoalescence(f"plus and minus chains did not coalesce from depth {max_depth}",
                        partial=max_depth)


def perfect_sample_from_field(graph: Graph, beta: float, field: UpdateField,
                              max_depth: int = MAX_DEPTH) -> CFTPSample:
    """Exact Gibbs sample at time 0 using the field's blocks in negative time."""
    rule = "heat_bath" if field.table is None else "generalized"
    return _run_levels(graph, beta, level_windows(field, max_depth), rule, max_depth)


def perfect_sample(graph: Graph, beta: float, seed: int, rule: str = "heat_bath",
                   table: RuleTable | None = None, max_depth: int = MAX_DEPTH) -> CFTPSample:
    """One exact draw from the Ising measure, with the coalescence depth."""
    if rule == "metropolis":
        raise UnsupportedRuleError("coupling from the past needs a monotone rule")
    if (rule == "generalized") != (table is not None):
        raise UnsupportedRuleError("the generalized rule needs a rule table (and only it does)")
    return perfect_sample_from_field(graph, beta, UpdateField(graph, seed, table), max_depth)


def nonreusing_sample(graph: Graph, beta: float, seed: int, max_depth: int = MAX_DEPTH) -> CFTPSample:
    """Sampler on the fresh-randomness schedule; not exact in general."""
    return _run_levels(graph, beta, fresh_level_windows(graph, seed, max_depth), "heat_bath", max_depth)


def start_keyed_sample(graph: Graph, beta: float, seed: int, max_depth: int = MAX_DEPTH) -> CFTPSample:
    """Sampler on the start-keyed schedule; not exact in general."""
    return _run_levels(graph, beta, start_keyed_level_windows(UpdateField(graph, seed), max_depth),
                       "heat_bath", max_depth)


MUTANTS = {"fresh": nonreusing_sample, "start_keyed": start_keyed_sample}


def sample_many(graph: Graph, beta: float, count: int, seed: int, mutant: str | None = None,
                table: RuleTable | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``count`` independent samples as ``(spins[count, n], depths[count])``.

    ``mutant`` selects one of the broken negative-control samplers.
    """
    spins = np.empty((count, graph.n), dtype=np.int8)
    depths = np.empty(count, dtype=np.int64)
    for i in range(count):
        s = derive_seed(seed, TAG_AUX, 13, i)
        if mutant is None:
            out = perfect_sample(graph, beta, s, "generalized" if table is not None else "heat_bath", table)
        else:
            out = MUTANTS[mutant](graph, beta, s)
        spins[i] = out.spins
        depths[i] = out.depth
    return spins, depths


@dataclass(frozen=True)
class AnnealedCurve:
    """``P(X_t != Y_t)`` for a uniform start ``X`` against a stationary ``Y`` on shared updates."""

    curve: CurveEstimate
    per_vertex: np.ndarray
    depths: np.ndarray


def uniform_start(n: int, seed: int) -> np.ndarray:
    return np.where(substream(seed, TAG_START).random(n) < 0.5, 1, -1).astype(np.int8)


def annealed_compare(graph: Graph, beta: float, grid, replicas: int, seed: int,
                     table: RuleTable | None = None) -> AnnealedCurve:
    """Uniform-start chain against a perfect sample, both driven forward by one field.

    ``Y_0`` is built by coupling from the past on the field's negative-time
    blocks; both chains then use the blocks on ``(0, t]``.
    """
    grid = _check_grid(np.atleast_1d(grid))
    rule = "heat_bath" if table is None else "generalized"
    counts = np.zeros(len(grid))
    per_vertex = np.zeros((len(grid), graph.n))
    depths = np.zeros(replicas, dtype=np.int64)
    for r in range(replicas):
        field = replica_field(graph, seed, r, table, stream=4)
        y0 = perfect_sample_from_field(graph, beta, field)
        depths[r] = y0.depth
        x0 = uniform_start(graph.n, field.seed)

        def record(i, spins):
            diff = spins[0] != spins[1]
            counts[i] += bool(diff.any())
            per_vertex[i] += diff

        _run_grid(graph, beta, field, grid, np.stack([x0, y0.spins]), rule, record)
    return AnnealedCurve(_curve(grid, counts, replicas), per_vertex / replicas, depths)


@dataclass(frozen=True)
class OverlapCurve:
    grid: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    replicas: int

    def at(self, t: float) -> Estimate:
        i = int(np.argmin(np.abs(self.grid - t)))
        m, se = float(self.mean[i]), float(self.stderr[i])
        return Estimate(m, se, m - Z95 * se, m + Z95 * se)


def quenched_statistic(graph: Graph, beta: float, grid, x0, replicas: int, seed: int,
                       table: RuleTable | None = None) -> OverlapCurve:
    """Mean and standard error of the overlap ``sum_u x0(u) X_t(u)`` from the fixed start ``x0``."""
    grid = _check_grid(np.atleast_1d(grid))
    x0 = np.asarray(x0).astype(np.int8)
    rule = "heat_bath" if table is None else "generalized"
    s1 = np.zeros(len(grid))
    s2 = np.zeros(len(grid))
    w = x0.astype(float)
    for r in range(replicas):
        field = replica_field(graph, seed, r, table, stream=5)

        def record(i, spins):
            y = float(spins[0] @ w)
            s1[i] += y
            s2[i] += y * y

        _run_grid(graph, beta, field, grid, x0[None, :], rule, record)
    mean = s1 / replicas
    if replicas > 1:
        var = np.maximum(s2 - replicas * mean**2, 0.0) / (replicas - 1)
    else:
        var = np.zeros_like(mean)
    return OverlapCurve(grid, mean, np.sqrt(var / replicas), replicas)


def quenched_threshold(n: int, w: float = 2.0) -> float:
    """Overlap level ``sqrt(n) e^w / 2`` separating a start-correlated chain from equilibrium."""
    return 0.5 * math.sqrt(n) * math.exp(w)
