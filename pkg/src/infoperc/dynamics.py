"""Continuous-time Glauber dynamics driven by an explicit update sequence.

Randomness lives entirely in the update sequence: per-vertex rate-1 Poisson
clocks, one uniform per event, and (for the generalized rule) the exposed
neighbor subset.  Sequences are cut from an :class:`UpdateField`, which draws
each unit time block ``(k, k+1]`` from its own keyed substream.  Windows that
overlap therefore share their events exactly, which is what coupling from the
past, lazy exploration and annealed histories rely on.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np

from . import _kernels
from .errors import ConfigurationError, ParameterError, ShapeError, UnsupportedRuleError
from .fourier_rule import RuleTable
from .graphs import Graph
from .seeding import TAG_BLOCK, TAG_TERMINAL, keyed_stream

RULES = ("heat_bath", "metropolis", "generalized")
MONOTONE_RULES = ("heat_bath", "generalized")

_EMPTY_I = np.zeros(0, dtype=np.int64)
_EMPTY_F = np.zeros(0, dtype=np.float64)


def oblivious_threshold(beta: float, d: int) -> float:
    """``theta = 1 - tanh(beta d)``: below it an update ignores the neighbors."""
    return 1.0 - math.tanh(beta * d)


@dataclass(frozen=True)
class UpdateEvent:
    vertex: int
    time: float
    u: float
    subset: tuple[int, ...] | None = None


@dataclass(frozen=True, eq=False)
class UpdateSequence:
    """Time-sorted events on ``(t0, t1]``.

    ``subset`` data are stored CSR-style (``sub_ptr``/``sub_idx``) and hold
    local neighbor indices; both are ``None`` for plain sequences.
    """

    vertex: np.ndarray
    time: np.ndarray
    u: np.ndarray
    t0: float
    t1: float
    seed: int
    sub_ptr: np.ndarray | None = None
    sub_idx: np.ndarray | None = None
    table: RuleTable | None = None

    @property
    def mode(self) -> str:
        return "plain" if self.sub_ptr is None else "generalized"

    def __len__(self) -> int:
        return len(self.time)

    def event(self, i: int) -> UpdateEvent:
        subset = None
        if self.sub_ptr is not None:
            subset = tuple(int(a) for a in self.sub_idx[self.sub_ptr[i]:self.sub_ptr[i + 1]])
        return UpdateEvent(int(self.vertex[i]), float(self.time[i]), float(self.u[i]), subset)

    def __iter__(self) -> Iterator[UpdateEvent]:
        for i in range(len(self)):
            yield self.event(i)

    def subset(self, i: int) -> np.ndarray:
        if self.sub_ptr is None:
            raise ConfigurationError("plain update sequence carries no subsets")
        return self.sub_idx[self.sub_ptr[i]:self.sub_ptr[i + 1]]

    @cached_property
    def by_vertex(self) -> tuple[np.ndarray, np.ndarray]:
        """``(ptr, order)``: events of ``v`` are ``order[ptr[v]:ptr[v+1]]``, time-sorted."""
        n = int(self.vertex.max()) + 1 if len(self) else 0
        order = np.argsort(self.vertex, kind="stable")
        ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.vertex, minlength=n), out=ptr[1:])
        return ptr, order

    def vertex_times(self, v: int) -> np.ndarray:
        ptr, order = self.by_vertex
        if v + 1 >= len(ptr):
            return _EMPTY_F
        return self.time[order[ptr[v]:ptr[v + 1]]]

    def slice_time(self, lo: float, hi: float) -> "UpdateSequence":
        """Sub-sequence of events in ``(lo, hi]``."""
        i0 = int(np.searchsorted(self.time, lo, side="right"))
        i1 = int(np.searchsorted(self.time, hi, side="right"))
        sub_ptr = sub_idx = None
        if self.sub_ptr is not None:
            sub_idx = self.sub_idx[self.sub_ptr[i0]:self.sub_ptr[i1]]
            sub_ptr = self.sub_ptr[i0:i1 + 1] - self.sub_ptr[i0]
        return UpdateSequence(
            self.vertex[i0:i1], self.time[i0:i1], self.u[i0:i1],
            max(lo, self.t0), min(hi, self.t1), self.seed, sub_ptr, sub_idx, self.table,
        )

    # -- binary record stream --------------------------------------------

    _HEADER = struct.Struct("<4sddQB")
    _RECORD = struct.Struct("<IddB")

    def to_bytes(self) -> bytes:
        """Header, then one record per event: u32 vertex, f64 time, f64 u, u8 k, k x u8."""
        out = [self._HEADER.pack(b"UPDS", self.t0, self.t1, self.seed & (2**64 - 1),
                                 0 if self.sub_ptr is None else 1)]
        for i in range(len(self)):
            sub = b""
            k = 0
            if self.sub_ptr is not None:
                s = self.subset(i)
                k = len(s)
                sub = bytes(int(a) for a in s)
            out.append(self._RECORD.pack(int(self.vertex[i]), float(self.time[i]), float(self.u[i]), k))
            out.append(sub)
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "UpdateSequence":
        magic, t0, t1, seed, generalized = cls._HEADER.unpack_from(data, 0)
        if magic != b"UPDS":
            raise ShapeError("not an update-sequence stream")
        off = cls._HEADER.size
        vs, ts, us, ptr, idx = [], [], [], [0], []
        while off < len(data):
            v, t, u, k = cls._RECORD.unpack_from(data, off)
            off += cls._RECORD.size
            vs.append(v)
            ts.append(t)
            us.append(u)
            idx.extend(data[off:off + k])
            off += k
            ptr.append(len(idx))
        sub_ptr = sub_idx = None
        if generalized:
            sub_ptr = np.array(ptr, dtype=np.int64)
            sub_idx = np.array(idx, dtype=np.int64)
        return cls(np.array(vs, dtype=np.int64), np.array(ts, dtype=np.float64),
                   np.array(us, dtype=np.float64), t0, t1, seed, sub_ptr, sub_idx)


@dataclass(frozen=True)
class _Block:
    vertex: np.ndarray
    time: np.ndarray
    u: np.ndarray
    sub_ptr: np.ndarray | None
    sub_idx: np.ndarray | None


def _draw_subsets(table: RuleTable, degrees: np.ndarray, rng: np.random.Generator):
    m = len(degrees)
    sizes = np.zeros(m, dtype=np.int64)
    if m == 0:
        return np.zeros(1, dtype=np.int64), _EMPTY_I
    x = rng.random(m)
    for r in np.unique(degrees):
        if r == 0:
            continue
        cdf = np.cumsum(table.size_probs(int(r)))
        cdf[-1] = max(cdf[-1], 1.0)
        sel = degrees == r
        sizes[sel] = np.searchsorted(cdf, x[sel], side="right")
    ptr = np.zeros(m + 1, dtype=np.int64)
    np.cumsum(sizes, out=ptr[1:])
    idx = np.empty(ptr[-1], dtype=np.int64)
    hit = np.flatnonzero(sizes)
    if len(hit):
        width = int(degrees[hit].max())
        keys = rng.random((len(hit), width))
        keys[np.arange(width)[None, :] >= degrees[hit][:, None]] = np.inf
        ranked = np.argsort(keys, axis=1)
        # keep the first k ranks of each row, then sort them within the row
        take = np.arange(width)[None, :] < sizes[hit][:, None]
        chosen = np.where(take, ranked, width)
        chosen.sort(axis=1)
        idx[:] = chosen[take]
    return ptr, idx


class UpdateField:
    """Lazily materialized update process on the whole time line.

    Block ``k`` covers ``(k, k+1]`` and is a pure function of
    ``(seed, k, graph, rule table)``; negative ``k`` extends into the past.
    """

    def __init__(self, graph: Graph, seed: int, table: RuleTable | None = None):
        if table is not None:
            missing = [int(r) for r in np.unique(graph.degrees) if not table.covers(int(r))]
            if missing:
                raise ConfigurationError(
                    f"rule table (d={table.d}) does not cover degrees {missing}", key="rule_table"
                )
        self.graph = graph
        self.seed = int(seed)
        self.table = table
        self._blocks: dict[int, _Block] = {}
        self._ids = np.arange(graph.n, dtype=np.int64)

    @property
    def mode(self) -> str:
        return "plain" if self.table is None else "generalized"

    def block(self, k: int) -> _Block:
        blk = self._blocks.get(k)
        if blk is None:
            blk = self._make_block(k)
            self._blocks[k] = blk
        return blk

    def _make_block(self, k: int) -> _Block:
        rng = keyed_stream(self.seed, TAG_BLOCK, k)
        counts = rng.poisson(1.0, self.graph.n)
        vertex = np.repeat(self._ids, counts)
        # 1 - U lies in (0, 1], so times land in (k, k+1]
        time = (k + 1.0) - rng.random(len(vertex))
        order = np.argsort(time, kind="stable")
        vertex, time = vertex[order], time[order]
        while len(time) > 1 and not np.all(time[1:] != time[:-1]):
            dup = np.flatnonzero(time[1:] == time[:-1]) + 1
            time[dup] = (k + 1.0) - rng.random(len(dup))
            order = np.argsort(time, kind="stable")
            vertex, time = vertex[order], time[order]
        u = rng.random(len(vertex))
        sub_ptr = sub_idx = None
        if self.table is not None:
            sub_ptr, sub_idx = _draw_subsets(self.table, self.graph.degrees[vertex], rng)
        return _Block(vertex, time, u, sub_ptr, sub_idx)

    def window(self, t0: float, t1: float) -> UpdateSequence:
        if not t0 < t1:
            raise ParameterError(f"need t0 < t1, got ({t0}, {t1})")
        k0 = math.floor(t0)
        k1 = math.ceil(t1) - 1
        blocks = [self.block(k) for k in range(k0, k1 + 1)]
        if len(blocks) == 1 and self.table is None:
            b = blocks[0]
            keep = slice(int(np.searchsorted(b.time, t0, side="right")),
                         int(np.searchsorted(b.time, t1, side="right")))
            return UpdateSequence(b.vertex[keep], b.time[keep], b.u[keep], float(t0), float(t1), self.seed)
        vertex = np.concatenate([b.vertex for b in blocks]) if blocks else _EMPTY_I
        time = np.concatenate([b.time for b in blocks]) if blocks else _EMPTY_F
        u = np.concatenate([b.u for b in blocks]) if blocks else _EMPTY_F
        keep = slice(int(np.searchsorted(time, t0, side="right")),
                     int(np.searchsorted(time, t1, side="right")))
        sub_ptr = sub_idx = None
        if self.table is not None:
            offsets = np.cumsum([0] + [len(b.sub_idx) for b in blocks])
            gptr = np.concatenate([blocks[0].sub_ptr[:1]] + [b.sub_ptr[1:] + off for b, off in zip(blocks, offsets)])
            flat = np.concatenate([b.sub_idx for b in blocks])
            sub_ptr = gptr[keep.start:keep.stop + 1] - gptr[keep.start]
            sub_idx = flat[gptr[keep.start]:gptr[keep.stop]]
        return UpdateSequence(vertex[keep], time[keep], u[keep], float(t0), float(t1),
                              self.seed, sub_ptr, sub_idx, self.table)

    def terminal(self, t_star: float) -> UpdateSequence:
        """One extra update per vertex, all stamped at exactly ``t_star``."""
        bits = struct.unpack("<q", struct.pack("<d", float(t_star)))[0]
        rng = keyed_stream(self.seed, TAG_TERMINAL, bits)
        n = self.graph.n
        vertex = np.arange(n, dtype=np.int64)
        u = rng.random(n)
        sub_ptr = sub_idx = None
        if self.table is not None:
            sub_ptr, sub_idx = _draw_subsets(self.table, self.graph.degrees, rng)
        return UpdateSequence(vertex, np.full(n, float(t_star)), u, float(t_star), float(t_star),
                              self.seed, sub_ptr, sub_idx, self.table)


def sample_updates(graph: Graph, t0: float, t1: float, seed: int,
                   mode: str | RuleTable = "plain") -> UpdateSequence:
    """Update sequence on ``(t0, t1]``; pass a :class:`RuleTable` for generalized mode."""
    table = None
    if isinstance(mode, RuleTable):
        table = mode
    elif mode == "generalized":
        raise ConfigurationError("generalized mode needs a RuleTable", key="rule_table")
    elif mode != "plain":
        raise ConfigurationError(f"unknown update mode {mode!r}", key="mode")
    return UpdateField(graph, seed, table).window(t0, t1)


# --- single-site rules ----------------------------------------------------


def update_prob(rule: str, beta: float, current_spin: int, neighbor_sum: int) -> float:
    """Heat-bath: probability the new spin is plus.  Metropolis: flip probability."""
    if rule == "heat_bath":
        return 0.5 * (1.0 + math.tanh(beta * neighbor_sum))
    if rule == "metropolis":
        return min(math.exp(-2.0 * beta * current_spin * neighbor_sum), 1.0)
    raise UnsupportedRuleError(f"update_prob supports heat_bath and metropolis, not {rule!r}")


@dataclass(frozen=True)
class _RuleArrays:
    code: int
    theta: float
    plus_thr: np.ndarray
    flip_acc: np.ndarray
    sign: np.ndarray


_RULE_CACHE: dict = {}


def _rule_arrays(graph: Graph, beta: float, rule: str, table: RuleTable | None) -> _RuleArrays:
    key = (graph, float(beta), rule, id(table))
    hit = _RULE_CACHE.get(key)
    if hit is not None and hit[0] is table:
        return hit[1]
    if len(_RULE_CACHE) > 64:
        _RULE_CACHE.clear()
    arrays = _build_rule_arrays(graph, beta, rule, table)
    # the table is stored alongside so its id cannot be recycled while cached
    _RULE_CACHE[key] = (table, arrays)
    return arrays


def _build_rule_arrays(graph: Graph, beta: float, rule: str, table: RuleTable | None) -> _RuleArrays:
    d = graph.d_max
    S = np.arange(-d, d + 1)
    theta = oblivious_threshold(beta, d)
    # plus iff u < theta/2 (oblivious) or theta <= u < theta + (tanh(beta d) + tanh(beta S))/2
    plus_thr = theta + 0.5 * (np.tanh(beta * d) + np.tanh(beta * S))
    flip_acc = np.minimum(np.exp(-2.0 * beta * np.outer([-1, 1], S)), 1.0)
    if rule == "heat_bath":
        code = _kernels.HEAT_BATH
    elif rule == "metropolis":
        code = _kernels.METROPOLIS
    elif rule == "generalized":
        code = _kernels.GENERALIZED
        if table is None:
            raise ConfigurationError("generalized rule needs a generalized update sequence")
        if abs(table.beta - beta) > 1e-15:
            raise ConfigurationError(
                f"rule table built at beta={table.beta}, dynamics run at beta={beta}", key="beta")
    else:
        raise UnsupportedRuleError(f"unknown rule {rule!r}")
    sign = table.sign.astype(np.int64) if table is not None else np.ones((1, 1), dtype=np.int64)
    return _RuleArrays(code, theta, plus_thr, flip_acc, sign)


def _as_spins(x, n: int) -> np.ndarray:
    x = np.asarray(x)
    if x.shape != (n,):
        raise ShapeError(f"configuration has shape {x.shape}, graph has n={n}")
    if not np.all((x == 1) | (x == -1)):
        raise ShapeError("spins must be +1 or -1")
    return x.astype(np.int8)


class ChainRunner:
    """Advances a stack of chains through one update sequence, in time order."""

    def __init__(self, graph: Graph, beta: float, updates: UpdateSequence, rule: str = "heat_bath"):
        if rule == "generalized" and updates.sub_ptr is None:
            raise ConfigurationError("generalized rule needs subsets in the update sequence")
        self.graph = graph
        self.updates = updates
        self.arrays = _rule_arrays(graph, beta, rule, updates.table)
        self._sub_ptr = updates.sub_ptr if updates.sub_ptr is not None else np.zeros(1, dtype=np.int64)
        self._sub_idx = updates.sub_idx if updates.sub_idx is not None else _EMPTY_I
        self.pos = 0

    def advance(self, spins: np.ndarray, until: float | None = None) -> np.ndarray:
        """Apply pending events with time ``<= until`` (all if ``None``) to ``spins`` in place."""
        stop = len(self.updates) if until is None else int(
            np.searchsorted(self.updates.time, until, side="right"))
        if stop > self.pos:
            a = self.arrays
            _kernels.evolve_chains(
                spins, self.graph.indptr, self.graph.indices, a.code, self.graph.d_max,
                a.theta, a.plus_thr, a.flip_acc, a.sign, self.updates.vertex, self.updates.u,
                self._sub_ptr, self._sub_idx, self.pos, stop,
            )
            self.pos = stop
        return spins


def evolve(graph: Graph, beta: float, x0, updates: UpdateSequence, rule: str = "heat_bath",
           until: float | None = None) -> np.ndarray:
    """Configuration at ``updates.t1`` (or ``until``) started from ``x0`` at ``updates.t0``."""
    spins = _as_spins(x0, graph.n)[None, :].copy()
    ChainRunner(graph, beta, updates, rule).advance(spins, until)
    return spins[0]


def grand_coupling_evolve(graph: Graph, beta: float, starts: Sequence, updates: UpdateSequence,
                          rule: str = "heat_bath", until: float | None = None) -> list[np.ndarray]:
    if rule not in MONOTONE_RULES:
        raise UnsupportedRuleError(f"rule {rule!r} is not monotone; grand coupling needs {MONOTONE_RULES}")
    if not len(starts):
        return []
    spins = np.stack([_as_spins(x, graph.n) for x in starts])
    ChainRunner(graph, beta, updates, rule).advance(spins, until)
    return [row.copy() for row in spins]


def concat(first: UpdateSequence, second: UpdateSequence) -> UpdateSequence:
    """Events of ``first`` followed by those of ``second`` (which must not start earlier)."""
    if len(first) and len(second) and second.time[0] < first.time[-1]:
        raise ParameterError("sequences overlap in time")
    sub_ptr = sub_idx = None
    if (first.sub_ptr is None) != (second.sub_ptr is None):
        raise ConfigurationError("cannot join plain and generalized sequences")
    if first.sub_ptr is not None:
        sub_ptr = np.concatenate([first.sub_ptr, second.sub_ptr[1:] + first.sub_ptr[-1]])
        sub_idx = np.concatenate([first.sub_idx, second.sub_idx])
    return UpdateSequence(
        np.concatenate([first.vertex, second.vertex]), np.concatenate([first.time, second.time]),
        np.concatenate([first.u, second.u]), first.t0, max(first.t1, second.t1), first.seed,
        sub_ptr, sub_idx, first.table if first.table is not None else second.table,
    )


def all_plus(n: int) -> np.ndarray:
    return np.ones(n, dtype=np.int8)


def all_minus(n: int) -> np.ndarray:
    return -np.ones(n, dtype=np.int8)
