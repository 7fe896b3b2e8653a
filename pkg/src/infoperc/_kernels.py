"""Compiled inner loops for forward evolution."""

from __future__ import annotations

import numpy as np
from numba import njit

HEAT_BATH = 0
METROPOLIS = 1
GENERALIZED = 2


@njit(cache=True, nogil=True)
def evolve_chains(spins, indptr, indices, rule, d_max, theta, plus_thr, flip_acc, sign,
                  ev_v, ev_u, sub_ptr, sub_idx, i0, i1):
    """Apply events ``i0..i1-1`` to every row of ``spins`` (chains x n), in place."""
    n_chains = spins.shape[0]
    for e in range(i0, i1):
        v = ev_v[e]
        u = ev_u[e]
        a, b = indptr[v], indptr[v + 1]
        if rule == GENERALIZED:
            s0 = sub_ptr[e]
            k = sub_ptr[e + 1] - s0
            sgn = sign[b - a, k]
            for c in range(n_chains):
                if k == 0:
                    phi = 0.5
                elif k == 1:
                    phi = 0.5 + 0.5 * spins[c, indices[a + sub_idx[s0]]]
                else:
                    tot = 0
                    prod = 1
                    for j in range(k):
                        s = spins[c, indices[a + sub_idx[s0 + j]]]
                        tot += s
                        prod *= s
                    phi = 0.5 + (tot + sgn * prod) / (2.0 * (k + 1))
                spins[c, v] = 1 if u < phi else -1
        else:
            for c in range(n_chains):
                tot = 0
                for j in range(a, b):
                    tot += spins[c, indices[j]]
                if rule == HEAT_BATH:
                    if u < theta:
                        spins[c, v] = 1 if u < 0.5 * theta else -1
                    else:
                        spins[c, v] = 1 if u < plus_thr[tot + d_max] else -1
                else:
                    cur = spins[c, v]
                    if u < flip_acc[(cur + 1) // 2, tot + d_max]:
                        spins[c, v] = -cur


@njit(cache=True, nogil=True)
def count_coalesced(plus, minus):
    """Per-vertex disagreement indicator between two chains, and its total."""
    n = plus.shape[0]
    out = np.zeros(n, dtype=np.int8)
    tot = 0
    for v in range(n):
        if plus[v] != minus[v]:
            out[v] = 1
            tot += 1
    return out, tot
