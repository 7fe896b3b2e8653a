"""Generalized heat-bath rule from the multilinear expansion of ``f(x) = (1 + tanh x)/2``.

A vertex of degree ``r`` reads a random subset ``A`` of its neighbors, with
``P(A) = p[|A|, r]``, and turns plus with probability ``phi(sigma_A)``.  The
table is built so that averaging ``phi`` over ``A`` reproduces the heat-bath
probability ``f(beta * sum(sigma))`` for every neighborhood, while ``A`` is
empty with probability close to one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb

import numpy as np

from .errors import FourierInfeasibleError, ParameterError, ShapeError

L_MAX_CAP = 60

# sum_l |B_l| = (1 + tan 1)/2: the tanh coefficients alternate in sign and
# their absolute values are the tan coefficients.
SERIES_ABS_SUM = (1.0 + math.tan(1.0)) / 2.0


@lru_cache(maxsize=None)
def _tanh_coeffs_exact(l_max: int) -> tuple[Fraction, ...]:
    # tanh' = 1 - tanh^2  =>  (k+1) a_{k+1} = [k == 0] - sum_{i+j=k} a_i a_j
    a = [Fraction(0)] * (l_max + 1)
    for k in range(l_max):
        conv = sum((a[i] * a[k - i] for i in range(k + 1)), Fraction(0))
        a[k + 1] = ((1 if k == 0 else 0) - conv) / (k + 1)
    return tuple(a)


def series_coeffs_exact(l_max: int) -> list[Fraction]:
    if l_max < 1:
        raise ParameterError("l_max must be >= 1")
    if l_max > L_MAX_CAP:
        raise ParameterError(f"l_max={l_max} exceeds the supported horizon {L_MAX_CAP}")
    a = _tanh_coeffs_exact(l_max)
    return [Fraction(1, 2)] + [c / 2 for c in a[1:]]


def series_coeffs(l_max: int) -> list[float]:
    """Taylor coefficients ``B_0..B_lmax`` of ``(1 + tanh x)/2`` as floats."""
    return [float(b) for b in series_coeffs_exact(l_max)]


@lru_cache(maxsize=None)
def _expansion_rows(r: int, l_max: int) -> tuple[tuple[int, ...], ...]:
    rows = [tuple([1] + [0] * r)]
    for _ in range(l_max):
        prev = rows[-1]
        nxt = [0] * (r + 1)
        for k in range(r + 1):
            lo = k * prev[k - 1] if k >= 1 else 0
            hi = (r - k) * prev[k + 1] if k < r else 0
            nxt[k] = lo + hi
        rows.append(tuple(nxt))
    return tuple(rows)


def symmetric_expansion(l: int, r: int) -> list[int]:
    """Integer coefficients ``c[k]`` with ``(sum_i s_i)^l = sum_k c[k] e_k(s)``.

    ``e_k`` is the sum of all degree-k square-free monomials in ``r`` spins
    ``s_i = +-1``.  Multiplying by ``sum_i s_i`` sends ``e_k`` to
    ``(k+1) e_{k+1} + (r-k+1) e_{k-1}``, which gives the row recurrence.
    Returned length is ``min(l, r) + 1``; Python ints never overflow.
    """
    if l < 0 or r < 1:
        raise ParameterError("need l >= 0 and r >= 1")
    row = _expansion_rows(r, l)[l]
    return list(row[: min(l, r) + 1])


def truncation_order(beta: float, d: int, tol: float) -> int:
    """Smallest ``l`` with ``B (beta d)^(l+1) / (1 - beta d) < tol``."""
    x = beta * d
    if x <= 0:
        return 1
    if x >= 1:
        raise ParameterError(f"beta*d = {x} >= 1: series truncation diverges")
    for l in range(1, L_MAX_CAP + 1):
        if SERIES_ABS_SUM * x ** (l + 1) / (1 - x) < tol:
            return l
    raise ParameterError(
        f"beta*d = {x} needs more than {L_MAX_CAP} series terms for tol={tol}"
    )


def multilinear_coeffs(beta: float, r: int, l_max: int) -> np.ndarray:
    """``C[k] = sum_{l >= k} beta^l c[l, k] B_l`` for ``k = 0..r`` (series cut at ``l_max``)."""
    B = series_coeffs_exact(max(l_max, 1))
    C = np.zeros(r + 1)
    rows = _expansion_rows(r, l_max)
    x = beta * r
    for l in range(1, l_max + 1):
        if B[l] == 0:
            continue
        row = rows[l]
        for k in range(1, min(l, r) + 1):
            if row[k]:
                # c/r^l <= 1/binom(r, k), so the float product stays in range
                C[k] += float(Fraction(row[k], r**l) * B[l]) * x**l
    return C


@dataclass(frozen=True)
class RuleTable:
    """Per-degree subset probabilities and signs of the generalized rule.

    ``P[r][k]`` is the probability of one specific k-subset for a degree-r
    vertex, ``C[r][k]`` the multilinear coefficient, ``sign[r, k]`` its sign.
    """

    beta: float
    d: int
    epsilon: float
    tol: float
    l_max: int
    B: tuple[float, ...]
    B_abs_sum: float
    C: tuple[np.ndarray, ...]
    P: tuple[np.ndarray, ...]
    sign: np.ndarray

    @property
    def D0(self) -> float:
        return 4.0 * self.B_abs_sum

    def size_probs(self, r: int) -> np.ndarray:
        """``binom(r, k) * p[k, r]`` for ``k = 0..r``."""
        return np.array([comb(r, k) for k in range(r + 1)], dtype=float) * self.P[r]

    def covers(self, r: int) -> bool:
        return 0 <= r <= self.d

    def rows(self):
        """Yield ``(r, k, p, bound, slack)`` with ``bound = D0 (2 beta r)^k``."""
        for r in range(1, self.d + 1):
            sp = self.size_probs(r)
            for k in range(r + 1):
                bound = self.D0 * (2 * self.beta * r) ** k
                yield r, k, float(self.P[r][k]), bound, bound - float(sp[k])


def build_rule_table(beta: float, d: int, epsilon: float = 0.25, tol: float = 1e-14) -> RuleTable:
    if beta < 0:
        raise ParameterError("beta must be nonnegative")
    if d < 0:
        raise ParameterError("d must be nonnegative")
    if not 0 < epsilon < 1:
        raise ParameterError("epsilon must lie in (0, 1)")
    if beta * d > 0.5:
        raise FourierInfeasibleError(1, d, f"beta*d = {beta * d:g} > 1/2")
    l_max = truncation_order(beta, d, tol)
    B = series_coeffs(max(l_max, 1))
    Cs, Ps = [np.zeros(1)], [np.ones(1)]
    sign = np.ones((d + 1, d + 1), dtype=np.int8)
    for r in range(1, d + 1):
        C = multilinear_coeffs(beta, r, l_max)
        p = np.zeros(r + 1)
        for k in range(2, r + 1):
            p[k] = 2.0 * abs(C[k]) * (k + 1)
        shared = sum(comb(r - 1, k - 1) * abs(C[k]) for k in range(2, r + 1))
        p[1] = 2.0 * (C[1] - shared)
        p[0] = 1.0 - sum(comb(r, k) * p[k] for k in range(1, r + 1))
        if p[1] < 0 or (beta > 1e-300 and p[1] == 0):
            raise FourierInfeasibleError(1, r, f"p[1] = {p[1]:g} <= 0")
        for k in range(r + 1):
            if not 0.0 <= p[k] <= 1.0:
                raise FourierInfeasibleError(k, r, f"p = {p[k]:g} outside [0, 1]")
        if p[0] < 1.0 - epsilon:
            raise FourierInfeasibleError(0, r, f"p[0] = {p[0]:g} < 1 - epsilon")
        for k in range(r + 1):
            sign[r, k] = -1 if C[k] < 0 else 1
        Cs.append(C)
        Ps.append(p)
    return RuleTable(
        beta=float(beta),
        d=int(d),
        epsilon=float(epsilon),
        tol=float(tol),
        l_max=l_max,
        B=tuple(B),
        B_abs_sum=SERIES_ABS_SUM,
        C=tuple(Cs),
        P=tuple(Ps),
        sign=sign,
    )


def phi_eval(subset_size: int, spins, sign_c: int = 1) -> float:
    """Plus-probability of the subset rule given the exposed spins."""
    spins = np.asarray(spins, dtype=np.int64).reshape(-1)
    if len(spins) != subset_size:
        raise ShapeError(f"expected {subset_size} spins, got {len(spins)}")
    if subset_size == 0:
        return 0.5
    if subset_size == 1:
        return 0.5 + 0.5 * int(spins[0])
    s = int(spins.sum())
    prod = int(np.prod(spins))
    return 0.5 + (s + (1 if sign_c >= 0 else -1) * prod) / (2.0 * (subset_size + 1))


def _phi_from_counts(k: int, j: int, sign_c: int) -> float:
    # k exposed spins of which j are plus
    if k == 0:
        return 0.5
    if k == 1:
        return float(j)
    s = 2 * j - k
    prod = -1 if (k - j) % 2 else 1
    return 0.5 + (s + sign_c * prod) / (2.0 * (k + 1))


def expected_phi(table: RuleTable, r: int, n_plus: int) -> float:
    """``E_A[phi_A(sigma_A)]`` for a degree-r site with ``n_plus`` plus neighbors."""
    total = 0.0
    for k in range(r + 1):
        pk = table.P[r][k]
        if pk == 0.0:
            continue
        sgn = int(table.sign[r, k])
        acc = 0.0
        for j in range(max(0, k - (r - n_plus)), min(k, n_plus) + 1):
            acc += comb(n_plus, j) * comb(r - n_plus, k - j) * _phi_from_counts(k, j, sgn)
        total += pk * acc
    return total


def heat_bath_plus(x: float) -> float:
    return 0.5 * (1.0 + math.tanh(x))


def coupling_identity_check(table: RuleTable, r: int) -> float:
    """Max over all ``2^r`` neighborhoods of ``|E_A[phi_A] - f(beta sum sigma)|``.

    Neighborhoods with the same number of plus spins share both sides, so each
    count is evaluated once.
    """
    if not 1 <= r <= table.d:
        raise ParameterError(f"degree {r} not covered by table (d={table.d})")
    if r > 20:
        raise ParameterError("r > 20 is not enumerable")
    worst = 0.0
    for n_plus in range(r + 1):
        lhs = expected_phi(table, r, n_plus)
        rhs = heat_bath_plus(table.beta * (2 * n_plus - r))
        worst = max(worst, abs(lhs - rhs))
    return worst


def sample_update_support(table: RuleTable, r: int, rng: np.random.Generator, size: int | None = None):
    """Draw neighbor subsets (local indices, sorted) for a degree-r vertex.

    The size is drawn from ``binom(r, k) p[k, r]``; given the size the subset
    is uniform.  Returns one tuple, or a list of ``size`` tuples.
    """
    probs = table.size_probs(r)
    cdf = np.cumsum(probs)
    cdf[-1] = max(cdf[-1], 1.0)
    count = 1 if size is None else size
    ks = np.searchsorted(cdf, rng.random(count), side="right")
    out = []
    for k in ks:
        if k == 0:
            out.append(())
        else:
            out.append(tuple(sorted(int(i) for i in rng.choice(r, size=int(k), replace=False))))
    return out[0] if size is None else out
