"""Exact output law of the non-reusing CFTP sampler on tiny graphs.

Each depth ``T = 1, 2, 4, ...`` runs the plus/minus pair on fresh updates, so
the output is a mixture over levels of the coalesced state's law.  The pair
chain's generator is built exactly and exponentiated, giving the sampler's
law without Monte Carlo noise.  Prints its total variation to the Gibbs law.

    python3 scripts/cftp_mutant_bias.py
"""

import argparse
import math

import numpy as np
from scipy.linalg import expm

from infoperc import graphs
from infoperc import observables as ob


def pair_generator(g: graphs.Graph, beta: float) -> np.ndarray:
    """Generator of two heat-bath chains driven by shared uniforms."""
    n, N = g.n, 1 << g.n
    th = 1 - math.tanh(beta * g.d_max)
    st = ob.state_spins(n)
    Q = np.zeros((N * N, N * N))
    for a in range(N):
        for b in range(N):
            for v in range(n):
                nb = g.neighbors(v)
                ends = [th + 0.5 * (math.tanh(beta * g.d_max) + math.tanh(beta * st[x][nb].sum())) for x in (a, b)]
                cuts = sorted({0.0, th / 2, th, *ends, 1.0})
                for lo, hi in zip(cuts, cuts[1:]):
                    u = 0.5 * (lo + hi)
                    nxt = []
                    for x, e in zip((a, b), ends):
                        plus = u < th / 2 or th <= u < e
                        nxt.append(x | (1 << v) if plus else x & ~(1 << v))
                    Q[a * N + b, nxt[0] * N + nxt[1]] += hi - lo
            Q[a * N + b, a * N + b] -= n
    return Q


def mutant_law(g: graphs.Graph, beta: float, levels: int = 24) -> np.ndarray:
    N = 1 << g.n
    Q = pair_generator(g, beta)
    start = np.zeros(N * N)
    start[(N - 1) * N] = 1.0  # plus paired with minus
    law, survive = np.zeros(N), 1.0
    for k in range(levels):
        P = (start @ expm(Q * 2.0**k)).reshape(N, N)
        law += survive * np.diag(P)
        survive *= 1 - np.trace(P)
        if survive < 1e-14:
            break
    return law / law.sum()


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--betas", default="0.2,0.3,0.6,1.0,1.5")
    args = ap.parse_args()
    betas = [float(b) for b in args.betas.split(",")]
    print("graph      beta    TV(mutant, Gibbs)")
    for name, g in (("path(2)", graphs.path(2)), ("path(3)", graphs.path(3)), ("cycle(4)", graphs.cycle(4))):
        for b in betas:
            tv = 0.5 * np.abs(mutant_law(g, b) - ob.gibbs(g, b).probs).sum()
            print(f"{name:10s} {b:5.2f}   {tv:.5f}")


if __name__ == "__main__":
    main()
