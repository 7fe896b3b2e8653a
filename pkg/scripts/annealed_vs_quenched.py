"""Uniform-start (annealed) mixing against the worst case, plus the quenched overlap.

    python3 scripts/annealed_vs_quenched.py --n 256 --beta 0.03
"""

import argparse
import math

import numpy as np

from infoperc import cftp, graphs
from infoperc import observables as ob


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, default=256)
    ap.add_argument("--beta", type=float, default=0.03)
    ap.add_argument("--replicas", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    n = args.n
    g = graphs.random_regular(n, 3, seed=args.seed)
    grid = np.round(np.arange(0.0, 12.0001, 0.125), 10)
    ann = cftp.annealed_compare(g, args.beta, grid, args.replicas, args.seed)
    worst = ob.coupling_tv_upper(g, args.beta, grid, args.replicas, args.seed)
    ta, tw = ann.curve.crossing(0.5), worst.crossing(0.5)
    print(f"annealed 1/2 crossing {ta:.3f} ({ta / math.log(n):.3f} log n), "
          f"worst case {tw:.3f} ({tw / math.log(n):.3f} log n)")
    x0 = cftp.uniform_start(n, args.seed)
    ts = np.round(np.arange(0.0, 4.0001, 0.25), 10)
    q = cftp.quenched_statistic(g, args.beta, ts, x0, args.replicas, args.seed)
    thr = cftp.quenched_threshold(n)
    for t, m, se in zip(ts, q.mean, q.stderr):
        print(f"t={t:5.2f} overlap {m:8.2f} +- {se:5.2f} {'above' if m > thr else 'below'} {thr:.1f}")


if __name__ == "__main__":
    main()
