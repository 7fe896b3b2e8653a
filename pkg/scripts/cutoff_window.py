"""Worst-case total variation sandwich and cutoff window on random 3-regular graphs.

    python3 scripts/cutoff_window.py --sizes 256,512,1024 --replicas 2000
"""

import argparse

import numpy as np

from infoperc import graphs
from infoperc import observables as ob


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--sizes", default="256,512,1024")
    ap.add_argument("--beta", type=float, default=0.05)
    ap.add_argument("--replicas", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    grid = np.round(np.arange(0.0, 16.0001, 0.125), 10)
    print("n      t_m     log(n)/2  lower 0.9->0.1 window       upper 0.1 crossing")
    for n in (int(s) for s in args.sizes.split(",")):
        g = graphs.random_regular(n, 3, seed=args.seed + n)
        prof = ob.magnetization_profile(g, args.beta, grid, args.replicas, seed=args.seed)
        tm = ob.locate_t_m(prof).point
        low = ob.tv_lower_curve(g, args.beta, grid, prof, args.replicas, args.seed)
        up = ob.coupling_tv_upper(g, args.beta, grid, args.replicas, args.seed)
        w = low.crossing(0.1) - low.crossing(0.9)
        w_lo = low.crossing(0.1, "lo") - low.crossing(0.9, "hi")
        w_hi = low.crossing(0.1, "hi") - low.crossing(0.9, "lo")
        print(f"{n:<6d} {tm:7.3f} {0.5 * np.log(n):8.3f}  {w:6.3f} [{w_lo:6.3f}, {w_hi:6.3f}]"
              f"      {up.crossing(0.1)}")


if __name__ == "__main__":
    main()
