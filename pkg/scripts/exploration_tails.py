"""Tail of the explored support size against the dominating branching chain.

    python3 scripts/exploration_tails.py --beta-d 0.04,0.08 --samples 20000
"""

import argparse

from infoperc import explorer as ex
from infoperc import fourier_rule as fr
from infoperc import graphs


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--beta-d", default="0.04,0.08")
    ap.add_argument("--n", type=int, default=512)
    ap.add_argument("--d", type=int, default=3)
    ap.add_argument("--samples", type=int, default=20000)
    ap.add_argument("--eta", type=float, default=0.1)
    ap.add_argument("--lam", type=float, default=0.1)
    ap.add_argument("--epsilon", type=float, default=0.25)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    g = graphs.random_regular(args.n, args.d, seed=args.seed)
    for bd in (float(x) for x in args.beta_d.split(",")):
        beta = bd / args.d
        table = fr.build_rule_table(beta, args.d, args.epsilon)
        est = ex.exp_moment_estimate(g, beta, args.eta, args.lam, args.samples, seed=args.seed,
                                     rule_mode="generalized", table=table)
        fit = ex.tail_slope(est.support, k_max=30, min_count=10)
        dom = ex.dominating_process(args.d, beta, args.epsilon, args.eta, args.lam, args.samples,
                                    seed=args.seed + 1, check_feasibility=False, table=table)
        rows = ex.stochastic_order_test(est.support, dom.Y, [int(k) for k in fit.ks])
        print(f"beta*d={bd}: log E exp(eta|V|+lam L) = {est.log_moment:.4f}; "
              f"tail slope {fit.slope:.3f} +- {fit.stderr:.3f}; "
              f"order test passed {sum(r.passed for r in rows)}/{len(rows)}; "
              f"dominating chain feasible={dom.feasible}, censored {dom.censored.mean():.4f}")


if __name__ == "__main__":
    main()
