"""Share of each error type as the dark-count probability varies.

Solves for the dark-count probability at which phase errors make up the
requested fraction of all errors.
"""

import argparse

import numpy as np
from scipy import optimize

from rrdpts.core import ProtocolParams
from rrdpts.rates import aggregate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--L", type=int, default=4)
    ap.add_argument("--mu", type=float, default=0.03)
    ap.add_argument("--loss-db", type=float, default=9.2)
    ap.add_argument("--e-mis", type=float, default=0.03)
    ap.add_argument("--target", type=float, default=0.70)
    args = ap.parse_args()
    base = ProtocolParams(L=args.L, mu=args.mu, loss_db=args.loss_db, eta_d=0.85, e_mis=args.e_mis)

    def shares(pd):
        s = aggregate(base.replace(p_d=pd))
        return np.array([s.e_I, s.e_II, s.e_III]) / s.e_total

    print("p_d,phase,time,both")
    for pd in np.logspace(-7, -4, 13):
        print(f"{pd:.3e}," + ",".join(f"{v:.4f}" for v in shares(pd)))
    try:
        pd_star = optimize.brentq(lambda pd: shares(pd)[0] - args.target, 1e-7, 1e-4, xtol=1e-16)
    except ValueError:
        print(f"phase share does not cross {args.target} for p_d in [1e-7, 1e-4]")
        return
    print(f"p_d*={pd_star:.4e} shares=" + "/".join(f"{v:.3f}" for v in shares(pd_star)))


if __name__ == "__main__":
    main()
