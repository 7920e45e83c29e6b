"""Simulate packets and compare every per-cell rate with the closed forms."""

import argparse
import time

from rrdpts.core import ProtocolParams
from rrdpts.mcsim import SimConfig, crosscheck, simulate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--packets", type=float, default=1e7)
    ap.add_argument("--seed", type=int, default=20240601)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--perturb-mu", type=float, default=1.0)
    args = ap.parse_args()
    params = ProtocolParams(L=8, mu=0.05, loss_db=3, eta_d=0.85, p_d=1e-5, e_mis=0.03)
    t0 = time.perf_counter()
    tally = simulate(SimConfig(params, int(args.packets), seed=args.seed), workers=args.workers)
    print(f"simulated {tally.n_packets} packets in {time.perf_counter() - t0:.1f}s")
    report = crosscheck(tally, params, perturb_mu=args.perturb_mu)
    print(report.format_table())
    raise SystemExit(0 if report.passed else 1)


if __name__ == "__main__":
    main()
