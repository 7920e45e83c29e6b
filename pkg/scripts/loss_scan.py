"""Optimized key rate against channel loss for L = 8, 16, 32.

Writes one CSV per (L, e_mis) pair and prints the cutoff loss of each curve.
"""

import argparse
from pathlib import Path

import numpy as np

from rrdpts.cli import format_scan_csv, run_scan
from rrdpts.core import ProtocolParams


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="results/loss_scan")
    ap.add_argument("--stop", type=float, default=80.0)
    ap.add_argument("--step", type=float, default=1.0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    losses = [float(x) for x in np.arange(0, args.stop + args.step / 2, args.step)]
    for e_mis in (0.015, 0.15):
        for L in (8, 16, 32):
            base = ProtocolParams(L=L, e_mis=e_mis, eta_d=0.85, p_d=1.6e-8)
            rows = run_scan(base, "loss_db", losses, True, 1, args.workers)
            (out / f"L{L}_emis{e_mis}.csv").write_text(format_scan_csv("loss_db", losses, rows), encoding="utf-8")
            alive = [d for d, row in zip(losses, rows) if row[0] > 0]
            cutoff = f"{max(alive) + args.step:g} dB" if alive else "none"
            print(f"L={L:2d} e_mis={e_mis:<5} R(10 dB)={rows[losses.index(10.0)][0]:.3e} cutoff={cutoff}")


if __name__ == "__main__":
    main()
