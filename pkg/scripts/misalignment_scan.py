"""Optimized key rate against misalignment error at fixed loss.

Also prints where the optimal photon-number threshold switches.
"""

import argparse
from pathlib import Path

import numpy as np

from rrdpts.cli import format_scan_csv, run_scan
from rrdpts.core import ProtocolParams


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="results/misalignment_scan")
    ap.add_argument("--loss-db", type=float, default=10.0)
    ap.add_argument("--step", type=float, default=0.01)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = [round(float(x), 10) for x in np.arange(0, 0.5 + args.step / 2, args.step)]
    for L in (8, 16, 32):
        base = ProtocolParams(L=L, loss_db=args.loss_db, eta_d=0.85, p_d=1.6e-8)
        rows = run_scan(base, "e_mis", grid, True, 1, args.workers)
        (out / f"L{L}.csv").write_text(format_scan_csv("e_mis", grid, rows), encoding="utf-8")
        live = [(e, row[2]) for e, row in zip(grid, rows) if row[0] > 0]
        switches = [e for (e, v), (_, w) in zip(live[1:], live) if v != w]
        zero = next((e for e, row in zip(grid, rows) if row[0] == 0), None)
        print(f"L={L:2d} first zero at e_mis={zero} v_th switches at {switches}")


if __name__ == "__main__":
    main()
