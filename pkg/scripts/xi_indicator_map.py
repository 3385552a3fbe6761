#!/usr/bin/env python3
"""Map the damper-emulation benefit indicator over (R/X, T_p).

Positive values mean adding a derivative term xi_c can raise the droop
stability margin; the small-rho / small-T_p corner comes out negative.
Emits a CSV grid (one row per rho, one column per T_p).
"""

import argparse
import csv
import sys

import numpy as np

from gridcert.certify import droop_design
from gridcert.devices import ConverterParams


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="-")
    ap.add_argument("--m-p", type=float, default=0.05)
    ap.add_argument("--gamma", type=float, default=20.0)
    ap.add_argument("--n", type=int, default=25)
    args = ap.parse_args()

    rhos = np.geomspace(0.01, 0.3, args.n)
    tps = np.geomspace(0.1, 10.0, args.n)
    rows = [["rho\\T_p"] + [f"{tp:.6g}" for tp in tps]]
    for rho in rhos:
        row = [f"{rho:.6g}"]
        for tp in tps:
            d = droop_design(ConverterParams(m_p=args.m_p, T_p=float(tp)),
                             float(rho), args.gamma)
            row.append(f"{d.xi_indicator:.9g}")
        rows.append(row)

    fh = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerows(rows)
    if fh is not sys.stdout:
        fh.close()
        print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
