#!/usr/bin/env python3
"""Relative stability margin of a synchronous machine across inertia.

Sweeps the inertia constant H at a fixed turbine-to-inertia ratio
T_G/H = 0.8 (and, second block, the ratio at fixed H = 3 s) for several
R/X ratios, reproducing the counterintuitive effect that more inertia
can lower the margin.  Writes CSV to stdout or --out.
"""

import argparse
import csv
import math
import sys

import numpy as np

from gridcert.certify import CertificationConfig, stability_margin
from gridcert.devices import LineDynamicsParams, MachineParams, bus_transfer, mu

W0 = 2 * math.pi * 60.0


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="-", help="CSV path ('-' = stdout)")
    ap.add_argument("--k-g", type=float, default=20.0)
    ap.add_argument("--xi-sm", type=float, default=0.0)
    args = ap.parse_args()

    cfg = CertificationConfig(omega_n=1500)
    rows = [["sweep", "rho", "H_s", "TG_over_H", "omega_c_rad_s", "margin"]]
    for rho in (0.05, 0.1, 0.2):
        mu_tf = mu(LineDynamicsParams(rho=rho, omega0=W0))
        for H in np.linspace(1.0, 10.0, 19):
            mach = MachineParams(H=float(H), T_G=float(0.8 * H), k_g=args.k_g,
                                 xi_sm=args.xi_sm)
            wc, m = stability_margin(bus_transfer(mach), mu_tf, cfg)
            rows.append(["H", rho, H, 0.8, wc, m])
        for ratio in np.linspace(0.2, 2.0, 19):
            mach = MachineParams(H=3.0, T_G=float(3.0 * ratio), k_g=args.k_g,
                                 xi_sm=args.xi_sm)
            wc, m = stability_margin(bus_transfer(mach), mu_tf, cfg)
            rows.append(["TG_over_H", rho, 3.0, ratio, wc, m])

    fh = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    writer = csv.writer(fh, lineterminator="\n")
    for r in rows:
        writer.writerow([f"{v:.9g}" if isinstance(v, float) else v for v in r])
    if fh is not sys.stdout:
        fh.close()
        print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
