#!/usr/bin/env python3
"""Monte-Carlo cross-check of the certificate against the eigenvalue oracle.

Draws random small networks from the device library, certifies each at
both R/X extremes, and checks the closed-loop spectrum at interior
ratios.  A sound implementation never produces a certified network with
an unstable non-drift eigenvalue; the reverse direction (stable but not
certified) is expected, since the conditions are sufficient only.
"""

import argparse
import math

import numpy as np

from gridcert.certify import CertificationConfig, certify
from gridcert.devices import ConverterParams, MachineParams
from gridcert.network import LineParams, NetworkSpec, reduce_network
from gridcert.sim import assemble, drift_mode_index, eigenvalues

W0 = 2 * math.pi * 60.0


def random_network(rng):
    n = int(rng.integers(2, 6))
    ids = [f"b{i}" for i in range(n)]
    buses = {}
    for i in ids:
        kind = rng.integers(0, 4)
        if kind <= 1:
            buses[i] = ConverterParams(m_p=float(rng.uniform(0.02, 0.08)),
                                       T_p=float(rng.uniform(0.5, 5.0)),
                                       xi_c=float(rng.choice([0.0, 0.003, 0.006])))
        elif kind == 2:
            buses[i] = MachineParams(H=float(rng.uniform(2.0, 7.0)),
                                     T_G=float(rng.uniform(1.0, 5.0)),
                                     k_g=float(rng.uniform(10.0, 30.0)),
                                     xi_sm=float(rng.choice([0.0, 0.008, 0.0131])))
        else:
            buses[i] = MachineParams(H=float(rng.uniform(2.0, 7.0)),
                                     xi_sm=float(rng.uniform(0.008, 0.02)),
                                     is_condenser=True)
    lines = []
    order = rng.permutation(n)
    for k in range(1, n):
        a, b = ids[order[k]], ids[order[int(rng.integers(0, k))]]
        l = float(rng.uniform(0.05, 0.6))
        rho = float(rng.uniform(0.02, 0.3))
        lines.append(LineParams(a, b, rho * l, l))
    for _ in range(int(rng.integers(0, n))):
        i, j = rng.integers(0, n, 2)
        if i != j:
            l = float(rng.uniform(0.05, 0.6))
            rho = float(rng.uniform(0.02, 0.3))
            lines.append(LineParams(ids[i], ids[j], rho * l, l))
    return reduce_network(NetworkSpec(buses, lines, W0))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int, default=500)
    ap.add_argument("--seed", type=int, default=20250809)
    ap.add_argument("--grid-n", type=int, default=350)
    args = ap.parse_args()

    cfg = CertificationConfig(omega_n=args.grid_n, arc_samples=30, refine_points=8)
    rng = np.random.default_rng(args.seed)
    certified = stable_uncert = violations = 0
    for trial in range(args.trials):
        red = random_network(rng)
        rep = certify(red, cfg)
        if red.rho_max > red.rho_min:
            interior = np.linspace(red.rho_min, red.rho_max, 5)[1:-1]
        else:
            interior = [red.rho_min]
        worst = -np.inf
        for rho in interior:
            cl = assemble(red, float(rho))
            eig = eigenvalues(cl)
            keep = np.ones(eig.size, bool)
            keep[drift_mode_index(eig)] = False
            worst = max(worst, float(eig[keep].real.max()) / max(np.abs(cl.A).max(), 1.0))
        if rep.certified:
            certified += 1
            if worst > 1e-7:
                violations += 1
                print(f"VIOLATION trial {trial}: certified but Re/||A|| = {worst:.3e}")
        elif worst <= 1e-7:
            stable_uncert += 1
    print(f"{args.trials} trials: certified={certified}, "
          f"stable-but-uncertified={stable_uncert}, violations={violations}")
    raise SystemExit(1 if violations else 0)


if __name__ == "__main__":
    main()
