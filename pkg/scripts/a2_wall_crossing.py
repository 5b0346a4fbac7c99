#!/usr/bin/env python3
"""Saddle counts of z^3 - 3z + c on both sides of the wall, the wall itself, and the
comparison of the two chambers' sector compositions.

    python3 scripts/a2_wall_crossing.py [--grid 10000] [--points 100]
"""
import argparse

import numpy as np
from scipy.optimize import brentq

from spectra_rh.bps import compare_compositions, from_differential, rebase
from spectra_rh.differential import QuadraticDifferential, continue_periods
from spectra_rh.foliation import FoliationConfig, find_saddles, hat_basis, spectrum


def cubic(c):
    return QuadraticDifferential(np.array([1, 0, -3, c]))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", type=int, default=10000, help="phase samples per unit")
    ap.add_argument("--points", type=int, default=100)
    args = ap.parse_args()

    dense = FoliationConfig(grid_per_unit=args.grid)
    for c in (1j, 2j):
        tab = find_saddles(cubic(c), cfg=dense)
        phases = sorted({round(s.theta, 9) for s in tab.saddles})
        print(f"c = {c}: {len(phases)} saddle phases {phases}")

    # locate the wall: continue the c = i basis periods up the imaginary axis
    small = hat_basis(cubic(1j))
    paths = [s["period_path"] for s in small.strips]

    def rel_phase(y):
        Z, _ = continue_periods(cubic(1j), cubic(1j * y), paths, steps=60)
        return float(np.angle(Z[0] / Z[1]))

    wall = brentq(rel_phase, 1.2, 1.99, xtol=1e-14)
    print(f"wall at c = {wall:.15f}i")

    st, bt = spectrum(cubic(1j)), spectrum(cubic(2j))
    sb, bb = from_differential(st.basis, st), from_differential(bt.basis, bt)
    Zc, _ = continue_periods(cubic(1j), cubic(2j), paths)
    R = np.array([Zc.real, Zc.imag])
    M = np.rint([np.linalg.solve(R, [z.real, z.imag]) for z in bt.basis.periods]).astype(int)
    print("big-chamber basis in continued small-chamber classes:", M.tolist())
    dev = compare_compositions(sb, rebase(bb, M), (-0.2, 0.8), args.points, rng=0)
    print(f"max relative deviation of the two sector compositions: {dev:.2e}")


if __name__ == "__main__":
    main()
