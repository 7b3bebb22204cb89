#!/usr/bin/env python3
"""Re-derive the default well depth by bisection.

The trap depth V0 (in units of hbar*omega0) is fixed by requiring that the
non-interacting symmetric two-atom ground state at zero well separation sits
at -7 hbar*omega0.  The frozen constant ``tweezerlab.double_well.DEPTH_DEFAULT``
was produced by this script; run it after any change to the eigensolver or
grid defaults and update the constant if the result drifts.
"""
from __future__ import annotations

import argparse

from tweezerlab.double_well import DEPTH_DEFAULT, calibrate_depth
from tweezerlab.grids import Grid1D


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--points", type=int, default=512, help="1D grid points")
    parser.add_argument("--half-extent", type=float, default=10.0, help="grid half extent (sigma)")
    parser.add_argument("--tol", type=float, default=1e-6, help="bisection tolerance on the energy")
    args = parser.parse_args()

    grid = Grid1D.centered(args.points, args.half_extent)
    depth = calibrate_depth(tol=args.tol, grid=grid)
    print(f"calibrated depth: {depth:.9f} hbar*omega0")
    print(f"frozen constant:  {DEPTH_DEFAULT} hbar*omega0")
    drift = abs(depth - DEPTH_DEFAULT)
    print(f"drift:            {drift:.2e}")
    if drift > 5e-6:
        print("WARNING: frozen DEPTH_DEFAULT no longer matches the solver; re-freeze it.")


if __name__ == "__main__":
    main()
