#!/usr/bin/env python3
"""Emit the smeared-potential norm table over an (N, beta, beta1) matrix.

Columns: N, beta, beta1, h_l2, h_l1, grad_h_l2 — the interface consumed by
scaling studies.  Grid and potential are fixed here; edit in place for other
matrices.
"""

import sys
from pathlib import Path

from bosonlab import potentials as pot
from bosonlab.grid import make_grid
from bosonlab.reporting import write_csv


def main() -> None:
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("smeared_norms.csv")
    grid = make_grid(2.0, 1024)
    w = pot.PairPotentialSpec(pot.BUMP, w0=1.0, radius=1.0)
    rows = []
    for beta in (0.4, 0.5):
        for n in (64, 128, 256, 512, 1024, 2048, 4096):
            scaled = pot.scale_pair_potential(w, n, beta, grid)
            for beta1 in (0.0, beta / 2, beta):
                sm = pot.build_smeared(scaled, beta1)
                rows.append([float(n), beta, beta1, sm.h_l2, sm.h_l1, sm.grad_h_l2])
    write_csv(out, ["N", "beta", "beta1", "h_l2", "h_l1", "grad_h_l2"], rows, "script")
    print(f"wrote {out} ({len(rows)} rows)")


if __name__ == "__main__":
    main()
