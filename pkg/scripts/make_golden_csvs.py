#!/usr/bin/env python3
"""Regenerate the golden CSVs consumed by the plotting frontend's tests.

Runs the small example studies and copies their CSV outputs (plus a blow-up
trajectory pair) into frontend/testdata/.  The frontend renders figures from
these files byte-deterministically; regenerate only when a CSV schema
changes, and re-bless the frontend snapshots when you do.
"""

import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
CONFIGS = REPO / "scripts" / "configs"
DEST = REPO / "frontend" / "testdata"


def run_study(config: Path, outdir: Path) -> None:
    env = {"BOSONLAB_OUTDIR": str(outdir)}
    import os

    full_env = dict(os.environ)
    full_env.update(env)
    subprocess.run(
        [sys.executable, "-m", "bosonlab.cli", "run", str(config)],
        check=True,
        env=full_env,
        cwd=REPO,
    )


def main() -> None:
    DEST.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        jobs = [
            ("converge_small.toml", "converge.csv", "converge.csv"),
            ("gronwall_small.toml", "gronwall.csv", "gronwall.csv"),
            ("variance_sweep.toml", "variance.csv", "variance.csv"),
            ("nls_free_gaussian.toml", "trajectory.csv", "trajectory_sub.csv"),
        ]
        for config, produced, dest in jobs:
            outdir = tmp / config.replace(".toml", "")
            run_study(CONFIGS / config, outdir)
            shutil.copy(outdir / produced, DEST / dest)

    # supercritical trajectory: tripped kinetic ceiling, rows flag `blown`
    import numpy as np

    from bosonlab import nls as nls_mod
    from bosonlab import potentials as pot
    from bosonlab.grid import field_from_function, make_grid, normalized
    from bosonlab.nls import NLSParams, NLSState
    from bosonlab.reporting import write_csv

    g = make_grid(12.0, 512)
    gauss = normalized(
        field_from_function(g, lambda x, y: np.exp(-(x**2 + y**2) / 2))
    )
    params = NLSParams(
        a=-3000.0, dt=1e-3, external=pot.ExternalPotentialSpec(pot.ZERO)
    )
    _, reports, blowup = nls_mod.evolve(
        NLSState(gauss, 0.0, params), 0.3, snapshot_stride=5
    )
    rows = [
        [
            r.t,
            r.mass,
            r.e_nls,
            r.sup_norm,
            r.grad_l2,
            r.sigma4,
            float(blowup is not None and r.t >= blowup.t),
        ]
        for r in reports
    ]
    write_csv(
        DEST / "trajectory_super.csv",
        ["t", "mass", "e_nls", "sup_norm", "grad_l2", "sigma4", "blown"],
        rows,
        "golden-supercritical",
    )
    print(f"golden CSVs written to {DEST}")


if __name__ == "__main__":
    main()
