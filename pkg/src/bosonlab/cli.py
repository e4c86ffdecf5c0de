"""Command line entry point: run studies from config files, check invariants.

Exit codes: 0 success, 1 failed invariant check, 2 config validation error,
3 numeric failure (NaN or forbidden blow-up), 4 memory budget refusal.
The BOSONLAB_OUTDIR environment variable overrides the configured output
directory.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, checks
from . import experiments as exp
from . import manybody as mb
from . import nls as nls_mod
from .config import StudyConfig, ValidationError, load_config
from .grid import normalized, save_field, set_fft_workers
from .manybody import BudgetError, DEFAULT_BUDGET_BYTES, admissible_table
from .nls import NLSParams, NLSState
from .potentials import ResolutionError, scale_pair_potential
from .reporting import write_csv, write_manifest

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3
EXIT_BUDGET = 4


class NumericFailure(RuntimeError):
    pass


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bosonlab",
        description="Exact few-boson dynamics vs the effective 2D focusing NLS",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute the study described by a config file")
    p_run.add_argument("config", type=Path)
    sub.add_parser("check", help="run the invariant battery")
    sub.add_parser("info", help="print the admissible (M, N) memory budget table")
    args = parser.parse_args(argv)

    if args.command == "info":
        print(f"bosonlab {__version__}")
        print(f"state tensor bytes = 16 * M^(2N); default budget {DEFAULT_BUDGET_BYTES}")
        print(admissible_table(DEFAULT_BUDGET_BYTES))
        return EXIT_OK
    if args.command == "check":
        results = checks.run_battery()
        print(checks.format_battery(results))
        return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_CHECK_FAILED

    try:
        cfg = load_config(args.config)
    except ValidationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return run_study(cfg)
    except ValidationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (BudgetError,) as exc:
        print(f"budget refusal: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except ResolutionError as exc:
        print(f"resolution refusal: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericFailure, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def run_study(cfg: StudyConfig) -> int:
    set_fft_workers(cfg.threads)
    outdir = Path(os.environ.get("BOSONLAB_OUTDIR", cfg.output_dir))
    outdir.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    runner = _RUNNERS[cfg.kind]
    code, meta = runner(cfg, outdir)
    meta.setdefault("wall_time_s", time.time() - t0)
    write_manifest(outdir / "manifest.json", cfg, meta)
    return code


def _sweep_config(cfg: StudyConfig, section: str) -> exp.SweepConfig:
    sec = cfg.section(section)
    if section == "manybody":
        n_list = (int(sec.get("n_particles", 2)),)
        beta_list = (float(sec.get("beta", 0.0)),)
    else:
        n_list = tuple(int(n) for n in sec.get("n_list", [2, 3]))
        beta_list = tuple(float(b) for b in sec.get("beta_list", [0.0]))
    return exp.SweepConfig(
        grid=cfg.grid(),
        pair=cfg.pair(),
        external=cfg.external(),
        beta_list=beta_list,
        n_list=n_list,
        phi0=str(sec.get("phi0", "harmonic_ground")),
        t_final=float(sec.get("t_final", 0.3)),
        dt=float(sec.get("dt", 1e-3)),
        snapshot_stride=int(sec.get("snapshot_stride", 25)),
        seed=cfg.seed,
        budget_bytes=cfg.memory_budget_bytes,
    )


def _initial_field(cfg: StudyConfig, kind: str, params: NLSParams):
    sweep = exp.SweepConfig(
        grid=cfg.grid(),
        pair=None,
        external=cfg.external(),
        beta_list=(),
        n_list=(),
        phi0=kind,
        dt=params.dt,
    )
    return exp.initial_orbital(sweep)


def _run_nls(cfg: StudyConfig, outdir: Path) -> tuple[int, dict]:
    sec = cfg.section("nls")
    params = NLSParams(
        a=float(sec.get("coupling", 0.0)),
        dt=float(sec.get("dt", 1e-3)),
        external=cfg.external(),
    )
    phi0 = _initial_field(cfg, str(sec.get("initial", "gaussian")), params)
    t_final = float(sec.get("t_final", 1.0))
    stride = int(sec.get("snapshot_stride", 10))
    state = NLSState(phi0, 0.0, params)
    fields_dir = outdir / "fields"
    fields_dir.mkdir(parents=True, exist_ok=True)
    save_field(fields_dir / "phi_000000.field", phi0)
    counter = [0]

    def snapshot_writer(s):
        counter[0] += 1
        save_field(fields_dir / f"phi_{counter[0]:06d}.field", s.phi)

    state, reports, blowup = nls_mod.evolve(
        state, t_final, snapshot_stride=stride, on_snapshot=snapshot_writer
    )
    rows = [
        [r.t, r.mass, r.e_nls, r.sup_norm, r.grad_l2, r.sigma4,
         float(blowup is not None and r.t >= blowup.t)]
        for r in reports
    ]
    write_csv(
        outdir / "trajectory.csv",
        ["t", "mass", "e_nls", "sup_norm", "grad_l2", "sigma4", "blown"],
        rows,
        cfg.config_hash,
    )
    save_field(outdir / "phi_final.field", state.phi)
    meta = {"blowup": None if blowup is None else vars(blowup).copy()}
    if blowup is not None and not bool(sec.get("allow_blowup", False)):
        write_manifest(outdir / "manifest.json", cfg, meta)
        raise NumericFailure(f"blow-up flagged at t={blowup.t:g}: {blowup.reason}")
    return EXIT_OK, meta


def _run_ground_state(cfg: StudyConfig, outdir: Path) -> tuple[int, dict]:
    sec = cfg.section("nls")
    params = NLSParams(
        a=float(sec.get("coupling", 0.0)),
        dt=float(sec.get("dt", 1e-3)),
        external=cfg.external(),
    )
    g = cfg.grid()
    init = _initial_field(cfg, "gaussian", params)
    res = nls_mod.imaginary_time_ground_state(params, init)
    save_field(outdir / "ground.field", res.phi)
    write_csv(
        outdir / "ground.csv",
        ["energy", "iterations", "residual"],
        [[res.energy, float(res.iterations), res.residual]],
        cfg.config_hash,
    )
    return EXIT_OK, {"energy": res.energy}


def _run_manybody(cfg: StudyConfig, outdir: Path) -> tuple[int, dict]:
    sweep = _sweep_config(cfg, "manybody")
    n = sweep.n_list[0]
    beta = sweep.beta_list[0]
    mb.check_budget(sweep.grid.M, n, cfg.memory_budget_bytes)
    scaled = scale_pair_potential(sweep.pair, n, beta, sweep.grid)
    spec = mb.ManyBodyHamiltonianSpec(scaled, sweep.external, n)
    phi0 = exp.initial_orbital(sweep)
    psi = mb.product_state(phi0, n)
    rows = []

    def record(psi_s, phi_s):
        rep = mb.functional_report(spec, psi_s, phi_s)
        rows.append(rep.csv_row())

    exp._co_evolve(sweep, spec, psi, phi0, sweep.t_final, record)
    write_csv(outdir / "run.csv", mb.FunctionalReport.CSV_COLUMNS, rows, cfg.config_hash)
    if any(not math.isfinite(x) for row in rows for x in row if isinstance(x, float)):
        raise NumericFailure("non-finite functional encountered")
    return EXIT_OK, {"n_particles": n, "beta": beta}


def _run_converge(cfg: StudyConfig, outdir: Path) -> tuple[int, dict]:
    res = exp.convergence_sweep(_sweep_config(cfg, "sweep"))
    write_csv(outdir / "converge.csv", res.columns, res.rows, cfg.config_hash)
    meta = dict(res.meta)
    meta["skipped_cells"] = [
        {"n_particles": n, "beta": b, "reason": r} for n, b, r in res.skipped
    ]
    return EXIT_OK, meta


def _run_gronwall(cfg: StudyConfig, outdir: Path) -> tuple[int, dict]:
    sweep = _sweep_config(cfg, "manybody")
    res = exp.gronwall_trace(sweep, sweep.n_list[0], sweep.beta_list[0])
    write_csv(outdir / "gronwall.csv", res.columns, res.rows, cfg.config_hash)
    return EXIT_OK, dict(res.meta)


def _run_variance(cfg: StudyConfig, outdir: Path) -> tuple[int, dict]:
    sec = cfg.section("variance")
    sweep = exp.SweepConfig(
        grid=cfg.grid(),
        pair=cfg.pair(),
        external=cfg.external(),
        beta_list=tuple(float(b) for b in sec.get("beta_list", [0.5])),
        n_list=tuple(int(n) for n in sec.get("n_list", [16, 32, 64, 128, 256])),
        phi0="gaussian",
        seed=cfg.seed,
        budget_bytes=cfg.memory_budget_bytes,
    )
    res = exp.variance_product_report(
        sweep, tensor_max_n=int(sec.get("tensor_max_n", 3))
    )
    write_csv(outdir / "variance.csv", res.columns, res.rows, cfg.config_hash)
    return EXIT_OK, dict(res.meta)


def _run_stability(cfg: StudyConfig, outdir: Path) -> tuple[int, dict]:
    sec = cfg.section("stability")
    sweep = exp.SweepConfig(
        grid=cfg.grid(),
        pair=cfg.pair(),
        external=cfg.external(),
        beta_list=(float(sec.get("beta", 0.0)),),
        n_list=tuple(int(n) for n in sec.get("n_list", [2, 3])),
        phi0="harmonic_ground",
        seed=cfg.seed,
        budget_bytes=cfg.memory_budget_bytes,
    )
    res = exp.stability_probe(sweep)
    write_csv(outdir / "stability.csv", res.columns, res.rows, cfg.config_hash)
    return EXIT_OK, dict(res.meta)


def _run_check(cfg: StudyConfig, outdir: Path) -> tuple[int, dict]:
    results = checks.run_battery(cfg.seed)
    text = checks.format_battery(results)
    print(text)
    (outdir / "check.txt").write_text(text + "\n")
    ok = all(passed for _, passed, _ in results)
    return (EXIT_OK if ok else EXIT_CHECK_FAILED), {
        "n_checks": len(results),
        "n_failed": sum(1 for _, p, _ in results if not p),
    }


_RUNNERS = {
    "nls-run": _run_nls,
    "ground-state": _run_ground_state,
    "manybody-run": _run_manybody,
    "converge-sweep": _run_converge,
    "gronwall": _run_gronwall,
    "variance-report": _run_variance,
    "stability-probe": _run_stability,
    "check-invariants": _run_check,
}


if __name__ == "__main__":
    sys.exit(main())
