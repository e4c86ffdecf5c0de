"""Orchestrated studies tying the exact and effective dynamics together.

Each study returns plain rows (lists of floats) plus named columns so the
CLI can serialize them uniformly; nothing here touches the filesystem.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import manybody as mb
from . import nls as nls_mod
from .grid import (
    Field2D,
    GridSpec,
    apply_laplacian,
    field_from_function,
    inner,
    make_grid,
    norm,
    normalized,
)
from .manybody import (
    DEFAULT_BUDGET_BYTES,
    FunctionalReport,
    ManyBodyHamiltonianSpec,
    ManyBodyState,
    check_budget,
    dq1dt_identity_check,
    functional_report,
    product_state,
)
from .nls import NLSParams, NLSState
from .potentials import (
    ExternalPotentialSpec,
    PairPotentialSpec,
    ScaledPair,
    convolve,
    evaluate_external,
    scale_pair_potential,
)


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r2: float


def fit_exponent(xs, ys) -> FitResult:
    """Least squares for log y = slope * log x + intercept."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 3:
        raise ValueError(f"need at least 3 points, got {xs.size}")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("fit_exponent needs strictly positive inputs")
    lx, ly = np.log(xs), np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return FitResult(float(slope), float(intercept), r2)


# ---------------------------------------------------------------------------
# sweep configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepConfig:
    """Shared knobs of the co-evolution studies.

    phi0 selects the initial one-body orbital: 'gaussian' is the normalized
    width-1 Gaussian, 'harmonic_ground' the imaginary-time ground state of
    the trap, 'townes' the mass-normalized Townes profile.
    """

    grid: GridSpec
    pair: PairPotentialSpec
    external: ExternalPotentialSpec
    beta_list: tuple
    n_list: tuple
    phi0: str = "harmonic_ground"
    t_final: float = 0.3
    dt: float = 1e-3
    snapshot_stride: int = 25
    seed: int = 0
    budget_bytes: int = DEFAULT_BUDGET_BYTES

    def coupling(self) -> float:
        """NLS coupling a = integral of W, enforced consistent with the pair."""
        return self.pair.a


def initial_orbital(cfg: SweepConfig) -> Field2D:
    g = cfg.grid
    if cfg.phi0 == "gaussian":
        return normalized(
            field_from_function(g, lambda x, y: np.exp(-(x**2 + y**2) / 2))
        )
    if cfg.phi0 == "harmonic_ground":
        params = NLSParams(a=0.0, dt=cfg.dt, external=cfg.external)
        init = field_from_function(g, lambda x, y: np.exp(-(x**2 + y**2) / 2))
        return nls_mod.imaginary_time_ground_state(params, init).phi
    if cfg.phi0 == "townes":
        return normalized(nls_mod.townes_profile(g).phi)
    raise ValueError(f"unknown phi0 prescription {cfg.phi0!r}")


# ---------------------------------------------------------------------------
# convergence sweep: co-evolve Psi and phi, track distances vs N
# ---------------------------------------------------------------------------

CONVERGE_COLUMNS = (
    ["n_particles", "beta", "t"]
    + FunctionalReport.CSV_COLUMNS[1:]
    + ["fit_slope", "fit_intercept", "fit_r2"]
)


@dataclass
class SweepResult:
    columns: list
    rows: list
    skipped: list  # (N, beta, reason)
    meta: dict


def _co_evolve(
    cfg: SweepConfig,
    spec: ManyBodyHamiltonianSpec,
    psi: ManyBodyState,
    phi: Field2D,
    t_final: float,
    on_snapshot,
) -> None:
    """March Psi (tensor Strang) and phi (one-body Strang) on the same clock."""
    a = cfg.coupling()
    params = NLSParams(a=a, dt=cfg.dt, external=cfg.external)
    n_steps = int(round((t_final - psi.t) / cfg.dt))
    state = NLSState(phi, psi.t, params)
    static = cfg.external.time_dependence == "static" and cfg.external.family != "custom"
    kin_phase = np.exp(
        -1j * cfg.dt * mb._kinetic_multiplier(psi.grid, psi.n_particles)
    )
    pot_phase = (
        np.exp(-0.5j * cfg.dt * mb.potential_tensor(spec, psi.t + cfg.dt / 2))
        if static
        else None
    )
    on_snapshot(psi, state.phi)
    for k in range(n_steps):
        psi = mb._strang_step_raw(spec, psi, cfg.dt, kin_phase, pot_phase)
        state = nls_mod.strang_step(state)
        if (k + 1) % cfg.snapshot_stride == 0 or k == n_steps - 1:
            on_snapshot(psi, state.phi)


def convergence_sweep(cfg: SweepConfig) -> SweepResult:
    """For each (N, beta): evolve phi0^N exactly and phi0 effectively, record
    every functional at snapshots, then fit log trace-distance vs log N at
    the final time for each beta."""
    phi0 = initial_orbital(cfg)
    rows: list = []
    skipped: list = []
    cells: dict = {}
    cell_seconds: dict = {}
    t0 = time.time()
    for beta in cfg.beta_list:
        for n in cfg.n_list:
            try:
                check_budget(cfg.grid.M, n, cfg.budget_bytes)
                scaled = scale_pair_potential(cfg.pair, n, beta, cfg.grid)
            except (mb.BudgetError, ValueError) as exc:
                skipped.append((n, beta, str(exc)))
                continue
            spec = ManyBodyHamiltonianSpec(scaled, cfg.external, n)
            psi = product_state(phi0, n)
            snaps: list = []

            def record(psi_s, phi_s, n=n, beta=beta, spec=spec, snaps=snaps):
                rep = functional_report(spec, psi_s, phi_s)
                snaps.append(rep)

            t_cell = time.time()
            _co_evolve(cfg, spec, psi, phi0, cfg.t_final, record)
            cell_seconds[f"N={n},beta={beta:g}"] = time.time() - t_cell
            cells[(n, beta)] = snaps
    for beta in cfg.beta_list:
        finals = [
            (n, cells[(n, beta)][-1].trdist)
            for n in cfg.n_list
            if (n, beta) in cells
        ]
        fit = (math.nan, math.nan, math.nan)
        pts = [(n, d) for n, d in finals if d > 0]
        if len(pts) >= 3:
            f = fit_exponent([p[0] for p in pts], [p[1] for p in pts])
            fit = (f.slope, f.intercept, f.r2)
        for n in cfg.n_list:
            if (n, beta) not in cells:
                continue
            for rep in cells[(n, beta)]:
                rows.append([float(n), beta, rep.t] + rep.csv_row()[1:] + list(fit))
    meta = {
        "wall_time_s": time.time() - t0,
        "phi0": cfg.phi0,
        "cell_wall_times_s": cell_seconds,
    }
    return SweepResult(CONVERGE_COLUMNS, rows, skipped, meta)


# ---------------------------------------------------------------------------
# Groenwall-quantity trace along one co-evolution
# ---------------------------------------------------------------------------

GRONWALL_COLUMNS = [
    "t",
    "alpha",
    "q1",
    "var",
    "gamma_pp_qp",
    "gamma_pp_qq",
    "gamma_qp_qq",
    "gamma_total",
    "dalpha_dt",
    "dvar_dt_abs",
    "eps_num",
    "identity_residual",
    "violation",
]


def gronwall_trace(cfg: SweepConfig, n_particles: int, beta: float) -> SweepResult:
    """Record alpha(t), the transition terms, Var(t) and the discrete
    derivative checks along one co-evolution.

    The derivative comparisons use centered differences over one snapshot
    stride; eps_num is the Richardson estimate of that finite-difference
    error (refined once with half the stride at the first interior point),
    plus a fixed quadrature floor.
    """
    check_budget(cfg.grid.M, n_particles, cfg.budget_bytes)
    scaled = scale_pair_potential(cfg.pair, n_particles, beta, cfg.grid)
    spec = ManyBodyHamiltonianSpec(scaled, cfg.external, n_particles)
    phi0 = initial_orbital(cfg)
    psi = product_state(phi0, n_particles)
    params = NLSParams(a=cfg.coupling(), dt=cfg.dt, external=cfg.external)

    snaps: list = []

    def record(psi_s, phi_s):
        rep = functional_report(spec, psi_s, phi_s, with_distances=False)
        ident = dq1dt_identity_check(spec, psi_s, phi_s, params, cfg.dt)
        snaps.append((psi_s.t, rep, ident.residual))

    _co_evolve(cfg, spec, psi, phi0, cfg.t_final, record)

    dt_snap = cfg.dt * cfg.snapshot_stride
    alphas = np.array([rep.alpha for _t, rep, _r in snaps])
    var_s = np.array([rep.var for _t, rep, _r in snaps])

    def third_deriv(series, i):
        # centered third difference where available, else nearest interior
        j = min(max(i, 2), len(series) - 3)
        if len(series) < 5:
            return 0.0
        return (
            series[j + 2] - 2 * series[j + 1] + 2 * series[j - 1] - series[j - 2]
        ) / (2 * dt_snap**3)

    rows = []
    t0 = time.time()
    for i, (t, rep, ident_res) in enumerate(snaps):
        if 0 < i < len(snaps) - 1:
            dalpha = (snaps[i + 1][1].alpha - snaps[i - 1][1].alpha) / (2 * dt_snap)
            dvar = abs((snaps[i + 1][1].var - snaps[i - 1][1].var) / (2 * dt_snap))
        else:
            dalpha = dvar = math.nan
        # centered-difference truncation is f''' dt^2 / 6; double for headroom
        eps = (
            (abs(third_deriv(alphas, i)) + abs(third_deriv(var_s, i)))
            * dt_snap**2
            / 6.0
            * 2.0
            + 1e-12
        )
        viol = 0.0
        if not math.isnan(dalpha):
            viol = float(dalpha > rep.gamma_total + dvar + eps)
        rows.append(
            [
                t,
                rep.alpha,
                rep.q1,
                rep.var,
                rep.gamma_pp_qp,
                rep.gamma_pp_qq,
                rep.gamma_qp_qq,
                rep.gamma_total,
                dalpha,
                dvar,
                eps,
                ident_res,
                viol,
            ]
        )
    meta = {"wall_time_s": time.time() - t0, "n_particles": n_particles, "beta": beta}
    return SweepResult(GRONWALL_COLUMNS, rows, [], meta)


# ---------------------------------------------------------------------------
# product-state energy variance: exact vs the six quadrature line-groups
# ---------------------------------------------------------------------------

VARIANCE_COLUMNS = [
    "n_particles",
    "beta",
    "var_quad",
    "var_exact",
    "kin_kin",
    "kin_pair",
    "pair_pair",
    "ext_ext",
    "kin_ext",
    "pair_ext",
    "rel_gap",
    "predicted_slope",
    "fitted_slope",
]


@dataclass(frozen=True)
class VarianceGroups:
    """The six line-groups of Var for a product state phi^N.

    Every group reduces to one- and two-body quadratures over phi; their sum
    equals the exact N^-2 (<H^2> - <H>^2) identically, which the tensor mode
    cross-checks at small N.
    """

    kin_kin: float
    kin_pair: float
    pair_pair: float
    ext_ext: float
    kin_ext: float
    pair_ext: float

    @property
    def total(self) -> float:
        return (
            self.kin_kin
            + self.kin_pair
            + self.pair_pair
            + self.ext_ext
            + self.kin_ext
            + self.pair_ext
        )


def variance_groups(
    phi: Field2D, scaled: ScaledPair, external: ExternalPotentialSpec, t: float = 0.0
) -> VarianceGroups:
    """Quadrature-only evaluation; no N-body tensor involved.

    The kinetic pieces use the spectral Laplacian (not the Nyquist-zeroed
    gradient) so the sum matches the tensor Hamiltonian exactly.
    """
    g = phi.grid
    n = float(scaled.n_particles)
    h2 = g.h**2
    rho = Field2D(g, np.abs(phi.values) ** 2)
    lap_phi = apply_laplacian(phi)  # -Laplacian phi
    t_bar = float(inner(phi, lap_phi).real)
    lap_sq = float(norm(lap_phi) ** 2)
    a_vals = evaluate_external(external, t, g).values.real
    a_bar = float(np.sum(a_vals * rho.values.real) * h2)
    a_sq = float(np.sum(a_vals**2 * rho.values.real) * h2)

    w_conv = convolve(scaled.field, rho)  # W_beta * |phi|^2
    i_w = float(np.sum(rho.values.real * w_conv.values.real) * h2)
    w2_field = Field2D(g, scaled.field.values.real**2)
    k_w = float(
        np.sum(rho.values.real * convolve(w2_field, rho).values.real) * h2
    )
    l_w = float(np.sum(rho.values.real * w_conv.values.real**2) * h2)
    j_cross = float(
        np.sum(np.conj(lap_phi.values) * phi.values * w_conv.values.real).real * h2
    )
    a_kin = float(np.sum(a_vals * np.conj(phi.values) * lap_phi.values).real * h2)
    m_aw = float(np.sum(a_vals * rho.values.real * w_conv.values.real) * h2)

    return VarianceGroups(
        kin_kin=(lap_sq - t_bar**2) / n,
        kin_pair=2.0 * (n - 1) / n * (j_cross - t_bar * i_w),
        pair_pair=(n - 1) / (2 * n) * k_w
        + (n - 1) * (n - 2) / n * l_w
        - (n - 1) * (2 * n - 3) / (2 * n) * i_w**2,
        ext_ext=(a_sq - a_bar**2) / n,
        kin_ext=2.0 / n * (a_kin - a_bar * t_bar),
        pair_ext=2.0 * (n - 1) / n * (m_aw - a_bar * i_w),
    )


def exact_variance(spec: ManyBodyHamiltonianSpec, state: ManyBodyState) -> float:
    """N^-2 (||H Psi||^2 - <Psi, H Psi>^2) via one Hamiltonian application."""
    hpsi = mb.apply_hamiltonian(spec, state)
    e = float(np.real(mb.mb_inner(state, hpsi)))
    h2 = float(mb.mb_norm(hpsi) ** 2)
    return (h2 - e * e) / state.n_particles**2


def predicted_variance_slope(beta: float) -> float:
    """Dominant large-N exponent of the product-state variance.

    The attained rates are N^-1 (collision and trap channels) and
    N^(-2+2*beta) (the pair-pair square term); the slower decay wins.
    """
    return max(-1.0, -2.0 + 2.0 * beta)


def variance_product_report(
    cfg: SweepConfig,
    n_list=None,
    beta_list=None,
    tensor_max_n: int = 3,
) -> SweepResult:
    """Quadrature-mode variance for each (N, beta), cross-checked against the
    exact tensor variance wherever the tensor fits, plus the fitted
    N-exponent per beta."""
    n_list = tuple(n_list or cfg.n_list)
    beta_list = tuple(beta_list or cfg.beta_list)
    phi0 = initial_orbital(cfg)
    rows = []
    t0 = time.time()
    for beta in beta_list:
        cells = []
        for n in n_list:
            scaled = scale_pair_potential(cfg.pair, n, beta, cfg.grid)
            groups = variance_groups(phi0, scaled, cfg.external)
            var_exact = math.nan
            rel_gap = math.nan
            if (
                n <= tensor_max_n
                and mb.tensor_bytes(cfg.grid.M, n) <= cfg.budget_bytes
            ):
                spec = ManyBodyHamiltonianSpec(scaled, cfg.external, n)
                var_exact = exact_variance(spec, product_state(phi0, n))
                rel_gap = abs(var_exact - groups.total) / max(abs(var_exact), 1e-300)
            cells.append((n, groups, var_exact, rel_gap))
        fit = fit_exponent(
            [c[0] for c in cells], [abs(c[1].total) for c in cells]
        ) if len(cells) >= 3 else FitResult(math.nan, math.nan, math.nan)
        for n, groups, var_exact, rel_gap in cells:
            rows.append(
                [
                    float(n),
                    beta,
                    groups.total,
                    var_exact,
                    groups.kin_kin,
                    groups.kin_pair,
                    groups.pair_pair,
                    groups.ext_ext,
                    groups.kin_ext,
                    groups.pair_ext,
                    rel_gap,
                    predicted_variance_slope(beta),
                    fit.slope,
                ]
            )
    meta = {"wall_time_s": time.time() - t0}
    return SweepResult(VARIANCE_COLUMNS, rows, [], meta)


# ---------------------------------------------------------------------------
# staged blow-up detection
# ---------------------------------------------------------------------------


def staged_blowup_run(
    phi0: Field2D,
    a: float,
    external: ExternalPotentialSpec,
    dt_ladder=(2e-3, 3e-4, 5e-5, 8e-6, 1.3e-6),
    t_max: float = 1.8,
    trigger_fraction: float = 0.6,
):
    """Propagate with a geometrically refined dt ladder until blow-up or t_max.

    A fixed step only resolves the nonlinear phase while |a| sup^2 dt stays
    below ~1/2, so each rung runs until the sup norm reaches trigger_fraction
    of that breakdown level, then hands the state to the next (finer) rung.
    Near collapse the remaining time shrinks quadratically with the focusing
    ratio, so the fine rungs are short; total work stays desk-scale while the
    detection ceilings (50x sup / 100x gradient of the *initial* state) are
    honestly reachable.  Returns (final_state, blowup_info_or_None).
    """
    from .grid import grad_norm_sq

    sup0 = float(np.max(np.abs(phi0.values)))
    state = NLSState(phi0, 0.0, NLSParams(a=a, dt=dt_ladder[0], external=external))
    rung = 0
    while state.t < t_max:
        dt = dt_ladder[rung]
        cap = math.sqrt(0.5 / (max(abs(a), 1e-300) * dt))
        state = NLSState(state.phi, state.t, NLSParams(a=a, dt=dt, external=external))
        advanced = False
        while state.t < t_max:
            try:
                state = nls_mod.strang_step(state)
            except FloatingPointError:
                return state, nls_mod.BlowUpInfo(
                    state.t, "non-finite amplitudes", math.inf, math.inf
                )
            sup = float(np.max(np.abs(state.phi.values)))
            if sup > 50.0 * sup0:
                info = nls_mod.BlowUpInfo(
                    state.t, "sup-norm ceiling", sup, math.sqrt(grad_norm_sq(state.phi))
                )
                return state, info
            if sup > trigger_fraction * cap and rung < len(dt_ladder) - 1:
                rung += 1
                advanced = True
                break
        if not advanced:
            break
    return state, None


# ---------------------------------------------------------------------------
# small-N stability probe
# ---------------------------------------------------------------------------

STABILITY_COLUMNS = [
    "n_particles",
    "beta",
    "e0_per_particle",
    "iterations",
    "converged",
    "collapse_flag",
]


def stability_probe(cfg: SweepConfig, n_list=None, beta: float | None = None) -> SweepResult:
    """Ground energy per particle of H at small N by imaginary-time power
    iteration; a markedly decreasing E0/N across N is flagged as a heuristic
    collapse indicator (no asymptotic claim)."""
    n_list = tuple(n_list or cfg.n_list)
    beta = cfg.beta_list[0] if beta is None else beta
    phi0 = initial_orbital(cfg)
    results = []
    t0 = time.time()
    for n in n_list:
        check_budget(cfg.grid.M, n, cfg.budget_bytes)
        scaled = scale_pair_potential(cfg.pair, n, beta, cfg.grid)
        spec = ManyBodyHamiltonianSpec(scaled, cfg.external, n)
        res = mb.ground_state_manybody(
            spec, product_state(phi0, n), budget_bytes=cfg.budget_bytes
        )
        results.append((n, res))
    e_per = [r.energy / n for n, r in results]
    drop = [e_per[i + 1] - e_per[i] for i in range(len(e_per) - 1)]
    collapse = bool(drop) and all(d < -1e-3 * max(1.0, abs(e_per[0])) for d in drop)
    rows = [
        [float(n), beta, r.energy / n, float(r.iterations), float(r.converged), float(collapse)]
        for n, r in results
    ]
    meta = {"wall_time_s": time.time() - t0}
    return SweepResult(STABILITY_COLUMNS, rows, [], meta)
